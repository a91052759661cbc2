// Deterministic WAV fixture generator for demos and test corpora.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "melrvq/audio.hpp"
#include "melrvq/errors.hpp"
#include "melrvq/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthesize deterministic audio fixtures"};
    std::string out_dir;
    std::string preset = "notes";
    int clips = 10;
    double seconds = 30.0;
    int rate = 24000;
    uint64_t seed = 7;
    double freq = 440.0;
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--preset", preset, "notes, sine, or silence")
        ->check(CLI::IsMember({"notes", "sine", "silence"}));
    app.add_option("--clips", clips, "Number of clips");
    app.add_option("--seconds", seconds, "Clip duration");
    app.add_option("--rate", rate, "Sample rate in Hz");
    app.add_option("--seed", seed, "Root seed");
    app.add_option("--freq", freq, "Sine frequency (sine preset)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        std::filesystem::create_directories(out_dir);
        for (int i = 0; i < clips; ++i) {
            melrvq::AudioClip clip;
            if (preset == "notes") {
                melrvq::NoteCorpusParams params;
                params.seconds = seconds;
                params.sample_rate_hz = rate;
                clip = melrvq::synth_note_clip(seed + static_cast<uint64_t>(i) * 1000003ull, params);
            } else if (preset == "sine") {
                clip = melrvq::synth_sine(freq, seconds, rate, 0.8);
            } else {
                clip = melrvq::synth_silence(seconds, rate);
            }
            char name[32];
            std::snprintf(name, sizeof(name), "clip%03d.wav", i);
            melrvq::save_wav((std::filesystem::path(out_dir) / name).string(), clip);
        }
    } catch (const melrvq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
