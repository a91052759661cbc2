#include "melrvq/synth.hpp"

#include <cmath>

#include "melrvq/rng.hpp"

namespace melrvq {

AudioClip synth_silence(double seconds, int sample_rate_hz) {
    AudioClip clip;
    clip.sample_rate_hz = sample_rate_hz;
    clip.samples.assign(static_cast<size_t>(std::llround(seconds * sample_rate_hz)), 0.0f);
    return clip;
}

AudioClip synth_sine(double freq_hz, double seconds, int sample_rate_hz, double amplitude,
                     double phase) {
    AudioClip clip;
    clip.sample_rate_hz = sample_rate_hz;
    const size_t n = static_cast<size_t>(std::llround(seconds * sample_rate_hz));
    clip.samples.resize(n);
    const double w = 2.0 * M_PI * freq_hz / sample_rate_hz;
    for (size_t i = 0; i < n; ++i) {
        clip.samples[i] = static_cast<float>(amplitude * std::sin(w * static_cast<double>(i) + phase));
    }
    return clip;
}

AudioClip synth_note_clip(uint64_t seed, const NoteCorpusParams& p) {
    Rng rng = Rng::derive(seed, "synth-note-clip");
    AudioClip clip;
    clip.sample_rate_hz = p.sample_rate_hz;
    const size_t n = static_cast<size_t>(std::llround(p.seconds * p.sample_rate_hz));
    clip.samples.assign(n, 0.0f);

    // Pitch grid: two octaves of a major scale starting from a per-clip root.
    static const int kScale[] = {0, 2, 4, 5, 7, 9, 11};
    const double root_hz = 110.0 * std::pow(2.0, rng.uniform(0.0, 1.0));
    std::vector<double> grid;
    for (int oct = 0; oct < 2; ++oct) {
        for (int s : kScale) grid.push_back(root_hz * std::pow(2.0, oct + s / 12.0));
    }

    // Per-clip timbre: harmonic weights with random rolloff.
    std::vector<double> timbre(static_cast<size_t>(p.harmonics));
    const double rolloff = rng.uniform(0.4, 0.8);
    for (int h = 0; h < p.harmonics; ++h) {
        timbre[static_cast<size_t>(h)] = std::pow(rolloff, h) * rng.uniform(0.6, 1.0);
    }

    static const int kSteps[] = {-2, -1, -1, 0, 1, 1, 2, 3, -3};
    int degree = static_cast<int>(rng.uniform_index(grid.size()));

    size_t pos = 0;
    while (pos < n) {
        const double note_s = rng.uniform(p.note_min_s, p.note_max_s);
        const size_t note_len = std::min(
            n - pos, static_cast<size_t>(std::llround(note_s * p.sample_rate_hz)));
        if (note_len == 0) break;

        degree += kSteps[rng.uniform_index(std::size(kSteps))];
        degree = std::clamp(degree, 0, static_cast<int>(grid.size()) - 1);
        const double f0 = grid[static_cast<size_t>(degree)];
        const double vib_depth = std::pow(2.0, p.vibrato_cents / 1200.0) - 1.0;
        const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
        const double velocity = rng.uniform(0.6, 1.0);
        const double attack = 0.02 * p.sample_rate_hz;
        const double release = 0.05 * p.sample_rate_hz;

        double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (size_t i = 0; i < note_len; ++i) {
            const double t = static_cast<double>(i) / p.sample_rate_hz;
            const double vib = 1.0 + vib_depth * std::sin(2.0 * M_PI * p.vibrato_hz * t + vib_phase);
            phase += 2.0 * M_PI * f0 * vib / p.sample_rate_hz;
            double env = 1.0;
            if (static_cast<double>(i) < attack) env = static_cast<double>(i) / attack;
            const double remain = static_cast<double>(note_len - i);
            if (remain < release) env = std::min(env, remain / release);
            double s = 0.0;
            for (int h = 0; h < p.harmonics; ++h) {
                s += timbre[static_cast<size_t>(h)] * std::sin(phase * (h + 1));
            }
            clip.samples[pos + i] +=
                static_cast<float>(p.amplitude * velocity * env * s / p.harmonics);
        }
        pos += note_len;
    }

    if (p.noise_level > 0.0) {
        for (size_t i = 0; i < n; ++i) {
            clip.samples[i] += static_cast<float>(p.noise_level * rng.gaussian());
        }
    }
    return clip;
}

std::vector<AudioClip> synth_note_corpus(uint64_t root_seed, int num_clips,
                                         const NoteCorpusParams& params) {
    std::vector<AudioClip> corpus;
    corpus.reserve(static_cast<size_t>(num_clips));
    for (int i = 0; i < num_clips; ++i) {
        Rng mix = Rng::derive(root_seed, "synth-corpus");
        uint64_t clip_seed = root_seed;
        for (int k = 0; k <= i; ++k) clip_seed = mix.next_u64();
        corpus.push_back(synth_note_clip(clip_seed, params));
    }
    return corpus;
}

}  // namespace melrvq
