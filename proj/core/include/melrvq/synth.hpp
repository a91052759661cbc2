#pragma once

#include <cstdint>
#include <vector>

#include "melrvq/audio.hpp"

namespace melrvq {

// Deterministic signal generators. Tests and demos build their audio with
// these instead of shipping recordings; the same (seed, params) always yields
// the same samples.

AudioClip synth_silence(double seconds, int sample_rate_hz);

AudioClip synth_sine(double freq_hz, double seconds, int sample_rate_hz,
                     double amplitude = 0.8, double phase = 0.0);

struct NoteCorpusParams {
    double seconds = 30.0;
    int sample_rate_hz = 24000;
    double note_min_s = 0.5;     // note duration range
    double note_max_s = 1.5;
    int harmonics = 5;
    double vibrato_cents = 8.0;  // peak pitch wobble
    double vibrato_hz = 5.0;
    double noise_level = 0.004;  // white noise floor
    double amplitude = 0.5;
};

// One clip of pseudo-music: a seeded random walk over a pitch grid, each note
// a harmonic stack with per-clip timbre weights, vibrato, an attack/release
// envelope, and a low noise floor. Successive notes come from a small set of
// intervals so clips have repeating local structure — enough context for
// masked prediction to be learnable at desk scale.
AudioClip synth_note_clip(uint64_t seed, const NoteCorpusParams& params = {});

// A corpus of independent clips, seeds derived from the root seed.
std::vector<AudioClip> synth_note_corpus(uint64_t root_seed, int num_clips,
                                         const NoteCorpusParams& params = {});

}  // namespace melrvq
