#pragma once

#include <string>
#include <vector>

namespace melrvq {

// Mono audio in [-1, 1]. Stereo input is averaged to mono at load time.
struct AudioClip {
    std::vector<float> samples;
    int sample_rate_hz = 0;

    double duration_s() const {
        return sample_rate_hz > 0
                   ? static_cast<double>(samples.size()) / sample_rate_hz
                   : 0.0;
    }
};

// Reads a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit float, mono or
// stereo. Integer samples are scaled to [-1, 1]; stereo channels are
// averaged. Throws FormatError on malformed headers and
// UnsupportedCodecError on other encodings.
AudioClip load_wav(const std::string& path);

// Writes mono or interleaved multichannel 16-bit PCM.
void save_wav(const std::string& path, const AudioClip& clip);

// Band-limited sample-rate conversion (Hann-windowed sinc, 32 taps per side,
// per-sample kernel renormalization so constants are preserved). Identity —
// bitwise — when the rates already match. Output length is
// round(len * target / source) as computed here; callers may observe +-1
// versus their own rounding.
AudioClip resample(const AudioClip& clip, int target_hz);

}  // namespace melrvq
