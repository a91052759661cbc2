#pragma once

#include <Eigen/Dense>
#include <vector>

#include "melrvq/audio.hpp"

namespace melrvq {

// STFT -> HTK mel filterbank -> log(x + eps) -> mean-pool to the target frame
// rate. Defaults give 100 Hz analysis frames pooled by 4 to 25 Hz on 24 kHz
// input with 128 mel bins over 0-12 kHz.
struct DspConfig {
    int sample_rate_hz = 24000;
    int window = 1024;  // Hann window length; must be a power of two
    int hop = 240;
    int mel_bins = 128;
    int pool_factor = 4;
    double fmin_hz = 0.0;
    double fmax_hz = 12000.0;
    double log_eps = 1e-5;

    double frame_rate_hz() const {
        return static_cast<double>(sample_rate_hz) / hop / pool_factor;
    }
    void validate() const;
};

struct MelSpectrogram {
    Eigen::MatrixXf frames;  // T x M, one row per time step
    float frame_rate_hz = 0.0f;

    int num_frames() const { return static_cast<int>(frames.rows()); }
    int mel_bins() const { return static_cast<int>(frames.cols()); }
};

// Triangular HTK-scale filterbank, mel_bins x (window/2 + 1).
Eigen::MatrixXd mel_filterbank(const DspConfig& cfg);

// Center frequencies (Hz) of the filter triangles, one per mel bin.
std::vector<double> mel_center_frequencies_hz(const DspConfig& cfg);

// Log-mel features. The clip must already be at cfg.sample_rate_hz (resample
// first); throws ShapeError otherwise and DomainError when the clip is
// shorter than one STFT window. Frames are centered (zero padding), so
// T = floor((1 + n/hop) / pool_factor).
MelSpectrogram mel_spectrogram(const AudioClip& clip, const DspConfig& cfg);

// Per-dimension standardization statistics, computed over a feature corpus
// and stored in quantizer checkpoints so tokenization stays deterministic.
struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // floored at 1e-6 so constant dimensions stay finite

    static FeatureStats identity(int dims);
};

FeatureStats compute_feature_stats(const Eigen::MatrixXd& frames);
Eigen::MatrixXd standardize(const Eigen::MatrixXd& frames, const FeatureStats& stats);
Eigen::MatrixXd destandardize(const Eigen::MatrixXd& frames, const FeatureStats& stats);

// All rows of all spectrograms as one double matrix (frames x mel_bins).
Eigen::MatrixXd stack_frames(const std::vector<MelSpectrogram>& specs);

}  // namespace melrvq
