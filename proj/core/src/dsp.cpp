#include "melrvq/dsp.hpp"

#include <cmath>

#include "melrvq/errors.hpp"
#include "melrvq/fft.hpp"

namespace melrvq {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_grid_hz(const DspConfig& cfg) {
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> pts(static_cast<size_t>(cfg.mel_bins) + 2);
    for (size_t i = 0; i < pts.size(); ++i) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(cfg.mel_bins + 1);
        pts[i] = mel_to_hz(mel);
    }
    return pts;
}

}  // namespace

void DspConfig::validate() const {
    if (sample_rate_hz <= 0) throw DomainError("dsp: sample rate must be positive");
    if (window <= 0 || (window & (window - 1)) != 0)
        throw DomainError("dsp: window must be a positive power of two");
    if (hop <= 0) throw DomainError("dsp: hop must be positive");
    if (mel_bins <= 0) throw DomainError("dsp: mel_bins must be positive");
    if (pool_factor <= 0) throw DomainError("dsp: pool_factor must be positive");
    if (fmax_hz <= fmin_hz) throw DomainError("dsp: fmax must exceed fmin");
    if (fmax_hz > sample_rate_hz / 2.0 + 1e-9)
        throw DomainError("dsp: fmax above Nyquist");
    if (log_eps <= 0.0) throw DomainError("dsp: log_eps must be positive");
}

Eigen::MatrixXd mel_filterbank(const DspConfig& cfg) {
    cfg.validate();
    const int n_freq = cfg.window / 2 + 1;
    const std::vector<double> pts = mel_grid_hz(cfg);
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.mel_bins, n_freq);
    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.window;
    for (int m = 0; m < cfg.mel_bins; ++m) {
        const double left = pts[static_cast<size_t>(m)];
        const double center = pts[static_cast<size_t>(m) + 1];
        const double right = pts[static_cast<size_t>(m) + 2];
        for (int k = 0; k < n_freq; ++k) {
            const double f = k * bin_hz;
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                w = (right - f) / (right - center);
            }
            fb(m, k) = w;
        }
    }
    return fb;
}

std::vector<double> mel_center_frequencies_hz(const DspConfig& cfg) {
    const std::vector<double> pts = mel_grid_hz(cfg);
    return std::vector<double>(pts.begin() + 1, pts.end() - 1);
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const DspConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate_hz != cfg.sample_rate_hz)
        throw ShapeError("mel_spectrogram: clip rate " + std::to_string(clip.sample_rate_hz) +
                         " != config rate " + std::to_string(cfg.sample_rate_hz));
    const long n = static_cast<long>(clip.samples.size());
    if (n < cfg.window)
        throw DomainError("mel_spectrogram: clip shorter than one STFT window");

    const int pad = cfg.window / 2;
    const long t_base = 1 + n / cfg.hop;
    const long t_pooled = t_base / cfg.pool_factor;

    Eigen::MatrixXd fb = mel_filterbank(cfg);

    std::vector<double> window(static_cast<size_t>(cfg.window));
    for (int i = 0; i < cfg.window; ++i) {
        window[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window);
    }

    // Zero-padded sample accessor; frames are centered on t*hop.
    auto sample_at = [&](long idx) -> double {
        if (idx < 0 || idx >= n) return 0.0;
        return static_cast<double>(clip.samples[static_cast<size_t>(idx)]);
    };

    Eigen::MatrixXd logmel(t_base, cfg.mel_bins);
    std::vector<double> frame(static_cast<size_t>(cfg.window));
    Eigen::VectorXd power(cfg.window / 2 + 1);
    for (long t = 0; t < t_base; ++t) {
        const long start = t * cfg.hop - pad;
        for (int i = 0; i < cfg.window; ++i) {
            frame[static_cast<size_t>(i)] = sample_at(start + i) * window[static_cast<size_t>(i)];
        }
        const std::vector<double> spec = power_spectrum(frame, static_cast<size_t>(cfg.window));
        for (int k = 0; k < power.size(); ++k) power[k] = spec[static_cast<size_t>(k)];
        logmel.row(t) = ((fb * power).array() + cfg.log_eps).log().transpose();
    }

    MelSpectrogram out;
    out.frame_rate_hz = static_cast<float>(cfg.frame_rate_hz());
    out.frames.resize(t_pooled, cfg.mel_bins);
    for (long t = 0; t < t_pooled; ++t) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(cfg.mel_bins);
        for (int j = 0; j < cfg.pool_factor; ++j) {
            acc += logmel.row(t * cfg.pool_factor + j).transpose();
        }
        out.frames.row(t) = (acc / cfg.pool_factor).cast<float>().transpose();
    }
    return out;
}

FeatureStats FeatureStats::identity(int dims) {
    FeatureStats s;
    s.mean = Eigen::VectorXd::Zero(dims);
    s.std = Eigen::VectorXd::Ones(dims);
    return s;
}

FeatureStats compute_feature_stats(const Eigen::MatrixXd& frames) {
    if (frames.rows() == 0) throw DomainError("feature stats: empty frame set");
    FeatureStats s;
    s.mean = frames.colwise().mean();
    Eigen::MatrixXd centered = frames.rowwise() - s.mean.transpose();
    s.std = (centered.array().square().colwise().mean()).sqrt();
    s.std = s.std.cwiseMax(1e-6);
    return s;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& frames, const FeatureStats& stats) {
    if (frames.cols() != stats.mean.size())
        throw ShapeError("standardize: dimension mismatch");
    return (frames.rowwise() - stats.mean.transpose()).array().rowwise() /
           stats.std.transpose().array();
}

Eigen::MatrixXd destandardize(const Eigen::MatrixXd& frames, const FeatureStats& stats) {
    if (frames.cols() != stats.mean.size())
        throw ShapeError("destandardize: dimension mismatch");
    return (frames.array().rowwise() * stats.std.transpose().array()).matrix().rowwise() +
           stats.mean.transpose();
}

Eigen::MatrixXd stack_frames(const std::vector<MelSpectrogram>& specs) {
    long total = 0;
    long bins = specs.empty() ? 0 : specs.front().frames.cols();
    for (const auto& s : specs) {
        if (s.frames.cols() != bins) throw ShapeError("stack_frames: inconsistent mel bins");
        total += s.frames.rows();
    }
    Eigen::MatrixXd out(total, bins);
    long row = 0;
    for (const auto& s : specs) {
        out.middleRows(row, s.frames.rows()) = s.frames.cast<double>();
        row += s.frames.rows();
    }
    return out;
}

}  // namespace melrvq
