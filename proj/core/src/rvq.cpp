#include "melrvq/rvq.hpp"

#include <cmath>

#include "melrvq/errors.hpp"

namespace melrvq {

namespace {

// Rows of the codebook, each l2-normalized.
Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& codebook) {
    Eigen::MatrixXd out(codebook.rows(), codebook.cols());
    for (long i = 0; i < codebook.rows(); ++i) {
        out.row(i) = l2_normalized(codebook.row(i).transpose()).transpose();
    }
    return out;
}

int nearest_row(const Eigen::MatrixXd& rows, const Eigen::VectorXd& target) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (long i = 0; i < rows.rows(); ++i) {
        const double dist = (rows.row(i).transpose() - target).squaredNorm();
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// tau for one projected vector against a pre-normalized codebook.
int select_code(const Eigen::MatrixXd& codebook, const Eigen::MatrixXd& codebook_normalized,
                const Eigen::VectorXd& z, ZeroVectorPolicy policy) {
    const double zn = z.norm();
    if (zn == 0.0) {
        if (policy == ZeroVectorPolicy::error)
            throw DomainError("quantize_step: projected vector is zero; normalization undefined");
        return nearest_row(codebook, z);
    }
    return nearest_row(codebook_normalized, z / zn);
}

void check_tokens(const MelRvq& rvq, const TokenSequence& tokens) {
    if (tokens.num_stages != rvq.num_stages() ||
        tokens.tokens.cols() != rvq.num_stages())
        throw ShapeError("decode: token stage count does not match quantizer");
    if (tokens.codebook_size != rvq.codebook_size())
        throw ShapeError("decode: token codebook size does not match quantizer");
    const int K = rvq.codebook_size();
    for (long t = 0; t < tokens.tokens.rows(); ++t) {
        for (long n = 0; n < tokens.tokens.cols(); ++n) {
            const int tok = tokens.tokens(t, n);
            if (tok < 0 || tok >= K)
                throw DomainError("decode: token index " + std::to_string(tok) +
                                  " out of range [0, " + std::to_string(K) + ")");
        }
    }
}

}  // namespace

Eigen::VectorXd l2_normalized(const Eigen::VectorXd& v) {
    const double n = v.norm();
    if (n == 0.0) return Eigen::VectorXd::Zero(v.size());
    return v / n;
}

void MelRvq::validate() const {
    if (stages.empty()) throw DomainError("rvq: at least one stage required");
    const long K = stages.front().codebook.rows();
    const long d = stages.front().codebook.cols();
    const long M = stages.front().projection.cols();
    if (K < 1 || d < 1 || M < 1) throw DomainError("rvq: degenerate dimensions");
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw DomainError("rvq: loss weights must be positive");
    for (const auto& s : stages) {
        if (s.codebook.rows() != K || s.codebook.cols() != d)
            throw ShapeError("rvq: stages must share codebook shape");
        if (s.projection.rows() != d || s.projection.cols() != M)
            throw ShapeError("rvq: projection shape mismatch");
        if (s.decoder.rows() != M || s.decoder.cols() != d)
            throw ShapeError("rvq: decoder shape mismatch");
        if (!s.projection.allFinite() || !s.decoder.allFinite() || !s.codebook.allFinite())
            throw DomainError("rvq: non-finite parameters");
        for (long i = 0; i < K; ++i) {
            if (s.codebook.row(i).norm() == 0.0)
                throw DomainError("rvq: codebook row " + std::to_string(i) +
                                  " is the zero vector");
        }
    }
    if (input_stats.mean.size() != M || input_stats.std.size() != M)
        throw ShapeError("rvq: input stats dimension mismatch");
}

QuantizeStep quantize_step(const StageParams& stage, const Eigen::VectorXd& residual,
                           ZeroVectorPolicy policy) {
    if (!residual.allFinite()) throw DomainError("quantize_step: non-finite residual");
    if (residual.size() != stage.projection.cols())
        throw ShapeError("quantize_step: residual dimension mismatch");
    QuantizeStep out;
    out.z = stage.projection * residual;
    out.tau = select_code(stage.codebook, normalized_rows(stage.codebook), out.z, policy);
    out.next_residual = residual - stage.decoder * stage.codebook.row(out.tau).transpose();
    return out;
}

ResidualTrace trace_frame(const MelRvq& rvq, const Eigen::VectorXd& standardized_frame,
                          ZeroVectorPolicy policy) {
    ResidualTrace trace;
    trace.residuals.push_back(standardized_frame);
    Eigen::VectorXd r = standardized_frame;
    for (const auto& stage : rvq.stages) {
        QuantizeStep step = quantize_step(stage, r, policy);
        trace.z.push_back(step.z);
        trace.tau.push_back(step.tau);
        trace.residuals.push_back(step.next_residual);
        r = std::move(step.next_residual);
    }
    return trace;
}

TokenSequence encode_frames(const MelRvq& rvq, const Eigen::MatrixXd& frames,
                            ZeroVectorPolicy policy) {
    if (frames.cols() != rvq.input_dim())
        throw ShapeError("encode: feature dimension " + std::to_string(frames.cols()) +
                         " != quantizer input dimension " + std::to_string(rvq.input_dim()));
    const int N = rvq.num_stages();
    const Eigen::MatrixXd standardized = standardize(frames, rvq.input_stats);

    std::vector<Eigen::MatrixXd> normalized;
    normalized.reserve(static_cast<size_t>(N));
    for (const auto& s : rvq.stages) normalized.push_back(normalized_rows(s.codebook));

    TokenSequence out;
    out.codebook_size = rvq.codebook_size();
    out.num_stages = N;
    out.tokens.resize(frames.rows(), N);

    for (long t = 0; t < standardized.rows(); ++t) {
        Eigen::VectorXd r = standardized.row(t).transpose();
        for (int n = 0; n < N; ++n) {
            const StageParams& stage = rvq.stages[static_cast<size_t>(n)];
            const Eigen::VectorXd z = stage.projection * r;
            const int tau = select_code(stage.codebook, normalized[static_cast<size_t>(n)], z, policy);
            out.tokens(t, n) = tau;
            r -= stage.decoder * stage.codebook.row(tau).transpose();
        }
    }
    return out;
}

TokenSequence encode(const MelRvq& rvq, const MelSpectrogram& spec, ZeroVectorPolicy policy) {
    if (spec.mel_bins() != rvq.input_dim())
        throw ShapeError("encode: spectrogram has " + std::to_string(spec.mel_bins()) +
                         " bins, quantizer expects " + std::to_string(rvq.input_dim()));
    return encode_frames(rvq, spec.frames.cast<double>(), policy);
}

Eigen::MatrixXd decode_frames(const MelRvq& rvq, const TokenSequence& tokens) {
    check_tokens(rvq, tokens);
    const long T = tokens.tokens.rows();
    Eigen::MatrixXd recon = Eigen::MatrixXd::Zero(T, rvq.input_dim());
    for (long t = 0; t < T; ++t) {
        for (int n = 0; n < rvq.num_stages(); ++n) {
            const StageParams& stage = rvq.stages[static_cast<size_t>(n)];
            recon.row(t) +=
                (stage.decoder * stage.codebook.row(tokens.tokens(t, n)).transpose()).transpose();
        }
    }
    return destandardize(recon, rvq.input_stats);
}

MelSpectrogram decode(const MelRvq& rvq, const TokenSequence& tokens, float frame_rate_hz) {
    MelSpectrogram out;
    out.frames = decode_frames(rvq, tokens).cast<float>();
    out.frame_rate_hz = frame_rate_hz;
    return out;
}

RvqLosses losses(const MelRvq& rvq, const Eigen::MatrixXd& standardized_batch) {
    if (standardized_batch.rows() == 0) throw DomainError("losses: empty batch");
    if (standardized_batch.cols() != rvq.input_dim())
        throw ShapeError("losses: batch dimension mismatch");

    RvqLosses acc;
    for (long b = 0; b < standardized_batch.rows(); ++b) {
        Eigen::VectorXd r = standardized_batch.row(b).transpose();
        for (const auto& stage : rvq.stages) {
            const Eigen::VectorXd z = stage.projection * r;
            const int tau =
                select_code(stage.codebook, normalized_rows(stage.codebook), z,
                            ZeroVectorPolicy::fallback);
            const Eigen::VectorXd q = stage.codebook.row(tau).transpose();
            const Eigen::VectorXd nz = l2_normalized(z);
            const Eigen::VectorXd nq = l2_normalized(q);
            acc.code += (nq - nz).squaredNorm();
            acc.comm += (nz - nq).squaredNorm();
            const Eigen::VectorXd recon = stage.decoder * q;
            acc.recon += (recon - r).squaredNorm();
            r -= recon;
        }
    }
    acc.total = rvq.alpha * acc.code + rvq.beta * acc.comm + acc.recon;
    if (!std::isfinite(acc.total)) throw DomainError("losses: non-finite loss value");
    return acc;
}

}  // namespace melrvq
