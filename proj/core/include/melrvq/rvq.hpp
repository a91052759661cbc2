#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "melrvq/dsp.hpp"

namespace melrvq {

// What to do when a projected vector is exactly zero, where l2-normalization
// is undefined. Strict callers get an error; training and tokenization fall
// back to nearest-neighbor search on the unnormalized vectors so a degenerate
// frame cannot halt a run.
enum class ZeroVectorPolicy { error, fallback };

// One quantizer stage: a linear encoder into code space, a linear decoder
// back to feature space, and the codebook searched in l2-normalized space.
struct StageParams {
    Eigen::MatrixXd projection;  // code_dim x input_dim
    Eigen::MatrixXd decoder;     // input_dim x code_dim
    Eigen::MatrixXd codebook;    // codebook_size x code_dim, one code per row
};

enum class RvqSource : uint8_t { mel = 0, latent = 1 };

// The full residual quantizer: N stages plus the loss weights and the input
// standardization stats it was trained with. Immutable outside the trainer;
// encode/decode/losses are pure and safe to call concurrently.
struct MelRvq {
    std::vector<StageParams> stages;
    double alpha = 1.0;   // codebook loss weight
    double beta = 0.25;   // commitment loss weight
    FeatureStats input_stats;
    RvqSource source = RvqSource::mel;
    bool frozen_random = false;  // ablation baseline; the trainer refuses these

    int num_stages() const { return static_cast<int>(stages.size()); }
    int codebook_size() const { return static_cast<int>(stages.at(0).codebook.rows()); }
    int code_dim() const { return static_cast<int>(stages.at(0).codebook.cols()); }
    int input_dim() const { return static_cast<int>(stages.at(0).projection.cols()); }

    // Throws DomainError/ShapeError when any structural invariant is broken
    // (empty stages, inconsistent dims, non-finite entries, zero code rows,
    // non-positive loss weights).
    void validate() const;
};

// Per-frame token rows, one column per stage.
struct TokenSequence {
    Eigen::MatrixXi tokens;  // T x N
    int codebook_size = 0;
    int num_stages = 0;

    int num_frames() const { return static_cast<int>(tokens.rows()); }
};

struct QuantizeStep {
    Eigen::VectorXd z;  // projected residual
    int tau = 0;        // chosen code index
    Eigen::VectorXd next_residual;
};

// One stage of residual quantization: z = projection * residual, tau the
// nearest code to z in l2-normalized space (ties to the lowest index),
// next_residual = residual - decoder * codebook_row(tau).
QuantizeStep quantize_step(const StageParams& stage, const Eigen::VectorXd& residual,
                           ZeroVectorPolicy policy = ZeroVectorPolicy::error);

// Everything quantize_step produced for one frame through all stages.
// residuals has N+1 entries: residuals[0] is the input, residuals[n] the
// remainder after stage n, exactly as computed.
struct ResidualTrace {
    std::vector<Eigen::VectorXd> z;
    std::vector<int> tau;
    std::vector<Eigen::VectorXd> residuals;
};

ResidualTrace trace_frame(const MelRvq& rvq, const Eigen::VectorXd& standardized_frame,
                          ZeroVectorPolicy policy = ZeroVectorPolicy::fallback);

// Tokenize a spectrogram: frames are standardized with rvq.input_stats, then
// run through all stages. Deterministic.
TokenSequence encode(const MelRvq& rvq, const MelSpectrogram& spec,
                     ZeroVectorPolicy policy = ZeroVectorPolicy::fallback);

// Same, for an arbitrary (unstandardized) feature matrix, frames x dims.
TokenSequence encode_frames(const MelRvq& rvq, const Eigen::MatrixXd& frames,
                            ZeroVectorPolicy policy = ZeroVectorPolicy::fallback);

// Reconstruction: sum of per-stage decodes, then de-standardization.
Eigen::MatrixXd decode_frames(const MelRvq& rvq, const TokenSequence& tokens);
MelSpectrogram decode(const MelRvq& rvq, const TokenSequence& tokens,
                      float frame_rate_hz = 25.0f);

struct RvqLosses {
    double code = 0.0;
    double comm = 0.0;
    double recon = 0.0;
    double total = 0.0;
};

// The three training losses summed over the batch and over all stages, with
// total = alpha * code + beta * comm + recon. Each stage's reconstruction
// target is its incoming residual. Batch rows must already be standardized.
RvqLosses losses(const MelRvq& rvq, const Eigen::MatrixXd& standardized_batch);

// v / |v|, with norm(0) defined as 0 so loss values stay finite.
Eigen::VectorXd l2_normalized(const Eigen::VectorXd& v);

}  // namespace melrvq
