#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "melrvq/rng.hpp"
#include "melrvq/rvq.hpp"

namespace melrvq {

enum class RvqInit { kmeans_sample, random_gaussian };
enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    long steps = 2000;
    int batch_size = 256;
    uint64_t seed = 0;
    RvqInit init = RvqInit::kmeans_sample;
    // A code hit fewer than this many times over an epoch is reseeded from a
    // random batch frame's projection. 0 disables reseeding.
    int dead_code_threshold = 1;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct RvqDims {
    int num_stages = 8;
    int codebook_size = 1024;
    int code_dim = 16;
    int input_dim = 128;
    double alpha = 1.0;   // codebook loss weight of the built quantizer
    double beta = 0.25;   // commitment loss weight
};

struct TrainReport {
    std::vector<RvqLosses> loss_series;   // one entry per step
    std::vector<double> utilization;      // per stage, fraction of codes used
    double wall_seconds = 0.0;
    uint64_t seed = 0;
};

// Which loss term to differentiate. The stop-gradient structure means:
// code touches only codebooks, comm only projections, recon decoders and
// codebooks; total is the alpha/beta-weighted combination.
enum class LossTerm { code, comm, recon, total };

struct StageGradients {
    Eigen::MatrixXd projection;
    Eigen::MatrixXd decoder;
    Eigen::MatrixXd codebook;
};

// Analytic gradients of the chosen loss term at the current parameters.
// Residuals entering each stage and every sg() argument are treated as
// constants captured from the forward pass; code assignments are recomputed,
// never differentiated. Normalization Jacobians of the non-stopped arguments
// are included in full.
std::vector<StageGradients> rvq_gradients(const MelRvq& rvq,
                                          const Eigen::MatrixXd& standardized_batch,
                                          LossTerm term = LossTerm::total);

// Build a quantizer from a raw (unstandardized) frame corpus: standardization
// stats from the corpus, seeded gaussian projections/decoders, codebooks
// either gaussian or sampled-and-projected residual rows. Deterministic per
// seed. kmeans_sample requires at least codebook_size frames.
MelRvq init_rvq(const Eigen::MatrixXd& frames, const TrainConfig& cfg, const RvqDims& dims,
                RvqSource source = RvqSource::mel);

// Randomly initialized quantizer flagged frozen; the trainer refuses it.
// input_stats default to identity — assign corpus stats before tokenizing.
MelRvq freeze_random(const RvqDims& dims, uint64_t seed, RvqSource source = RvqSource::mel);

// One optimizer step on a standardized batch (fresh optimizer state; use
// RvqTrainer for a full run). Returns the updated quantizer and the losses
// at the pre-step parameters.
std::pair<MelRvq, RvqLosses> grad_step(const MelRvq& rvq, const Eigen::MatrixXd& standardized_batch,
                                       const TrainConfig& cfg);

// Owns the quantizer and optimizer state for the duration of a run. Updates
// are serial and deterministic given the seed.
class RvqTrainer {
public:
    RvqTrainer(MelRvq rvq, TrainConfig cfg);

    // One gradient step; losses are evaluated at the pre-step parameters.
    RvqLosses step(const Eigen::MatrixXd& standardized_batch);

    // Reseed codebook rows hit fewer than dead_code_threshold times since the
    // last call, drawing replacement rows from the given standardized frames.
    void reseed_dead_codes(const Eigen::MatrixXd& standardized_frames);

    const MelRvq& model() const { return rvq_; }
    MelRvq take_model() { return std::move(rvq_); }
    long steps_taken() const { return step_count_; }

private:
    struct AdamSlot {
        Eigen::MatrixXd m;
        Eigen::MatrixXd v;
    };
    struct StageState {
        AdamSlot projection, decoder, codebook;
        std::vector<long> hits;
    };

    void apply_update(Eigen::MatrixXd& param, AdamSlot& slot, const Eigen::MatrixXd& grad,
                      long step_idx);

    MelRvq rvq_;
    TrainConfig cfg_;
    std::vector<StageState> state_;
    Rng rng_;
    long step_count_ = 0;
};

// Full training run on a raw frame corpus: stats, init, cfg.steps seeded
// mini-batch steps with per-epoch dead-code reseeding, utilization
// measurement. Deterministic per (frames, cfg, dims).
std::pair<MelRvq, TrainReport> train(const Eigen::MatrixXd& frames, const TrainConfig& cfg,
                                     const RvqDims& dims, RvqSource source = RvqSource::mel);

// Fraction of codes per stage selected at least once on the given raw frames.
std::vector<double> codebook_utilization(const MelRvq& rvq, const Eigen::MatrixXd& frames);

}  // namespace melrvq
