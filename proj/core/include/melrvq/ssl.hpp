#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "melrvq/rvq.hpp"
#include "melrvq/rvq_train.hpp"

namespace melrvq {

enum class MaskNoise : uint8_t { gaussian = 0, learned_embedding = 1 };

// Span masking: contiguous spans of span_frames are drawn (starts sampled
// without replacement) until at least prob * T frames are covered, so the
// expected masked fraction tracks prob with overshoot below one span.
struct MaskConfig {
    double prob = 0.6;
    int span_frames = 10;
    MaskNoise noise = MaskNoise::gaussian;
    uint64_t seed = 0;
    // Per-bin gaussian fill statistics. Empty means N(0, 1), which equals the
    // corpus statistics when the features are standardized.
    Eigen::VectorXf noise_mean;
    Eigen::VectorXf noise_std;

    void validate() const;
};

struct MaskResult {
    Eigen::MatrixXf frames;      // T x M with masked rows replaced
    std::vector<uint8_t> mask;   // length T, 1 = masked
};

// learned_fill supplies the replacement vector for learned_embedding noise;
// it is required in that mode and ignored otherwise.
MaskResult apply_mask(const Eigen::MatrixXf& frames, const MaskConfig& cfg,
                      const Eigen::VectorXf* learned_fill = nullptr);

struct SslModelConfig {
    int input_dim = 128;
    int width = 192;          // d_h
    int layers = 4;           // encoder blocks; 0 = pointwise model
    int attn_heads = 4;
    int ffn_mult = 4;
    int num_target_heads = 8;  // one prediction head per quantizer stage
    int codebook_size = 1024;
    MaskNoise noise = MaskNoise::gaussian;
    uint64_t seed = 0;

    void validate() const;
};

// Per-head logits over the codebook, one K x T matrix per prediction head.
struct Logits {
    std::vector<Eigen::MatrixXf> per_head;

    long frames() const { return per_head.empty() ? 0 : per_head.front().cols(); }
};

// Activations at every block boundary: layers[0] is the input projection
// output (before positional encoding), layers[l] the output of block l.
struct LatentStack {
    std::vector<Eigen::MatrixXf> layers;  // width x T each

    Eigen::MatrixXf layer_frames(int l) const;  // T x width
};

// Pre-norm transformer encoder with N linear prediction heads. Forward is
// const and thread-safe; gradient accumulation and optimizer steps mutate
// the instance and belong to a single owner.
class SslToyModel {
public:
    SslToyModel() = default;
    explicit SslToyModel(const SslModelConfig& cfg);

    const SslModelConfig& config() const { return cfg_; }
    const FeatureStats& input_stats() const { return input_stats_; }
    void set_input_stats(FeatureStats stats) { input_stats_ = std::move(stats); }

    struct ForwardResult {
        Logits logits;
        LatentStack latents;
    };

    // frames: T x input_dim (already standardized and masked as desired).
    ForwardResult forward(const Eigen::MatrixXf& frames) const;

    // One training example: computes the masked cross-entropy against
    // targets, accumulates parameter gradients, returns the loss.
    double accumulate_gradients(const Eigen::MatrixXf& masked_frames,
                                const TokenSequence& targets,
                                const std::vector<uint8_t>& mask);

    void zero_gradients();
    // Global-norm clip then one Adam update; adam_t counts calls.
    void adam_step(double lr, double beta1, double beta2, double eps, double grad_clip);

    // Fixed-order flat views over all parameter matrices (serialization,
    // gradient checks).
    std::vector<const Eigen::MatrixXf*> parameters() const;
    std::vector<Eigen::MatrixXf*> parameters();
    std::vector<Eigen::MatrixXf*> gradients();

    Eigen::MatrixXf& head_weight(int n);
    Eigen::MatrixXf& head_bias(int n);
    // Learned replacement vector for learned_embedding masking.
    Eigen::VectorXf mask_fill() const;

    void save(const std::string& path) const;   // MTOY envelope
    static SslToyModel load(const std::string& path);

private:
    struct Block {
        Eigen::MatrixXf ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Eigen::MatrixXf ln2_g, ln2_b, w1, b1, w2, b2;
    };
    struct Tensors {
        Eigen::MatrixXf w_in, b_in, lnf_g, lnf_b;
        std::vector<Block> blocks;
        std::vector<Eigen::MatrixXf> head_w, head_b;
        Eigen::MatrixXf mask_embed;
    };
    struct BlockCache;
    struct Cache;

    static void collect(Tensors& t, std::vector<Eigen::MatrixXf*>& out);
    void allocate(Tensors& t, bool zero) const;
    ForwardResult run_forward(const Eigen::MatrixXf& frames, Cache* cache) const;
    void backward(const Cache& cache, const std::vector<Eigen::MatrixXf>& dlogits);

    SslModelConfig cfg_;
    FeatureStats input_stats_;
    Tensors params_, grads_, adam_m_, adam_v_;
    long adam_t_ = 0;
};

// Mean masked cross-entropy over all heads. Throws DomainError when the mask
// selects no frames. With uniform logits the value is ln(codebook_size).
double mlm_loss(const Logits& logits, const TokenSequence& targets,
                const std::vector<uint8_t>& mask);

// Top-1 accuracy at masked positions, one entry per head.
std::vector<double> masked_accuracy(const Logits& logits, const TokenSequence& targets,
                                    const std::vector<uint8_t>& mask);

struct SslTrainConfig {
    double learning_rate = 3e-4;
    long steps = 250;
    int batch_clips = 8;        // crops per step
    int crop_frames = 96;
    double holdout_fraction = 0.2;
    uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    int probe_frames = 2000;    // frames sampled for the layer probe table

    void validate() const;
};

struct LayerProbeRow {
    int layer = 0;
    double token_top1 = 0.0;  // linear probe on head-1 targets
    double input_r2 = 0.0;    // linear reconstruction of the input features
};

struct SslReport {
    std::vector<double> loss_series;
    std::vector<double> holdout_accuracy;  // per head, masked top-1
    double chance_level = 0.0;             // 1 / codebook_size
    std::vector<LayerProbeRow> layer_probe;
    double wall_seconds = 0.0;
    uint64_t seed = 0;
};

// Masked-prediction training on explicit (standardized input, target) pairs.
// Clips are split train/holdout by holdout_fraction; each step samples random
// crops, masks them, and takes one Adam step. Holdout accuracy uses
// deterministic crops and seeded masks.
std::pair<SslToyModel, SslReport> pretrain_on_pairs(
    const std::vector<Eigen::MatrixXf>& inputs, const std::vector<TokenSequence>& targets,
    const SslModelConfig& model_cfg, const MaskConfig& mask_cfg, const SslTrainConfig& train_cfg);

// Stage-1 pretraining: targets extracted from the corpus by the quantizer,
// inputs standardized with its stats. The quantizer must be mel-sourced with
// matching bins.
std::pair<SslToyModel, SslReport> pretrain(const std::vector<MelSpectrogram>& corpus,
                                           const MelRvq& rvq, const SslModelConfig& model_cfg,
                                           const MaskConfig& mask_cfg,
                                           const SslTrainConfig& train_cfg);

// Layer-l activations for each clip (rows = frames). inputs are standardized
// clip features; l in [0, layers].
std::vector<Eigen::MatrixXf> extract_latent_clips(const SslToyModel& model,
                                                  const std::vector<Eigen::MatrixXf>& inputs,
                                                  int layer);

// Same, concatenated over the corpus into one frames x width matrix.
Eigen::MatrixXd extract_latents(const SslToyModel& model,
                                const std::vector<Eigen::MatrixXf>& inputs, int layer);

struct IterateResult {
    MelRvq rvq_iter;
    SslToyModel model_iter;
    SslReport report;
    TrainReport rvq_report;
};

// Second training stage: latents of the stage-1 model at latent_layer train a
// new quantizer (source = latent, stage/code counts from model_cfg), whose
// tokens drive a fresh model trained from scratch on the same mel inputs.
// latent_layer < 0 selects layers - 1.
IterateResult iterate(const std::vector<MelSpectrogram>& corpus, const MelRvq& stage1_rvq,
                      const SslToyModel& stage1_model, int latent_layer,
                      const TrainConfig& rvq_cfg, int iter_code_dim,
                      const SslModelConfig& model_cfg, const MaskConfig& mask_cfg,
                      const SslTrainConfig& train_cfg);

}  // namespace melrvq
