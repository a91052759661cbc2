#include <chrono>
#include <cmath>

#include "melrvq/errors.hpp"
#include "melrvq/rng.hpp"
#include "melrvq/ssl.hpp"

namespace melrvq {

void MaskConfig::validate() const {
    if (prob < 0.0 || prob > 1.0) throw DomainError("mask: prob must be in [0, 1]");
    if (span_frames < 1) throw DomainError("mask: span_frames must be >= 1");
}

MaskResult apply_mask(const Eigen::MatrixXf& frames, const MaskConfig& cfg,
                      const Eigen::VectorXf* learned_fill) {
    cfg.validate();
    const long T = frames.rows();
    const long M = frames.cols();
    MaskResult result;
    result.frames = frames;
    result.mask.assign(static_cast<size_t>(T), 0);
    if (T == 0 || cfg.prob == 0.0) return result;

    if (cfg.noise == MaskNoise::learned_embedding) {
        if (learned_fill == nullptr || learned_fill->size() != M)
            throw DomainError("mask: learned_embedding noise requires a fill vector");
    }

    Rng rng = Rng::derive(cfg.seed, "mask-spans");
    const double target = cfg.prob * static_cast<double>(T);

    // Candidate span starts, shuffled; spans are laid down until coverage
    // reaches the target, so overshoot stays below one span.
    std::vector<long> starts;
    if (T <= cfg.span_frames) {
        starts.push_back(0);
    } else {
        starts.resize(static_cast<size_t>(T - cfg.span_frames + 1));
        for (size_t i = 0; i < starts.size(); ++i) starts[i] = static_cast<long>(i);
        rng.shuffle(starts);
    }

    long covered = 0;
    for (long start : starts) {
        if (static_cast<double>(covered) >= target) break;
        const long end = std::min<long>(T, start + cfg.span_frames);
        for (long t = start; t < end; ++t) {
            if (!result.mask[static_cast<size_t>(t)]) {
                result.mask[static_cast<size_t>(t)] = 1;
                ++covered;
            }
        }
    }

    Rng noise_rng = Rng::derive(cfg.seed, "mask-noise");
    for (long t = 0; t < T; ++t) {
        if (!result.mask[static_cast<size_t>(t)]) continue;
        if (cfg.noise == MaskNoise::learned_embedding) {
            result.frames.row(t) = learned_fill->transpose();
        } else {
            for (long m = 0; m < M; ++m) {
                const double mu = cfg.noise_mean.size() > 0 ? cfg.noise_mean(m) : 0.0;
                const double sd = cfg.noise_std.size() > 0 ? cfg.noise_std(m) : 1.0;
                result.frames(t, m) = static_cast<float>(mu + sd * noise_rng.gaussian());
            }
        }
    }
    return result;
}

void SslTrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("ssl train: learning rate must be positive");
    if (steps < 0) throw DomainError("ssl train: negative step count");
    if (batch_clips < 1) throw DomainError("ssl train: batch_clips must be >= 1");
    if (crop_frames < 1) throw DomainError("ssl train: crop_frames must be >= 1");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
        throw DomainError("ssl train: holdout_fraction must be in [0, 1)");
}

namespace {

struct Crop {
    Eigen::MatrixXf input;
    TokenSequence targets;
};

Crop take_crop(const Eigen::MatrixXf& input, const TokenSequence& targets, long start,
               long frames) {
    Crop crop;
    crop.input = input.middleRows(start, frames);
    crop.targets.codebook_size = targets.codebook_size;
    crop.targets.num_stages = targets.num_stages;
    crop.targets.tokens = targets.tokens.middleRows(start, frames);
    return crop;
}

// Consecutive non-overlapping evaluation crops covering each clip.
std::vector<Crop> tile_crops(const Eigen::MatrixXf& input, const TokenSequence& targets,
                             int crop_frames) {
    std::vector<Crop> out;
    const long T = input.rows();
    const long step = std::min<long>(T, crop_frames);
    for (long start = 0; start + step <= T; start += step) {
        out.push_back(take_crop(input, targets, start, step));
    }
    return out;
}

struct ProbeData {
    std::vector<Eigen::MatrixXf> inputs;  // unmasked eval clips
    std::vector<TokenSequence> targets;
};

std::vector<LayerProbeRow> layer_probe_table(const SslToyModel& model, const ProbeData& data,
                                             int probe_frames) {
    const int L = model.config().layers;
    const int K = model.config().codebook_size;
    std::vector<LayerProbeRow> rows;
    if (data.inputs.empty() || probe_frames < 16) return rows;

    long total = 0;
    for (const auto& in : data.inputs) total += in.rows();
    const long stride = std::max<long>(1, total / probe_frames);

    // Gather strided frames: latents per layer, head-1 tokens, raw inputs.
    std::vector<Eigen::MatrixXd> feats(static_cast<size_t>(L) + 1);
    std::vector<int> tokens;
    std::vector<Eigen::VectorXd> inputs_kept;
    std::vector<std::vector<Eigen::VectorXd>> lat_kept(static_cast<size_t>(L) + 1);
    for (size_t c = 0; c < data.inputs.size(); ++c) {
        const auto fwd = model.forward(data.inputs[c]);
        for (long t = 0; t < data.inputs[c].rows(); t += stride) {
            for (int l = 0; l <= L; ++l) {
                lat_kept[static_cast<size_t>(l)].push_back(
                    fwd.latents.layers[static_cast<size_t>(l)].col(t).cast<double>());
            }
            tokens.push_back(data.targets[c].tokens(t, 0));
            inputs_kept.push_back(data.inputs[c].row(t).transpose().cast<double>());
        }
    }
    const long n = static_cast<long>(tokens.size());
    if (n < 16) return rows;

    const long m_in = inputs_kept.front().size();
    Eigen::MatrixXd y_in(n, m_in);
    for (long i = 0; i < n; ++i) y_in.row(i) = inputs_kept[static_cast<size_t>(i)].transpose();
    const Eigen::RowVectorXd y_mean = y_in.colwise().mean();
    const double y_var = (y_in.rowwise() - y_mean).squaredNorm();

    for (int l = 0; l <= L; ++l) {
        const long d = lat_kept[static_cast<size_t>(l)].front().size();
        Eigen::MatrixXd x(n, d + 1);
        for (long i = 0; i < n; ++i) {
            x.block(i, 0, 1, d) = lat_kept[static_cast<size_t>(l)][static_cast<size_t>(i)].transpose();
            x(i, d) = 1.0;
        }
        Eigen::MatrixXd gram = x.transpose() * x;
        gram.diagonal().array() += 1.0;  // ridge
        const Eigen::LLT<Eigen::MatrixXd> llt(gram);

        // Linear probe to one-hot head-1 tokens.
        Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(d + 1, K);
        for (long i = 0; i < n; ++i) xty.col(tokens[static_cast<size_t>(i)]) += x.row(i).transpose();
        const Eigen::MatrixXd w_tok = llt.solve(xty);
        long correct = 0;
        const Eigen::MatrixXd scores = x * w_tok;
        for (long i = 0; i < n; ++i) {
            long best = 0;
            scores.row(i).maxCoeff(&best);
            if (static_cast<int>(best) == tokens[static_cast<size_t>(i)]) ++correct;
        }

        // Linear reconstruction of the raw input features.
        const Eigen::MatrixXd w_in = llt.solve(x.transpose() * y_in);
        const double resid = (y_in - x * w_in).squaredNorm();

        LayerProbeRow row;
        row.layer = l;
        row.token_top1 = static_cast<double>(correct) / static_cast<double>(n);
        row.input_r2 = y_var > 0.0 ? 1.0 - resid / y_var : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::pair<SslToyModel, SslReport> pretrain_on_pairs(const std::vector<Eigen::MatrixXf>& inputs,
                                                    const std::vector<TokenSequence>& targets,
                                                    const SslModelConfig& model_cfg,
                                                    const MaskConfig& mask_cfg,
                                                    const SslTrainConfig& train_cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    model_cfg.validate();
    mask_cfg.validate();
    train_cfg.validate();
    if (inputs.empty()) throw DomainError("pretrain: empty corpus");
    if (inputs.size() != targets.size())
        throw ShapeError("pretrain: inputs and targets disagree in clip count");
    for (size_t c = 0; c < inputs.size(); ++c) {
        if (inputs[c].cols() != model_cfg.input_dim)
            throw ShapeError("pretrain: clip feature dims do not match the model");
        if (targets[c].tokens.rows() != inputs[c].rows())
            throw ShapeError("pretrain: target frame count mismatch");
        if (targets[c].num_stages != model_cfg.num_target_heads)
            throw ShapeError("pretrain: target stage count does not match head count");
        if (targets[c].codebook_size != model_cfg.codebook_size)
            throw ShapeError("pretrain: target codebook size does not match the model");
    }

    SslToyModel model(model_cfg);
    SslReport report;
    report.seed = train_cfg.seed;
    report.chance_level = 1.0 / static_cast<double>(model_cfg.codebook_size);

    // Clip-level holdout split.
    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng = Rng::derive(train_cfg.seed, "holdout-split");
    split_rng.shuffle(order);
    size_t holdout_count = static_cast<size_t>(
        std::llround(train_cfg.holdout_fraction * static_cast<double>(inputs.size())));
    holdout_count = std::min(holdout_count, inputs.size() - 1);
    std::vector<size_t> train_clips(order.begin(), order.end() - static_cast<long>(holdout_count));
    std::vector<size_t> eval_clips(order.end() - static_cast<long>(holdout_count), order.end());
    if (eval_clips.empty()) eval_clips = train_clips;

    Rng batch_rng = Rng::derive(train_cfg.seed, "ssl-batches");
    Rng mask_seed_rng = Rng::derive(train_cfg.seed, "ssl-mask-seeds");

    report.loss_series.reserve(static_cast<size_t>(train_cfg.steps));
    for (long step = 0; step < train_cfg.steps; ++step) {
        model.zero_gradients();
        double loss_sum = 0.0;
        for (int bi = 0; bi < train_cfg.batch_clips; ++bi) {
            const size_t clip = train_clips[static_cast<size_t>(
                batch_rng.uniform_index(train_clips.size()))];
            const long T = inputs[clip].rows();
            const long crop = std::min<long>(T, train_cfg.crop_frames);
            const long start =
                T > crop ? static_cast<long>(batch_rng.uniform_index(
                               static_cast<uint64_t>(T - crop + 1)))
                         : 0;
            Crop c = take_crop(inputs[clip], targets[clip], start, crop);

            MaskConfig mc = mask_cfg;
            mc.seed = mask_seed_rng.next_u64();
            const Eigen::VectorXf live_fill = model.mask_fill();
            MaskResult masked = apply_mask(
                c.input, mc, mc.noise == MaskNoise::learned_embedding ? &live_fill : nullptr);
            if (std::none_of(masked.mask.begin(), masked.mask.end(),
                             [](uint8_t m) { return m != 0; })) {
                continue;  // a zero-prob config trains nothing but must not throw
            }
            loss_sum += model.accumulate_gradients(masked.frames, c.targets, masked.mask);
        }
        const double loss = loss_sum / train_cfg.batch_clips;
        if (!std::isfinite(loss)) throw DivergenceError("pretrain: non-finite loss", step);
        for (auto* g : model.gradients()) (*g) /= static_cast<float>(train_cfg.batch_clips);
        model.adam_step(train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2,
                        train_cfg.adam_eps, train_cfg.grad_clip);
        report.loss_series.push_back(loss);
    }

    // Held-out masked accuracy on deterministic crops with seeded masks.
    Rng eval_mask_rng = Rng::derive(train_cfg.seed, "ssl-eval-masks");
    std::vector<double> correct(static_cast<size_t>(model_cfg.num_target_heads), 0.0);
    double masked_total = 0.0;
    ProbeData probe;
    for (size_t clip : eval_clips) {
        probe.inputs.push_back(inputs[clip]);
        probe.targets.push_back(targets[clip]);
        for (const Crop& c : tile_crops(inputs[clip], targets[clip], train_cfg.crop_frames)) {
            MaskConfig mc = mask_cfg;
            if (mc.prob == 0.0) mc.prob = 0.5;  // evaluation needs masked frames
            mc.seed = eval_mask_rng.next_u64();
            const Eigen::VectorXf live_fill = model.mask_fill();
            MaskResult masked = apply_mask(
                c.input, mc, mc.noise == MaskNoise::learned_embedding ? &live_fill : nullptr);
            const auto fwd = model.forward(masked.frames);
            long masked_frames = 0;
            for (uint8_t m : masked.mask) masked_frames += m ? 1 : 0;
            if (masked_frames == 0) continue;
            const auto acc = masked_accuracy(fwd.logits, c.targets, masked.mask);
            for (size_t n = 0; n < acc.size(); ++n) {
                correct[n] += acc[n] * static_cast<double>(masked_frames);
            }
            masked_total += static_cast<double>(masked_frames);
        }
    }
    report.holdout_accuracy.assign(static_cast<size_t>(model_cfg.num_target_heads), 0.0);
    if (masked_total > 0.0) {
        for (size_t n = 0; n < correct.size(); ++n) {
            report.holdout_accuracy[n] = correct[n] / masked_total;
        }
    }

    report.layer_probe = layer_probe_table(model, probe, train_cfg.probe_frames);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(model), std::move(report)};
}

std::pair<SslToyModel, SslReport> pretrain(const std::vector<MelSpectrogram>& corpus,
                                           const MelRvq& rvq, const SslModelConfig& model_cfg,
                                           const MaskConfig& mask_cfg,
                                           const SslTrainConfig& train_cfg) {
    if (rvq.source != RvqSource::mel)
        throw DomainError("pretrain: quantizer source is not mel; use iterate for latent stages");
    if (model_cfg.num_target_heads != rvq.num_stages())
        throw ShapeError("pretrain: model heads != quantizer stages");
    if (model_cfg.codebook_size != rvq.codebook_size())
        throw ShapeError("pretrain: model codebook size != quantizer codebook size");

    std::vector<Eigen::MatrixXf> inputs;
    std::vector<TokenSequence> targets;
    inputs.reserve(corpus.size());
    targets.reserve(corpus.size());
    for (const auto& spec : corpus) {
        if (spec.mel_bins() != rvq.input_dim())
            throw ShapeError("pretrain: spectrogram bins != quantizer input dim");
        inputs.push_back(
            standardize(spec.frames.cast<double>(), rvq.input_stats).cast<float>());
        targets.push_back(encode(rvq, spec));
    }
    auto [model, report] = pretrain_on_pairs(inputs, targets, model_cfg, mask_cfg, train_cfg);
    model.set_input_stats(rvq.input_stats);
    return {std::move(model), std::move(report)};
}

std::vector<Eigen::MatrixXf> extract_latent_clips(const SslToyModel& model,
                                                  const std::vector<Eigen::MatrixXf>& inputs,
                                                  int layer) {
    std::vector<Eigen::MatrixXf> out;
    out.reserve(inputs.size());
    for (const auto& clip : inputs) {
        out.push_back(model.forward(clip).latents.layer_frames(layer));
    }
    return out;
}

Eigen::MatrixXd extract_latents(const SslToyModel& model,
                                const std::vector<Eigen::MatrixXf>& inputs, int layer) {
    const auto clips = extract_latent_clips(model, inputs, layer);
    long total = 0;
    for (const auto& c : clips) total += c.rows();
    const long d = clips.empty() ? 0 : clips.front().cols();
    Eigen::MatrixXd out(total, d);
    long row = 0;
    for (const auto& c : clips) {
        out.middleRows(row, c.rows()) = c.cast<double>();
        row += c.rows();
    }
    return out;
}

IterateResult iterate(const std::vector<MelSpectrogram>& corpus, const MelRvq& stage1_rvq,
                      const SslToyModel& stage1_model, int latent_layer,
                      const TrainConfig& rvq_cfg, int iter_code_dim,
                      const SslModelConfig& model_cfg, const MaskConfig& mask_cfg,
                      const SslTrainConfig& train_cfg) {
    if (corpus.empty()) throw DomainError("iterate: empty corpus");
    const int L = stage1_model.config().layers;
    int layer = latent_layer < 0 ? std::max(0, L - 1) : latent_layer;

    std::vector<Eigen::MatrixXf> inputs;
    inputs.reserve(corpus.size());
    for (const auto& spec : corpus) {
        inputs.push_back(
            standardize(spec.frames.cast<double>(), stage1_rvq.input_stats).cast<float>());
    }

    const auto latent_clips = extract_latent_clips(stage1_model, inputs, layer);
    long total = 0;
    for (const auto& c : latent_clips) total += c.rows();
    Eigen::MatrixXd latents(total, stage1_model.config().width);
    long row = 0;
    for (const auto& c : latent_clips) {
        latents.middleRows(row, c.rows()) = c.cast<double>();
        row += c.rows();
    }

    RvqDims dims;
    dims.num_stages = model_cfg.num_target_heads;
    dims.codebook_size = model_cfg.codebook_size;
    dims.code_dim = iter_code_dim;
    dims.input_dim = stage1_model.config().width;

    IterateResult result;
    auto [rvq_iter, rvq_report] = train(latents, rvq_cfg, dims, RvqSource::latent);
    result.rvq_iter = std::move(rvq_iter);
    result.rvq_report = std::move(rvq_report);

    std::vector<TokenSequence> targets;
    targets.reserve(latent_clips.size());
    for (const auto& c : latent_clips) {
        targets.push_back(encode_frames(result.rvq_iter, c.cast<double>()));
    }

    auto [model_iter, report] =
        pretrain_on_pairs(inputs, targets, model_cfg, mask_cfg, train_cfg);
    model_iter.set_input_stats(stage1_rvq.input_stats);
    result.model_iter = std::move(model_iter);
    result.report = std::move(report);
    return result;
}

}  // namespace melrvq
