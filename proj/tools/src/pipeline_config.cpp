#include "pipeline_config.hpp"

#include <fstream>

#include "melrvq/errors.hpp"
#include "melrvq/hash.hpp"
#include "melrvq/rng.hpp"

namespace melrvq::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw UsageError("config: unknown key '" + key + "' in section '" + section + "'");
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError(std::string("config: bad value for '") + key + "'");
    }
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw UsageError("config: invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig cfg;
    check_keys(j, "<root>", {"seed", "dsp", "rvq", "rvq_train", "mask", "model", "ssl_train",
                             "iterate"});
    get(j, "seed", cfg.seed);

    if (j.contains("dsp")) {
        const json& d = j.at("dsp");
        check_keys(d, "dsp", {"sample_rate_hz", "window", "hop", "mel_bins", "pool_factor",
                              "fmin_hz", "fmax_hz", "log_eps"});
        get(d, "sample_rate_hz", cfg.dsp.sample_rate_hz);
        get(d, "window", cfg.dsp.window);
        get(d, "hop", cfg.dsp.hop);
        get(d, "mel_bins", cfg.dsp.mel_bins);
        get(d, "pool_factor", cfg.dsp.pool_factor);
        get(d, "fmin_hz", cfg.dsp.fmin_hz);
        get(d, "fmax_hz", cfg.dsp.fmax_hz);
        get(d, "log_eps", cfg.dsp.log_eps);
    }

    if (j.contains("rvq")) {
        const json& r = j.at("rvq");
        check_keys(r, "rvq", {"stages", "codebook_size", "code_dim", "alpha", "beta"});
        get(r, "stages", cfg.rvq.num_stages);
        get(r, "codebook_size", cfg.rvq.codebook_size);
        get(r, "code_dim", cfg.rvq.code_dim);
        get(r, "alpha", cfg.rvq.alpha);
        get(r, "beta", cfg.rvq.beta);
    }

    if (j.contains("rvq_train")) {
        const json& t = j.at("rvq_train");
        check_keys(t, "rvq_train",
                   {"learning_rate", "steps", "batch_size", "init", "dead_code_threshold",
                    "optimizer", "adam_beta1", "adam_beta2", "adam_eps"});
        get(t, "learning_rate", cfg.rvq_train.learning_rate);
        get(t, "steps", cfg.rvq_train.steps);
        get(t, "batch_size", cfg.rvq_train.batch_size);
        get(t, "dead_code_threshold", cfg.rvq_train.dead_code_threshold);
        get(t, "adam_beta1", cfg.rvq_train.adam_beta1);
        get(t, "adam_beta2", cfg.rvq_train.adam_beta2);
        get(t, "adam_eps", cfg.rvq_train.adam_eps);
        if (t.contains("init")) {
            const std::string init = t.at("init").get<std::string>();
            if (init == "kmeans_sample") {
                cfg.rvq_train.init = RvqInit::kmeans_sample;
            } else if (init == "random_gaussian") {
                cfg.rvq_train.init = RvqInit::random_gaussian;
            } else {
                throw UsageError("config: rvq_train.init must be kmeans_sample or random_gaussian");
            }
        }
        if (t.contains("optimizer")) {
            const std::string opt = t.at("optimizer").get<std::string>();
            if (opt == "adam") {
                cfg.rvq_train.optimizer = Optimizer::adam;
            } else if (opt == "sgd") {
                cfg.rvq_train.optimizer = Optimizer::sgd;
            } else {
                throw UsageError("config: rvq_train.optimizer must be adam or sgd");
            }
        }
    }

    if (j.contains("mask")) {
        const json& m = j.at("mask");
        check_keys(m, "mask", {"prob", "span_frames", "noise"});
        get(m, "prob", cfg.mask.prob);
        get(m, "span_frames", cfg.mask.span_frames);
        if (m.contains("noise")) {
            const std::string noise = m.at("noise").get<std::string>();
            if (noise == "gaussian") {
                cfg.mask.noise = MaskNoise::gaussian;
            } else if (noise == "learned_embedding") {
                cfg.mask.noise = MaskNoise::learned_embedding;
            } else {
                throw UsageError("config: mask.noise must be gaussian or learned_embedding");
            }
        }
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"width", "layers", "attn_heads", "ffn_mult"});
        get(m, "width", cfg.model.width);
        get(m, "layers", cfg.model.layers);
        get(m, "attn_heads", cfg.model.attn_heads);
        get(m, "ffn_mult", cfg.model.ffn_mult);
    }

    if (j.contains("ssl_train")) {
        const json& t = j.at("ssl_train");
        check_keys(t, "ssl_train",
                   {"learning_rate", "steps", "batch_clips", "crop_frames", "holdout_fraction",
                    "grad_clip", "probe_frames", "adam_beta1", "adam_beta2", "adam_eps"});
        get(t, "learning_rate", cfg.ssl_train.learning_rate);
        get(t, "steps", cfg.ssl_train.steps);
        get(t, "batch_clips", cfg.ssl_train.batch_clips);
        get(t, "crop_frames", cfg.ssl_train.crop_frames);
        get(t, "holdout_fraction", cfg.ssl_train.holdout_fraction);
        get(t, "grad_clip", cfg.ssl_train.grad_clip);
        get(t, "probe_frames", cfg.ssl_train.probe_frames);
        get(t, "adam_beta1", cfg.ssl_train.adam_beta1);
        get(t, "adam_beta2", cfg.ssl_train.adam_beta2);
        get(t, "adam_eps", cfg.ssl_train.adam_eps);
    }

    if (j.contains("iterate")) {
        const json& it = j.at("iterate");
        check_keys(it, "iterate", {"latent_layer", "code_dim"});
        get(it, "latent_layer", cfg.iterate_latent_layer);
        get(it, "code_dim", cfg.iterate_code_dim);
    }

    try {
        cfg.dsp.validate();
        cfg.rvq_train_resolved().validate();
        cfg.mask_resolved().validate();
        cfg.model_resolved().validate();
        cfg.ssl_train_resolved().validate();
    } catch (const Error& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return cfg;
}

nlohmann::json PipelineConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["dsp"] = {{"sample_rate_hz", dsp.sample_rate_hz}, {"window", dsp.window},
                {"hop", dsp.hop},             {"mel_bins", dsp.mel_bins},
                {"pool_factor", dsp.pool_factor}, {"fmin_hz", dsp.fmin_hz},
                {"fmax_hz", dsp.fmax_hz},     {"log_eps", dsp.log_eps}};
    j["rvq"] = {{"stages", rvq.num_stages},
                {"codebook_size", rvq.codebook_size},
                {"code_dim", rvq.code_dim},
                {"alpha", rvq.alpha},
                {"beta", rvq.beta}};
    j["rvq_train"] = {
        {"learning_rate", rvq_train.learning_rate},
        {"steps", rvq_train.steps},
        {"batch_size", rvq_train.batch_size},
        {"init", rvq_train.init == RvqInit::kmeans_sample ? "kmeans_sample" : "random_gaussian"},
        {"dead_code_threshold", rvq_train.dead_code_threshold},
        {"optimizer", rvq_train.optimizer == Optimizer::adam ? "adam" : "sgd"},
        {"adam_beta1", rvq_train.adam_beta1},
        {"adam_beta2", rvq_train.adam_beta2},
        {"adam_eps", rvq_train.adam_eps}};
    j["mask"] = {{"prob", mask.prob},
                 {"span_frames", mask.span_frames},
                 {"noise", mask.noise == MaskNoise::gaussian ? "gaussian" : "learned_embedding"}};
    j["model"] = {{"width", model.width},
                  {"layers", model.layers},
                  {"attn_heads", model.attn_heads},
                  {"ffn_mult", model.ffn_mult}};
    j["ssl_train"] = {{"learning_rate", ssl_train.learning_rate},
                      {"steps", ssl_train.steps},
                      {"batch_clips", ssl_train.batch_clips},
                      {"crop_frames", ssl_train.crop_frames},
                      {"holdout_fraction", ssl_train.holdout_fraction},
                      {"grad_clip", ssl_train.grad_clip},
                      {"probe_frames", ssl_train.probe_frames},
                      {"adam_beta1", ssl_train.adam_beta1},
                      {"adam_beta2", ssl_train.adam_beta2},
                      {"adam_eps", ssl_train.adam_eps}};
    j["iterate"] = {{"latent_layer", iterate_latent_layer}, {"code_dim", iterate_code_dim}};
    return j;
}

std::string PipelineConfig::hash_hex() const { return to_hex(fnv1a64(to_json().dump())); }

uint64_t PipelineConfig::stage_seed(const char* stage) const { return derive_seed(seed, stage); }

RvqDims PipelineConfig::rvq_dims_resolved() const {
    RvqDims dims = rvq;
    dims.input_dim = dsp.mel_bins;
    return dims;
}

TrainConfig PipelineConfig::rvq_train_resolved() const {
    TrainConfig t = rvq_train;
    t.seed = stage_seed("train-rvq");
    return t;
}

SslModelConfig PipelineConfig::model_resolved() const {
    SslModelConfig m = model;
    m.input_dim = dsp.mel_bins;
    m.num_target_heads = rvq.num_stages;
    m.codebook_size = rvq.codebook_size;
    m.noise = mask.noise;
    m.seed = stage_seed("model-init");
    return m;
}

SslTrainConfig PipelineConfig::ssl_train_resolved() const {
    SslTrainConfig t = ssl_train;
    t.seed = stage_seed("pretrain");
    return t;
}

MaskConfig PipelineConfig::mask_resolved() const {
    MaskConfig m = mask;
    m.seed = stage_seed("mask");
    return m;
}

}  // namespace melrvq::cli
