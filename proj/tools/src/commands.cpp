#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

#include "melrvq/audio.hpp"
#include "melrvq/contrastive.hpp"
#include "melrvq/errors.hpp"
#include "melrvq/hash.hpp"
#include "melrvq/io.hpp"
#include "melrvq/manifest.hpp"
#include "melrvq/parallel.hpp"
#include "melrvq/rng.hpp"

namespace melrvq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> list_by_extension(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string e = entry.path().extension().string();
        std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e == ext) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir);
}

std::vector<MelSpectrogram> load_mels_dir(const std::string& dir,
                                          std::vector<fs::path>* paths_out = nullptr) {
    const auto files = list_by_extension(dir, ".mels");
    if (files.empty()) throw DomainError("no inputs: no .mels files in " + dir);
    std::vector<MelSpectrogram> corpus;
    corpus.reserve(files.size());
    for (const auto& p : files) corpus.push_back(load_mels(p.string()));
    if (paths_out) *paths_out = files;
    return corpus;
}

void write_rvq_report(const std::string& stem, const TrainReport& report, const RvqDims& dims) {
    {
        std::ofstream csv(stem + "_report.csv", std::ios::trunc);
        if (!csv) throw IoError("cannot create report csv");
        csv << "step,loss_code,loss_comm,loss_recon,loss_total\n";
        for (size_t i = 0; i < report.loss_series.size(); ++i) {
            const RvqLosses& l = report.loss_series[i];
            csv << i << "," << l.code << "," << l.comm << "," << l.recon << "," << l.total << "\n";
        }
    }
    json j;
    j["seed"] = report.seed;
    j["steps"] = report.loss_series.size();
    j["wall_seconds"] = report.wall_seconds;
    j["utilization"] = report.utilization;
    j["dims"] = {{"stages", dims.num_stages},
                 {"codebook_size", dims.codebook_size},
                 {"code_dim", dims.code_dim},
                 {"input_dim", dims.input_dim}};
    if (!report.loss_series.empty()) {
        j["first_loss"] = report.loss_series.front().total;
        j["final_loss"] = report.loss_series.back().total;
    }
    std::ofstream jf(stem + "_report.json", std::ios::trunc);
    jf << j.dump(2) << "\n";
}

void write_ssl_report(const std::string& dir, const SslReport& report) {
    {
        std::ofstream csv(fs::path(dir) / "loss_series.csv", std::ios::trunc);
        csv << "step,loss\n";
        for (size_t i = 0; i < report.loss_series.size(); ++i) {
            csv << i << "," << report.loss_series[i] << "\n";
        }
    }
    std::ofstream probe(fs::path(dir) / "layer_probe.csv", std::ios::trunc);
    probe << "layer,token_top1,input_r2\n";
    for (const auto& row : report.layer_probe) {
        probe << row.layer << "," << row.token_top1 << "," << row.input_r2 << "\n";
    }
}

json ssl_summary(const char* kind, const MelRvq& rvq, const SslReport& report) {
    json j;
    j["kind"] = kind;
    j["vq_type"] = rvq.frozen_random ? "random" : "trained";
    j["codebooks"] = rvq.num_stages();
    j["codebook_size"] = rvq.codebook_size();
    j["source"] = rvq.source == RvqSource::mel ? "mel" : "latent";
    j["heldout_accuracy"] = report.holdout_accuracy;
    j["chance_level"] = report.chance_level;
    if (!report.loss_series.empty()) {
        j["first_loss"] = report.loss_series.front();
        j["final_loss"] = report.loss_series.back();
    }
    j["wall_seconds"] = report.wall_seconds;
    j["seed"] = report.seed;
    return j;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot create " + path);
    f << j.dump(2) << "\n";
}

}  // namespace

FeaturizeResult cmd_featurize(const std::string& in_dir, const std::string& out_dir,
                              const PipelineConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto wavs = list_by_extension(in_dir, ".wav");
    if (wavs.empty()) throw DomainError("no inputs: no .wav files in " + in_dir);
    ensure_dir(out_dir);

    std::atomic<int> ok{0};
    std::atomic<int> warnings{0};
    std::mutex log_mutex;
    std::vector<std::string> outputs(wavs.size());

    parallel_for_items(wavs.size(), [&](size_t i) {
        const fs::path& wav = wavs[i];
        try {
            AudioClip clip = load_wav(wav.string());
            if (clip.sample_rate_hz != cfg.dsp.sample_rate_hz) {
                clip = resample(clip, cfg.dsp.sample_rate_hz);
            }
            const MelSpectrogram spec = mel_spectrogram(clip, cfg.dsp);
            const std::string out = (fs::path(out_dir) / wav.stem()).string() + ".mels";
            save_mels(out, spec);
            outputs[i] = out;
            ++ok;
        } catch (const Error& e) {
            ++warnings;
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cerr << "warning: skipping " << wav.string() << ": " << e.what() << "\n";
        }
    });

    if (ok == 0) throw DomainError("featurize: all " + std::to_string(wavs.size()) + " inputs failed");

    RunManifest manifest;
    manifest.command = "featurize";
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash_hex();
    manifest.warnings = warnings;
    for (const auto& wav : wavs) manifest.add_input(wav.string());
    for (const auto& out : outputs) {
        if (!out.empty()) manifest.add_output(out);
    }
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write((fs::path(out_dir) / "featurize_manifest.json").string());
    return {ok, warnings};
}

void cmd_train_rvq(const std::string& mels_dir, const std::string& out_path,
                   const PipelineConfig& cfg, const std::string& vq_type) {
    const auto t0 = std::chrono::steady_clock::now();
    if (vq_type != "trained" && vq_type != "random")
        throw UsageError("vq-type must be 'trained' or 'random'");

    std::vector<fs::path> inputs;
    const auto corpus = load_mels_dir(mels_dir, &inputs);
    const Eigen::MatrixXd frames = stack_frames(corpus);
    const RvqDims dims = cfg.rvq_dims_resolved();

    MelRvq rvq;
    TrainReport report;
    if (vq_type == "random") {
        rvq = freeze_random(dims, cfg.stage_seed("frozen-random"));
        rvq.input_stats = compute_feature_stats(frames);
        report.seed = cfg.stage_seed("frozen-random");
        report.utilization = codebook_utilization(rvq, frames);
    } else {
        auto [trained, train_report] = train(frames, cfg.rvq_train_resolved(), dims);
        rvq = std::move(trained);
        report = std::move(train_report);
    }
    if (fs::path(out_path).has_parent_path()) ensure_dir(fs::path(out_path).parent_path().string());
    save_rvq(out_path, rvq);

    const std::string stem = (fs::path(out_path).parent_path() / fs::path(out_path).stem()).string();
    write_rvq_report(stem, report, dims);

    RunManifest manifest;
    manifest.command = "train-rvq";
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash_hex();
    for (const auto& p : inputs) manifest.add_input(p.string());
    manifest.add_output(out_path);
    manifest.add_output(stem + "_report.csv");
    manifest.add_output(stem + "_report.json");
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write(stem + "_manifest.json");
}

void cmd_tokenize(const std::string& rvq_path, const std::string& mels_dir,
                  const std::string& out_dir, bool csv) {
    const auto t0 = std::chrono::steady_clock::now();
    const MelRvq rvq = load_rvq(rvq_path);
    std::vector<fs::path> inputs;
    const auto corpus = load_mels_dir(mels_dir, &inputs);
    ensure_dir(out_dir);

    std::vector<std::string> outputs(inputs.size());
    std::vector<std::string> csv_outputs(inputs.size());
    parallel_for_items(inputs.size(), [&](size_t i) {
        const TokenSequence toks = encode(rvq, corpus[i]);
        const std::string out = (fs::path(out_dir) / inputs[i].stem()).string() + ".mtok";
        save_tokens(out, toks);
        outputs[i] = out;
        if (csv) {
            const std::string out_csv = (fs::path(out_dir) / inputs[i].stem()).string() + ".csv";
            save_tokens_csv(out_csv, toks);
            csv_outputs[i] = out_csv;
        }
    });

    RunManifest manifest;
    manifest.command = "tokenize";
    manifest.config_hash = to_hex(hash_file(rvq_path));
    manifest.add_input(rvq_path);
    for (const auto& p : inputs) manifest.add_input(p.string());
    for (const auto& out : outputs) manifest.add_output(out);
    for (const auto& out : csv_outputs) {
        if (!out.empty()) manifest.add_output(out);
    }
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write((fs::path(out_dir) / "tokenize_manifest.json").string());
}

void cmd_pretrain(const std::string& mels_dir, const std::string& rvq_path,
                  const std::string& out_dir, const PipelineConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const MelRvq rvq = load_rvq(rvq_path);
    std::vector<fs::path> inputs;
    const auto corpus = load_mels_dir(mels_dir, &inputs);
    ensure_dir(out_dir);

    SslModelConfig model_cfg = cfg.model_resolved();
    model_cfg.num_target_heads = rvq.num_stages();
    model_cfg.codebook_size = rvq.codebook_size();
    auto [model, report] =
        pretrain(corpus, rvq, model_cfg, cfg.mask_resolved(), cfg.ssl_train_resolved());

    const std::string model_path = (fs::path(out_dir) / "model.mtoy").string();
    model.save(model_path);
    write_ssl_report(out_dir, report);
    write_json((fs::path(out_dir) / "summary.json").string(), ssl_summary("pretrain", rvq, report));

    RunManifest manifest;
    manifest.command = "pretrain";
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash_hex();
    manifest.add_input(rvq_path);
    for (const auto& p : inputs) manifest.add_input(p.string());
    manifest.add_output(model_path);
    manifest.add_output((fs::path(out_dir) / "summary.json").string());
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write((fs::path(out_dir) / "pretrain_manifest.json").string());
}

void cmd_iterate(const std::string& mels_dir, const std::string& rvq_path,
                 const std::string& model_path, const std::string& out_dir,
                 const PipelineConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const MelRvq stage1_rvq = load_rvq(rvq_path);
    const SslToyModel stage1_model = SslToyModel::load(model_path);
    std::vector<fs::path> inputs;
    const auto corpus = load_mels_dir(mels_dir, &inputs);
    ensure_dir(out_dir);

    TrainConfig rvq_cfg = cfg.rvq_train_resolved();
    rvq_cfg.seed = cfg.stage_seed("iterate-rvq");
    SslModelConfig model_cfg = cfg.model_resolved();
    model_cfg.num_target_heads = stage1_rvq.num_stages();
    model_cfg.codebook_size = stage1_rvq.codebook_size();
    model_cfg.seed = cfg.stage_seed("iterate-model-init");
    SslTrainConfig train_cfg = cfg.ssl_train_resolved();
    train_cfg.seed = cfg.stage_seed("iterate-pretrain");

    const IterateResult result =
        iterate(corpus, stage1_rvq, stage1_model, cfg.iterate_latent_layer, rvq_cfg,
                cfg.iterate_code_dim, model_cfg, cfg.mask_resolved(), train_cfg);

    const std::string rvq_out = (fs::path(out_dir) / "rvq_iter.mrvq").string();
    const std::string model_out = (fs::path(out_dir) / "model_iter.mtoy").string();
    save_rvq(rvq_out, result.rvq_iter);
    result.model_iter.save(model_out);
    write_ssl_report(out_dir, result.report);
    RvqDims iter_dims;
    iter_dims.num_stages = result.rvq_iter.num_stages();
    iter_dims.codebook_size = result.rvq_iter.codebook_size();
    iter_dims.code_dim = result.rvq_iter.code_dim();
    iter_dims.input_dim = result.rvq_iter.input_dim();
    write_rvq_report((fs::path(out_dir) / "rvq_iter").string(), result.rvq_report, iter_dims);
    write_json((fs::path(out_dir) / "summary.json").string(),
               ssl_summary("iterate", result.rvq_iter, result.report));

    RunManifest manifest;
    manifest.command = "iterate";
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash_hex();
    manifest.add_input(rvq_path);
    manifest.add_input(model_path);
    for (const auto& p : inputs) manifest.add_input(p.string());
    manifest.add_output(rvq_out);
    manifest.add_output(model_out);
    manifest.add_output((fs::path(out_dir) / "summary.json").string());
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write((fs::path(out_dir) / "iterate_manifest.json").string());
}

void cmd_report(const std::string& run_dir, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::is_directory(run_dir)) throw IoError("not a directory: " + run_dir);

    struct Entry {
        std::string run;
        json summary;
        std::string probe_csv;  // may be empty
    };
    std::vector<Entry> entries;
    for (const auto& item : fs::recursive_directory_iterator(run_dir)) {
        if (!item.is_regular_file() || item.path().filename() != "summary.json") continue;
        Entry e;
        e.run = fs::relative(item.path().parent_path(), run_dir).string();
        std::ifstream f(item.path());
        try {
            f >> e.summary;
        } catch (const json::exception& ex) {
            throw FormatError(item.path().string() + ": invalid JSON: " + ex.what());
        }
        const fs::path probe = item.path().parent_path() / "layer_probe.csv";
        if (fs::is_regular_file(probe)) e.probe_csv = probe.string();
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw DomainError("report: no summary.json files under " + run_dir);
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.run < b.run; });
    ensure_dir(out_dir);

    // Ablation table: one row per run (trained-vs-random, codebook counts).
    const std::string ablation_csv = (fs::path(out_dir) / "ablation.csv").string();
    {
        std::ofstream f(ablation_csv, std::ios::trunc);
        f << "run,kind,vq_type,codebooks,codebook_size,source,acc_head1,chance_level,final_loss\n";
        for (const auto& e : entries) {
            const auto acc = e.summary.value("heldout_accuracy", std::vector<double>{});
            f << e.run << "," << e.summary.value("kind", "") << ","
              << e.summary.value("vq_type", "") << "," << e.summary.value("codebooks", 0) << ","
              << e.summary.value("codebook_size", 0) << "," << e.summary.value("source", "")
              << "," << (acc.empty() ? 0.0 : acc.front()) << ","
              << e.summary.value("chance_level", 0.0) << "," << e.summary.value("final_loss", 0.0)
              << "\n";
        }
    }
    json ablation = json::array();
    for (const auto& e : entries) {
        json row = e.summary;
        row["run"] = e.run;
        ablation.push_back(row);
    }
    const std::string ablation_json = (fs::path(out_dir) / "ablation.json").string();
    write_json(ablation_json, ablation);

    // Layer-by-metric table merged across runs.
    const std::string layers_csv = (fs::path(out_dir) / "layer_metrics.csv").string();
    {
        std::ofstream f(layers_csv, std::ios::trunc);
        f << "run,layer,token_top1,input_r2\n";
        for (const auto& e : entries) {
            if (e.probe_csv.empty()) continue;
            std::ifstream probe(e.probe_csv);
            std::string line;
            std::getline(probe, line);  // header
            while (std::getline(probe, line)) {
                if (!line.empty()) f << e.run << "," << line << "\n";
            }
        }
    }

    RunManifest manifest;
    manifest.command = "report";
    manifest.add_output(ablation_csv);
    manifest.add_output(ablation_json);
    manifest.add_output(layers_csv);
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.write((fs::path(out_dir) / "report_manifest.json").string());
}

int cmd_dcl_selftest(std::ostream& out) {
    json checks;
    Rng rng(20240);
    auto random_batch = [&](int B, int d) {
        std::vector<EmbeddingPair> batch;
        for (int i = 0; i < B; ++i) {
            Eigen::VectorXd m(d), t(d);
            for (int k = 0; k < d; ++k) {
                m(k) = rng.gaussian();
                t(k) = rng.gaussian();
            }
            batch.push_back({m, t});
        }
        return batch;
    };

    // Brute-force agreement over random batches.
    {
        bool pass = true;
        double worst = 0.0;
        for (int trial = 0; trial < 25 && pass; ++trial) {
            const int B = 2 + static_cast<int>(rng.uniform_index(15));
            const auto batch = random_batch(B, 16);
            const double sigma = std::exp(rng.uniform(-1.5, 1.5));
            double expected = 0.0;
            for (int dir = 0; dir < 2; ++dir) {
                for (int i = 0; i < B; ++i) {
                    double denom = 0.0;
                    for (int jdx = 0; jdx < B; ++jdx) {
                        if (jdx == i) continue;
                        const double s =
                            dir == 0 ? batch[static_cast<size_t>(i)].music.dot(
                                           batch[static_cast<size_t>(jdx)].text)
                                     : batch[static_cast<size_t>(i)].text.dot(
                                           batch[static_cast<size_t>(jdx)].music);
                        denom += std::exp(s / sigma);
                    }
                    const double pos = batch[static_cast<size_t>(i)].music.dot(
                        batch[static_cast<size_t>(i)].text);
                    expected += -std::log(std::exp(pos / sigma) / denom);
                }
            }
            expected /= 2.0 * B;
            const double got = dcl_loss(batch, {.temperature = sigma});
            worst = std::max(worst, std::abs(got - expected));
            pass = pass && std::abs(got - expected) <= 1e-8;
        }
        checks["brute_force_agreement"] = {{"pass", pass}, {"max_abs_error", worst}};
    }

    // Permutation invariance.
    {
        auto batch = random_batch(8, 12);
        const double before = dcl_loss(batch, {.temperature = 0.3});
        std::vector<EmbeddingPair> shuffled(batch.rbegin(), batch.rend());
        const double after = dcl_loss(shuffled, {.temperature = 0.3});
        checks["permutation_invariance"] = {{"pass", std::abs(before - after) < 1e-12},
                                            {"abs_error", std::abs(before - after)}};
    }

    // Positive exclusion: the B=2 symmetric geometry has the closed form
    // -(s - c)/sigma only when the positive is excluded.
    {
        Eigen::VectorXd e1(2), e2(2);
        e1 << 1.2, 0.0;
        e2 << 0.0, 1.2;
        const double sigma = 0.5;
        const double got = dcl_loss({{e1, e1}, {e2, e2}}, {.temperature = sigma});
        const double expected = -(1.44 - 0.0) / sigma;
        checks["positive_exclusion"] = {{"pass", std::abs(got - expected) < 1e-12},
                                        {"value", got},
                                        {"closed_form", expected}};
    }

    // Temperature limit -> log(B - 1).
    {
        const auto batch = random_batch(6, 8);
        const double got = dcl_loss(batch, {.temperature = 1e9});
        checks["temperature_limit"] = {{"pass", std::abs(got - std::log(5.0)) < 1e-6},
                                       {"value", got}};
    }

    // Joint scale invariance.
    {
        Eigen::MatrixXd sims(5, 5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) sims(i, j) = rng.gaussian();
        }
        const double base = dcl_loss_from_similarities(sims, 0.7);
        bool pass = true;
        for (double c : {0.1, 3.0, 40.0}) {
            pass = pass &&
                   std::abs(dcl_loss_from_similarities((c * sims).eval(), c * 0.7) - base) < 1e-9;
        }
        checks["joint_scale_invariance"] = {{"pass", pass}};
    }

    // Decoupling direction.
    {
        Eigen::MatrixXd sims(4, 4);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) sims(i, j) = rng.gaussian();
        }
        const double base = dcl_loss_from_similarities(sims, 0.5);
        Eigen::MatrixXd up_pos = sims;
        up_pos(1, 1) += 0.5;
        Eigen::MatrixXd up_neg = sims;
        up_neg(1, 2) += 0.5;
        const bool pass = dcl_loss_from_similarities(up_pos, 0.5) < base &&
                          dcl_loss_from_similarities(up_neg, 0.5) > base;
        checks["decoupling_direction"] = {{"pass", pass}};
    }

    bool all = true;
    for (const auto& [name, result] : checks.items()) {
        all = all && result.at("pass").get<bool>();
    }
    json summary;
    summary["checks"] = checks;
    summary["all_pass"] = all;
    out << summary.dump(2) << "\n";
    return all ? 0 : 2;
}

}  // namespace melrvq::cli
