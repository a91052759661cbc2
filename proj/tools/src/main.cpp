#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "melrvq/errors.hpp"

namespace {

using melrvq::cli::PipelineConfig;

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<long> steps;       // rvq_train.steps or ssl_train.steps per command
    std::optional<double> learning_rate;
    std::optional<int> batch_size;
    std::optional<std::string> init;
    std::optional<std::string> optimizer;
    std::optional<int> dead_code_threshold;
    std::optional<int> stages;
    std::optional<int> codebook_size;
    std::optional<int> code_dim;
    std::optional<int> width;
    std::optional<int> layers;
    std::optional<double> mask_prob;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Pipeline config JSON (flags override fields)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "Root seed override");
    cmd->add_option("--steps", opts.steps, "Training step override for this command");
    cmd->add_option("--learning-rate", opts.learning_rate, "Learning rate override");
    cmd->add_option("--batch-size", opts.batch_size, "Quantizer batch size override");
    cmd->add_option("--init", opts.init, "Codebook init override")
        ->check(CLI::IsMember({"kmeans_sample", "random_gaussian"}));
    cmd->add_option("--optimizer", opts.optimizer, "Quantizer optimizer override")
        ->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--dead-code-threshold", opts.dead_code_threshold,
                    "Per-epoch hit count below which codes are reseeded (0 disables)");
    cmd->add_option("--stages", opts.stages, "Residual stage count override");
    cmd->add_option("--codebook-size", opts.codebook_size, "Codebook size override");
    cmd->add_option("--code-dim", opts.code_dim, "Code dimension override");
    cmd->add_option("--width", opts.width, "Encoder width override");
    cmd->add_option("--layers", opts.layers, "Encoder layer count override");
    cmd->add_option("--mask-prob", opts.mask_prob, "Masking probability override");
}

PipelineConfig resolve_config(const CommonOpts& opts, bool steps_are_ssl) {
    PipelineConfig cfg = opts.config_path.empty()
                             ? PipelineConfig{}
                             : PipelineConfig::from_file(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.steps) {
        if (steps_are_ssl) {
            cfg.ssl_train.steps = *opts.steps;
        } else {
            cfg.rvq_train.steps = *opts.steps;
        }
    }
    if (opts.learning_rate) {
        if (steps_are_ssl) {
            cfg.ssl_train.learning_rate = *opts.learning_rate;
        } else {
            cfg.rvq_train.learning_rate = *opts.learning_rate;
        }
    }
    if (opts.batch_size) cfg.rvq_train.batch_size = *opts.batch_size;
    if (opts.init) {
        cfg.rvq_train.init =
            *opts.init == "kmeans_sample" ? melrvq::RvqInit::kmeans_sample
                                          : melrvq::RvqInit::random_gaussian;
    }
    if (opts.optimizer) {
        cfg.rvq_train.optimizer =
            *opts.optimizer == "adam" ? melrvq::Optimizer::adam : melrvq::Optimizer::sgd;
    }
    if (opts.dead_code_threshold) cfg.rvq_train.dead_code_threshold = *opts.dead_code_threshold;
    if (opts.stages) cfg.rvq.num_stages = *opts.stages;
    if (opts.codebook_size) cfg.rvq.codebook_size = *opts.codebook_size;
    if (opts.code_dim) cfg.rvq.code_dim = *opts.code_dim;
    if (opts.width) cfg.model.width = *opts.width;
    if (opts.layers) cfg.model.layers = *opts.layers;
    if (opts.mask_prob) cfg.mask.prob = *opts.mask_prob;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mel residual vector quantization pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string in_dir, out_dir, out_path, mels_dir, rvq_path, model_path, run_dir;
    std::string vq_type = "trained";
    bool csv = false;

    CLI::App* featurize = app.add_subcommand("featurize", "WAV directory to MELS features");
    featurize->add_option("--in", in_dir, "Input directory of .wav files")->required();
    featurize->add_option("--out", out_dir, "Output directory for .mels files")->required();
    add_common(featurize, opts);

    CLI::App* train_rvq = app.add_subcommand("train-rvq", "Train a quantizer on MELS features");
    train_rvq->add_option("--mels", mels_dir, "Directory of .mels files")->required();
    train_rvq->add_option("--out", out_path, "Output checkpoint path (.mrvq)")->required();
    train_rvq->add_option("--vq-type", vq_type, "trained or random (frozen ablation baseline)")
        ->check(CLI::IsMember({"trained", "random"}));
    add_common(train_rvq, opts);

    CLI::App* tokenize = app.add_subcommand("tokenize", "Extract token files from features");
    tokenize->add_option("--rvq", rvq_path, "Quantizer checkpoint")->required();
    tokenize->add_option("--mels", mels_dir, "Directory of .mels files")->required();
    tokenize->add_option("--out", out_dir, "Output directory for .mtok files")->required();
    tokenize->add_flag("--csv", csv, "Also write tokens as CSV");

    CLI::App* pretrain = app.add_subcommand("pretrain", "Masked-prediction pretraining (stage 1)");
    pretrain->add_option("--mels", mels_dir, "Directory of .mels files")->required();
    pretrain->add_option("--rvq", rvq_path, "Quantizer checkpoint providing targets")->required();
    pretrain->add_option("--out", out_dir, "Output run directory")->required();
    add_common(pretrain, opts);

    CLI::App* iterate = app.add_subcommand("iterate", "Iterative refinement (stage 2)");
    iterate->add_option("--mels", mels_dir, "Directory of .mels files")->required();
    iterate->add_option("--rvq", rvq_path, "Stage-1 quantizer checkpoint")->required();
    iterate->add_option("--model", model_path, "Stage-1 model checkpoint")->required();
    iterate->add_option("--out", out_dir, "Output run directory")->required();
    add_common(iterate, opts);

    CLI::App* report = app.add_subcommand("report", "Merge run reports into plot-ready tables");
    report->add_option("--run", run_dir, "Directory containing run outputs")->required();
    report->add_option("--out", out_dir, "Output directory for merged tables")->required();

    CLI::App* selftest = app.add_subcommand("dcl-selftest", "Contrastive-loss property checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*featurize) {
            melrvq::cli::cmd_featurize(in_dir, out_dir, resolve_config(opts, false));
        } else if (*train_rvq) {
            melrvq::cli::cmd_train_rvq(mels_dir, out_path, resolve_config(opts, false), vq_type);
        } else if (*tokenize) {
            melrvq::cli::cmd_tokenize(rvq_path, mels_dir, out_dir, csv);
        } else if (*pretrain) {
            melrvq::cli::cmd_pretrain(mels_dir, rvq_path, out_dir, resolve_config(opts, true));
        } else if (*iterate) {
            melrvq::cli::cmd_iterate(mels_dir, rvq_path, model_path, out_dir,
                                     resolve_config(opts, true));
        } else if (*report) {
            melrvq::cli::cmd_report(run_dir, out_dir);
        } else if (*selftest) {
            return melrvq::cli::cmd_dcl_selftest(std::cout);
        }
    } catch (const melrvq::cli::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const melrvq::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const melrvq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
