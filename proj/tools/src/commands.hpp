#pragma once

#include <ostream>
#include <string>

#include "pipeline_config.hpp"

namespace melrvq::cli {

struct FeaturizeResult {
    int files_ok = 0;
    int warnings = 0;
};

// WAV directory -> one .mels file per readable input. Unreadable files are
// reported and skipped; it is an error only when no input succeeds.
FeaturizeResult cmd_featurize(const std::string& in_dir, const std::string& out_dir,
                              const PipelineConfig& cfg);

// Train (or freeze, for the random-VQ ablation) a quantizer on a .mels
// directory and write the checkpoint plus CSV/JSON training reports.
void cmd_train_rvq(const std::string& mels_dir, const std::string& out_path,
                   const PipelineConfig& cfg, const std::string& vq_type);

// Tokenize every .mels file with a checkpoint into .mtok (and optional CSV).
void cmd_tokenize(const std::string& rvq_path, const std::string& mels_dir,
                  const std::string& out_dir, bool csv);

// Stage-1 masked-prediction pretraining; writes model.mtoy, loss series,
// the layer-probe table, and a machine-readable summary.
void cmd_pretrain(const std::string& mels_dir, const std::string& rvq_path,
                  const std::string& out_dir, const PipelineConfig& cfg);

// Stage-2 iterative refinement from a stage-1 checkpoint pair.
void cmd_iterate(const std::string& mels_dir, const std::string& rvq_path,
                 const std::string& model_path, const std::string& out_dir,
                 const PipelineConfig& cfg);

// Merge run summaries and layer-probe tables under a run directory into
// ablation and layer-metric CSV/JSON files.
void cmd_report(const std::string& run_dir, const std::string& out_dir);

// Contrastive-loss property checks; JSON summary to `out`. Returns 0 when
// every check passes.
int cmd_dcl_selftest(std::ostream& out);

}  // namespace melrvq::cli
