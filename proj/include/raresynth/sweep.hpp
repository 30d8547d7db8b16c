#pragma once

#include <memory>
#include <string>
#include <vector>

#include "raresynth/classifier.hpp"
#include "raresynth/config.hpp"
#include "raresynth/data.hpp"
#include "raresynth/diffusion.hpp"
#include "raresynth/lora.hpp"
#include "raresynth/metrics.hpp"

namespace raresynth {

struct RunResult {
  std::string domain;
  AssembleMode mode = AssembleMode::mixed;
  double ratio = 0.0;
  int fold = 0;
  std::uint64_t seed = 0;  // the sweep-seed value, not an index
  double f1 = 0.0, pr_auc = 0.0, recall = 0.0, precision = 0.0;
  ConfusionCounts confusion;
  double wall_seconds = 0.0;  // measured; reported on stderr, not in the CSV
};

struct AggregateRow {
  std::string domain;
  AssembleMode mode = AssembleMode::mixed;
  double ratio = 0.0;
  int n_runs = 0;
  double f1_mean = 0.0, f1_std = 0.0;
  double pr_auc_mean = 0.0, pr_auc_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  double precision_mean = 0.0, precision_std = 0.0;
};

struct SweepOutput {
  std::vector<RunResult> results;  // sorted by (mode, ratio, seed, fold)
  std::vector<AggregateRow> aggregate;

  std::shared_ptr<UNet<float>> base_model;
  std::shared_ptr<AdaptedModel<float>> adapter;
  Dataset pool;
  std::shared_ptr<ClassifierModel<float>> reference_classifier;
  std::vector<StepLoss> pretrain_log, finetune_log;
};

// Full protocol: pretrain (or load) the base model, fine-tune the adapter on
// the reserved rare set, generate the synthetic pool, then train and evaluate
// one classifier per (ratio, mode, fold, seed) cell. Test splits are real
// only and identical across ratios and modes for a fixed (fold, seed); runs
// may execute concurrently because each derives its RNG streams from its
// cell key.
SweepOutput run_sweep(const PipelineConfig& cfg);

// Stages shared between run_sweep and the standalone CLI commands so a saved
// base checkpoint reproduces exactly what a from-scratch sweep would train.
Dataset build_pretrain_dataset(const PipelineConfig& cfg);
PretrainResult pretrain_base_model(const PipelineConfig& cfg);
ImbalancedSplit make_split_for(const PipelineConfig& cfg);
FinetuneResult finetune_adapter_for(const PipelineConfig& cfg, const UNet<float>& base,
                                    const Dataset& rare);
Dataset generate_pool_for(const PipelineConfig& cfg, UNet<float>& merged, int count);

std::string results_csv(const std::vector<RunResult>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string sweep_plot_svg(const std::vector<AggregateRow>& rows);

std::vector<RunResult> parse_results_csv(const std::string& content);
std::vector<AggregateRow> aggregate_results(const std::vector<RunResult>& rows);

// Table with Dataset / Synth Ratio / F1 / PR-AUC / Recall columns.
std::string format_report_table(const std::vector<AggregateRow>& rows);

}  // namespace raresynth
