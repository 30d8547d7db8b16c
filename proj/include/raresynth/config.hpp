#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raresynth/classifier.hpp"
#include "raresynth/data.hpp"
#include "raresynth/diffusion.hpp"
#include "raresynth/lora.hpp"

namespace raresynth {

struct ScheduleConfig {
  int T = 200;
  ScheduleKind kind = ScheduleKind::linear;
};

struct PretrainSection {
  int steps = 3000;
  int batch = 16;
  double lr = 1e-3;
  double p_uncond = 0.1;
  int n_per_class = 1000;
};

struct SamplerSection {
  int steps = 24;
  double guidance_scale = 2.0;
  double eta = 0.0;
};

struct DataSection {
  int n_neg = 1000;
  int n_pos_train = 50;
  int n_pos_lora = 50;
  double test_fraction = 0.2;
};

struct SweepSection {
  std::vector<double> ratios = {0, 0.5, 1, 2, 4, 10, 20};
  bool include_synth_only = true;  // at the maximum ratio
  int folds = 5;
  std::vector<std::uint64_t> seeds = {1};
  bool refit_lora_per_fold = false;
  int pool_size = 1000;
  std::string base_checkpoint;  // optional: reuse a pretrained base
};

struct DiversitySection {
  std::int64_t max_pairs = 2000;
  double psnr_shift_db = 3.0;
  double collapse_std_ratio = 0.25;
};

// The whole experiment in one declarative document. Round-trips losslessly
// through JSON; every command embeds the resolved form in its output.
struct PipelineConfig {
  int schema_version = 1;
  std::string profile = "desk";
  Domain domain = Domain::tilecrack;
  DomainParams domain_params;
  ScheduleConfig schedule;
  UNetConfig model;
  PretrainSection pretrain;
  SamplerSection sampler;
  LoraConfig lora;
  ClassifierConfig classifier;
  double threshold = 0.5;  // decision threshold for confusion-based metrics
  DataSection data;
  SweepSection sweep;
  DiversitySection diversity;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int jobs = 1;
};

// Shipped default bundles. "desk" is sized for a commodity multicore CPU;
// "paper" records the full-scale hyperparameters (rank 64, T=1000, 1000-image
// pool) for documentation and small-scale dry runs.
PipelineConfig default_config(const std::string& profile);

nlohmann::json pipeline_config_to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

// defaults(profile) overlaid with the user document (JSON merge-patch
// semantics; arrays replace wholesale). Unknown keys are format errors.
PipelineConfig load_config_file(const std::string& path, const std::string& profile);

std::string resolved_config_string(const PipelineConfig& c);

}  // namespace raresynth
