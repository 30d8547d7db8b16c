#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raresynth/tensor.hpp"

namespace raresynth {

enum class Label : int { negative = 0, positive = 1 };
enum class Origin : int { real = 0, synthetic = 1 };

// Class-embedding token ids. The unconditional token is what guided sampling
// contrasts against; it is never a sample label.
inline constexpr int kTokenNegative = 0;
inline constexpr int kTokenPositive = 1;
inline constexpr int kTokenUncond = 2;
inline constexpr int kNumTokens = 3;

// One grayscale image with its label and provenance. Images are stored in
// data space: shape (1, H, W), values in [0, 1].
struct LabeledSample {
  Tensor<float> image;
  Label label = Label::negative;
  Origin origin = Origin::real;
  std::string id;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::string domain;
  std::string note;

  std::size_t size() const { return samples.size(); }
  int count(Label l) const {
    int n = 0;
    for (const auto& s : samples)
      if (s.label == l) ++n;
    return n;
  }
  int count_origin(Origin o) const {
    int n = 0;
    for (const auto& s : samples)
      if (s.origin == o) ++n;
    return n;
  }
};

enum class Domain { tilecrack, lungspot };

std::string domain_name(Domain d);
Domain parse_domain(const std::string& s);

// Procedural generator knobs. Negative texture fields apply to both domains;
// crack_* describe the tilecrack defect, blob_* the lungspot lesion.
struct DomainParams {
  int image_size = 32;
  double noise_amp = 0.14;       // value-noise texture amplitude
  double pixel_noise = 0.02;     // fine per-pixel noise sigma
  int distractor_min = 1;        // dark smudges stamped on every tile
  int distractor_max = 3;
  // tilecrack positives: dark jagged polyline
  int crack_count = 1;
  int crack_width = 2;
  double crack_depth_min = 0.30;
  double crack_depth_max = 0.60;
  int crack_len_min = 18;
  int crack_len_max = 40;
  // lungspot positives: bright round blob
  double blob_radius_min = 2.0;
  double blob_radius_max = 5.0;
  double blob_amp_min = 0.20;
  double blob_amp_max = 0.40;
};

DomainParams default_domain_params(Domain d, int image_size = 32);

// Deterministic per-seed sample synthesis. Positive samples superimpose the
// rare structure on the same negative texture the seed would produce.
LabeledSample gen_domain(Domain domain, const DomainParams& params, Label label,
                         std::uint64_t seed);

// As gen_domain, also reporting which pixels carry the rare structure.
LabeledSample gen_domain_masked(Domain domain, const DomainParams& params, Label label,
                                std::uint64_t seed, Tensor<float>* mask_out);

struct ImbalancedSplit {
  Dataset train;     // n_neg negatives + n_pos_train positives, all real
  Dataset lora_set;  // n_pos_lora real positives, ids disjoint from the rest
  Dataset test;      // floor(test_fraction * counts) extra real samples per class
};

ImbalancedSplit make_imbalanced_split(Domain domain, const DomainParams& params,
                                      int n_neg, int n_pos_train, int n_pos_lora,
                                      double test_fraction, std::uint64_t seed);

// Reads a `path,label` manifest (paths relative to the manifest's directory,
// labels 0/1), decodes PNGs to grayscale [0,1] and resizes to target_size.
Dataset load_image_dir(const std::string& manifest_path, int target_size);

enum class AssembleMode { mixed, synth_only };

AssembleMode parse_assemble_mode(const std::string& s);
std::string assemble_mode_name(AssembleMode m);

// Builds the training set for one synthetic-to-real ratio. The pool is
// shuffled once per seed and consumed as a prefix, so selections for smaller
// ratios are prefixes of selections for larger ones.
Dataset assemble_training_set(const Dataset& real_train, const Dataset& pool,
                              double ratio, AssembleMode mode, std::uint64_t seed);

}  // namespace raresynth
