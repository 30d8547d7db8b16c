#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "raresynth/classifier.hpp"
#include "raresynth/data.hpp"
#include "raresynth/tensor.hpp"

namespace raresynth {

// Empirical sample of a pairwise metric with recomputable summaries.
struct Distribution {
  std::vector<double> values;
  std::int64_t count = 0;
  double mean = 0.0, stddev = 0.0;  // sample standard deviation (n-1)
  double min = 0.0, max = 0.0;
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;  // linear interpolation
  std::vector<double> bin_edges;            // size bins+1
  std::vector<std::int64_t> bin_counts;     // sums to count

  static Distribution from_values(std::vector<double> values, int bins = 30);
};

// 10*log10(1/MSE) for images in [0,1]; identical images hit the 100 dB cap.
inline constexpr double kPsnrCapDb = 100.0;
double psnr(const Tensor<float>& a, const Tensor<float>& b);

// 1 - cosine similarity of L2-normalized embeddings; range [0, 2].
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

// cosine_distance of the classifier's penultimate embeddings. A documented
// surrogate for a perceptual metric; symmetric, zero on identical inputs.
double perceptual_distance(ClassifierModel<float>& model, const Tensor<float>& a,
                           const Tensor<float>& b);

// Distinct unordered index pairs, uniform without replacement; exhaustive
// when C(n,2) <= max_pairs. Deterministic per seed.
std::vector<std::pair<int, int>> sample_pairs(int n, std::int64_t max_pairs,
                                              std::uint64_t seed);

using PairMetric = std::function<double(const Tensor<float>&, const Tensor<float>&)>;

Distribution pairwise_distribution(const std::vector<const Tensor<float>*>& images,
                                   const PairMetric& metric, std::int64_t max_pairs,
                                   std::uint64_t seed);

struct DiversityReport {
  Distribution psnr_real, psnr_synth;
  Distribution percep_real, percep_synth;
  double psnr_mean_shift = 0.0;    // synth mean minus real mean, dB
  double percep_mean_shift = 0.0;  // synth mean minus real mean
  double ks_psnr = 0.0;
  double ks_percep = 0.0;
  bool structure_preserved = false;
  bool collapse_suspected = false;
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  double psnr_shift_db_threshold = 3.0;
  double collapse_std_ratio = 0.25;
};

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b);

// All four distributions share the pair budget and the pairing seed policy
// (per-set streams derived from one seed; PSNR and perceptual distance are
// evaluated on the same sampled pairs).
DiversityReport compare_diversity(const Dataset& real_pos, const Dataset& synth_pool,
                                  ClassifierModel<float>& model, std::int64_t budget,
                                  std::uint64_t seed, double psnr_shift_db = 3.0,
                                  double collapse_std_ratio = 0.25);

}  // namespace raresynth
