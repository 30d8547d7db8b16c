#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace raresynth {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
};

// Predict positive iff score >= tau.
ConfusionCounts confusion_at_threshold(const std::vector<double>& scores,
                                       const std::vector<int>& labels, double tau);

struct PrfScores {
  double f1 = 0.0, precision = 0.0, recall = 0.0;
};

// Zero-denominator convention: precision, recall and f1 fall back to 0.
PrfScores f1_precision_recall(const ConfusionCounts& c);

// Average precision over descending-score prefixes. Ties are grouped:
// precision and recall are evaluated only after a whole tie group, which
// makes the result invariant to input permutation.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> test_indices;  // per fold, ascending
  std::vector<std::string> warnings;
};

// Shuffles within each class, then deals round-robin, so per-fold class
// counts differ by at most one.
FoldPlan stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed);

}  // namespace raresynth
