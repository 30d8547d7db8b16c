#include "raresynth/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "raresynth/rng.hpp"

namespace raresynth {

ConfusionCounts confusion_at_threshold(const std::vector<double>& scores,
                                       const std::vector<int>& labels, double tau) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("confusion_at_threshold: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= tau;
    if (labels[i]) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

PrfScores f1_precision_recall(const ConfusionCounts& c) {
  PrfScores s;
  if (c.tp + c.fp > 0)
    s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0)
    s.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("pr_auc: length mismatch");
  std::int64_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0) throw std::invalid_argument("pr_auc: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double recall_prev = 0.0;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      labels[order[j]] ? ++tp : ++fp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  if (k > n) throw std::invalid_argument("stratified_kfold: k exceeds sample count");

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.test_indices.resize(static_cast<std::size_t>(k));

  Rng rng(derive_seed_role(seed, SeedRole::fold));
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if ((labels[static_cast<std::size_t>(i)] != 0) == (cls != 0)) idx.push_back(i);
    if (!idx.empty() && static_cast<int>(idx.size()) < k)
      plan.warnings.push_back("class " + std::to_string(cls) + " has " +
                              std::to_string(idx.size()) + " samples, fewer than k=" +
                              std::to_string(k));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      plan.test_indices[i % static_cast<std::size_t>(k)].push_back(idx[i]);
  }
  for (auto& f : plan.test_indices) std::sort(f.begin(), f.end());
  return plan;
}

}  // namespace raresynth
