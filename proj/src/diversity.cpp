#include "raresynth/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "raresynth/rng.hpp"

namespace raresynth {

namespace {

double quantile_linear(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

Distribution Distribution::from_values(std::vector<double> values, int bins) {
  Distribution d;
  d.values = std::move(values);
  d.count = static_cast<std::int64_t>(d.values.size());
  if (d.count == 0) return d;

  double sum = 0.0;
  for (double v : d.values) sum += v;
  d.mean = sum / static_cast<double>(d.count);
  double sq = 0.0;
  for (double v : d.values) sq += (v - d.mean) * (v - d.mean);
  d.stddev = d.count > 1 ? std::sqrt(sq / static_cast<double>(d.count - 1)) : 0.0;

  std::vector<double> sorted = d.values;
  std::sort(sorted.begin(), sorted.end());
  d.min = sorted.front();
  d.max = sorted.back();
  d.q25 = quantile_linear(sorted, 0.25);
  d.q50 = quantile_linear(sorted, 0.50);
  d.q75 = quantile_linear(sorted, 0.75);

  const double width = d.max > d.min ? (d.max - d.min) / bins : 1.0;
  d.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    d.bin_edges[static_cast<std::size_t>(i)] = d.min + width * i;
  d.bin_counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : d.values) {
    int b = d.max > d.min ? static_cast<int>((v - d.min) / width) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++d.bin_counts[static_cast<std::size_t>(b)];
  }
  return d;
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? 1.0 - dot / denom : 0.0;
}

double perceptual_distance(ClassifierModel<float>& model, const Tensor<float>& a,
                           const Tensor<float>& b) {
  if (!model.trained)
    throw std::invalid_argument(
        "perceptual_distance: classifier must be trained before its embedding is used");
  return cosine_distance(classifier_embedding(model, a), classifier_embedding(model, b));
}

std::vector<std::pair<int, int>> sample_pairs(int n, std::int64_t max_pairs,
                                              std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_pairs: need at least 2 images");
  if (max_pairs < 1) throw std::invalid_argument("sample_pairs: max_pairs must be >= 1");
  const std::int64_t total = static_cast<std::int64_t>(n) * (n - 1) / 2;

  // Pair id p in [0, C(n,2)) maps to the unordered pair (i, j), i < j.
  auto decode = [n](std::int64_t p) {
    // row i starts at offset i*n - i*(i+1)/2 - i ... solve by walking rows.
    int i = 0;
    std::int64_t row = static_cast<std::int64_t>(n) - 1;
    while (p >= row) {
      p -= row;
      --row;
      ++i;
    }
    return std::make_pair(i, i + 1 + static_cast<int>(p));
  };

  std::vector<std::int64_t> ids;
  if (total <= max_pairs) {
    ids.resize(static_cast<std::size_t>(total));
    for (std::int64_t p = 0; p < total; ++p) ids[static_cast<std::size_t>(p)] = p;
  } else {
    // Floyd's algorithm: exactly max_pairs distinct ids.
    Rng rng(derive_seed_role(seed, SeedRole::pairs));
    std::unordered_set<std::int64_t> seen;
    for (std::int64_t j = total - max_pairs; j < total; ++j) {
      const std::int64_t t =
          static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(j + 1)));
      ids.push_back(seen.insert(t).second ? t : (seen.insert(j), j));
    }
    std::sort(ids.begin(), ids.end());
  }

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(ids.size());
  for (std::int64_t p : ids) pairs.push_back(decode(p));
  return pairs;
}

Distribution pairwise_distribution(const std::vector<const Tensor<float>*>& images,
                                   const PairMetric& metric, std::int64_t max_pairs,
                                   std::uint64_t seed) {
  const auto pairs = sample_pairs(static_cast<int>(images.size()), max_pairs, seed);
  std::vector<double> values;
  values.reserve(pairs.size());
  for (const auto& [i, j] : pairs)
    values.push_back(metric(*images[static_cast<std::size_t>(i)],
                            *images[static_cast<std::size_t>(j)]));
  return Distribution::from_values(std::move(values));
}

double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double ks = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < sa.size() && ib < sb.size()) {
    const double v = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= v) ++ia;
    while (ib < sb.size() && sb[ib] <= v) ++ib;
    const double fa = static_cast<double>(ia) / static_cast<double>(sa.size());
    const double fb = static_cast<double>(ib) / static_cast<double>(sb.size());
    ks = std::max(ks, std::abs(fa - fb));
  }
  return ks;
}

DiversityReport compare_diversity(const Dataset& real_pos, const Dataset& synth_pool,
                                  ClassifierModel<float>& model, std::int64_t budget,
                                  std::uint64_t seed, double psnr_shift_db,
                                  double collapse_std_ratio) {
  if (real_pos.samples.size() < 2 || synth_pool.samples.size() < 2)
    throw std::invalid_argument("compare_diversity: both sets need >= 2 images");
  if (!model.trained)
    throw std::invalid_argument("compare_diversity: classifier must be trained");

  auto collect = [](const Dataset& d) {
    std::vector<const Tensor<float>*> v;
    v.reserve(d.samples.size());
    for (const auto& s : d.samples) v.push_back(&s.image);
    return v;
  };
  const auto real_imgs = collect(real_pos);
  const auto synth_imgs = collect(synth_pool);

  // Same pairs for both metrics within a set; per-set streams from one seed.
  auto both = [&](const std::vector<const Tensor<float>*>& imgs, std::uint64_t sub,
                  Distribution& out_psnr, Distribution& out_percep) {
    const auto pairs = sample_pairs(static_cast<int>(imgs.size()), budget,
                                    derive_seed(seed, sub));
    std::vector<double> vp, vd;
    vp.reserve(pairs.size());
    vd.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      vp.push_back(psnr(*imgs[static_cast<std::size_t>(i)],
                        *imgs[static_cast<std::size_t>(j)]));
      vd.push_back(perceptual_distance(model, *imgs[static_cast<std::size_t>(i)],
                                       *imgs[static_cast<std::size_t>(j)]));
    }
    out_psnr = Distribution::from_values(std::move(vp));
    out_percep = Distribution::from_values(std::move(vd));
  };

  DiversityReport r;
  r.budget = budget;
  r.seed = seed;
  r.psnr_shift_db_threshold = psnr_shift_db;
  r.collapse_std_ratio = collapse_std_ratio;
  both(real_imgs, 1, r.psnr_real, r.percep_real);
  both(synth_imgs, 2, r.psnr_synth, r.percep_synth);

  r.psnr_mean_shift = r.psnr_synth.mean - r.psnr_real.mean;
  r.percep_mean_shift = r.percep_synth.mean - r.percep_real.mean;
  r.ks_psnr = ks_statistic(r.psnr_real.values, r.psnr_synth.values);
  r.ks_percep = ks_statistic(r.percep_real.values, r.percep_synth.values);
  r.structure_preserved = std::abs(r.psnr_mean_shift) <= psnr_shift_db;
  // Heuristic operating point, not a hard guarantee.
  r.collapse_suspected = r.percep_synth.stddev < collapse_std_ratio * r.percep_real.stddev;
  return r;
}

}  // namespace raresynth
