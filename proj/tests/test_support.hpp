#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "raresynth/classifier.hpp"
#include "raresynth/data.hpp"
#include "raresynth/diffusion.hpp"
#include "raresynth/nn.hpp"
#include "raresynth/rng.hpp"

namespace testsupport {

using namespace raresynth;

inline Dataset const_dataset(int n, float value, int side, Label label,
                             Origin origin = Origin::real) {
  Dataset d;
  d.domain = "test";
  for (int i = 0; i < n; ++i) {
    LabeledSample s;
    s.image = Tensor<float>({1, side, side}, value);
    s.label = label;
    s.origin = origin;
    s.id = "const-" + std::to_string(static_cast<int>(label)) + "-" + std::to_string(i);
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline Dataset noise_dataset(int n, int side, Label label, std::uint64_t seed,
                             Origin origin = Origin::real) {
  Dataset d;
  d.domain = "test";
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    LabeledSample s;
    s.image = Tensor<float>({1, side, side});
    for (auto& v : s.image.data) v = static_cast<float>(rng.uniform());
    s.label = label;
    s.origin = origin;
    s.id = "noise-" + std::to_string(static_cast<int>(label)) + "-" + std::to_string(i) +
           "-" + std::to_string(seed);
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline UNetConfig tiny_unet_cfg() {
  UNetConfig c;
  c.widths = {4, 6};
  c.res_blocks = 1;
  c.emb_dim = 8;
  c.gn_groups = 2;
  return c;
}

inline ClassifierConfig tiny_classifier_cfg() {
  ClassifierConfig c;
  c.widths = {4, 6, 8};
  c.gn_groups = 2;
  c.stem_stride = 1;
  c.activation = nn::Act::silu;  // smooth, finite-difference friendly
  return c;
}

// Central finite differences over every parameter in the store.
// loss_fn must be a deterministic function of the current parameter values.
template <typename LossFn>
std::vector<double> central_differences(nn::ParamStore<double>& store, LossFn&& loss_fn,
                                        double h = 1e-5) {
  std::vector<double> fd;
  for (auto* p : store.params) {
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double lp = loss_fn();
      p->value.data[i] = orig - h;
      const double lm = loss_fn();
      p->value.data[i] = orig;
      fd.push_back((lp - lm) / (2.0 * h));
    }
  }
  return fd;
}

inline std::vector<double> flatten_grads(nn::ParamStore<double>& store) {
  std::vector<double> g;
  for (auto* p : store.params)
    for (std::int64_t i = 0; i < p->value.numel(); ++i) g.push_back(p->grad.data[i]);
  return g;
}

inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& fd, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(floor, std::abs(analytic[i]) + std::abs(fd[i]));
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

template <typename T>
std::vector<T> all_param_values(nn::ParamStore<T>& store) {
  std::vector<T> out;
  for (auto* p : store.params)
    out.insert(out.end(), p->value.data.begin(), p->value.data.end());
  return out;
}

template <typename T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace testsupport
