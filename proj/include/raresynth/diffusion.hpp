#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "raresynth/data.hpp"
#include "raresynth/nn.hpp"
#include "raresynth/rng.hpp"
#include "raresynth/tensor.hpp"

namespace raresynth {

// ---------------------------------------------------------------------------
// Noise schedule

enum class ScheduleKind { linear, cosine };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string schedule_kind_name(ScheduleKind k);

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative products of alpha

  void validate() const;
};

// Linear kind interpolates beta from 1e-4 to 2e-2 across T steps.
NoiseSchedule build_noise_schedule(int T, ScheduleKind kind);

// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, elementwise.
// x0 is expected in model space [-1, 1].
template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                          const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_diffuse");
  if (t < 0 || t >= sched.T)
    throw std::invalid_argument("forward_diffuse: t out of range [0, " +
                                std::to_string(sched.T) + ")");
  const T a = static_cast<T>(std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t)]));
  const T s = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]));
  Tensor<T> out(x0.shape);
  for (std::int64_t i = 0; i < x0.numel(); ++i)
    out.data[i] = a * x0.data[i] + s * eps.data[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conditional U-Net noise predictor

struct UNetConfig {
  int in_channels = 1;
  std::vector<int> widths = {32, 64, 128};
  int res_blocks = 2;
  int emb_dim = 64;
  int gn_groups = 8;

  bool operator==(const UNetConfig&) const = default;
};

namespace detail {

// Residual block with per-channel conditioning bias injected between convs.
template <typename T>
struct ResBlock {
  nn::GroupNorm<T> gn1, gn2;
  nn::Activation<T> act1{nn::Act::silu}, act2{nn::Act::silu}, act_cond{nn::Act::silu};
  nn::Conv2d<T> conv1, conv2;
  nn::Dense<T> cond_proj;
  std::vector<int> x_shape_;

  ResBlock() = default;
  ResBlock(const std::string& name, int ch, int emb, int groups, Rng& rng)
      : gn1(name + ".gn1", ch, groups),
        gn2(name + ".gn2", ch, groups),
        conv1(name + ".conv1", ch, ch, 3, 1, 1, rng),
        conv2(name + ".conv2", ch, ch, 3, 1, 1, rng),
        cond_proj(name + ".cond", emb, ch, rng) {}

  void register_params(nn::ParamStore<T>& s) {
    gn1.register_params(s);
    conv1.register_params(s);
    cond_proj.register_params(s);
    gn2.register_params(s);
    conv2.register_params(s);
  }

  void visit_matrices(const std::function<void(nn::Conv2d<T>*, nn::Dense<T>*)>& fn) {
    fn(&conv1, nullptr);
    fn(&conv2, nullptr);
    fn(nullptr, &cond_proj);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& cond, bool train, Rng* rng) {
    x_shape_ = x.shape;
    Tensor<T> h = conv1.forward(act1.forward(gn1.forward(x, train), train), train, rng);
    Tensor<T> cb = cond_proj.forward(act_cond.forward(cond, train), train, rng);
    const int N = h.size(0), C = h.size(1);
    const std::int64_t hw = static_cast<std::int64_t>(h.size(2)) * h.size(3);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T v = cb.at2(n, c);
        T* p = h.ptr() + (static_cast<std::size_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) p[i] += v;
      }
    Tensor<T> h2 = conv2.forward(act2.forward(gn2.forward(h, train), train), train, rng);
    for (std::int64_t i = 0; i < h2.numel(); ++i) h2.data[i] += x.data[i];
    return h2;
  }

  // Returns gx; accumulates the conditioning gradient into gcond.
  Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& gcond) {
    Tensor<T> gh = gn2.backward(act2.backward(conv2.backward(gy)));
    const int N = gh.size(0), C = gh.size(1);
    const std::int64_t hw = static_cast<std::int64_t>(gh.size(2)) * gh.size(3);
    Tensor<T> gcb({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* p = gh.ptr() + (static_cast<std::size_t>(n) * C + c) * hw;
        T acc = T(0);
        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
        gcb.at2(n, c) = acc;
      }
    nn::axpy(T(1), act_cond.backward(cond_proj.backward(gcb)), gcond);
    Tensor<T> gx = gn1.backward(act1.backward(conv1.backward(gh)));
    nn::axpy(T(1), gy, gx);  // residual path
    return gx;
  }
};

}  // namespace detail

// Class-conditional denoising U-Net: three resolutions with additive skip
// connections, timestep + class embeddings summed into one conditioning
// vector that every residual block consumes.
template <typename T>
struct UNet {
  UNetConfig cfg;
  nn::Dense<T> time_mlp1, time_mlp2;
  nn::Activation<T> time_act{nn::Act::silu};
  nn::Embedding<T> class_emb;
  nn::Conv2d<T> stem;
  std::vector<std::vector<detail::ResBlock<T>>> enc;  // per stage
  std::vector<nn::Conv2d<T>> down;                    // stride-2, stage s -> s+1
  detail::ResBlock<T> mid;
  std::vector<std::vector<detail::ResBlock<T>>> dec;  // per stage, deepest first
  std::vector<nn::Conv2d<T>> up_conv;                 // after 2x upsample
  nn::GroupNorm<T> head_gn;
  nn::Activation<T> head_act{nn::Act::silu};
  nn::Conv2d<T> head_conv;

  // backward state
  Tensor<T> cond_cache_;
  Tensor<T> sin_cache_;
  std::vector<int> skip_shape0_, skip_shape1_;

  UNet() = default;

  UNet(const UNetConfig& c, Rng& rng) : cfg(c) {
    const int e = cfg.emb_dim;
    time_mlp1 = nn::Dense<T>("time.mlp1", e, e, rng);
    time_mlp2 = nn::Dense<T>("time.mlp2", e, e, rng);
    class_emb = nn::Embedding<T>("cls", kNumTokens, e, rng);
    const auto& w = cfg.widths;
    stem = nn::Conv2d<T>("stem", cfg.in_channels, w[0], 3, 1, 1, rng);
    enc.resize(w.size());
    dec.resize(w.size());
    for (std::size_t s = 0; s < w.size(); ++s) {
      for (int b = 0; b < cfg.res_blocks; ++b) {
        enc[s].emplace_back("enc" + std::to_string(s) + ".b" + std::to_string(b), w[s], e,
                            cfg.gn_groups, rng);
        dec[s].emplace_back("dec" + std::to_string(s) + ".b" + std::to_string(b), w[s], e,
                            cfg.gn_groups, rng);
      }
      if (s + 1 < w.size())
        down.emplace_back("down" + std::to_string(s), w[s], w[s + 1], 3, 2, 1, rng);
    }
    mid = detail::ResBlock<T>("mid", w.back(), e, cfg.gn_groups, rng);
    for (std::size_t s = 0; s + 1 < w.size(); ++s)
      up_conv.emplace_back("up" + std::to_string(s), w[s + 1], w[s], 3, 1, 1, rng);
    head_gn = nn::GroupNorm<T>("head.gn", w[0], cfg.gn_groups);
    head_conv = nn::Conv2d<T>("head.conv", w[0], cfg.in_channels, 3, 1, 1, rng);
  }

  void collect_params(nn::ParamStore<T>& s) {
    time_mlp1.register_params(s);
    time_mlp2.register_params(s);
    class_emb.register_params(s);
    stem.register_params(s);
    for (auto& st : enc)
      for (auto& b : st) b.register_params(s);
    for (auto& d : down) d.register_params(s);
    mid.register_params(s);
    for (auto it = dec.rbegin(); it != dec.rend(); ++it)
      for (auto& b : *it) b.register_params(s);
    for (auto& u : up_conv) u.register_params(s);
    head_gn.register_params(s);
    head_conv.register_params(s);
  }

  void visit_matrices(const std::function<void(nn::Conv2d<T>*, nn::Dense<T>*)>& fn) {
    fn(nullptr, &time_mlp1);
    fn(nullptr, &time_mlp2);
    fn(&stem, nullptr);
    for (auto& st : enc)
      for (auto& b : st) b.visit_matrices(fn);
    for (auto& d : down) fn(&d, nullptr);
    mid.visit_matrices(fn);
    for (auto it = dec.rbegin(); it != dec.rend(); ++it)
      for (auto& b : *it) b.visit_matrices(fn);
    for (auto& u : up_conv) fn(&u, nullptr);
    fn(&head_conv, nullptr);
  }

  std::int64_t param_count() {
    nn::ParamStore<T> s;
    collect_params(s);
    return s.count();
  }

  Tensor<T> sinusoidal(const std::vector<int>& t_steps) const {
    const int e = cfg.emb_dim, half = e / 2;
    Tensor<T> out({static_cast<int>(t_steps.size()), e});
    for (std::size_t n = 0; n < t_steps.size(); ++n) {
      const double t = static_cast<double>(t_steps[n]);
      for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                  static_cast<double>(half));
        out.at2(static_cast<int>(n), i) = static_cast<T>(std::sin(t * f));
        out.at2(static_cast<int>(n), half + i) = static_cast<T>(std::cos(t * f));
      }
    }
    return out;
  }

  // x: (N, C, H, W) in model space; t_steps and labels are per-sample.
  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& t_steps,
                    const std::vector<int>& labels, bool train, Rng* rng = nullptr) {
    Tensor<T> sin = sinusoidal(t_steps);
    Tensor<T> temb =
        time_mlp2.forward(time_act.forward(time_mlp1.forward(sin, train, rng), train),
                          train, rng);
    Tensor<T> cemb = class_emb.forward(labels, train);
    Tensor<T> cond = temb;
    nn::axpy(T(1), cemb, cond);
    if (train) {
      cond_cache_ = cond;
      sin_cache_ = sin;
    }

    Tensor<T> h = stem.forward(x, train, rng);
    std::vector<Tensor<T>> skips;
    for (std::size_t s = 0; s < enc.size(); ++s) {
      for (auto& b : enc[s]) h = b.forward(h, cond, train, rng);
      if (s + 1 < enc.size()) {
        skips.push_back(h);
        h = down[s].forward(h, train, rng);
      }
    }
    h = mid.forward(h, cond, train, rng);
    for (std::size_t si = enc.size(); si-- > 0;) {
      for (auto& b : dec[si]) h = b.forward(h, cond, train, rng);
      if (si > 0) {
        h = up_conv[si - 1].forward(nn::upsample2x(h), train, rng);
        nn::axpy(T(1), skips[si - 1], h);
      }
    }
    if (train) {
      skip_shape0_ = skips.empty() ? std::vector<int>{} : skips[0].shape;
      if (skips.size() > 1) skip_shape1_ = skips[1].shape;
    }
    return head_conv.forward(head_act.forward(head_gn.forward(h, train), train), train,
                             rng);
  }

  // Accumulates parameter gradients; returns nothing (input gradient unused).
  void backward(const Tensor<T>& gout) {
    const int N = gout.size(0);
    Tensor<T> gcond({N, cfg.emb_dim});
    Tensor<T> g = head_gn.backward(head_act.backward(head_conv.backward(gout)));

    std::vector<Tensor<T>> gskips(enc.size() > 0 ? enc.size() - 1 : 0);
    for (std::size_t si = 0; si < enc.size(); ++si) {
      if (si > 0) {
        // invert: h = up_conv[si-1](upsample(h_prev)) + skip[si-1]
        gskips[si - 1] = g;
        g = nn::upsample2x_backward(up_conv[si - 1].backward(g));
      }
      auto& blocks = dec[si];
      for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g, gcond);
    }
    g = mid.backward(g, gcond);
    for (std::size_t s = enc.size(); s-- > 0;) {
      if (s + 1 < enc.size()) {
        g = down[s].backward(g);
        nn::axpy(T(1), gskips[s], g);
      }
      auto& blocks = enc[s];
      for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g, gcond);
    }
    stem.backward(g);

    class_emb.backward(gcond);
    time_mlp1.backward(time_act.backward(time_mlp2.backward(gcond)));
  }
};

// ---------------------------------------------------------------------------
// Training objective

struct DiffusionLossStats {
  double loss = 0.0;
};

// Mean squared error between drawn and predicted noise, normalized by batch
// size and pixel count. Labels are replaced by the unconditional token with
// probability p_uncond. Draw order per sample: t, uncond coin, noise pixels.
template <typename T, typename Model>
double diffusion_loss(Model& model, const Dataset& data, const std::vector<int>& batch,
                      const NoiseSchedule& sched, Rng& rng, double p_uncond,
                      bool with_grad = true) {
  if (batch.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
  const int N = static_cast<int>(batch.size());
  const auto& img0 = data.samples[static_cast<std::size_t>(batch[0])].image;
  const int H = img0.size(1), W = img0.size(2);

  Tensor<T> xt({N, 1, H, W});
  Tensor<T> eps({N, 1, H, W});
  std::vector<int> ts(static_cast<std::size_t>(N));
  std::vector<int> labels(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    const auto& s = data.samples[static_cast<std::size_t>(batch[static_cast<std::size_t>(n)])];
    const int t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.T)));
    ts[static_cast<std::size_t>(n)] = t;
    int lab = static_cast<int>(s.label);
    if (p_uncond > 0.0 && rng.bernoulli(p_uncond)) lab = kTokenUncond;
    labels[static_cast<std::size_t>(n)] = lab;
    const T a = static_cast<T>(std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t)]));
    const T b = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]));
    const std::size_t off = static_cast<std::size_t>(n) * H * W;
    for (int i = 0; i < H * W; ++i) {
      const T x0 = static_cast<T>(2.0 * static_cast<double>(s.image.data[static_cast<std::size_t>(i)]) - 1.0);
      const T e = static_cast<T>(rng.normal());
      eps.data[off + static_cast<std::size_t>(i)] = e;
      xt.data[off + static_cast<std::size_t>(i)] = a * x0 + b * e;
    }
  }

  // Training-mode forward regardless of with_grad: a finite-difference
  // evaluation of this loss must see the same dropout draws as the
  // gradient-producing call.
  Tensor<T> pred = model.forward(xt, ts, labels, /*train=*/true, &rng);
  const double dim = static_cast<double>(pred.numel());
  double loss = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(eps.data[i]);
    loss += d * d;
  }
  loss /= dim;
  if (with_grad) {
    Tensor<T> g(pred.shape);
    for (std::int64_t i = 0; i < pred.numel(); ++i)
      g.data[i] = static_cast<T>(2.0 *
                                 (static_cast<double>(pred.data[i]) -
                                  static_cast<double>(eps.data[i])) /
                                 dim);
    if constexpr (requires { model.backward(g); }) model.backward(g);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainConfig {
  UNetConfig arch;
  int steps = 3000;
  int batch = 16;
  double lr = 1e-3;
  double p_uncond = 0.1;
};

struct StepLoss {
  int step;
  double loss;
};

struct PretrainResult {
  UNet<float> model;
  std::vector<StepLoss> log;
};

// Deterministic given seed; requires both classes in the dataset.
PretrainResult pretrain_diffusion(const Dataset& data, const PretrainConfig& cfg,
                                  const NoiseSchedule& sched, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Guided sampling

struct SamplerConfig {
  int steps = 24;
  double guidance_scale = 2.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

// Per-step record for the instrumented sampler.
struct SamplerTraceStep {
  int t;
  Tensor<float> eps_cond;
  Tensor<float> eps_uncond;  // empty when the unconditional pass was skipped
  Tensor<float> eps_hat;
};

using SamplerTrace = std::vector<SamplerTraceStep>;

// Descending, evenly spaced timestep subsequence ending at t=0.
std::vector<int> sampler_timesteps(int T, int steps);

// Accelerated sampler with classifier-free guidance. Deterministic given
// cfg.seed; output in data space [0,1], shape (1, h, w).
Tensor<float> sample_cfg(UNet<float>& model, const NoiseSchedule& sched,
                         const SamplerConfig& cfg, int label, int h, int w,
                         SamplerTrace* trace = nullptr);

// n positives sampled with seeds seed0, seed0+1, ...; every sample is kept.
Dataset generate_pool(UNet<float>& model, const NoiseSchedule& sched,
                      const SamplerConfig& cfg, int n, std::uint64_t seed0, int h, int w);

}  // namespace raresynth
