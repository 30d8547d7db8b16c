#include "raresynth/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace raresynth {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string schedule_kind_name(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

void NoiseSchedule::validate() const {
  if (T < 2 || static_cast<int>(beta.size()) != T || static_cast<int>(alpha.size()) != T ||
      static_cast<int>(alpha_bar.size()) != T)
    throw std::invalid_argument("NoiseSchedule: inconsistent sizes");
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (!(beta[i] > 0.0 && beta[i] < 1.0))
      throw std::invalid_argument("NoiseSchedule: beta out of (0,1)");
    if (alpha[i] != 1.0 - beta[i])
      throw std::invalid_argument("NoiseSchedule: alpha != 1 - beta");
    prod *= alpha[i];
    if (std::abs(alpha_bar[i] - prod) > 1e-12 * prod)
      throw std::invalid_argument("NoiseSchedule: alpha_bar drifts from product");
    if (!(alpha_bar[i] > 0.0 && alpha_bar[i] < 1.0))
      throw std::invalid_argument("NoiseSchedule: alpha_bar out of (0,1)");
    if (t > 0 && alpha_bar[i] >= alpha_bar[i - 1])
      throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing");
  }
}

NoiseSchedule build_noise_schedule(int T, ScheduleKind kind) {
  if (T < 2) throw std::invalid_argument("build_noise_schedule: T must be >= 2");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    const double lo = 1e-4, hi = 2e-2;
    for (int t = 0; t < T; ++t)
      s.beta[static_cast<std::size_t>(t)] =
          lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(T - 1);
  } else {
    const double off = 0.008;
    auto f = [&](double t) {
      const double v = std::cos((t / static_cast<double>(T) + off) / (1.0 + off) *
                                1.5707963267948966);
      return v * v;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int t = 0; t < T; ++t) {
      const double ab = f(static_cast<double>(t + 1)) / f0;
      double beta = 1.0 - ab / prev;
      beta = std::clamp(beta, 1e-8, 0.999);
      s.beta[static_cast<std::size_t>(t)] = beta;
      prev *= 1.0 - beta;
    }
  }
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  s.validate();
  return s;
}

PretrainResult pretrain_diffusion(const Dataset& data, const PretrainConfig& cfg,
                                  const NoiseSchedule& sched, std::uint64_t seed) {
  if (data.samples.empty() || data.count(Label::positive) == 0 ||
      data.count(Label::negative) == 0)
    throw std::invalid_argument(
        "pretrain_diffusion: dataset must contain both classes");

  Rng init_rng(derive_seed_role(seed, SeedRole::model_init));
  PretrainResult res{UNet<float>(cfg.arch, init_rng), {}};
  if (cfg.steps == 0) return res;

  nn::ParamStore<float> store;
  res.model.collect_params(store);
  nn::Adam<float> opt;
  opt.lr = cfg.lr;

  Rng rng(derive_seed_role(seed, SeedRole::train));
  const std::uint64_t n = data.samples.size();
  std::vector<int> batch(static_cast<std::size_t>(cfg.batch));
  res.log.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = static_cast<int>(rng.uniform_int(n));
    store.zero_grad();
    const double loss =
        diffusion_loss<float>(res.model, data, batch, sched, rng, cfg.p_uncond, true);
    opt.step(store.params);
    res.log.push_back({step, loss});
  }
  return res;
}

std::vector<int> sampler_timesteps(int T, int steps) {
  std::vector<int> ts(static_cast<std::size_t>(steps));
  if (steps == 1) {
    ts[0] = 0;
    return ts;
  }
  for (int i = 0; i < steps; ++i)
    ts[static_cast<std::size_t>(i)] = static_cast<int>(std::llround(
        static_cast<double>(steps - 1 - i) * static_cast<double>(T - 1) /
        static_cast<double>(steps - 1)));
  return ts;
}

Tensor<float> sample_cfg(UNet<float>& model, const NoiseSchedule& sched,
                         const SamplerConfig& cfg, int label, int h, int w,
                         SamplerTrace* trace) {
  if (label != kTokenNegative && label != kTokenPositive)
    throw std::invalid_argument("sample_cfg: unknown class label " +
                                std::to_string(label));
  if (cfg.steps < 1 || cfg.steps > sched.T)
    throw std::invalid_argument("sample_cfg: steps must be in [1, T]");
  if (cfg.guidance_scale < 0.0)
    throw std::invalid_argument("sample_cfg: guidance_scale must be >= 0");

  const std::vector<int> ts = sampler_timesteps(sched.T, cfg.steps);
  const double s = cfg.guidance_scale;
  Rng rng(cfg.seed);

  Tensor<float> x({1, 1, h, w});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());

  for (std::size_t idx = 0; idx < ts.size(); ++idx) {
    const int t = ts[idx];
    const double abar = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double abar_next =
        idx + 1 < ts.size() ? sched.alpha_bar[static_cast<std::size_t>(ts[idx + 1])] : 1.0;

    Tensor<float> eps_c, eps_u, eps_hat;
    if (s != 0.0) eps_c = model.forward(x, {t}, {label}, false);
    if (s != 1.0) eps_u = model.forward(x, {t}, {kTokenUncond}, false);
    if (s == 1.0) {
      eps_hat = eps_c;
    } else if (s == 0.0) {
      eps_hat = eps_u;
    } else {
      eps_hat = eps_u;
      for (std::int64_t i = 0; i < eps_hat.numel(); ++i)
        eps_hat.data[i] += static_cast<float>(s) * (eps_c.data[i] - eps_u.data[i]);
    }
    if (trace) trace->push_back({t, eps_c, eps_u, eps_hat});

    const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
    const double sigma =
        cfg.eta * std::sqrt((1.0 - abar_next) / (1.0 - abar)) *
        std::sqrt(1.0 - abar / abar_next);
    const double dir = std::sqrt(std::max(0.0, 1.0 - abar_next - sigma * sigma));
    const double san = std::sqrt(abar_next);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      double x0 = (static_cast<double>(x.data[i]) -
                   sb * static_cast<double>(eps_hat.data[i])) /
                  sa;
      x0 = std::clamp(x0, -1.0, 1.0);
      double v = san * x0 + dir * static_cast<double>(eps_hat.data[i]);
      if (sigma > 0.0) v += sigma * rng.normal();
      x.data[i] = static_cast<float>(v);
    }
  }

  Tensor<float> out({1, h, w});
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out.data[i] = std::clamp(0.5f * (x.data[i] + 1.0f), 0.0f, 1.0f);
  return out;
}

Dataset generate_pool(UNet<float>& model, const NoiseSchedule& sched,
                      const SamplerConfig& cfg, int n, std::uint64_t seed0, int h,
                      int w) {
  if (n < 1) throw std::invalid_argument("generate_pool: n must be >= 1");
  Dataset pool;
  pool.domain = "synthetic";
  pool.note = "guided samples, positive class";
  pool.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SamplerConfig c = cfg;
    c.seed = seed0 + static_cast<std::uint64_t>(i);
    LabeledSample smp;
    smp.image = sample_cfg(model, sched, c, kTokenPositive, h, w);
    smp.label = Label::positive;
    smp.origin = Origin::synthetic;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%08llu",
                  static_cast<unsigned long long>(c.seed));
    smp.id = buf;
    pool.samples.push_back(std::move(smp));
  }
  return pool;
}

}  // namespace raresynth
