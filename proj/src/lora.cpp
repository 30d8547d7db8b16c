#include "raresynth/lora.hpp"

namespace raresynth {

FinetuneResult finetune_lora(const AdaptedModel<float>& adapted, const Dataset& rare,
                             const NoiseSchedule& sched, std::uint64_t seed) {
  if (rare.samples.empty())
    throw std::invalid_argument("finetune_lora: rare set is empty");
  for (const auto& s : rare.samples) {
    if (s.label != Label::positive)
      throw std::invalid_argument("finetune_lora: rare set must contain only positives");
    if (s.origin != Origin::real)
      throw std::invalid_argument("finetune_lora: rare set must be real-origin only");
  }

  FinetuneResult res{adapted, {}};
  const LoraConfig& cfg = adapted.cfg;
  if (cfg.steps == 0) return res;

  nn::ParamStore<float> lora_params;
  collect_lora_params(res.model.net, lora_params);
  nn::ParamStore<float> all_params;
  res.model.net.collect_params(all_params);

  nn::Adam<float> opt;
  opt.lr = cfg.lr;

  Rng rng(derive_seed_role(seed, SeedRole::train));
  const std::uint64_t n = rare.samples.size();
  const int bs = std::min<int>(cfg.batch, static_cast<int>(n));
  std::vector<int> batch(static_cast<std::size_t>(bs));
  res.log.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = static_cast<int>(rng.uniform_int(n));
    all_params.zero_grad();
    lora_params.zero_grad();
    const double loss = diffusion_loss<float>(res.model.net, rare, batch, sched, rng,
                                              /*p_uncond=*/0.0, true);
    opt.step(lora_params.params);
    res.log.push_back({step, loss});
  }
  return res;
}

}  // namespace raresynth
