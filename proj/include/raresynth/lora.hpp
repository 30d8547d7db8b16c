#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raresynth/diffusion.hpp"

namespace raresynth {

struct LoraConfig {
  int rank = 8;
  double alpha = 8.0;
  double dropout = 0.08;
  std::vector<std::string> targets = {"*"};  // substring match on layer names
  int steps = 200;
  double lr = 5e-3;
  int batch = 8;
};

// A frozen base model plus trainable low-rank deltas. Distinct from UNet so
// merge can only be applied once: merging yields a plain UNet again.
template <typename T>
struct AdaptedModel {
  UNet<T> net;
  LoraConfig cfg;
};

namespace detail {
inline std::string matrix_owner_name(const std::string& weight_param_name) {
  // strips the trailing ".W"
  return weight_param_name.substr(0, weight_param_name.size() - 2);
}

inline bool selector_matches(const std::vector<std::string>& targets,
                             const std::string& name) {
  for (const auto& t : targets)
    if (t == "*" || name.find(t) != std::string::npos) return true;
  return false;
}
}  // namespace detail

// Adds zero-initialized adapters to every dense / convolution weight matrix
// matched by cfg.targets. The adapted model's outputs equal the base model's
// until fine-tuning moves B away from zero.
template <typename T>
AdaptedModel<T> attach_lora(const UNet<T>& base, const LoraConfig& cfg,
                            std::uint64_t seed) {
  if (cfg.rank < 1) throw std::invalid_argument("attach_lora: rank must be >= 1");
  AdaptedModel<T> adapted{base, cfg};
  Rng rng(derive_seed_role(seed, SeedRole::lora_init));
  int matched = 0;
  adapted.net.visit_matrices([&](nn::Conv2d<T>* conv, nn::Dense<T>* dense) {
    if (conv) {
      const std::string name = detail::matrix_owner_name(conv->W.name);
      if (!detail::selector_matches(cfg.targets, name)) return;
      conv->lora.init(name, cfg.rank, static_cast<T>(cfg.alpha),
                      static_cast<T>(cfg.dropout), conv->fan_in(), conv->co, rng);
      ++matched;
    } else {
      const std::string name = detail::matrix_owner_name(dense->W.name);
      if (!detail::selector_matches(cfg.targets, name)) return;
      dense->lora.init(name, cfg.rank, static_cast<T>(cfg.alpha),
                       static_cast<T>(cfg.dropout), dense->in, dense->out, rng);
      ++matched;
    }
  });
  if (matched == 0)
    throw std::invalid_argument("attach_lora: target selector matches no matrices");
  return adapted;
}

template <typename T>
void collect_lora_params(UNet<T>& net, nn::ParamStore<T>& s) {
  net.visit_matrices([&](nn::Conv2d<T>* conv, nn::Dense<T>* dense) {
    auto& slot = conv ? conv->lora : dense->lora;
    if (!slot.enabled) return;
    s.add(&slot.A);
    s.add(&slot.B);
  });
}

template <typename T>
std::int64_t count_lora_params(AdaptedModel<T>& adapted) {
  nn::ParamStore<T> s;
  collect_lora_params(adapted.net, s);
  return s.count();
}

template <typename T>
bool has_lora(UNet<T>& net) {
  bool any = false;
  net.visit_matrices([&](nn::Conv2d<T>* conv, nn::Dense<T>* dense) {
    if (conv ? conv->lora.enabled : dense->lora.enabled) any = true;
  });
  return any;
}

// Folds W' = W + (alpha/r) * B * A into the base weights and returns a plain
// model whose no-dropout forward pass matches adapter-form inference.
template <typename T>
UNet<T> merge_lora(const AdaptedModel<T>& adapted) {
  UNet<T> merged = adapted.net;
  merged.visit_matrices([&](nn::Conv2d<T>* conv, nn::Dense<T>* dense) {
    auto& slot = conv ? conv->lora : dense->lora;
    if (!slot.enabled) return;
    nn::Param<T>& W = conv ? conv->W : dense->W;
    const int out = slot.B.value.size(0);
    const int in = slot.A.value.size(1);
    Tensor<T> delta({out, in});
    kernels::mm_nn(slot.B.value.ptr(), slot.A.value.ptr(), delta.ptr(), out, slot.rank,
                   in);
    for (std::int64_t i = 0; i < W.value.numel(); ++i)
      W.value.data[i] += slot.scale * delta.data[i];
    slot = nn::LoraSlot<T>();
  });
  return merged;
}

struct FinetuneResult {
  AdaptedModel<float> model;
  std::vector<StepLoss> log;
};

// Optimizes only the adapter factors on the rare positives; base parameters
// stay bit-identical. Labels are fixed to the positive token and the
// unconditional-token probability is zero during fine-tuning.
FinetuneResult finetune_lora(const AdaptedModel<float>& adapted, const Dataset& rare,
                             const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace raresynth
