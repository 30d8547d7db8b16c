#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raresynth/data.hpp"
#include "raresynth/nn.hpp"
#include "raresynth/rng.hpp"

namespace raresynth {

// Downstream measurement instrument: a small residual CNN with one logit
// output and an embedding accessor (the pooled penultimate vector).
struct ClassifierConfig {
  std::vector<int> widths = {16, 32, 64};
  int gn_groups = 8;
  int stem_stride = 2;
  nn::Act activation = nn::Act::relu;
  int epochs = 20;
  int batch = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double pos_weight = 0.0;  // <= 0 means auto (inverse class ratio)

  bool operator==(const ClassifierConfig&) const = default;
};

namespace detail {

template <typename T>
struct ClsBlock {
  nn::GroupNorm<T> gn1, gn2;
  nn::Activation<T> act1, act2;
  nn::Conv2d<T> conv1, conv2;

  ClsBlock() = default;
  ClsBlock(const std::string& name, int ch, int groups, nn::Act act, Rng& rng)
      : gn1(name + ".gn1", ch, groups),
        gn2(name + ".gn2", ch, groups),
        act1(act),
        act2(act),
        conv1(name + ".conv1", ch, ch, 3, 1, 1, rng),
        conv2(name + ".conv2", ch, ch, 3, 1, 1, rng) {}

  void register_params(nn::ParamStore<T>& s) {
    gn1.register_params(s);
    conv1.register_params(s);
    gn2.register_params(s);
    conv2.register_params(s);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = conv1.forward(act1.forward(gn1.forward(x, train), train), train);
    h = conv2.forward(act2.forward(gn2.forward(h, train), train), train);
    for (std::int64_t i = 0; i < h.numel(); ++i) h.data[i] += x.data[i];
    return h;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = gn2.backward(act2.backward(conv2.backward(gy)));
    g = gn1.backward(act1.backward(conv1.backward(g)));
    nn::axpy(T(1), gy, g);
    return g;
  }
};

}  // namespace detail

template <typename T>
struct ClassifierNet {
  ClassifierConfig cfg;
  nn::Conv2d<T> stem;
  std::vector<detail::ClsBlock<T>> blocks;  // one per stage
  std::vector<nn::Conv2d<T>> downs;         // stride-2 between stages
  nn::GroupNorm<T> final_gn;
  nn::Activation<T> final_act;
  nn::Dense<T> head;

  std::vector<int> pre_pool_shape_;

  ClassifierNet() = default;
  ClassifierNet(const ClassifierConfig& c, Rng& rng) : cfg(c), final_act(c.activation) {
    const auto& w = cfg.widths;
    stem = nn::Conv2d<T>("stem", 1, w[0], 3, cfg.stem_stride, 1, rng);
    for (std::size_t s = 0; s < w.size(); ++s) {
      blocks.emplace_back("stage" + std::to_string(s), w[s], cfg.gn_groups,
                          cfg.activation, rng);
      if (s + 1 < w.size())
        downs.emplace_back("down" + std::to_string(s), w[s], w[s + 1], 3, 2, 1, rng);
    }
    final_gn = nn::GroupNorm<T>("final.gn", w.back(), cfg.gn_groups);
    head = nn::Dense<T>("head", w.back(), 1, rng);
  }

  void collect_params(nn::ParamStore<T>& s) {
    stem.register_params(s);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].register_params(s);
      if (i < downs.size()) downs[i].register_params(s);
    }
    final_gn.register_params(s);
    head.register_params(s);
  }

  std::int64_t param_count() {
    nn::ParamStore<T> s;
    collect_params(s);
    return s.count();
  }

  int embedding_dim() const { return cfg.widths.back(); }

  // Pooled penultimate features, (N, widths.back()).
  Tensor<T> embed(const Tensor<T>& x, bool train) {
    Tensor<T> h = stem.forward(x, train);
    for (std::size_t s = 0; s < blocks.size(); ++s) {
      h = blocks[s].forward(h, train);
      if (s < downs.size()) h = downs[s].forward(h, train);
    }
    h = final_act.forward(final_gn.forward(h, train), train);
    if (train) pre_pool_shape_ = h.shape;
    return nn::global_avg_pool(h);
  }

  // One logit per image, (N, 1).
  Tensor<T> forward_logits(const Tensor<T>& x, bool train) {
    return head.forward(embed(x, train), train);
  }

  void backward_logits(const Tensor<T>& glogits) {
    Tensor<T> gemb = head.backward(glogits);
    Tensor<T> g = nn::global_avg_pool_backward(gemb, pre_pool_shape_);
    g = final_gn.backward(final_act.backward(g));
    for (std::size_t s = blocks.size(); s-- > 0;) {
      if (s < downs.size()) g = downs[s].backward(g);
      g = blocks[s].backward(g);
    }
    stem.backward(g);
  }
};

template <typename T>
struct ClassifierModel {
  ClassifierConfig cfg;
  ClassifierNet<T> net;
  bool trained = false;
  double pos_weight_used = 0.0;
  int input_size = 0;  // image side length seen at training time
  std::vector<double> epoch_loss_log;
};

// N_neg / N_pos over the assembled training set; synthetic positives count.
double compute_pos_weight(const Dataset& train);

// Numerically stable class-weighted logistic loss on logits; gradients are
// exact. Math is carried out in double regardless of the model scalar type.
std::pair<double, std::vector<double>> weighted_bce_loss(
    const std::vector<double>& logits, const std::vector<int>& labels,
    double pos_weight);

ClassifierModel<float> train_classifier(const Dataset& train,
                                        const ClassifierConfig& cfg,
                                        std::uint64_t seed);

// sigma(logit) per image, order preserving, strictly inside (0, 1).
std::vector<double> predict_scores(ClassifierModel<float>& model,
                                   const std::vector<const Tensor<float>*>& images);
std::vector<double> predict_scores(ClassifierModel<float>& model, const Dataset& data);

// L2-normalized penultimate embedding of one image.
std::vector<double> classifier_embedding(ClassifierModel<float>& model,
                                         const Tensor<float>& image);

}  // namespace raresynth
