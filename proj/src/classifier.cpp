#include "raresynth/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace raresynth {

double compute_pos_weight(const Dataset& train) {
  const int pos = train.count(Label::positive);
  const int neg = train.count(Label::negative);
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("compute_pos_weight: both classes must be present");
  return static_cast<double>(neg) / static_cast<double>(pos);
}

namespace {

// loss(z, y) = -w*y*log(sigmoid(z)) - (1-y)*log(1 - sigmoid(z)), in the
// log-sum-exp form that never exponentiates a positive argument.
inline double bce_term(double z, int y, double w, double* dz) {
  const double softplus = z >= 0.0 ? z + std::log1p(std::exp(-z))
                                   : std::log1p(std::exp(z));
  // log(sigmoid(z)) = z - softplus(z);  log(1 - sigmoid(z)) = -softplus(z)
  const double loss = y ? -w * (z - softplus) : softplus;
  if (dz) {
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
    *dz = y ? w * (s - 1.0) : s;
  }
  return loss;
}

}  // namespace

std::pair<double, std::vector<double>> weighted_bce_loss(
    const std::vector<double>& logits, const std::vector<int>& labels,
    double pos_weight) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("weighted_bce_loss: length mismatch");
  if (logits.empty()) throw std::invalid_argument("weighted_bce_loss: empty input");
  for (double z : logits)
    if (!std::isfinite(z))
      throw std::invalid_argument("weighted_bce_loss: non-finite logit");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  double loss = 0.0;
  std::vector<double> grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double dz;
    loss += bce_term(logits[i], labels[i], pos_weight, &dz);
    grad[i] = dz * inv_n;
  }
  return {loss * inv_n, grad};
}

ClassifierModel<float> train_classifier(const Dataset& train,
                                        const ClassifierConfig& cfg,
                                        std::uint64_t seed) {
  const int pos = train.count(Label::positive);
  const int neg = train.count(Label::negative);
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("train_classifier: both classes must be present");

  ClassifierModel<float> model;
  model.cfg = cfg;
  Rng init_rng(derive_seed_role(seed, SeedRole::model_init));
  model.net = ClassifierNet<float>(cfg, init_rng);
  model.pos_weight_used = cfg.pos_weight > 0.0 ? cfg.pos_weight : compute_pos_weight(train);
  model.input_size = train.samples.front().image.size(1);
  if (cfg.epochs == 0) return model;

  nn::ParamStore<float> store;
  model.net.collect_params(store);
  nn::Adam<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  Rng rng(derive_seed_role(seed, SeedRole::train));
  const int n = static_cast<int>(train.samples.size());
  const int side = model.input_size;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int bs = std::min(cfg.batch, n - start);
      Tensor<float> x({bs, 1, side, side});
      std::vector<int> y(static_cast<std::size_t>(bs));
      for (int b = 0; b < bs; ++b) {
        const auto& s = train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + b)])];
        std::copy(s.image.data.begin(), s.image.data.end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(b) * side * side);
        y[static_cast<std::size_t>(b)] = s.label == Label::positive ? 1 : 0;
      }
      store.zero_grad();
      Tensor<float> logits = model.net.forward_logits(x, true);
      std::vector<double> z(static_cast<std::size_t>(bs));
      for (int b = 0; b < bs; ++b) z[static_cast<std::size_t>(b)] = logits.data[static_cast<std::size_t>(b)];
      auto [loss, grad] = weighted_bce_loss(z, y, model.pos_weight_used);
      Tensor<float> glog({bs, 1});
      for (int b = 0; b < bs; ++b)
        glog.data[static_cast<std::size_t>(b)] = static_cast<float>(grad[static_cast<std::size_t>(b)]);
      model.net.backward_logits(glog);
      opt.step(store.params);
      epoch_loss += loss;
      ++batches;
    }
    model.epoch_loss_log.push_back(epoch_loss / std::max(1, batches));
  }
  model.trained = true;
  return model;
}

namespace {

std::vector<double> scores_for_batch(ClassifierModel<float>& model,
                                     const std::vector<const Tensor<float>*>& images,
                                     std::size_t start, int bs) {
  const int side = model.input_size;
  Tensor<float> x({bs, 1, side, side});
  for (int b = 0; b < bs; ++b) {
    const Tensor<float>& img = *images[start + static_cast<std::size_t>(b)];
    if (img.size(1) != side || img.size(2) != side)
      throw std::invalid_argument("predict_scores: image shape differs from training");
    std::copy(img.data.begin(), img.data.end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(b) * side * side);
  }
  Tensor<float> logits = model.net.forward_logits(x, false);
  std::vector<double> out(static_cast<std::size_t>(bs));
  for (int b = 0; b < bs; ++b) {
    const double z = static_cast<double>(logits.data[static_cast<std::size_t>(b)]);
    double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    s = std::clamp(s, 1e-12, 1.0 - 1e-12);
    out[static_cast<std::size_t>(b)] = s;
  }
  return out;
}

}  // namespace

std::vector<double> predict_scores(ClassifierModel<float>& model,
                                   const std::vector<const Tensor<float>*>& images) {
  std::vector<double> scores;
  scores.reserve(images.size());
  constexpr int kChunk = 128;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const int bs = static_cast<int>(std::min<std::size_t>(kChunk, images.size() - start));
    auto part = scores_for_batch(model, images, start, bs);
    scores.insert(scores.end(), part.begin(), part.end());
  }
  return scores;
}

std::vector<double> predict_scores(ClassifierModel<float>& model, const Dataset& data) {
  std::vector<const Tensor<float>*> imgs;
  imgs.reserve(data.samples.size());
  for (const auto& s : data.samples) imgs.push_back(&s.image);
  return predict_scores(model, imgs);
}

std::vector<double> classifier_embedding(ClassifierModel<float>& model,
                                         const Tensor<float>& image) {
  const int side = model.input_size;
  if (image.size(1) != side || image.size(2) != side)
    throw std::invalid_argument("classifier_embedding: image shape differs from training");
  Tensor<float> x({1, 1, side, side});
  std::copy(image.data.begin(), image.data.end(), x.data.begin());
  Tensor<float> emb = model.net.embed(x, false);
  std::vector<double> v(static_cast<std::size_t>(emb.numel()));
  double norm = 0.0;
  for (std::int64_t i = 0; i < emb.numel(); ++i) {
    v[static_cast<std::size_t>(i)] = static_cast<double>(emb.data[i]);
    norm += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
  }
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (auto& x_i : v) x_i /= norm;
  return v;
}

}  // namespace raresynth
