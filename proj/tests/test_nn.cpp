#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "raresynth/nn.hpp"
#include "test_support.hpp"

using namespace raresynth;
using namespace testsupport;

namespace {

Tensor<double> rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// loss = sum(c .* layer(x)); exercises every output element.
template <typename ForwardFn>
double weighted_sum_loss(ForwardFn&& fwd, const Tensor<double>& c) {
  Tensor<double> y = fwd();
  double loss = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) loss += c.data[i] * y.data[i];
  return loss;
}

}  // namespace

TEST_CASE("dense gradients match central differences") {
  Rng rng(1);
  nn::Dense<double> layer("d", 5, 3, rng);
  Tensor<double> x = rand_tensor({4, 5}, rng);
  Tensor<double> c = rand_tensor({4, 3}, rng);

  nn::ParamStore<double> store;
  layer.register_params(store);
  auto loss_fn = [&]() {
    return weighted_sum_loss([&] { return layer.forward(x, true); }, c);
  };

  store.zero_grad();
  layer.forward(x, true);
  Tensor<double> gx = layer.backward(c);
  const auto fd = central_differences(store, loss_fn);
  CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-7);

  // input gradient against FD on x
  std::vector<double> fdx;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double o = x.data[i];
    x.data[i] = o + 1e-6;
    const double lp = loss_fn();
    x.data[i] = o - 1e-6;
    const double lm = loss_fn();
    x.data[i] = o;
    fdx.push_back((lp - lm) / 2e-6);
  }
  CHECK(max_rel_err(std::vector<double>(gx.data.begin(), gx.data.end()), fdx, 1e-8) <
        1e-6);
}

TEST_CASE("dense with LoRA: exact zero-init identity and correct adapter gradients") {
  Rng rng(2);
  nn::Dense<double> plain("d", 6, 4, rng);
  nn::Dense<double> adapted = plain;
  Rng lrng(3);
  adapted.lora.init("d", 2, 8.0, 0.0, 6, 4, lrng);
  CHECK(adapted.lora.scale == doctest::Approx(4.0));

  Tensor<double> x = rand_tensor({3, 6}, rng);
  Tensor<double> y0 = plain.forward(x, false);
  Tensor<double> y1 = adapted.forward(x, false);
  for (std::int64_t i = 0; i < y0.numel(); ++i) CHECK(y0.data[i] == y1.data[i]);

  // Move B off zero, then check A/B gradients.
  for (auto& v : adapted.lora.B.value.data) v = rng.uniform(-0.5, 0.5);
  Tensor<double> c = rand_tensor({3, 4}, rng);
  nn::ParamStore<double> store;
  store.add(&adapted.lora.A);
  store.add(&adapted.lora.B);
  store.zero_grad();
  adapted.forward(x, true);
  adapted.backward(c);
  auto loss_fn = [&]() {
    return weighted_sum_loss([&] { return adapted.forward(x, true); }, c);
  };
  const auto fd = central_differences(store, loss_fn);
  CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-7);
}

TEST_CASE("dense LoRA dropout: deterministic mask, exact gradients, p=0 parity") {
  Rng rng(4);
  nn::Dense<double> layer("d", 6, 4, rng);
  Rng lrng(5);
  layer.lora.init("d", 2, 4.0, 0.3, 6, 4, lrng);
  for (auto& v : layer.lora.B.value.data) v = rng.uniform(-0.5, 0.5);

  Tensor<double> x = rand_tensor({3, 6}, rng);
  Tensor<double> c = rand_tensor({3, 4}, rng);

  // Same dropout stream per evaluation makes the loss FD-differentiable.
  auto loss_fn = [&]() {
    Rng drop(99);
    return weighted_sum_loss([&] { return layer.forward(x, true, &drop); }, c);
  };
  nn::ParamStore<double> store;
  store.add(&layer.lora.A);
  store.add(&layer.lora.B);
  store.zero_grad();
  {
    Rng drop(99);
    layer.forward(x, true, &drop);
  }
  layer.backward(c);
  const auto fd = central_differences(store, loss_fn);
  CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-7);

  // Training and inference paths coincide once p = 0.
  layer.lora.dropout_p = 0.0;
  Tensor<double> yt = layer.forward(x, true);
  Tensor<double> ye = layer.forward(x, false);
  for (std::int64_t i = 0; i < yt.numel(); ++i) CHECK(yt.data[i] == ye.data[i]);
}

TEST_CASE("conv2d gradients match central differences") {
  for (int stride : {1, 2}) {
    CAPTURE(stride);
    Rng rng(10 + stride);
    nn::Conv2d<double> conv("c", 2, 3, 3, stride, 1, rng);
    Tensor<double> x = rand_tensor({2, 2, 6, 6}, rng);
    const int oh = conv.out_dim(6);
    Tensor<double> c = rand_tensor({2, 3, oh, oh}, rng);

    nn::ParamStore<double> store;
    conv.register_params(store);
    auto loss_fn = [&]() {
      return weighted_sum_loss([&] { return conv.forward(x, true); }, c);
    };
    store.zero_grad();
    conv.forward(x, true);
    Tensor<double> gx = conv.backward(c);
    const auto fd = central_differences(store, loss_fn);
    CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-6);

    std::vector<double> fdx;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double o = x.data[i];
      x.data[i] = o + 1e-6;
      const double lp = loss_fn();
      x.data[i] = o - 1e-6;
      const double lm = loss_fn();
      x.data[i] = o;
      fdx.push_back((lp - lm) / 2e-6);
    }
    CHECK(max_rel_err(std::vector<double>(gx.data.begin(), gx.data.end()), fdx, 1e-8) <
          1e-6);
  }
}

TEST_CASE("conv2d LoRA path with dropout matches central differences") {
  Rng rng(20);
  nn::Conv2d<double> conv("c", 2, 3, 3, 1, 1, rng);
  Rng lrng(21);
  conv.lora.init("c", 2, 8.0, 0.25, conv.fan_in(), 3, lrng);
  for (auto& v : conv.lora.B.value.data) v = rng.uniform(-0.3, 0.3);

  Tensor<double> x = rand_tensor({1, 2, 5, 5}, rng);
  Tensor<double> c = rand_tensor({1, 3, 5, 5}, rng);
  nn::ParamStore<double> store;
  store.add(&conv.lora.A);
  store.add(&conv.lora.B);
  auto loss_fn = [&]() {
    Rng drop(77);
    return weighted_sum_loss([&] { return conv.forward(x, true, &drop); }, c);
  };
  store.zero_grad();
  {
    Rng drop(77);
    conv.forward(x, true, &drop);
  }
  conv.backward(c);
  const auto fd = central_differences(store, loss_fn);
  CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-6);
}

TEST_CASE("groupnorm gradients match central differences") {
  Rng rng(30);
  nn::GroupNorm<double> gn("g", 4, 2);
  for (auto& v : gn.gamma.value.data) v = rng.uniform(0.5, 1.5);
  for (auto& v : gn.beta.value.data) v = rng.uniform(-0.2, 0.2);
  Tensor<double> x = rand_tensor({2, 4, 3, 3}, rng);
  Tensor<double> c = rand_tensor({2, 4, 3, 3}, rng);

  nn::ParamStore<double> store;
  gn.register_params(store);
  auto loss_fn = [&]() {
    return weighted_sum_loss([&] { return gn.forward(x, true); }, c);
  };
  store.zero_grad();
  gn.forward(x, true);
  Tensor<double> gx = gn.backward(c);
  const auto fd = central_differences(store, loss_fn);
  CHECK(max_rel_err(flatten_grads(store), fd, 1e-8) < 1e-6);

  std::vector<double> fdx;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double o = x.data[i];
    x.data[i] = o + 1e-6;
    const double lp = loss_fn();
    x.data[i] = o - 1e-6;
    const double lm = loss_fn();
    x.data[i] = o;
    fdx.push_back((lp - lm) / 2e-6);
  }
  CHECK(max_rel_err(std::vector<double>(gx.data.begin(), gx.data.end()), fdx, 1e-8) <
        1e-5);
}

TEST_CASE("activation backward formulas") {
  Rng rng(40);
  for (auto kind : {nn::Act::silu, nn::Act::relu}) {
    nn::Activation<double> act(kind);
    Tensor<double> x = rand_tensor({2, 5}, rng);
    // keep relu away from its kink
    for (auto& v : x.data)
      if (std::abs(v) < 0.05) v = 0.1;
    Tensor<double> c = rand_tensor({2, 5}, rng);
    act.forward(x, true);
    Tensor<double> gx = act.backward(c);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double o = x.data[i];
      x.data[i] = o + 1e-7;
      Tensor<double> yp = act.forward(x, false);
      x.data[i] = o - 1e-7;
      Tensor<double> ym = act.forward(x, false);
      x.data[i] = o;
      double fd = 0.0;
      for (std::int64_t j = 0; j < yp.numel(); ++j)
        fd += c.data[j] * (yp.data[j] - ym.data[j]) / 2e-7;
      CHECK(gx.data[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("embedding accumulates row gradients") {
  Rng rng(50);
  nn::Embedding<double> emb("e", 3, 4, rng);
  Tensor<double> y = emb.forward({1, 1, 2}, true);
  CHECK(y.size(0) == 3);
  Tensor<double> g({3, 4}, 1.0);
  emb.table.grad.zero();
  emb.backward(g);
  for (int j = 0; j < 4; ++j) {
    CHECK(emb.table.grad.at2(0, j) == 0.0);
    CHECK(emb.table.grad.at2(1, j) == 2.0);  // looked up twice
    CHECK(emb.table.grad.at2(2, j) == 1.0);
  }
}

TEST_CASE("upsample2x and global average pool round-trip gradients") {
  Rng rng(60);
  Tensor<double> x = rand_tensor({1, 2, 3, 3}, rng);
  Tensor<double> up = nn::upsample2x(x);
  CHECK(up.size(2) == 6);
  CHECK(up.at4(0, 1, 5, 4) == x.at4(0, 1, 2, 2));
  // adjoint identity
  Tensor<double> gy = rand_tensor({1, 2, 6, 6}, rng);
  Tensor<double> gx = nn::upsample2x_backward(gy);
  double lhs = 0.0, rhs = 0.0;
  for (std::int64_t i = 0; i < up.numel(); ++i) lhs += up.data[i] * gy.data[i];
  for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x.data[i] * gx.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  Tensor<double> pooled = nn::global_avg_pool(x);
  CHECK(pooled.size(0) == 1);
  CHECK(pooled.size(1) == 2);
  double want = 0.0;
  for (int i = 0; i < 9; ++i) want += x.data[static_cast<std::size_t>(i)];
  CHECK(pooled.at2(0, 0) == doctest::Approx(want / 9.0));
  Tensor<double> gp({1, 2}, 1.0);
  Tensor<double> gxp = nn::global_avg_pool_backward(gp, x.shape);
  CHECK(gxp.data[0] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("adam reproduces a hand-stepped update") {
  nn::Param<double> p;
  p.name = "w";
  p.init_shape({2});
  p.value.data = {1.0, -2.0};
  p.grad.data = {0.5, -0.25};
  nn::Adam<double> opt;
  opt.lr = 0.1;
  std::vector<nn::Param<double>*> params{&p};
  opt.step(params);

  // step 1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps)
  CHECK(p.value.data[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(p.value.data[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)));
}

TEST_CASE("adam skips non-trainable parameters") {
  nn::Param<double> p;
  p.init_shape({1});
  p.value.data = {1.0};
  p.grad.data = {1.0};
  p.trainable = false;
  nn::Adam<double> opt;
  std::vector<nn::Param<double>*> params{&p};
  opt.step(params);
  CHECK(p.value.data[0] == 1.0);
}
