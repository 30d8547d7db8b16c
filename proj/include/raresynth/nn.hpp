#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "raresynth/kernels.hpp"
#include "raresynth/rng.hpp"
#include "raresynth/tensor.hpp"

// Layer primitives with hand-written backward passes. Layers cache what they
// need during a training-mode forward and release it after backward. One
// model instance is confined to one thread; parallelism lives inside the
// kernels and across independent runs.

namespace raresynth::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void init_shape(std::vector<int> s) {
    value = Tensor<T>(s);
    grad = Tensor<T>(std::move(s));
  }
};

// Flat registry of parameters in registration order. Checkpoints serialize
// tensors in exactly this order.
template <typename T>
struct ParamStore {
  std::vector<Param<T>*> params;

  void add(Param<T>* p) { params.push_back(p); }
  void zero_grad() {
    for (auto* p : params) p->grad.zero();
  }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto* p : params) n += p->value.numel();
    return n;
  }
  std::int64_t trainable_count() const {
    std::int64_t n = 0;
    for (const auto* p : params)
      if (p->trainable) n += p->value.numel();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Elementwise helpers

template <typename T>
void axpy(T a, const Tensor<T>& x, Tensor<T>& y) {
  for (std::int64_t i = 0; i < x.numel(); ++i) y.data[i] += a * x.data[i];
}

template <typename T>
inline T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// ---------------------------------------------------------------------------
// Low-rank adapter slot shared by Dense and Conv2d. fan_in counts the
// flattened input dimension (ci*kh*kw for convolutions).

template <typename T>
struct LoraSlot {
  bool enabled = false;
  int rank = 0;
  T scale = T(0);     // alpha / rank
  T dropout_p = T(0); // applied to the A-path input, training mode only
  Param<T> A;         // (rank, fan_in)
  Param<T> B;         // (fan_out, rank)

  void init(const std::string& owner, int r, T alpha, T p, int fan_in, int fan_out,
            Rng& rng) {
    enabled = true;
    rank = r;
    scale = alpha / static_cast<T>(r);
    dropout_p = p;
    A.name = owner + ".lora_A";
    B.name = owner + ".lora_B";
    A.init_shape({r, fan_in});
    B.init_shape({fan_out, r});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : A.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
    // B starts at zero so the adapted model equals the base model exactly.
  }
};

// ---------------------------------------------------------------------------
// Dense: y = x * W^T + b, with optional LoRA path.

template <typename T>
struct Dense {
  Param<T> W;  // (out, in)
  Param<T> b;  // (out)
  int in = 0, out = 0;
  LoraSlot<T> lora;

  Tensor<T> x_cache_;
  Tensor<T> mid_cache_;         // (N, rank), pre-scale
  std::vector<std::uint8_t> mask_cache_;

  Dense() = default;
  Dense(const std::string& name, int in_dim, int out_dim, Rng& rng)
      : in(in_dim), out(out_dim) {
    W.name = name + ".W";
    b.name = name + ".b";
    W.init_shape({out_dim, in_dim});
    b.init_shape({out_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : W.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  void register_params(ParamStore<T>& s) {
    s.add(&W);
    s.add(&b);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* rng = nullptr) {
    const int N = x.size(0);
    Tensor<T> y({N, out});
    kernels::mm_nt(x.ptr(), W.value.ptr(), y.ptr(), N, in, out);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < out; ++j) y.at2(i, j) += b.value.data[j];
    if (lora.enabled) {
      const Tensor<T>* xin = &x;
      Tensor<T> xd;
      const bool drop = train && lora.dropout_p > T(0);
      if (drop) {
        mask_cache_.resize(static_cast<std::size_t>(x.numel()));
        xd = x;
        const T keep = T(1) - lora.dropout_p;
        for (std::int64_t i = 0; i < x.numel(); ++i) {
          const bool k = !rng->bernoulli(static_cast<double>(lora.dropout_p));
          mask_cache_[static_cast<std::size_t>(i)] = k ? 1 : 0;
          xd.data[i] = k ? x.data[i] / keep : T(0);
        }
        xin = &xd;
      } else {
        mask_cache_.clear();
      }
      Tensor<T> mid({N, lora.rank});
      kernels::mm_nt(xin->ptr(), lora.A.value.ptr(), mid.ptr(), N, in, lora.rank);
      Tensor<T> tmp({N, out});
      kernels::mm_nt(mid.ptr(), lora.B.value.ptr(), tmp.ptr(), N, lora.rank, out);
      axpy(lora.scale, tmp, y);
      if (train) mid_cache_ = std::move(mid);
    }
    if (train) x_cache_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.size(0);
    const Tensor<T>& x = x_cache_;
    kernels::mm_tn(gy.ptr(), x.ptr(), W.grad.ptr(), out, N, in, /*accumulate=*/true);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < out; ++j) b.grad.data[j] += gy.at2(i, j);
    Tensor<T> gx({N, in});
    kernels::mm_nn(gy.ptr(), W.value.ptr(), gx.ptr(), N, out, in);
    if (lora.enabled) {
      Tensor<T> gys = gy;
      for (auto& v : gys.data) v *= lora.scale;
      kernels::mm_tn(gys.ptr(), mid_cache_.ptr(), lora.B.grad.ptr(), out, N, lora.rank,
                     true);
      Tensor<T> gmid({N, lora.rank});
      kernels::mm_nn(gys.ptr(), lora.B.value.ptr(), gmid.ptr(), N, out, lora.rank);
      // Rebuild the dropped input from the cached mask.
      Tensor<T> xd;
      const Tensor<T>* xin = &x;
      if (!mask_cache_.empty()) {
        xd = x;
        const T keep = T(1) - lora.dropout_p;
        for (std::int64_t i = 0; i < x.numel(); ++i)
          xd.data[i] = mask_cache_[static_cast<std::size_t>(i)] ? x.data[i] / keep : T(0);
        xin = &xd;
      }
      kernels::mm_tn(gmid.ptr(), xin->ptr(), lora.A.grad.ptr(), lora.rank, N, in, true);
      Tensor<T> gxd({N, in});
      kernels::mm_nn(gmid.ptr(), lora.A.value.ptr(), gxd.ptr(), N, lora.rank, in);
      if (!mask_cache_.empty()) {
        const T keep = T(1) - lora.dropout_p;
        for (std::int64_t i = 0; i < gxd.numel(); ++i)
          if (mask_cache_[static_cast<std::size_t>(i)])
            gx.data[i] += gxd.data[i] / keep;
      } else {
        axpy(T(1), gxd, gx);
      }
    }
    x_cache_ = Tensor<T>();
    mid_cache_ = Tensor<T>();
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Conv2d, kernel kh x kw, square padding. im2col + one batched GEMM; the
// column matrix is rebuilt in backward from the cached input to keep the
// activation cache at 1x instead of 9x.

template <typename T>
struct Conv2d {
  Param<T> W;  // (co, ci, kh, kw)
  Param<T> b;  // (co)
  int ci = 0, co = 0, kh = 3, kw = 3, stride = 1, pad = 1;
  LoraSlot<T> lora;

  Tensor<T> x_cache_;
  Tensor<T> mid_cache_;  // (rank, Ntot)
  std::vector<std::uint8_t> mask_cache_;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_,
         Rng& rng)
      : ci(in_ch), co(out_ch), kh(k), kw(k), stride(stride_), pad(pad_) {
    W.name = name + ".W";
    b.name = name + ".b";
    W.init_shape({co, ci, kh, kw});
    b.init_shape({co});
    const double bound = 1.0 / std::sqrt(static_cast<double>(ci) * kh * kw);
    for (auto& v : W.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  void register_params(ParamStore<T>& s) {
    s.add(&W);
    s.add(&b);
  }

  int fan_in() const { return ci * kh * kw; }

  int out_dim(int in_dim) const { return (in_dim + 2 * pad - kh) / stride + 1; }

  // Batched column matrix: K rows, (N*oh*ow) columns; image n occupies the
  // column slice [n*oh*ow, (n+1)*oh*ow).
  void build_cols(const Tensor<T>& x, Tensor<T>& cols, int oh, int ow) const {
    const int N = x.size(0), H = x.size(2), Wd = x.size(3);
    const int K = fan_in();
    const std::int64_t ntot = static_cast<std::int64_t>(N) * oh * ow;
    cols = Tensor<T>({K, static_cast<int>(ntot)});
    Tensor<T> one({K, oh * ow});
    for (int n = 0; n < N; ++n) {
      kernels::im2col(x.ptr() + static_cast<std::size_t>(n) * ci * H * Wd, ci, H, Wd, kh,
                      kw, stride, pad, one.ptr(), oh, ow);
      for (int r = 0; r < K; ++r) {
        T* dst = cols.ptr() + static_cast<std::size_t>(r) * ntot +
                 static_cast<std::size_t>(n) * oh * ow;
        const T* src = one.ptr() + static_cast<std::size_t>(r) * oh * ow;
        for (int p = 0; p < oh * ow; ++p) dst[p] = src[p];
      }
    }
  }

  Tensor<T> apply_dropout(const Tensor<T>& x, Rng& rng) {
    mask_cache_.resize(static_cast<std::size_t>(x.numel()));
    Tensor<T> xd = x;
    const T keep = T(1) - lora.dropout_p;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const bool k = !rng.bernoulli(static_cast<double>(lora.dropout_p));
      mask_cache_[static_cast<std::size_t>(i)] = k ? 1 : 0;
      xd.data[i] = k ? x.data[i] / keep : T(0);
    }
    return xd;
  }

  Tensor<T> dropped_from_mask(const Tensor<T>& x) const {
    Tensor<T> xd = x;
    const T keep = T(1) - lora.dropout_p;
    for (std::int64_t i = 0; i < x.numel(); ++i)
      xd.data[i] = mask_cache_[static_cast<std::size_t>(i)] ? x.data[i] / keep : T(0);
    return xd;
  }

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* rng = nullptr) {
    const int N = x.size(0), H = x.size(2), Wd = x.size(3);
    const int oh = out_dim(H), ow = out_dim(Wd);
    const int K = fan_in();
    const std::int64_t ntot = static_cast<std::int64_t>(N) * oh * ow;

    Tensor<T> cols;
    build_cols(x, cols, oh, ow);
    Tensor<T> tmp({co, static_cast<int>(ntot)});
    kernels::mm_nn(W.value.ptr(), cols.ptr(), tmp.ptr(), co, K, static_cast<int>(ntot));

    if (lora.enabled) {
      const bool drop = train && lora.dropout_p > T(0);
      Tensor<T> colsd;
      const Tensor<T>* cptr = &cols;
      if (drop) {
        Tensor<T> xd = apply_dropout(x, *rng);
        build_cols(xd, colsd, oh, ow);
        cptr = &colsd;
      } else {
        mask_cache_.clear();
      }
      Tensor<T> mid({lora.rank, static_cast<int>(ntot)});
      kernels::mm_nn(lora.A.value.ptr(), cptr->ptr(), mid.ptr(), lora.rank, K,
                     static_cast<int>(ntot));
      Tensor<T> tmp2({co, static_cast<int>(ntot)});
      kernels::mm_nn(lora.B.value.ptr(), mid.ptr(), tmp2.ptr(), co, lora.rank,
                     static_cast<int>(ntot));
      axpy(lora.scale, tmp2, tmp);
      if (train) mid_cache_ = std::move(mid);
    }

    Tensor<T> y({N, co, oh, ow});
    const int ohw = oh * ow;
#pragma omp parallel for schedule(static) if (ntot* co > 16384)
    for (int c = 0; c < co; ++c) {
      const T bias = b.value.data[c];
      const T* src = tmp.ptr() + static_cast<std::size_t>(c) * ntot;
      for (int n = 0; n < N; ++n) {
        T* dst = y.ptr() + (static_cast<std::size_t>(n) * co + c) * ohw;
        const T* s = src + static_cast<std::size_t>(n) * ohw;
        for (int p = 0; p < ohw; ++p) dst[p] = s[p] + bias;
      }
    }
    if (train) x_cache_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = x_cache_;
    const int N = x.size(0), H = x.size(2), Wd = x.size(3);
    const int oh = gy.size(2), ow = gy.size(3);
    const int K = fan_in();
    const int ohw = oh * ow;
    const std::int64_t ntot = static_cast<std::int64_t>(N) * ohw;

    // gy in (co, Ntot) layout + bias gradient.
    Tensor<T> gtmp({co, static_cast<int>(ntot)});
#pragma omp parallel for schedule(static) if (ntot* co > 16384)
    for (int c = 0; c < co; ++c) {
      T* dst = gtmp.ptr() + static_cast<std::size_t>(c) * ntot;
      T acc = T(0);
      for (int n = 0; n < N; ++n) {
        const T* src = gy.ptr() + (static_cast<std::size_t>(n) * co + c) * ohw;
        T* d = dst + static_cast<std::size_t>(n) * ohw;
        for (int p = 0; p < ohw; ++p) {
          d[p] = src[p];
          acc += src[p];
        }
      }
      b.grad.data[c] += acc;
    }

    Tensor<T> cols;
    build_cols(x, cols, oh, ow);
    kernels::mm_nt(gtmp.ptr(), cols.ptr(), W.grad.ptr(), co, static_cast<int>(ntot), K,
                   true);
    Tensor<T> gcols({K, static_cast<int>(ntot)});
    kernels::mm_tn(W.value.ptr(), gtmp.ptr(), gcols.ptr(), K, co, static_cast<int>(ntot));

    Tensor<T> gx({N, ci, H, Wd});
    if (lora.enabled) {
      Tensor<T> gtmps = gtmp;
      for (auto& v : gtmps.data) v *= lora.scale;
      kernels::mm_nt(gtmps.ptr(), mid_cache_.ptr(), lora.B.grad.ptr(), co,
                     static_cast<int>(ntot), lora.rank, true);
      Tensor<T> gmid({lora.rank, static_cast<int>(ntot)});
      kernels::mm_tn(lora.B.value.ptr(), gtmps.ptr(), gmid.ptr(), lora.rank, co,
                     static_cast<int>(ntot));
      const bool dropped = !mask_cache_.empty();
      Tensor<T> colsd;
      const Tensor<T>* cptr = &cols;
      if (dropped) {
        Tensor<T> xd = dropped_from_mask(x);
        build_cols(xd, colsd, oh, ow);
        cptr = &colsd;
      }
      kernels::mm_nt(gmid.ptr(), cptr->ptr(), lora.A.grad.ptr(), lora.rank,
                     static_cast<int>(ntot), K, true);
      if (dropped) {
        Tensor<T> gcolsd({K, static_cast<int>(ntot)});
        kernels::mm_tn(lora.A.value.ptr(), gmid.ptr(), gcolsd.ptr(), K, lora.rank,
                       static_cast<int>(ntot));
        Tensor<T> gxd({N, ci, H, Wd});
        scatter_cols(gcolsd, gxd, oh, ow);
        const T keep = T(1) - lora.dropout_p;
        for (std::int64_t i = 0; i < gx.numel(); ++i)
          if (mask_cache_[static_cast<std::size_t>(i)]) gx.data[i] += gxd.data[i] / keep;
        scatter_cols_add(gcols, gx, oh, ow);
        x_cache_ = Tensor<T>();
        mid_cache_ = Tensor<T>();
        return gx;
      }
      // Shared column matrix: fold the adapter path into gcols.
      kernels::mm_tn(lora.A.value.ptr(), gmid.ptr(), gcols.ptr(), K, lora.rank,
                     static_cast<int>(ntot), true);
      mid_cache_ = Tensor<T>();
    }
    scatter_cols(gcols, gx, oh, ow);
    x_cache_ = Tensor<T>();
    return gx;
  }

 private:
  void scatter_cols(const Tensor<T>& gcols, Tensor<T>& gx, int oh, int ow) const {
    const int N = gx.size(0), H = gx.size(2), Wd = gx.size(3);
    const int K = fan_in();
    const std::int64_t ntot = gcols.size(1);
    Tensor<T> one({K, oh * ow});
    for (int n = 0; n < N; ++n) {
      for (int r = 0; r < K; ++r) {
        const T* src = gcols.ptr() + static_cast<std::size_t>(r) * ntot +
                       static_cast<std::size_t>(n) * oh * ow;
        T* dst = one.ptr() + static_cast<std::size_t>(r) * oh * ow;
        for (int p = 0; p < oh * ow; ++p) dst[p] = src[p];
      }
      kernels::col2im(one.ptr(), ci, H, Wd, kh, kw, stride, pad,
                      gx.ptr() + static_cast<std::size_t>(n) * ci * H * Wd, oh, ow);
    }
  }

  void scatter_cols_add(const Tensor<T>& gcols, Tensor<T>& gx, int oh, int ow) const {
    Tensor<T> tmp(gx.shape);
    scatter_cols(gcols, tmp, oh, ow);
    axpy(T(1), tmp, gx);
  }
};

// ---------------------------------------------------------------------------
// GroupNorm, statistics per (sample, group). Batch-composition independent,
// which keeps batched and one-by-one inference bit-identical.

template <typename T>
struct GroupNorm {
  Param<T> gamma, beta;
  int channels = 0, groups = 1;
  static constexpr double kEps = 1e-5;

  Tensor<T> xhat_cache_;
  std::vector<double> inv_std_cache_;

  GroupNorm() = default;
  GroupNorm(const std::string& name, int c, int want_groups) : channels(c) {
    groups = pick_groups(c, want_groups);
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.init_shape({c});
    beta.init_shape({c});
    gamma.value.fill(T(1));
  }

  static int pick_groups(int c, int want) {
    for (int g = want; g > 1; --g)
      if (c % g == 0) return g;
    return 1;
  }

  void register_params(ParamStore<T>& s) {
    s.add(&gamma);
    s.add(&beta);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const int N = x.size(0), C = x.size(1), H = x.size(2), Wd = x.size(3);
    const int cg = C / groups;
    const std::int64_t m = static_cast<std::int64_t>(cg) * H * Wd;
    Tensor<T> y(x.shape);
    Tensor<T> xhat(x.shape);
    std::vector<double> inv(static_cast<std::size_t>(N) * groups);
#pragma omp parallel for schedule(static) if (x.numel() > 16384)
    for (int ng = 0; ng < N * groups; ++ng) {
      const int n = ng / groups, g = ng % groups;
      const std::size_t base =
          (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * cg) * H * Wd;
      double sum = 0.0, sq = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double v = static_cast<double>(x.data[base + i]);
        sum += v;
        sq += v * v;
      }
      const double mean = sum / static_cast<double>(m);
      const double var = sq / static_cast<double>(m) - mean * mean;
      const double is = 1.0 / std::sqrt(var + kEps);
      inv[static_cast<std::size_t>(ng)] = is;
      for (std::int64_t i = 0; i < m; ++i) {
        const int c = g * cg + static_cast<int>(i / (H * Wd));
        const double xh = (static_cast<double>(x.data[base + i]) - mean) * is;
        xhat.data[base + i] = static_cast<T>(xh);
        y.data[base + i] = static_cast<T>(xh) * gamma.value.data[c] + beta.value.data[c];
      }
    }
    if (train) {
      xhat_cache_ = std::move(xhat);
      inv_std_cache_ = std::move(inv);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.size(0), C = gy.size(1), H = gy.size(2), Wd = gy.size(3);
    const int cg = C / groups;
    const std::int64_t m = static_cast<std::int64_t>(cg) * H * Wd;
    Tensor<T> gx(gy.shape);
    const Tensor<T>& xhat = xhat_cache_;

    // Parameter gradients first (per channel, across the batch).
    for (int c = 0; c < C; ++c) {
      double dg = 0.0, db = 0.0;
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * Wd;
        for (int i = 0; i < H * Wd; ++i) {
          dg += static_cast<double>(gy.data[base + i]) *
                static_cast<double>(xhat.data[base + i]);
          db += static_cast<double>(gy.data[base + i]);
        }
      }
      gamma.grad.data[c] += static_cast<T>(dg);
      beta.grad.data[c] += static_cast<T>(db);
    }

#pragma omp parallel for schedule(static) if (gy.numel() > 16384)
    for (int ng = 0; ng < N * groups; ++ng) {
      const int n = ng / groups, g = ng % groups;
      const std::size_t base =
          (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * cg) * H * Wd;
      const double is = inv_std_cache_[static_cast<std::size_t>(ng)];
      double s1 = 0.0, s2 = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const int c = g * cg + static_cast<int>(i / (H * Wd));
        const double dxh = static_cast<double>(gy.data[base + i]) *
                           static_cast<double>(gamma.value.data[c]);
        s1 += dxh;
        s2 += dxh * static_cast<double>(xhat.data[base + i]);
      }
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::int64_t i = 0; i < m; ++i) {
        const int c = g * cg + static_cast<int>(i / (H * Wd));
        const double dxh = static_cast<double>(gy.data[base + i]) *
                           static_cast<double>(gamma.value.data[c]);
        const double v = (dxh - s1 * inv_m -
                          static_cast<double>(xhat.data[base + i]) * s2 * inv_m) *
                         is;
        gx.data[base + i] = static_cast<T>(v);
      }
    }
    xhat_cache_ = Tensor<T>();
    inv_std_cache_.clear();
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Activations

enum class Act { relu, silu };

template <typename T>
struct Activation {
  Act kind = Act::silu;
  Tensor<T> x_cache_;

  explicit Activation(Act k = Act::silu) : kind(k) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y(x.shape);
    if (kind == Act::relu) {
      for (std::int64_t i = 0; i < x.numel(); ++i)
        y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    } else {
      for (std::int64_t i = 0; i < x.numel(); ++i)
        y.data[i] = x.data[i] * sigmoid(x.data[i]);
    }
    if (train) x_cache_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = x_cache_;
    Tensor<T> gx(gy.shape);
    if (kind == Act::relu) {
      for (std::int64_t i = 0; i < gy.numel(); ++i)
        gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
    } else {
      for (std::int64_t i = 0; i < gy.numel(); ++i) {
        const T s = sigmoid(x.data[i]);
        gx.data[i] = gy.data[i] * s * (T(1) + x.data[i] * (T(1) - s));
      }
    }
    x_cache_ = Tensor<T>();
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Embedding table (used for class tokens).

template <typename T>
struct Embedding {
  Param<T> table;  // (num, dim)
  int num = 0, dim = 0;
  std::vector<int> idx_cache_;

  Embedding() = default;
  Embedding(const std::string& name, int n, int d, Rng& rng) : num(n), dim(d) {
    table.name = name + ".table";
    table.init_shape({n, d});
    for (auto& v : table.value.data) v = static_cast<T>(rng.normal() * 0.02);
  }

  void register_params(ParamStore<T>& s) { s.add(&table); }

  Tensor<T> forward(const std::vector<int>& idx, bool train) {
    Tensor<T> y({static_cast<int>(idx.size()), dim});
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < dim; ++j) y.at2(static_cast<int>(i), j) = table.value.at2(idx[i], j);
    if (train) idx_cache_ = idx;
    return y;
  }

  void backward(const Tensor<T>& gy) {
    for (std::size_t i = 0; i < idx_cache_.size(); ++i)
      for (int j = 0; j < dim; ++j)
        table.grad.at2(idx_cache_[i], j) += gy.at2(static_cast<int>(i), j);
    idx_cache_.clear();
  }
};

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor<T> y({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = x.ptr() + static_cast<std::size_t>(nc) * H * W;
    T* dst = y.ptr() + static_cast<std::size_t>(nc) * 4 * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const T v = src[i * W + j];
        dst[(2 * i) * 2 * W + 2 * j] = v;
        dst[(2 * i) * 2 * W + 2 * j + 1] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j + 1] = v;
      }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& gy) {
  const int N = gy.size(0), C = gy.size(1), H2 = gy.size(2), W2 = gy.size(3);
  const int H = H2 / 2, W = W2 / 2;
  Tensor<T> gx({N, C, H, W});
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = gy.ptr() + static_cast<std::size_t>(nc) * H2 * W2;
    T* dst = gx.ptr() + static_cast<std::size_t>(nc) * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        dst[i * W + j] = src[(2 * i) * W2 + 2 * j] + src[(2 * i) * W2 + 2 * j + 1] +
                         src[(2 * i + 1) * W2 + 2 * j] + src[(2 * i + 1) * W2 + 2 * j + 1];
  }
  return gx;
}

// Global average pool (N,C,H,W) -> (N,C).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int N = x.size(0), C = x.size(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.size(2)) * x.size(3);
  Tensor<T> y({N, C});
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = x.ptr() + static_cast<std::size_t>(nc) * hw;
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) acc += static_cast<double>(src[i]);
    y.data[nc] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& gy, const std::vector<int>& xshape) {
  Tensor<T> gx(xshape);
  const std::int64_t hw = static_cast<std::int64_t>(xshape[2]) * xshape[3];
  const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
  for (int nc = 0; nc < xshape[0] * xshape[1]; ++nc) {
    T* dst = gx.ptr() + static_cast<std::size_t>(nc) * hw;
    const T v = gy.data[nc] * inv;
    for (std::int64_t i = 0; i < hw; ++i) dst[i] = v;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Adam with optional decoupled weight decay (plain Adam when decay is 0).

template <typename T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m_, v_;

  void step(std::vector<Param<T>*>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params[i]->value.numel()), 0.0);
        v_[i].assign(static_cast<std::size_t>(params[i]->value.numel()), 0.0);
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      if (!p.trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        const double g = static_cast<double>(p.grad.data[j]);
        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
        double upd = lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        if (weight_decay > 0.0)
          upd += lr * weight_decay * static_cast<double>(p.value.data[j]);
        p.value.data[j] = static_cast<T>(static_cast<double>(p.value.data[j]) - upd);
      }
    }
  }
};

}  // namespace raresynth::nn
