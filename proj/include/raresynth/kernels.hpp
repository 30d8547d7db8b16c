#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel compute kernels behind every training and sampling loop.
//
// Each kernel comes in two flavours: the OpenMP version in raresynth::kernels
// (used by the pipeline) and a single-threaded twin in
// raresynth::kernels::serial (the reference used by tests and the benchmark
// tool). Both flavours perform the per-output-element accumulation in the
// same order, so their results are bitwise identical and independent of the
// thread count: parallelism is only ever over disjoint output elements.

namespace raresynth::kernels {

namespace detail {

// C(m,n) = A(m,k) * B(k,n), row-major. Ascending-p accumulation per element.
template <typename T>
inline void mm_nn_row(const T* a, const T* B, T* c, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const T av = a[p];
    const T* b = B + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) c[j] += av * b[j];
  }
}

// C(m,n) = A(m,k) * B(n,k)^T. Tiled over j with independent accumulators.
template <typename T, int JT = 8>
inline void mm_nt_row(const T* a, const T* B, T* c, int k, int n) {
  int j0 = 0;
  for (; j0 + JT <= n; j0 += JT) {
    T acc[JT] = {};
    for (int p = 0; p < k; ++p) {
      const T av = a[p];
      for (int u = 0; u < JT; ++u)
        acc[u] += av * B[static_cast<std::size_t>(j0 + u) * k + p];
    }
    for (int u = 0; u < JT; ++u) c[j0 + u] += acc[u];
  }
  for (; j0 < n; ++j0) {
    T acc = T(0);
    const T* b = B + static_cast<std::size_t>(j0) * k;
    for (int p = 0; p < k; ++p) acc += a[p] * b[p];
    c[j0] += acc;
  }
}

// C(m,n) = A(k,m)^T * B(k,n). Row i of C accumulated in ascending-p order.
template <typename T>
inline void mm_tn_row(const T* A, const T* B, T* c, int i, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const T av = A[static_cast<std::size_t>(p) * m + i];
    const T* b = B + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) c[j] += av * b[j];
  }
}

}  // namespace detail

namespace serial {

template <typename T>
void mm_nn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_nn_row(A + static_cast<std::size_t>(i) * k, B, c, k, n);
  }
}

template <typename T>
void mm_nt(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_nt_row(A + static_cast<std::size_t>(i) * k, B, c, k, n);
  }
}

template <typename T>
void mm_tn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_tn_row(A, B, c, i, m, k, n);
  }
}

// Patch matrix for convolution: cols has (ci*kh*kw) rows and (oh*ow) columns.
template <typename T>
void im2col(const T* img, int ci, int h, int w, int kh, int kw, int stride, int pad,
            T* cols, int oh, int ow) {
  const int rows = ci * kh * kw;
  for (int r = 0; r < rows; ++r) {
    const int c = r / (kh * kw);
    const int ky = (r / kw) % kh;
    const int kx = r % kw;
    T* dst = cols + static_cast<std::size_t>(r) * oh * ow;
    const T* src = img + static_cast<std::size_t>(c) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * stride + ky - pad;
      if (iy < 0 || iy >= h) {
        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
        continue;
      }
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox * stride + kx - pad;
        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch gradients back onto the image.
// Accumulation per input pixel walks (ky,kx) rows in ascending order.
template <typename T>
void col2im(const T* cols, int ci, int h, int w, int kh, int kw, int stride, int pad,
            T* img, int oh, int ow) {
  for (int c = 0; c < ci; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * h * w;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) dst[i] = T(0);
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int r = (c * kh + ky) * kw + kx;
        const T* src = cols + static_cast<std::size_t>(r) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace serial

// OpenMP flavours. The `if` clause skips thread spawn for tiny problems.

template <typename T>
void mm_nn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * k * n > 16384)
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_nn_row(A + static_cast<std::size_t>(i) * k, B, c, k, n);
  }
}

template <typename T>
void mm_nt(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * k * n > 16384)
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_nt_row(A + static_cast<std::size_t>(i) * k, B, c, k, n);
  }
}

template <typename T>
void mm_tn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * k * n > 16384)
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    detail::mm_tn_row(A, B, c, i, m, k, n);
  }
}

template <typename T>
void im2col(const T* img, int ci, int h, int w, int kh, int kw, int stride, int pad,
            T* cols, int oh, int ow) {
  const int rows = ci * kh * kw;
#pragma omp parallel for schedule(static) if (rows * oh * ow > 16384)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (kh * kw);
    const int ky = (r / kw) % kh;
    const int kx = r % kw;
    T* dst = cols + static_cast<std::size_t>(r) * oh * ow;
    const T* src = img + static_cast<std::size_t>(c) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * stride + ky - pad;
      if (iy < 0 || iy >= h) {
        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
        continue;
      }
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox * stride + kx - pad;
        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
      }
    }
  }
}

// Parallel over input channels: every destination pixel belongs to exactly
// one channel, so threads never collide and the add order matches serial.
template <typename T>
void col2im(const T* cols, int ci, int h, int w, int kh, int kw, int stride, int pad,
            T* img, int oh, int ow) {
#pragma omp parallel for schedule(static) if (ci * oh * ow * kh * kw > 16384)
  for (int c = 0; c < ci; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * h * w;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) dst[i] = T(0);
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int r = (c * kh + ky) * kw + kx;
        const T* src = cols + static_cast<std::size_t>(r) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace raresynth::kernels
