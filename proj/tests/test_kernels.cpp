#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "raresynth/kernels.hpp"
#include "raresynth/rng.hpp"

using raresynth::Rng;
namespace k = raresynth::kernels;

namespace {

// O(mkn) subscript-by-subscript oracle, independent of loop order tricks.
void naive_mm(const std::vector<double>& A, const std::vector<double>& B,
              std::vector<double>& C, int m, int kk, int n, bool at, bool bt) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < kk; ++p) {
        const double a = at ? A[static_cast<std::size_t>(p) * m + i]
                            : A[static_cast<std::size_t>(i) * kk + p];
        const double b = bt ? B[static_cast<std::size_t>(j) * kk + p]
                            : B[static_cast<std::size_t>(p) * n + j];
        acc += a * b;
      }
      C[static_cast<std::size_t>(i) * n + j] = acc;
    }
}

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("matmul variants match the naive oracle") {
  Rng rng(11);
  for (auto [m, kk, n] : {std::tuple{3, 5, 4}, {8, 16, 7}, {17, 9, 33}}) {
    auto A = rand_vec(static_cast<std::size_t>(m) * kk, rng);
    auto B = rand_vec(static_cast<std::size_t>(kk) * n, rng);
    auto At = rand_vec(static_cast<std::size_t>(kk) * m, rng);
    auto Bt = rand_vec(static_cast<std::size_t>(n) * kk, rng);
    std::vector<double> want(static_cast<std::size_t>(m) * n), got(want.size());

    naive_mm(A, B, want, m, kk, n, false, false);
    k::mm_nn(A.data(), B.data(), got.data(), m, kk, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    naive_mm(A, Bt, want, m, kk, n, false, true);
    k::mm_nt(A.data(), Bt.data(), got.data(), m, kk, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    naive_mm(At, B, want, m, kk, n, true, false);
    k::mm_tn(At.data(), B.data(), got.data(), m, kk, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("accumulate flag adds instead of overwriting") {
  Rng rng(5);
  const int m = 4, kk = 6, n = 3;
  auto A = rand_vec(static_cast<std::size_t>(m) * kk, rng);
  auto B = rand_vec(static_cast<std::size_t>(kk) * n, rng);
  std::vector<double> base(static_cast<std::size_t>(m) * n, 2.5);
  std::vector<double> once(static_cast<std::size_t>(m) * n);
  k::mm_nn(A.data(), B.data(), once.data(), m, kk, n);
  k::mm_nn(A.data(), B.data(), base.data(), m, kk, n, /*accumulate=*/true);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(base[i] == doctest::Approx(once[i] + 2.5));
}

TEST_CASE("OpenMP kernels are bitwise identical to the serial reference") {
  Rng rng(42);
  const int m = 33, kk = 140, n = 257;
  std::vector<float> A(static_cast<std::size_t>(m) * kk);
  std::vector<float> B(static_cast<std::size_t>(kk) * n);
  std::vector<float> Bt(static_cast<std::size_t>(n) * kk);
  std::vector<float> At(static_cast<std::size_t>(kk) * m);
  for (auto& x : A) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : B) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : Bt) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : At) x = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> c1(static_cast<std::size_t>(m) * n), c2(c1.size());

  k::serial::mm_nn(A.data(), B.data(), c1.data(), m, kk, n);
  k::mm_nn(A.data(), B.data(), c2.data(), m, kk, n);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);

  k::serial::mm_nt(A.data(), Bt.data(), c1.data(), m, kk, n);
  k::mm_nt(A.data(), Bt.data(), c2.data(), m, kk, n);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);

  k::serial::mm_tn(At.data(), B.data(), c1.data(), m, kk, n);
  k::mm_tn(At.data(), B.data(), c2.data(), m, kk, n);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);
}

TEST_CASE("im2col lays out patches and col2im is its adjoint") {
  const int ci = 2, h = 5, w = 4, kh = 3, kw = 3, stride = 1, pad = 1;
  const int oh = 5, ow = 4;
  Rng rng(3);
  std::vector<float> img(static_cast<std::size_t>(ci) * h * w);
  for (auto& v : img) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> cols(static_cast<std::size_t>(ci) * kh * kw * oh * ow);
  k::im2col(img.data(), ci, h, w, kh, kw, stride, pad, cols.data(), oh, ow);

  // Spot-check the patch mapping, including zero padding.
  auto col_at = [&](int c, int ky, int kx, int oy, int ox) {
    const int r = (c * kh + ky) * kw + kx;
    return cols[static_cast<std::size_t>(r) * oh * ow + oy * ow + ox];
  };
  CHECK(col_at(0, 1, 1, 2, 2) == img[static_cast<std::size_t>(0) * h * w + 2 * w + 2]);
  CHECK(col_at(1, 0, 0, 0, 0) == 0.0f);  // reads (-1,-1): padding
  CHECK(col_at(0, 2, 1, 4, 1) == 0.0f);  // reads row 5: padding

  // Adjoint identity: <im2col(x), y> == <x, col2im(y)> for random y.
  std::vector<float> y(cols.size());
  for (auto& v : y) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> back(img.size());
  k::col2im(y.data(), ci, h, w, kh, kw, stride, pad, back.data(), oh, ow);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) lhs += static_cast<double>(cols[i]) * y[i];
  for (std::size_t i = 0; i < img.size(); ++i) rhs += static_cast<double>(img[i]) * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));

  // Serial and OpenMP col2im agree bitwise.
  std::vector<float> back2(img.size());
  k::serial::col2im(y.data(), ci, h, w, kh, kw, stride, pad, back2.data(), oh, ow);
  CHECK(std::memcmp(back.data(), back2.data(), back.size() * sizeof(float)) == 0);
}

TEST_CASE("strided conv geometry") {
  // stride 2, pad 1, 3x3 kernel on 6x6 -> 3x3 output positions.
  const int ci = 1, h = 6, w = 6;
  const int oh = (h + 2 - 3) / 2 + 1, ow = oh;
  CHECK(oh == 3);
  std::vector<float> img(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i);
  std::vector<float> cols(static_cast<std::size_t>(ci) * 9 * oh * ow);
  k::im2col(img.data(), ci, h, w, 3, 3, 2, 1, cols.data(), oh, ow);
  // center tap (ky=1,kx=1) of output (1,1) reads input (2,2).
  CHECK(cols[static_cast<std::size_t>(4) * oh * ow + 1 * ow + 1] == img[2 * w + 2]);
}
