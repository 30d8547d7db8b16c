// Times the OpenMP kernels against their serial reference twins on the GEMM
// and patch-matrix shapes the training loops actually produce, and checks
// that both flavours agree bit for bit.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "raresynth/kernels.hpp"
#include "raresynth/rng.hpp"

using raresynth::Rng;
namespace k = raresynth::kernels;

namespace {

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void fill(std::vector<float>& v, Rng& rng) {
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now();
    fn();
    best = std::min(best, now() - t0);
  }
  return best;
}

struct Shape {
  const char* name;
  int m, kk, n;
};

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP: compiled out\n");
#endif

  // (co, ci*kh*kw, batch*oh*ow) shapes from the U-Net and classifier stages.
  const Shape shapes[] = {
      {"unet stage1 fwd", 32, 288, 12288},
      {"unet stage2 fwd", 64, 576, 3072},
      {"clf stage1 fwd", 16, 144, 16384},
      {"clf grad dW (nt)", 64, 16384, 576},
      {"clf grad dx (tn)", 576, 64, 16384},
  };

  Rng rng(7);
  for (const auto& s : shapes) {
    std::vector<float> A(static_cast<std::size_t>(s.m) * s.kk);
    std::vector<float> B(static_cast<std::size_t>(s.kk) * s.n);
    std::vector<float> C1(static_cast<std::size_t>(s.m) * s.n);
    std::vector<float> C2(C1.size());
    fill(A, rng);
    fill(B, rng);
    const double flops = 2.0 * s.m * s.kk * s.n;

    double ts, tp;
    if (std::strstr(s.name, "(nt)")) {
      std::vector<float> Bt(static_cast<std::size_t>(s.n) * s.kk);
      fill(Bt, rng);
      ts = time_best_of(3, [&] { k::serial::mm_nt(A.data(), Bt.data(), C1.data(), s.m, s.kk, s.n); });
      tp = time_best_of(3, [&] { k::mm_nt(A.data(), Bt.data(), C2.data(), s.m, s.kk, s.n); });
    } else if (std::strstr(s.name, "(tn)")) {
      std::vector<float> At(static_cast<std::size_t>(s.kk) * s.m);
      fill(At, rng);
      ts = time_best_of(3, [&] { k::serial::mm_tn(At.data(), B.data(), C1.data(), s.m, s.kk, s.n); });
      tp = time_best_of(3, [&] { k::mm_tn(At.data(), B.data(), C2.data(), s.m, s.kk, s.n); });
    } else {
      ts = time_best_of(3, [&] { k::serial::mm_nn(A.data(), B.data(), C1.data(), s.m, s.kk, s.n); });
      tp = time_best_of(3, [&] { k::mm_nn(A.data(), B.data(), C2.data(), s.m, s.kk, s.n); });
    }
    const bool same = std::memcmp(C1.data(), C2.data(), C1.size() * sizeof(float)) == 0;
    std::printf("%-18s m=%-4d k=%-6d n=%-6d  serial %7.2f GF/s  omp %7.2f GF/s  "
                "speedup %5.2fx  bitwise %s\n",
                s.name, s.m, s.kk, s.n, flops / ts / 1e9, flops / tp / 1e9, ts / tp,
                same ? "ok" : "MISMATCH");
  }

  // im2col / col2im throughput.
  {
    const int ci = 32, h = 32, w = 32, kh = 3, kw = 3;
    const int oh = h, ow = w;
    std::vector<float> img(static_cast<std::size_t>(ci) * h * w);
    fill(img, rng);
    std::vector<float> cols1(static_cast<std::size_t>(ci) * kh * kw * oh * ow);
    std::vector<float> cols2(cols1.size());
    const double ts = time_best_of(5, [&] {
      k::serial::im2col(img.data(), ci, h, w, kh, kw, 1, 1, cols1.data(), oh, ow);
    });
    const double tp = time_best_of(5, [&] {
      k::im2col(img.data(), ci, h, w, kh, kw, 1, 1, cols2.data(), oh, ow);
    });
    const bool same =
        std::memcmp(cols1.data(), cols2.data(), cols1.size() * sizeof(float)) == 0;
    const double gb = cols1.size() * sizeof(float) / 1e9;
    std::printf("%-18s ci=%d %dx%d           serial %7.2f GB/s  omp %7.2f GB/s  "
                "speedup %5.2fx  bitwise %s\n",
                "im2col", ci, h, w, gb / ts, gb / tp, ts / tp, same ? "ok" : "MISMATCH");
  }
  return 0;
}
