// Compares the parallel kernels against the serial reference implementations
// on transformer-shaped workloads and reports GFLOP/s for each.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "sprint/kernels.hpp"
#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

using sprint::Rng;
using sprint::Tensor;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void fill(Rng& rng, Tensor<float>& t) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
}

void report(const std::string& name, double flops, double serial_s, double parallel_s) {
  std::printf("%-28s serial %8.2f GF/s   parallel %8.2f GF/s   speedup %5.2fx\n", name.c_str(),
              flops / serial_s / 1e9, flops / parallel_s / 1e9, serial_s / parallel_s);
}

}  // namespace

int main() {
  Rng rng(7);

  {
    // the fused qkv projection shape of the default training step
    int64_t m = 64 * 64, n = 384, k = 128;
    Tensor<float> a({m, k}), b({k, n}), c({m, n}), c2({m, n});
    fill(rng, a);
    fill(rng, b);
    double fl = 2.0 * m * n * k;
    double ts = time_of([&] { sprint::kernels::ref::matmul(m, n, k, a.data(), b.data(),
                                                           c2.data()); }, 3);
    double tp = time_of([&] { sprint::kernels::matmul(m, n, k, a.data(), b.data(), c.data()); },
                        20);
    report("matmul 4096x384x128", fl, ts, tp);
  }

  {
    int64_t bh = 64 * 4, nt = 64, hd = 32;
    Tensor<float> q({bh, nt, hd}), kk({bh, nt, hd}), s({bh, nt, nt}), s2({bh, nt, nt});
    fill(rng, q);
    fill(rng, kk);
    double fl = 2.0 * bh * nt * nt * hd;
    double ts = time_of([&] { sprint::kernels::ref::attn_scores(bh, nt, hd, q.data(), kk.data(),
                                                                0.5f, s2.data()); }, 5);
    double tp = time_of([&] { sprint::kernels::attn_scores(bh, nt, hd, q.data(), kk.data(), 0.5f,
                                                           s.data()); }, 20);
    report("attn_scores 256x64x32", fl, ts, tp);
  }

  {
    int64_t bh = 64 * 4, nt = 64, hd = 32;
    Tensor<float> p({bh, nt, nt}), v({bh, nt, hd}), o({bh, nt, hd}), o2({bh, nt, hd});
    fill(rng, p);
    fill(rng, v);
    double fl = 2.0 * bh * nt * nt * hd;
    double ts = time_of([&] { sprint::kernels::ref::attn_apply(bh, nt, hd, p.data(), v.data(),
                                                               o2.data()); }, 5);
    double tp = time_of([&] { sprint::kernels::attn_apply(bh, nt, hd, p.data(), v.data(),
                                                          o.data()); }, 20);
    report("attn_apply 256x64x32", fl, ts, tp);
  }

  {
    int64_t rows = 64 * 64, cols = 128;
    Tensor<float> x({rows, cols}), y({rows, cols}), mean({rows}), rstd({rows});
    fill(rng, x);
    double fl = 8.0 * rows * cols;  // rough elementwise cost
    double ts = time_of([&] { sprint::kernels::ref::layer_norm(rows, cols, x.data(), y.data(),
                                                               mean.data(), rstd.data(),
                                                               1e-6f); }, 5);
    double tp = time_of([&] { sprint::kernels::layer_norm(rows, cols, x.data(), y.data(),
                                                          mean.data(), rstd.data(), 1e-6f); },
                        20);
    report("layer_norm 4096x128", fl, ts, tp);
  }

  {
    int64_t n = 64 * 64 * 512;
    Tensor<float> x({n}), y({n});
    fill(rng, x);
    double fl = 8.0 * n;
    double ts = time_of([&] { sprint::kernels::ref::gelu(n, x.data(), y.data()); }, 5);
    double tp = time_of([&] { sprint::kernels::gelu(n, x.data(), y.data()); }, 20);
    report("gelu 2M", fl, ts, tp);
  }

  return 0;
}
