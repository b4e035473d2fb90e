#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sprint/kernels.hpp"
#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

using namespace sprint;

namespace {

Tensor<float> randn(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal() * scale);
  return t;
}

double max_abs_diff(const float* a, const float* b, int64_t n) {
  double m = 0.0;
  for (int64_t i = 0; i < n; ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace

TEST_CASE("matmul matches the serial reference over all transpose modes") {
  Rng rng(11);
  int64_t m = 17, n = 23, k = 9;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      Tensor<float> a = ta ? randn(rng, {k, m}) : randn(rng, {m, k});
      Tensor<float> b = tb ? randn(rng, {n, k}) : randn(rng, {k, n});
      Tensor<float> c({m, n}), c_ref({m, n});
      kernels::matmul(m, n, k, a.data(), b.data(), c.data(), ta, tb);
      kernels::ref::matmul(m, n, k, a.data(), b.data(), c_ref.data(), ta, tb);
      REQUIRE(max_abs_diff(c.data(), c_ref.data(), m * n) < 1e-4);
    }
  }
}

TEST_CASE("matmul beta accumulates into the output") {
  Rng rng(12);
  int64_t m = 5, n = 7, k = 3;
  Tensor<float> a = randn(rng, {m, k}), b = randn(rng, {k, n});
  Tensor<float> c = randn(rng, {m, n});
  Tensor<float> expect = c;
  kernels::ref::matmul(m, n, k, a.data(), b.data(), expect.data(), false, false, 1.0f);
  kernels::matmul(m, n, k, a.data(), b.data(), c.data(), false, false, 1.0f);
  REQUIRE(max_abs_diff(c.data(), expect.data(), m * n) < 1e-5);
}

TEST_CASE("layer_norm normalizes rows and matches the reference") {
  Rng rng(13);
  int64_t rows = 33, cols = 40;
  Tensor<float> x = randn(rng, {rows, cols}, 2.0);
  Tensor<float> y({rows, cols}), yr({rows, cols});
  Tensor<float> mean({rows}), rstd({rows}), mr({rows}), rr({rows});
  kernels::layer_norm(rows, cols, x.data(), y.data(), mean.data(), rstd.data(), 1e-6f);
  kernels::ref::layer_norm(rows, cols, x.data(), yr.data(), mr.data(), rr.data(), 1e-6f);
  REQUIRE(max_abs_diff(y.data(), yr.data(), rows * cols) < 1e-4);
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0, s2 = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      s += y[r * cols + c];
      s2 += static_cast<double>(y[r * cols + c]) * y[r * cols + c];
    }
    REQUIRE(std::abs(s / cols) < 1e-5);
    REQUIRE(std::abs(s2 / cols - 1.0) < 1e-3);
  }
}

TEST_CASE("rms_norm matches the reference") {
  Rng rng(14);
  int64_t rows = 19, cols = 32;
  Tensor<float> x = randn(rng, {rows, cols});
  Tensor<float> gain = randn(rng, {cols});
  Tensor<float> y({rows, cols}), yr({rows, cols}), rrms({rows}), rr({rows});
  kernels::rms_norm(rows, cols, x.data(), gain.data(), y.data(), rrms.data(), 1e-6f);
  kernels::ref::rms_norm(rows, cols, x.data(), gain.data(), yr.data(), rr.data(), 1e-6f);
  REQUIRE(max_abs_diff(y.data(), yr.data(), rows * cols) < 1e-5);
}

TEST_CASE("gelu and softmax match the references") {
  Rng rng(15);
  int64_t n = 4096;
  Tensor<float> x = randn(rng, {n}, 3.0), y({n}), yr({n});
  kernels::gelu(n, x.data(), y.data());
  kernels::ref::gelu(n, x.data(), yr.data());
  REQUIRE(max_abs_diff(y.data(), yr.data(), n) < 1e-5);

  int64_t rows = 64, cols = 64;
  Tensor<float> s = randn(rng, {rows, cols}, 4.0), p({rows, cols}), pr({rows, cols});
  kernels::softmax_rows(rows, cols, s.data(), p.data());
  kernels::ref::softmax_rows(rows, cols, s.data(), pr.data());
  REQUIRE(max_abs_diff(p.data(), pr.data(), rows * cols) < 1e-5);
  for (int64_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < cols; ++c) sum += p[r * cols + c];
    REQUIRE(std::abs(sum - 1.0) < 1e-5);
  }
}

TEST_CASE("attention kernels match the references") {
  Rng rng(16);
  int64_t bh = 12, nt = 15, hd = 8;
  Tensor<float> q = randn(rng, {bh, nt, hd}), k = randn(rng, {bh, nt, hd});
  Tensor<float> s({bh, nt, nt}), sr({bh, nt, nt});
  float scale = 0.37f;
  kernels::attn_scores(bh, nt, hd, q.data(), k.data(), scale, s.data());
  kernels::ref::attn_scores(bh, nt, hd, q.data(), k.data(), scale, sr.data());
  REQUIRE(max_abs_diff(s.data(), sr.data(), bh * nt * nt) < 1e-5);

  Tensor<float> p = randn(rng, {bh, nt, nt}), v = randn(rng, {bh, nt, hd});
  Tensor<float> o({bh, nt, hd}), orf({bh, nt, hd});
  kernels::attn_apply(bh, nt, hd, p.data(), v.data(), o.data());
  kernels::ref::attn_apply(bh, nt, hd, p.data(), v.data(), orf.data());
  REQUIRE(max_abs_diff(o.data(), orf.data(), bh * nt * hd) < 1e-5);
}

TEST_CASE("split and merge heads round-trip the packed layout") {
  Rng rng(17);
  int64_t b = 3, n = 7, heads = 4, hd = 8;
  Tensor<float> qkv = randn(rng, {b, n, 3 * heads * hd});
  Tensor<float> q({b, heads, n, hd}), k({b, heads, n, hd}), v({b, heads, n, hd});
  kernels::split_heads(b, n, heads, hd, qkv.data(), q.data(), k.data(), v.data());

  // merge(q) must equal the first C columns of qkv
  Tensor<float> merged({b, n, heads * hd});
  kernels::merge_heads(b, n, heads, hd, q.data(), merged.data());
  for (int64_t r = 0; r < b * n; ++r)
    for (int64_t c = 0; c < heads * hd; ++c)
      REQUIRE(merged[r * heads * hd + c] == qkv[r * 3 * heads * hd + c]);

  // and the packed gradient of split is the identity permutation back
  Tensor<float> dqkv({b, n, 3 * heads * hd});
  kernels::split_heads_bwd(b, n, heads, hd, q.data(), k.data(), v.data(), dqkv.data());
  REQUIRE(max_abs_diff(dqkv.data(), qkv.data(), qkv.numel()) == 0.0);
}

TEST_CASE("rope rotation preserves pair norms and inverts") {
  Rng rng(18);
  int64_t b = 2, heads = 3, n = 5, hd = 8;
  Tensor<float> x = randn(rng, {b, heads, n, hd});
  Tensor<float> orig = x;
  Tensor<float> cos_t({n, hd / 2}), sin_t({n, hd / 2});
  for (int64_t i = 0; i < n * hd / 2; ++i) {
    double a = rng.uniform() * 6.28;
    cos_t[i] = static_cast<float>(std::cos(a));
    sin_t[i] = static_cast<float>(std::sin(a));
  }
  kernels::rope_rotate(b, heads, n, hd, x.data(), cos_t.data(), sin_t.data(), 0, +1);

  // norms of each rotated pair unchanged
  for (int64_t s = 0; s < b * heads; ++s)
    for (int64_t t = 0; t < n; ++t)
      for (int64_t p = 0; p < hd / 2; ++p) {
        int64_t at = ((s * n) + t) * hd + 2 * p;
        double n0 = static_cast<double>(orig[at]) * orig[at] +
                    static_cast<double>(orig[at + 1]) * orig[at + 1];
        double n1 = static_cast<double>(x[at]) * x[at] +
                    static_cast<double>(x[at + 1]) * x[at + 1];
        REQUIRE(std::abs(n0 - n1) < 1e-4);
      }

  kernels::rope_rotate(b, heads, n, hd, x.data(), cos_t.data(), sin_t.data(), 0, -1);
  REQUIRE(max_abs_diff(x.data(), orig.data(), x.numel()) < 1e-5);
}

TEST_CASE("backward kernels agree with central finite differences") {
  // double precision throughout so the finite-difference quotient is clean
  Rng rng(19);
  const double fd_eps = 1e-4, tol = 2e-3;

  SECTION("layer_norm") {
    int64_t rows = 4, cols = 6;
    Tensor<double> x({rows, cols}), dy({rows, cols});
    for (int64_t i = 0; i < rows * cols; ++i) {
      x[i] = rng.normal();
      dy[i] = rng.normal();
    }
    const double h = 1e-6;
    Tensor<double> y({rows, cols}), mean({rows}), rstd({rows}), dx({rows, cols});
    kernels::layer_norm(rows, cols, x.data(), y.data(), mean.data(), rstd.data(), 1e-6);
    kernels::layer_norm_bwd(rows, cols, x.data(), dy.data(), mean.data(), rstd.data(),
                            dx.data());
    for (int64_t i = 0; i < rows * cols; ++i) {
      auto loss_at = [&](double xv) {
        Tensor<double> xp = x;
        xp[i] = xv;
        Tensor<double> yp({rows, cols}), mp({rows}), rp({rows});
        kernels::layer_norm(rows, cols, xp.data(), yp.data(), mp.data(), rp.data(), 1e-6);
        double acc = 0.0;
        for (int64_t j = 0; j < rows * cols; ++j) acc += dy[j] * yp[j];
        return acc;
      };
      double num = (loss_at(x[i] + h) - loss_at(x[i] - h)) / (2 * h);
      REQUIRE(std::abs(num - dx[i]) < 1e-5 * std::max(1.0, std::abs(num)));
    }
  }

  SECTION("rms_norm") {
    int64_t rows = 3, cols = 8;
    Tensor<double> x({rows, cols}), gain({cols}), dy({rows, cols});
    for (int64_t i = 0; i < rows * cols; ++i) {
      x[i] = rng.normal();
      dy[i] = rng.normal();
    }
    for (int64_t i = 0; i < cols; ++i) gain[i] = rng.normal();
    const double h = 1e-6;
    Tensor<double> y({rows, cols}), rrms({rows});
    kernels::rms_norm(rows, cols, x.data(), gain.data(), y.data(), rrms.data(), 1e-6);
    Tensor<double> dx({rows, cols}), dgain({cols});
    dgain.fill(0.0);
    kernels::rms_norm_bwd(rows, cols, x.data(), gain.data(), dy.data(), rrms.data(), dx.data(),
                          dgain.data());
    auto loss_with = [&](const Tensor<double>& xv, const Tensor<double>& gv) {
      Tensor<double> yp({rows, cols}), rp({rows});
      kernels::rms_norm(rows, cols, xv.data(), gv.data(), yp.data(), rp.data(), 1e-6);
      double acc = 0.0;
      for (int64_t j = 0; j < rows * cols; ++j) acc += dy[j] * yp[j];
      return acc;
    };
    for (int64_t i = 0; i < rows * cols; ++i) {
      Tensor<double> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double num = (loss_with(xp, gain) - loss_with(xm, gain)) / (2 * h);
      REQUIRE(std::abs(num - dx[i]) < 1e-5 * std::max(1.0, std::abs(num)));
    }
    for (int64_t i = 0; i < cols; ++i) {
      Tensor<double> gp = gain, gm = gain;
      gp[i] += h;
      gm[i] -= h;
      double num = (loss_with(x, gp) - loss_with(x, gm)) / (2 * h);
      REQUIRE(std::abs(num - dgain[i]) < 1e-5 * std::max(1.0, std::abs(num)));
    }
  }

  SECTION("gelu and silu") {
    // double precision keeps the finite-difference quotient itself accurate
    int64_t n = 64;
    Tensor<double> x({n}), dy({n}), dx({n});
    for (int64_t i = 0; i < n; ++i) {
      x[i] = rng.normal() * 2.0;
      dy[i] = rng.normal();
    }
    const double h = 1e-6;
    kernels::gelu_bwd(n, x.data(), dy.data(), dx.data());
    for (int64_t i = 0; i < n; ++i) {
      Tensor<double> y({n});
      Tensor<double> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      kernels::gelu(n, xp.data(), y.data());
      double up = dy[i] * y[i];
      kernels::gelu(n, xm.data(), y.data());
      double dn = dy[i] * y[i];
      double num = (up - dn) / (2 * h);
      REQUIRE(std::abs(num - dx[i]) < 1e-5 * std::max(1.0, std::abs(num)));
    }
    kernels::silu_bwd(n, x.data(), dy.data(), dx.data());
    for (int64_t i = 0; i < n; ++i) {
      Tensor<double> y({n});
      Tensor<double> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      kernels::silu(n, xp.data(), y.data());
      double up = dy[i] * y[i];
      kernels::silu(n, xm.data(), y.data());
      double dn = dy[i] * y[i];
      double num = (up - dn) / (2 * h);
      REQUIRE(std::abs(num - dx[i]) < 1e-5 * std::max(1.0, std::abs(num)));
    }
  }

  SECTION("softmax") {
    int64_t rows = 3, cols = 7;
    Tensor<float> x = randn(rng, {rows, cols}), dy = randn(rng, {rows, cols});
    Tensor<float> y({rows, cols}), dx({rows, cols});
    kernels::softmax_rows(rows, cols, x.data(), y.data());
    kernels::softmax_rows_bwd(rows, cols, y.data(), dy.data(), dx.data());
    for (int64_t i = 0; i < rows * cols; ++i) {
      Tensor<float> yp({rows, cols});
      Tensor<float> xp = x, xm = x;
      xp[i] += static_cast<float>(fd_eps);
      xm[i] -= static_cast<float>(fd_eps);
      kernels::softmax_rows(rows, cols, xp.data(), yp.data());
      double up = 0.0, dn = 0.0;
      for (int64_t j = 0; j < rows * cols; ++j) up += static_cast<double>(dy[j]) * yp[j];
      kernels::softmax_rows(rows, cols, xm.data(), yp.data());
      for (int64_t j = 0; j < rows * cols; ++j) dn += static_cast<double>(dy[j]) * yp[j];
      double num = (up - dn) / (2 * fd_eps);
      REQUIRE(std::abs(num - dx[i]) < tol * std::max(1.0, std::abs(num)));
    }
  }
}

TEST_CASE("gather and scatter rows are inverse accumulations") {
  Rng rng(20);
  int64_t n = 10, cols = 4;
  Tensor<float> src = randn(rng, {n, cols});
  std::vector<int> idx = {1, 4, 7};
  Tensor<float> picked({3, cols});
  kernels::gather_rows(3, cols, src.data(), idx.data(), picked.data());
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t c = 0; c < cols; ++c)
      REQUIRE(picked[static_cast<int64_t>(i) * cols + c] == src[idx[i] * cols + c]);

  Tensor<float> dst({n, cols});
  dst.fill(0.0f);
  kernels::scatter_rows_add(3, cols, picked.data(), idx.data(), dst.data());
  kernels::scatter_rows_add(3, cols, picked.data(), idx.data(), dst.data());
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t c = 0; c < cols; ++c)
      REQUIRE(dst[idx[i] * cols + c] == 2.0f * picked[static_cast<int64_t>(i) * cols + c]);
}

TEST_CASE("serial reductions are exact on known inputs") {
  std::vector<float> a = {3.0f, 4.0f};
  REQUIRE(kernels::sum_squares(2, a.data()) == 25.0);
  std::vector<float> b = {1.0f, 1.0f};
  std::vector<float> c = {0.0f, 3.0f};
  REQUIRE(kernels::mse(2, b.data(), c.data()) == 2.5);
}
