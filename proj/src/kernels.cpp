#include "sprint/kernels.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace sprint::kernels {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;

constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;

}  // namespace

template <typename T>
void matmul(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
            bool trans_a, bool trans_b, T beta) {
  Eigen::Map<const Mat<T>> A(a, trans_a ? k : m, trans_a ? m : k);
  Eigen::Map<const Mat<T>> B(b, trans_b ? n : k, trans_b ? k : n);
  Eigen::Map<Mat<T>> C(c, m, n);
  auto run = [&](const auto& ae, const auto& be) {
    if (beta == T(0)) {
      C.noalias() = ae * be;
    } else {
      if (beta != T(1)) C *= beta;
      C.noalias() += ae * be;
    }
  };
  if (!trans_a && !trans_b) run(A, B);
  else if (!trans_a && trans_b) run(A, B.transpose());
  else if (trans_a && !trans_b) run(A.transpose(), B);
  else run(A.transpose(), B.transpose());
}

template <typename T>
void add_bias(int64_t rows, int64_t cols, T* x, const T* bias) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    T* row = x + r * cols;
    for (int64_t c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

template <typename T>
void col_sum(int64_t rows, int64_t cols, const T* x, T* out) {
  // Fixed chunking keeps the double accumulation order independent of the
  // thread count while letting chunks run in parallel, row-contiguous.
  constexpr int64_t kChunks = 8;
  int64_t per = (rows + kChunks - 1) / kChunks;
  std::vector<double> partial(static_cast<size_t>(kChunks * cols), 0.0);
#pragma omp parallel for
  for (int64_t ch = 0; ch < kChunks; ++ch) {
    Eigen::Map<Arr<double>> acc(partial.data() + ch * cols, cols);
    int64_t hi = std::min(rows, (ch + 1) * per);
    for (int64_t r = ch * per; r < hi; ++r)
      acc += Eigen::Map<const Arr<T>>(x + r * cols, cols).template cast<double>();
  }
  Eigen::Map<Arr<double>> total(partial.data(), cols);
  for (int64_t ch = 1; ch < kChunks; ++ch)
    total += Eigen::Map<const Arr<double>>(partial.data() + ch * cols, cols);
  Eigen::Map<Arr<T>> o(out, cols);
  o = total.template cast<T>();
}

// Row statistics use Eigen's vectorized reductions in the value type; each
// row stays inside one thread so the accumulation order is fixed.
template <typename T>
void layer_norm(int64_t rows, int64_t cols, const T* x, T* y, T* mean, T* rstd, T eps) {
  T inv_n = T(1) / static_cast<T>(cols);
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
    Eigen::Map<Arr<T>> yr(y + r * cols, cols);
    T mu = xr.sum() * inv_n;
    T var = (xr - mu).square().sum() * inv_n;
    T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    yr = (xr - mu) * rs;
  }
}

template <typename T>
void layer_norm_bwd(int64_t rows, int64_t cols, const T* x, const T* dy, const T* mean,
                    const T* rstd, T* dx) {
  T inv_n = T(1) / static_cast<T>(cols);
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
    Eigen::Map<const Arr<T>> dyr(dy + r * cols, cols);
    Eigen::Map<Arr<T>> dxr(dx + r * cols, cols);
    T mu = mean[r], rs = rstd[r];
    T sum_dy = dyr.sum();
    T sum_dyx = (dyr * (xr - mu)).sum() * rs;
    dxr = (dyr - sum_dy * inv_n - (xr - mu) * rs * sum_dyx * inv_n) * rs;
  }
}

template <typename T>
void rms_norm(int64_t rows, int64_t cols, const T* x, const T* gain, T* y, T* rrms, T eps) {
  T inv_n = T(1) / static_cast<T>(cols);
  Eigen::Map<const Arr<T>> g(gain, cols);
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
    Eigen::Map<Arr<T>> yr(y + r * cols, cols);
    T rr = T(1) / std::sqrt(xr.square().sum() * inv_n + eps);
    rrms[r] = rr;
    yr = xr * rr * g;
  }
}

template <typename T>
void rms_norm_bwd(int64_t rows, int64_t cols, const T* x, const T* gain, const T* dy,
                  const T* rrms, T* dx, T* dgain) {
  T inv_n = T(1) / static_cast<T>(cols);
  Eigen::Map<const Arr<T>> g(gain, cols);
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
    Eigen::Map<const Arr<T>> dyr(dy + r * cols, cols);
    Eigen::Map<Arr<T>> dxr(dx + r * cols, cols);
    T rr = rrms[r];
    T dot = (g * dyr * xr).sum() * inv_n;
    dxr = g * dyr * rr - xr * (rr * rr * rr * dot);
  }
  // gain gradient: fixed-chunk double accumulation, row-contiguous
  constexpr int64_t kChunks = 8;
  int64_t per = (rows + kChunks - 1) / kChunks;
  std::vector<double> partial(static_cast<size_t>(kChunks * cols), 0.0);
#pragma omp parallel for
  for (int64_t ch = 0; ch < kChunks; ++ch) {
    Eigen::Map<Arr<double>> acc(partial.data() + ch * cols, cols);
    int64_t hi = std::min(rows, (ch + 1) * per);
    for (int64_t r = ch * per; r < hi; ++r) {
      Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
      Eigen::Map<const Arr<T>> dyr(dy + r * cols, cols);
      acc += (dyr * xr * rrms[r]).template cast<double>();
    }
  }
  Eigen::Map<Arr<double>> total(partial.data(), cols);
  for (int64_t ch = 1; ch < kChunks; ++ch)
    total += Eigen::Map<const Arr<double>>(partial.data() + ch * cols, cols);
  Eigen::Map<Arr<T>> dg(dgain, cols);
  dg += total.template cast<T>();
}

// Elementwise activations run through Eigen's vectorized array math in blocks;
// each block is written by one thread so the result stays deterministic.
template <typename T>
void gelu(int64_t n, const T* x, T* y) {
  constexpr int64_t kBlk = 16384;
  int64_t nblk = (n + kBlk - 1) / kBlk;
#pragma omp parallel for
  for (int64_t b = 0; b < nblk; ++b) {
    int64_t lo = b * kBlk, len = std::min(kBlk, n - lo);
    Eigen::Map<const Arr<T>> xv(x + lo, len);
    Eigen::Map<Arr<T>> yv(y + lo, len);
    yv = T(0.5) * xv * (T(1) + (T(kGeluC0) * (xv + T(kGeluC1) * xv.cube())).tanh());
  }
}

template <typename T>
void gelu_bwd(int64_t n, const T* x, const T* dy, T* dx) {
  constexpr int64_t kBlk = 16384;
  int64_t nblk = (n + kBlk - 1) / kBlk;
#pragma omp parallel for
  for (int64_t b = 0; b < nblk; ++b) {
    int64_t lo = b * kBlk, len = std::min(kBlk, n - lo);
    Eigen::Map<const Arr<T>> xv(x + lo, len);
    Eigen::Map<const Arr<T>> dyv(dy + lo, len);
    Eigen::Map<Arr<T>> dxv(dx + lo, len);
    Arr<T> t = (T(kGeluC0) * (xv + T(kGeluC1) * xv.cube())).tanh();
    Arr<T> dg = T(kGeluC0) * (T(1) + T(3.0 * kGeluC1) * xv.square());
    dxv = dyv * (T(0.5) * (T(1) + t) + T(0.5) * xv * (T(1) - t.square()) * dg);
  }
}

template <typename T>
void gelu_with_deriv(int64_t n, const T* x, T* y, T* deriv) {
  constexpr int64_t kBlk = 16384;
  int64_t nblk = (n + kBlk - 1) / kBlk;
#pragma omp parallel for
  for (int64_t b = 0; b < nblk; ++b) {
    int64_t lo = b * kBlk, len = std::min(kBlk, n - lo);
    Eigen::Map<const Arr<T>> xv(x + lo, len);
    Eigen::Map<Arr<T>> yv(y + lo, len);
    Eigen::Map<Arr<T>> dv(deriv + lo, len);
    Arr<T> t = (T(kGeluC0) * (xv + T(kGeluC1) * xv.cube())).tanh();
    Arr<T> dg = T(kGeluC0) * (T(1) + T(3.0 * kGeluC1) * xv.square());
    yv = T(0.5) * xv * (T(1) + t);
    dv = T(0.5) * (T(1) + t) + T(0.5) * xv * (T(1) - t.square()) * dg;
  }
}

template <typename T>
void silu(int64_t n, const T* x, T* y) {
  constexpr int64_t kBlk = 16384;
  int64_t nblk = (n + kBlk - 1) / kBlk;
#pragma omp parallel for
  for (int64_t b = 0; b < nblk; ++b) {
    int64_t lo = b * kBlk, len = std::min(kBlk, n - lo);
    Eigen::Map<const Arr<T>> xv(x + lo, len);
    Eigen::Map<Arr<T>> yv(y + lo, len);
    yv = xv / (T(1) + (-xv).exp());
  }
}

template <typename T>
void silu_bwd(int64_t n, const T* x, const T* dy, T* dx) {
  constexpr int64_t kBlk = 16384;
  int64_t nblk = (n + kBlk - 1) / kBlk;
#pragma omp parallel for
  for (int64_t b = 0; b < nblk; ++b) {
    int64_t lo = b * kBlk, len = std::min(kBlk, n - lo);
    Eigen::Map<const Arr<T>> xv(x + lo, len);
    Eigen::Map<const Arr<T>> dyv(dy + lo, len);
    Eigen::Map<Arr<T>> dxv(dx + lo, len);
    Arr<T> s = T(1) / (T(1) + (-xv).exp());
    dxv = dyv * s * (T(1) + xv * (T(1) - s));
  }
}

template <typename T>
void softmax_rows(int64_t rows, int64_t cols, const T* x, T* y) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> xr(x + r * cols, cols);
    Eigen::Map<Arr<T>> yr(y + r * cols, cols);
    T mx = xr.maxCoeff();
    yr = (xr - mx).exp();
    yr *= T(1) / yr.sum();
  }
}

template <typename T>
void softmax_rows_bwd(int64_t rows, int64_t cols, const T* y, const T* dy, T* dx) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr<T>> yr(y + r * cols, cols);
    Eigen::Map<const Arr<T>> dyr(dy + r * cols, cols);
    Eigen::Map<Arr<T>> dxr(dx + r * cols, cols);
    T dot = (yr * dyr).sum();
    dxr = yr * (dyr - dot);
  }
}

// Attention pieces are batched small matrix products; each (b, h) slice is one
// Eigen product evaluated inside a single thread.
template <typename T>
void attn_scores(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k, T scale, T* scores) {
#pragma omp parallel for
  for (int64_t s = 0; s < bh; ++s) {
    Eigen::Map<const Mat<T>> Q(q + s * n * hd, n, hd);
    Eigen::Map<const Mat<T>> K(k + s * n * hd, n, hd);
    Eigen::Map<Mat<T>> S(scores + s * n * n, n, n);
    S.noalias() = scale * Q * K.transpose();
  }
}

template <typename T>
void attn_scores_bwd(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k,
                     const T* dscores, T scale, T* dq, T* dk) {
#pragma omp parallel for
  for (int64_t s = 0; s < bh; ++s) {
    Eigen::Map<const Mat<T>> Q(q + s * n * hd, n, hd);
    Eigen::Map<const Mat<T>> K(k + s * n * hd, n, hd);
    Eigen::Map<const Mat<T>> dS(dscores + s * n * n, n, n);
    Eigen::Map<Mat<T>> dQ(dq + s * n * hd, n, hd);
    Eigen::Map<Mat<T>> dK(dk + s * n * hd, n, hd);
    dQ.noalias() = scale * dS * K;
    dK.noalias() = scale * dS.transpose() * Q;
  }
}

template <typename T>
void attn_apply(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v, T* out) {
#pragma omp parallel for
  for (int64_t s = 0; s < bh; ++s) {
    Eigen::Map<const Mat<T>> P(probs + s * n * n, n, n);
    Eigen::Map<const Mat<T>> V(v + s * n * hd, n, hd);
    Eigen::Map<Mat<T>> O(out + s * n * hd, n, hd);
    O.noalias() = P * V;
  }
}

template <typename T>
void attn_apply_bwd(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v,
                    const T* dout, T* dprobs, T* dv) {
#pragma omp parallel for
  for (int64_t s = 0; s < bh; ++s) {
    Eigen::Map<const Mat<T>> P(probs + s * n * n, n, n);
    Eigen::Map<const Mat<T>> V(v + s * n * hd, n, hd);
    Eigen::Map<const Mat<T>> dO(dout + s * n * hd, n, hd);
    Eigen::Map<Mat<T>> dP(dprobs + s * n * n, n, n);
    Eigen::Map<Mat<T>> dV(dv + s * n * hd, n, hd);
    dP.noalias() = dO * V.transpose();
    dV.noalias() = P.transpose() * dO;
  }
}

template <typename T>
void split_heads(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* qkv, T* q, T* k,
                 T* v) {
  int64_t c = heads * hd;
#pragma omp parallel for collapse(2)
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      const T* src = qkv + (bi * n + t) * 3 * c;
      for (int64_t h = 0; h < heads; ++h) {
        T* qd = q + ((bi * heads + h) * n + t) * hd;
        T* kd = k + ((bi * heads + h) * n + t) * hd;
        T* vd = v + ((bi * heads + h) * n + t) * hd;
        for (int64_t d = 0; d < hd; ++d) {
          qd[d] = src[h * hd + d];
          kd[d] = src[c + h * hd + d];
          vd[d] = src[2 * c + h * hd + d];
        }
      }
    }
  }
}

template <typename T>
void split_heads_bwd(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* dq, const T* dk,
                     const T* dv, T* dqkv) {
  int64_t c = heads * hd;
#pragma omp parallel for collapse(2)
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      T* dst = dqkv + (bi * n + t) * 3 * c;
      for (int64_t h = 0; h < heads; ++h) {
        const T* qd = dq + ((bi * heads + h) * n + t) * hd;
        const T* kd = dk + ((bi * heads + h) * n + t) * hd;
        const T* vd = dv + ((bi * heads + h) * n + t) * hd;
        for (int64_t d = 0; d < hd; ++d) {
          dst[h * hd + d] = qd[d];
          dst[c + h * hd + d] = kd[d];
          dst[2 * c + h * hd + d] = vd[d];
        }
      }
    }
  }
}

template <typename T>
void merge_heads(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* x, T* y) {
  int64_t c = heads * hd;
#pragma omp parallel for collapse(2)
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      T* dst = y + (bi * n + t) * c;
      for (int64_t h = 0; h < heads; ++h) {
        const T* src = x + ((bi * heads + h) * n + t) * hd;
        for (int64_t d = 0; d < hd; ++d) dst[h * hd + d] = src[d];
      }
    }
  }
}

template <typename T>
void merge_heads_bwd(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* dy, T* dx) {
  int64_t c = heads * hd;
#pragma omp parallel for collapse(2)
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      const T* src = dy + (bi * n + t) * c;
      for (int64_t h = 0; h < heads; ++h) {
        T* dst = dx + ((bi * heads + h) * n + t) * hd;
        for (int64_t d = 0; d < hd; ++d) dst[d] = src[h * hd + d];
      }
    }
  }
}

template <typename T>
void rope_rotate(int64_t b, int64_t heads, int64_t n, int64_t hd, T* x, const T* cos_t,
                 const T* sin_t, int64_t table_stride, int dir) {
  int64_t pairs = hd / 2;
#pragma omp parallel for collapse(2)
  for (int64_t s = 0; s < b * heads; ++s) {
    for (int64_t t = 0; t < n; ++t) {
      T* xt = x + (s * n + t) * hd;
      int64_t off = (s / heads) * table_stride + t * pairs;
      const T* ct = cos_t + off;
      const T* st = sin_t + off;
      for (int64_t p = 0; p < pairs; ++p) {
        T x0 = xt[2 * p], x1 = xt[2 * p + 1];
        T sn = dir >= 0 ? st[p] : -st[p];
        xt[2 * p] = ct[p] * x0 - sn * x1;
        xt[2 * p + 1] = sn * x0 + ct[p] * x1;
      }
    }
  }
}

template <typename T>
void gather_rows(int64_t n_out, int64_t cols, const T* src, const int* idx, T* dst) {
#pragma omp parallel for
  for (int64_t i = 0; i < n_out; ++i) {
    const T* s = src + static_cast<int64_t>(idx[i]) * cols;
    T* d = dst + i * cols;
    for (int64_t c = 0; c < cols; ++c) d[c] = s[c];
  }
}

template <typename T>
void scatter_rows_add(int64_t n_in, int64_t cols, const T* src, const int* idx, T* dst) {
#pragma omp parallel for
  for (int64_t i = 0; i < n_in; ++i) {
    const T* s = src + i * cols;
    T* d = dst + static_cast<int64_t>(idx[i]) * cols;
    for (int64_t c = 0; c < cols; ++c) d[c] += s[c];
  }
}

template <typename T>
double sum_squares(int64_t n, const T* x) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

template <typename T>
double mse(int64_t n, const T* a, const T* b) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

namespace ref {

template <typename T>
void matmul(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
            bool trans_a, bool trans_b, T beta) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) {
        T av = trans_a ? a[p * m + i] : a[i * k + p];
        T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += static_cast<double>(av) * static_cast<double>(bv);
      }
      if (beta != T(0))
        acc += static_cast<double>(beta) * static_cast<double>(c[i * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void layer_norm(int64_t rows, int64_t cols, const T* x, T* y, T* mean, T* rstd, T eps) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += static_cast<double>(xr[c]);
    double mu = s / static_cast<double>(cols);
    double vs = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      double d = static_cast<double>(xr[c]) - mu;
      vs += d * d;
    }
    double rs = 1.0 / std::sqrt(vs / static_cast<double>(cols) + static_cast<double>(eps));
    mean[r] = static_cast<T>(mu);
    rstd[r] = static_cast<T>(rs);
    for (int64_t c = 0; c < cols; ++c)
      y[r * cols + c] = static_cast<T>((static_cast<double>(xr[c]) - mu) * rs);
  }
}

template <typename T>
void rms_norm(int64_t rows, int64_t cols, const T* x, const T* gain, T* y, T* rrms, T eps) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    double ss = 0.0;
    for (int64_t c = 0; c < cols; ++c)
      ss += static_cast<double>(xr[c]) * static_cast<double>(xr[c]);
    double rr = 1.0 / std::sqrt(ss / static_cast<double>(cols) + static_cast<double>(eps));
    rrms[r] = static_cast<T>(rr);
    for (int64_t c = 0; c < cols; ++c)
      y[r * cols + c] =
          static_cast<T>(static_cast<double>(xr[c]) * rr * static_cast<double>(gain[c]));
  }
}

template <typename T>
void gelu(int64_t n, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) {
    double v = static_cast<double>(x[i]);
    double g = kGeluC0 * (v + kGeluC1 * v * v * v);
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(g)));
  }
}

template <typename T>
void softmax_rows(int64_t rows, int64_t cols, const T* x, T* y) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    double mx = static_cast<double>(xr[0]);
    for (int64_t c = 1; c < cols; ++c)
      mx = static_cast<double>(xr[c]) > mx ? static_cast<double>(xr[c]) : mx;
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += std::exp(static_cast<double>(xr[c]) - mx);
    for (int64_t c = 0; c < cols; ++c)
      yr[c] = static_cast<T>(std::exp(static_cast<double>(xr[c]) - mx) / s);
  }
}

template <typename T>
void attn_scores(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k, T scale, T* scores) {
  for (int64_t s = 0; s < bh; ++s) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t d = 0; d < hd; ++d)
          acc += static_cast<double>(q[(s * n + i) * hd + d]) *
                 static_cast<double>(k[(s * n + j) * hd + d]);
        scores[(s * n + i) * n + j] = static_cast<T>(acc * static_cast<double>(scale));
      }
    }
  }
}

template <typename T>
void attn_apply(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v, T* out) {
  for (int64_t s = 0; s < bh; ++s) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t d = 0; d < hd; ++d) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j)
          acc += static_cast<double>(probs[(s * n + i) * n + j]) *
                 static_cast<double>(v[(s * n + j) * hd + d]);
        out[(s * n + i) * hd + d] = static_cast<T>(acc);
      }
    }
  }
}

}  // namespace ref

#define SPRINT_INSTANTIATE(T)                                                                  \
  template void matmul<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool, bool, T);  \
  template void add_bias<T>(int64_t, int64_t, T*, const T*);                                   \
  template void col_sum<T>(int64_t, int64_t, const T*, T*);                                    \
  template void layer_norm<T>(int64_t, int64_t, const T*, T*, T*, T*, T);                      \
  template void layer_norm_bwd<T>(int64_t, int64_t, const T*, const T*, const T*, const T*,    \
                                  T*);                                                         \
  template void rms_norm<T>(int64_t, int64_t, const T*, const T*, T*, T*, T);                  \
  template void rms_norm_bwd<T>(int64_t, int64_t, const T*, const T*, const T*, const T*, T*,  \
                                T*);                                                           \
  template void gelu<T>(int64_t, const T*, T*);                                                \
  template void gelu_bwd<T>(int64_t, const T*, const T*, T*);                                  \
  template void gelu_with_deriv<T>(int64_t, const T*, T*, T*);                                 \
  template void silu<T>(int64_t, const T*, T*);                                                \
  template void silu_bwd<T>(int64_t, const T*, const T*, T*);                                  \
  template void softmax_rows<T>(int64_t, int64_t, const T*, T*);                               \
  template void softmax_rows_bwd<T>(int64_t, int64_t, const T*, const T*, T*);                 \
  template void attn_scores<T>(int64_t, int64_t, int64_t, const T*, const T*, T, T*);          \
  template void attn_scores_bwd<T>(int64_t, int64_t, int64_t, const T*, const T*, const T*,    \
                                   T, T*, T*);                                                 \
  template void attn_apply<T>(int64_t, int64_t, int64_t, const T*, const T*, T*);              \
  template void attn_apply_bwd<T>(int64_t, int64_t, int64_t, const T*, const T*, const T*,     \
                                  T*, T*);                                                     \
  template void split_heads<T>(int64_t, int64_t, int64_t, int64_t, const T*, T*, T*, T*);      \
  template void split_heads_bwd<T>(int64_t, int64_t, int64_t, int64_t, const T*, const T*,     \
                                   const T*, T*);                                              \
  template void merge_heads<T>(int64_t, int64_t, int64_t, int64_t, const T*, T*);              \
  template void merge_heads_bwd<T>(int64_t, int64_t, int64_t, int64_t, const T*, T*);          \
  template void rope_rotate<T>(int64_t, int64_t, int64_t, int64_t, T*, const T*, const T*,     \
                               int64_t, int);                                                  \
  template void gather_rows<T>(int64_t, int64_t, const T*, const int*, T*);                    \
  template void scatter_rows_add<T>(int64_t, int64_t, const T*, const int*, T*);               \
  template double sum_squares<T>(int64_t, const T*);                                           \
  template double mse<T>(int64_t, const T*, const T*);                                         \
  namespace ref {                                                                              \
  template void matmul<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool, bool, T);  \
  template void layer_norm<T>(int64_t, int64_t, const T*, T*, T*, T*, T);                      \
  template void rms_norm<T>(int64_t, int64_t, const T*, const T*, T*, T*, T);                  \
  template void gelu<T>(int64_t, const T*, T*);                                                \
  template void softmax_rows<T>(int64_t, int64_t, const T*, T*);                               \
  template void attn_scores<T>(int64_t, int64_t, int64_t, const T*, const T*, T, T*);          \
  template void attn_apply<T>(int64_t, int64_t, int64_t, const T*, const T*, T*);              \
  }

SPRINT_INSTANTIATE(float)
SPRINT_INSTANTIATE(double)

#undef SPRINT_INSTANTIATE

}  // namespace sprint::kernels
