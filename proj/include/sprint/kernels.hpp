#pragma once

#include <cstdint>

namespace sprint::kernels {

// Parallel kernels used by the model. Every kernel writes each output element
// from exactly one thread and keeps reductions inside a single thread, so
// results are bit-stable for a fixed platform and thread count. Serial naive
// counterparts live in sprint::kernels::ref for cross-checking.

// c = op(a) * op(b) + beta * c, row-major.
// op(a): m x k (a stored k x m when trans_a), op(b): k x n, c: m x n.
template <typename T>
void matmul(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
            bool trans_a = false, bool trans_b = false, T beta = T(0));

// x[r, c] += bias[c]
template <typename T>
void add_bias(int64_t rows, int64_t cols, T* x, const T* bias);

// out[c] = sum_r x[r, c]; accumulates in double.
template <typename T>
void col_sum(int64_t rows, int64_t cols, const T* x, T* out);

// Non-affine layer norm over the last axis.
// y = (x - mean) * rstd with rstd = 1/sqrt(var + eps); mean/rstd saved per row.
template <typename T>
void layer_norm(int64_t rows, int64_t cols, const T* x, T* y, T* mean, T* rstd, T eps);

template <typename T>
void layer_norm_bwd(int64_t rows, int64_t cols, const T* x, const T* dy, const T* mean,
                    const T* rstd, T* dx);

// y = x * rrms * gain[c] with rrms = 1/sqrt(mean(x^2) + eps); rrms saved per row.
template <typename T>
void rms_norm(int64_t rows, int64_t cols, const T* x, const T* gain, T* y, T* rrms, T eps);

// dgain is accumulated into (not overwritten).
template <typename T>
void rms_norm_bwd(int64_t rows, int64_t cols, const T* x, const T* gain, const T* dy,
                  const T* rrms, T* dx, T* dgain);

// Tanh-form gelu.
template <typename T>
void gelu(int64_t n, const T* x, T* y);

template <typename T>
void gelu_bwd(int64_t n, const T* x, const T* dy, T* dx);

// One tanh pass producing both y = gelu(x) and the pointwise derivative
// dgelu/dx, for backward passes that also need the activation value.
template <typename T>
void gelu_with_deriv(int64_t n, const T* x, T* y, T* deriv);

template <typename T>
void silu(int64_t n, const T* x, T* y);

template <typename T>
void silu_bwd(int64_t n, const T* x, const T* dy, T* dx);

// Row-wise softmax, max-subtracted. In-place allowed (y == x).
template <typename T>
void softmax_rows(int64_t rows, int64_t cols, const T* x, T* y);

// dx = y .* (dy - sum(y .* dy)) per row. In-place allowed (dx == dy).
template <typename T>
void softmax_rows_bwd(int64_t rows, int64_t cols, const T* y, const T* dy, T* dx);

// Batched attention pieces over (B, H, N, hd) contiguous head-major layouts.
// scores[b,h,i,j] = scale * dot(q[b,h,i,:], k[b,h,j,:])
template <typename T>
void attn_scores(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k, T scale, T* scores);

template <typename T>
void attn_scores_bwd(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k,
                     const T* dscores, T scale, T* dq, T* dk);

// out[b,h,i,:] = sum_j probs[b,h,i,j] * v[b,h,j,:]
template <typename T>
void attn_apply(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v, T* out);

template <typename T>
void attn_apply_bwd(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v,
                    const T* dout, T* dprobs, T* dv);

// (B, N, 3C) packed qkv -> three (B, H, N, hd) blocks, and the reverse for
// gradients. C = heads * hd.
template <typename T>
void split_heads(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* qkv, T* q, T* k, T* v);

template <typename T>
void merge_heads(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* x, T* y);

// Inverses: y (B, N, C) -> (B, H, N, hd); dq/dk/dv -> packed dqkv.
template <typename T>
void merge_heads_bwd(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* dy, T* dx);

template <typename T>
void split_heads_bwd(int64_t b, int64_t n, int64_t heads, int64_t hd, const T* dq, const T* dk,
                     const T* dv, T* dqkv);

// In-place pairwise rotation of (b, heads, n, hd) vectors: pair p of token t
// rotates by the angle whose cos/sin sit at row t of sample b's table
// (n rows, hd/2 pairs, consecutive tables table_stride apart; stride 0 shares
// one table across the batch). dir=+1 applies the rotation, dir=-1 its
// inverse (gradient).
template <typename T>
void rope_rotate(int64_t b, int64_t heads, int64_t n, int64_t hd, T* x, const T* cos_t,
                 const T* sin_t, int64_t table_stride, int dir);

// dst[i, :] = src[idx[i], :]
template <typename T>
void gather_rows(int64_t n_out, int64_t cols, const T* src, const int* idx, T* dst);

// dst[idx[i], :] += src[i, :]; idx entries must be distinct.
template <typename T>
void scatter_rows_add(int64_t n_in, int64_t cols, const T* src, const int* idx, T* dst);

// Serial double-precision reductions (deterministic regardless of threads).
template <typename T>
double sum_squares(int64_t n, const T* x);

template <typename T>
double mse(int64_t n, const T* a, const T* b);

namespace ref {

// Naive serial counterparts, accumulation in double. Oracles for the
// parallel kernels; also the baseline side of the benchmark target.

template <typename T>
void matmul(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
            bool trans_a = false, bool trans_b = false, T beta = T(0));

template <typename T>
void layer_norm(int64_t rows, int64_t cols, const T* x, T* y, T* mean, T* rstd, T eps);

template <typename T>
void rms_norm(int64_t rows, int64_t cols, const T* x, const T* gain, T* y, T* rrms, T eps);

template <typename T>
void gelu(int64_t n, const T* x, T* y);

template <typename T>
void softmax_rows(int64_t rows, int64_t cols, const T* x, T* y);

template <typename T>
void attn_scores(int64_t bh, int64_t n, int64_t hd, const T* q, const T* k, T scale, T* scores);

template <typename T>
void attn_apply(int64_t bh, int64_t n, int64_t hd, const T* probs, const T* v, T* out);

}  // namespace ref

}  // namespace sprint::kernels
