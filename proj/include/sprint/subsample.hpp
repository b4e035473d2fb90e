#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sprint/grid.hpp"
#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

// Keep/drop decision over the token grid, shared by every sample in the
// iteration's batch. kept_indices is the canonical ascending order.
struct DropMask {
  std::vector<uint8_t> keep;     // length N
  std::vector<int> kept_indices; // strictly ascending
  double ratio = 0.0;            // r
  int group_n = 0;               // 0 when the mask is not group-structured
  int group_k = 0;

  int64_t grid_size() const { return static_cast<int64_t>(keep.size()); }
  int64_t kept_count() const { return static_cast<int64_t>(kept_indices.size()); }
};

// Fills out[0..k) with k distinct values from [0, m), uniformly without
// replacement, ascending. Draw is any callable mapping a bound to a value in
// [0, bound); choosing all m elements consumes no draws, which keeps keep-all
// masks rng-neutral.
template <typename DrawFn>
void choose_k_of_m(DrawFn&& draw, int m, int k, int* out) {
  if (k < 0 || k > m) throw std::invalid_argument("choose_k_of_m: k outside [0, m]");
  if (k == m) {
    for (int i = 0; i < m; ++i) out[i] = i;
    return;
  }
  std::vector<int> ids(static_cast<size_t>(m));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(draw(static_cast<uint64_t>(m - i)));
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
    out[i] = ids[static_cast<size_t>(i)];
  }
  std::sort(out, out + k);
}

// Partitions the grid into n x n blocks and keeps exactly k tokens per block,
// chosen uniformly without replacement, independently across blocks.
// r = 1 - k/n^2.
template <typename DrawFn>
DropMask structured_mask_with(DrawFn&& draw, int rows, int cols, int n, int k) {
  if (n <= 0 || rows <= 0 || cols <= 0)
    throw std::invalid_argument("structured_mask: non-positive grid or group edge");
  if (rows % n != 0 || cols % n != 0)
    throw std::invalid_argument("structured_mask: grid " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " not divisible by n=" + std::to_string(n));
  if (k < 1 || k > n * n)
    throw std::invalid_argument("structured_mask: k=" + std::to_string(k) +
                                " outside [1, n^2]");
  int gr = rows / n, gc = cols / n;
  DropMask mask;
  mask.keep.assign(static_cast<size_t>(rows) * cols, 0);
  mask.kept_indices.reserve(static_cast<size_t>(gr) * gc * k);
  mask.ratio = 1.0 - static_cast<double>(k) / (static_cast<double>(n) * n);
  mask.group_n = n;
  mask.group_k = k;
  std::vector<int> cell(static_cast<size_t>(k));
  for (int a = 0; a < gr; ++a) {
    for (int b = 0; b < gc; ++b) {
      choose_k_of_m(draw, n * n, k, cell.data());
      for (int i = 0; i < k; ++i) {
        int dr = cell[static_cast<size_t>(i)] / n;
        int dc = cell[static_cast<size_t>(i)] % n;
        int idx = (a * n + dr) * cols + (b * n + dc);
        mask.keep[static_cast<size_t>(idx)] = 1;
      }
    }
  }
  for (int i = 0; i < rows * cols; ++i)
    if (mask.keep[static_cast<size_t>(i)]) mask.kept_indices.push_back(i);
  return mask;
}

inline DropMask structured_mask(int rows, int cols, int n, int k, Rng& rng) {
  return structured_mask_with([&rng](uint64_t bound) { return rng.below(bound); }, rows, cols,
                              n, k);
}

// Drops floor(r*N) indices uniformly at random.
inline DropMask random_mask(int64_t n_tokens, double r, Rng& rng) {
  if (n_tokens <= 0) throw std::invalid_argument("random_mask: empty grid");
  if (r < 0.0 || r >= 1.0) throw std::invalid_argument("random_mask: r outside [0, 1)");
  int64_t dropped = static_cast<int64_t>(r * static_cast<double>(n_tokens));
  int keep_count = static_cast<int>(n_tokens - dropped);
  DropMask mask;
  mask.keep.assign(static_cast<size_t>(n_tokens), 0);
  mask.kept_indices.resize(static_cast<size_t>(keep_count));
  mask.ratio = r;
  choose_k_of_m([&rng](uint64_t bound) { return rng.below(bound); },
                static_cast<int>(n_tokens), keep_count, mask.kept_indices.data());
  for (int idx : mask.kept_indices) mask.keep[static_cast<size_t>(idx)] = 1;
  return mask;
}

inline DropMask keep_all_mask(int64_t n_tokens) {
  DropMask mask;
  mask.keep.assign(static_cast<size_t>(n_tokens), 1);
  mask.kept_indices.resize(static_cast<size_t>(n_tokens));
  std::iota(mask.kept_indices.begin(), mask.kept_indices.end(), 0);
  mask.ratio = 0.0;
  return mask;
}

inline void validate_mask(const DropMask& mask, int64_t n_tokens) {
  if (mask.grid_size() != n_tokens)
    throw std::invalid_argument("mask covers " + std::to_string(mask.grid_size()) +
                                " tokens, expected " + std::to_string(n_tokens));
  int prev = -1;
  for (int idx : mask.kept_indices) {
    if (idx <= prev || idx >= n_tokens)
      throw std::invalid_argument("mask kept_indices not strictly ascending in range");
    prev = idx;
  }
}

// Raw-row forms used inside the network; src is (b, n, c) with the same mask
// applied to every sample.
template <typename T>
void apply_drop_rows(const T* src, int64_t b, int64_t n, int64_t c, const DropMask& mask,
                     T* dst) {
  int64_t kept = mask.kept_count();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t j = 0; j < kept; ++j) {
      const T* s = src + (bi * n + mask.kept_indices[static_cast<size_t>(j)]) * c;
      T* d = dst + (bi * kept + j) * c;
      std::copy(s, s + c, d);
    }
  }
}

template <typename T>
void pad_rows_with_mask(const T* sparse, int64_t b, int64_t n, int64_t c, const DropMask& mask,
                        const T* mask_token, T* dst) {
  int64_t kept = mask.kept_count();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) std::copy(mask_token, mask_token + c, dst + (bi * n + t) * c);
    for (int64_t j = 0; j < kept; ++j) {
      const T* s = sparse + (bi * kept + j) * c;
      std::copy(s, s + c, dst + (bi * n + mask.kept_indices[static_cast<size_t>(j)]) * c);
    }
  }
}

// TokenBatch forms. apply_drop keeps the original positions of the surviving
// tokens; pad_with_mask restores full row-major grid order with mask_token at
// every dropped slot.
template <typename T>
TokenBatch<T> apply_drop(const TokenBatch<T>& tokens, const DropMask& mask) {
  int64_t n = tokens.tokens.dim(1);
  validate_mask(mask, n);
  if (static_cast<int64_t>(tokens.positions.size()) != n)
    throw std::invalid_argument("apply_drop: positions do not cover the token sequence");
  int64_t b = tokens.tokens.dim(0), c = tokens.tokens.dim(2);
  int64_t kept = mask.kept_count();
  TokenBatch<T> out;
  out.tokens = Tensor<T>({b, kept, c});
  out.grid_rows = tokens.grid_rows;
  out.grid_cols = tokens.grid_cols;
  out.positions.reserve(static_cast<size_t>(kept));
  for (int idx : mask.kept_indices)
    out.positions.push_back(tokens.positions[static_cast<size_t>(idx)]);
  apply_drop_rows(tokens.tokens.data(), b, n, c, mask, out.tokens.data());
  return out;
}

template <typename T>
TokenBatch<T> pad_with_mask(const TokenBatch<T>& sparse, const DropMask& mask,
                            const T* mask_token) {
  int64_t b = sparse.tokens.dim(0), kept = sparse.tokens.dim(1), c = sparse.tokens.dim(2);
  if (kept != mask.kept_count())
    throw std::invalid_argument("pad_with_mask: sparse length " + std::to_string(kept) +
                                " != kept count " + std::to_string(mask.kept_count()));
  int64_t n = mask.grid_size();
  if (n != static_cast<int64_t>(sparse.grid_rows) * sparse.grid_cols)
    throw std::invalid_argument("pad_with_mask: mask does not cover the grid");
  TokenBatch<T> out;
  out.tokens = Tensor<T>({b, n, c});
  out.positions = make_positions(sparse.grid_rows, sparse.grid_cols);
  out.grid_rows = sparse.grid_rows;
  out.grid_cols = sparse.grid_cols;
  pad_rows_with_mask(sparse.tokens.data(), b, n, c, mask, mask_token, out.tokens.data());
  return out;
}

}  // namespace sprint
