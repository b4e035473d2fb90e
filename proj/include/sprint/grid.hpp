#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sprint/tensor.hpp"

namespace sprint {

struct GridPos {
  int row = 0;
  int col = 0;
};

// Token view of an image batch: tokens (B, N, C) plus the grid position of
// each token slot. Positions are shared across the batch; row-major order
// over the grid unless a subsampling step has gathered a subset.
template <typename T>
struct TokenBatch {
  Tensor<T> tokens;
  std::vector<GridPos> positions;
  int grid_rows = 0;
  int grid_cols = 0;
};

inline std::vector<GridPos> make_positions(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("make_positions: empty grid");
  std::vector<GridPos> p;
  p.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) p.push_back({r, c});
  return p;
}

// images (B, H, W, ch) -> tokens (B, (H/p)*(W/p), p*p*ch), row-major patches,
// channel order (py, px, ch) within a token.
template <typename T>
TokenBatch<T> patchify(const Tensor<T>& images, int patch) {
  if (images.rank() != 4)
    throw std::invalid_argument("patchify: expected rank-4 images, got " +
                                shape_str(images.shape));
  int64_t b = images.dim(0), h = images.dim(1), w = images.dim(2), ch = images.dim(3);
  if (patch <= 0 || h % patch != 0 || w % patch != 0)
    throw std::invalid_argument("patchify: image " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by patch " +
                                std::to_string(patch));
  int rows = static_cast<int>(h) / patch;
  int cols = static_cast<int>(w) / patch;
  int64_t n = static_cast<int64_t>(rows) * cols;
  int64_t c = static_cast<int64_t>(patch) * patch * ch;
  TokenBatch<T> out;
  out.tokens = Tensor<T>({b, n, c});
  out.positions = make_positions(rows, cols);
  out.grid_rows = rows;
  out.grid_cols = cols;
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      int64_t pr = t / cols, pc = t % cols;
      T* tok = out.tokens.data() + (bi * n + t) * c;
      for (int py = 0; py < patch; ++py) {
        for (int px = 0; px < patch; ++px) {
          const T* src = images.data() +
                         ((bi * h + pr * patch + py) * w + pc * patch + px) * ch;
          for (int64_t cc = 0; cc < ch; ++cc)
            tok[(static_cast<int64_t>(py) * patch + px) * ch + cc] = src[cc];
        }
      }
    }
  }
  return out;
}

// Exact inverse of patchify for a full row-major token batch.
template <typename T>
Tensor<T> unpatchify(const TokenBatch<T>& tb, int patch, int64_t channels) {
  int64_t b = tb.tokens.dim(0), n = tb.tokens.dim(1), c = tb.tokens.dim(2);
  if (c != static_cast<int64_t>(patch) * patch * channels)
    throw std::invalid_argument("unpatchify: token width " + std::to_string(c) +
                                " != patch*patch*channels");
  if (n != static_cast<int64_t>(tb.grid_rows) * tb.grid_cols)
    throw std::invalid_argument("unpatchify: token count does not cover the grid");
  int64_t h = static_cast<int64_t>(tb.grid_rows) * patch;
  int64_t w = static_cast<int64_t>(tb.grid_cols) * patch;
  Tensor<T> images({b, h, w, channels});
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t t = 0; t < n; ++t) {
      const GridPos& p = tb.positions[static_cast<size_t>(t)];
      const T* tok = tb.tokens.data() + (bi * n + t) * c;
      for (int py = 0; py < patch; ++py) {
        for (int px = 0; px < patch; ++px) {
          T* dst = images.data() +
                   ((bi * h + static_cast<int64_t>(p.row) * patch + py) * w +
                    static_cast<int64_t>(p.col) * patch + px) *
                       channels;
          for (int64_t cc = 0; cc < channels; ++cc)
            dst[cc] = tok[(static_cast<int64_t>(py) * patch + px) * channels + cc];
        }
      }
    }
  }
  return images;
}

// Axial rotary table: the first half of each head's channels rotates with the
// row coordinate, the second half with the column coordinate. Pair j of an
// axis rotates by pos * base^(-2j / (head_dim/2)).
struct RopeTable {
  int head_dim = 0;
  double base = 10000.0;
  std::vector<double> freqs;  // head_dim/4 per-axis inverse frequencies
};

inline RopeTable make_rope_table(int head_dim, double base = 10000.0) {
  if (head_dim <= 0 || head_dim % 4 != 0)
    throw std::invalid_argument("make_rope_table: head_dim must be a positive multiple of 4");
  RopeTable t;
  t.head_dim = head_dim;
  t.base = base;
  int pairs_per_axis = head_dim / 4;
  int axis_dim = head_dim / 2;
  t.freqs.resize(static_cast<size_t>(pairs_per_axis));
  for (int j = 0; j < pairs_per_axis; ++j)
    t.freqs[static_cast<size_t>(j)] = std::pow(base, -2.0 * j / axis_dim);
  return t;
}

// Rotates n_tokens head vectors in place. Channels (2j, 2j+1) of the row half
// rotate by row*freqs[j]; the column half likewise with col.
template <typename T>
void rope_apply(int64_t n_tokens, T* vecs, const GridPos* pos, const RopeTable& table) {
  int hd = table.head_dim;
  int ppa = hd / 4;
  for (int64_t t = 0; t < n_tokens; ++t) {
    T* v = vecs + t * hd;
    for (int j = 0; j < ppa; ++j) {
      double ar = pos[t].row * table.freqs[static_cast<size_t>(j)];
      double ac = pos[t].col * table.freqs[static_cast<size_t>(j)];
      double cr = std::cos(ar), sr = std::sin(ar);
      double cc = std::cos(ac), sc = std::sin(ac);
      T r0 = v[2 * j], r1 = v[2 * j + 1];
      v[2 * j] = static_cast<T>(cr * r0 - sr * r1);
      v[2 * j + 1] = static_cast<T>(sr * r0 + cr * r1);
      T c0 = v[hd / 2 + 2 * j], c1 = v[hd / 2 + 2 * j + 1];
      v[hd / 2 + 2 * j] = static_cast<T>(cc * c0 - sc * c1);
      v[hd / 2 + 2 * j + 1] = static_cast<T>(sc * c0 + cc * c1);
    }
  }
}

// Precomputes per-token cos/sin rows (n x head_dim/2) in the global pair
// order used by kernels::rope_rotate: pairs [0, hd/4) are the row axis,
// pairs [hd/4, hd/2) the column axis.
template <typename T>
void bake_rope(const RopeTable& table, const GridPos* pos, int64_t n, T* cos_out, T* sin_out) {
  int ppa = table.head_dim / 4;
  int pairs = table.head_dim / 2;
  for (int64_t t = 0; t < n; ++t) {
    for (int j = 0; j < ppa; ++j) {
      double ar = pos[t].row * table.freqs[static_cast<size_t>(j)];
      double ac = pos[t].col * table.freqs[static_cast<size_t>(j)];
      cos_out[t * pairs + j] = static_cast<T>(std::cos(ar));
      sin_out[t * pairs + j] = static_cast<T>(std::sin(ar));
      cos_out[t * pairs + ppa + j] = static_cast<T>(std::cos(ac));
      sin_out[t * pairs + ppa + j] = static_cast<T>(std::sin(ac));
    }
  }
}

}  // namespace sprint
