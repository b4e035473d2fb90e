#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "sprint/rng.hpp"
#include "sprint/subsample.hpp"
#include "sprint/tensor.hpp"

using namespace sprint;

namespace {

Tensor<float> randn(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal() * scale);
  return t;
}

// Upper chi-square quantile via the Wilson-Hilferty cube approximation,
// accurate to a fraction of a percent at the df used here.
double chi2_quantile(double df, double z) {
  double a = 2.0 / (9.0 * df);
  double c = 1.0 - a + z * std::sqrt(a);
  return df * c * c * c;
}

}  // namespace

TEST_CASE("choose_k_of_m returns ascending distinct values and is rng-neutral at k=m") {
  Rng rng(3);
  auto draw = [&rng](uint64_t bound) { return rng.below(bound); };
  std::vector<int> out(5);
  for (int rep = 0; rep < 50; ++rep) {
    choose_k_of_m(draw, 12, 5, out.data());
    for (int i = 0; i < 5; ++i) {
      REQUIRE(out[i] >= 0);
      REQUIRE(out[i] < 12);
      if (i > 0) REQUIRE(out[i] > out[i - 1]);
    }
  }
  std::string before = rng.serialize();
  std::vector<int> all(12);
  choose_k_of_m(draw, 12, 12, all.data());
  REQUIRE(rng.serialize() == before);  // selecting everything consumes no draws
  for (int i = 0; i < 12; ++i) REQUIRE(all[i] == i);
  REQUIRE_THROWS_AS(choose_k_of_m(draw, 4, 5, out.data()), std::invalid_argument);
  REQUIRE_THROWS_AS(choose_k_of_m(draw, 4, -1, out.data()), std::invalid_argument);
}

TEST_CASE("structured 4x4 n=2 k=1 keeps each token with probability exactly 1/4") {
  // one draw of bound 4 per group, four groups: enumerate all 4^4 outcomes
  std::vector<int64_t> keep_count(16, 0);
  for (int joint = 0; joint < 256; ++joint) {
    std::vector<uint64_t> script = {static_cast<uint64_t>(joint & 3),
                                    static_cast<uint64_t>((joint >> 2) & 3),
                                    static_cast<uint64_t>((joint >> 4) & 3),
                                    static_cast<uint64_t>((joint >> 6) & 3)};
    size_t next = 0;
    auto draw = [&](uint64_t bound) {
      REQUIRE(bound == 4);
      REQUIRE(next < script.size());
      return script[next++];
    };
    DropMask m = structured_mask_with(draw, 4, 4, 2, 1);
    REQUIRE(next == script.size());  // exactly one draw per group
    REQUIRE(m.kept_count() == 4);
    REQUIRE(m.ratio == 0.75);
    for (int i = 0; i < 16; ++i) keep_count[static_cast<size_t>(i)] += m.keep[static_cast<size_t>(i)];
  }
  for (int i = 0; i < 16; ++i) REQUIRE(keep_count[static_cast<size_t>(i)] == 64);
}

TEST_CASE("structured 16x16 keeps exactly k per group and draws cells uniformly") {
  Rng rng(11);
  const int draws = 10000;
  const int groups = 64;  // 8x8 blocks of 2x2
  std::vector<int64_t> cell_count(static_cast<size_t>(groups) * 4, 0);
  for (int it = 0; it < draws; ++it) {
    DropMask m = structured_mask(16, 16, 2, 1, rng);
    REQUIRE(m.kept_count() == groups);
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        int kept_here = 0, cell = -1;
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc)
            if (m.keep[static_cast<size_t>((a * 2 + dr) * 16 + b * 2 + dc)]) {
              ++kept_here;
              cell = dr * 2 + dc;
            }
        REQUIRE(kept_here == 1);  // exactly k per group, every draw
        ++cell_count[static_cast<size_t>((a * 8 + b) * 4 + cell)];
      }
    }
  }
  // chi-square uniformity across the 4 cells of each group, 3 df per group
  double expected = draws / 4.0;
  double stat = 0.0;
  for (int64_t c : cell_count) {
    double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  double crit = chi2_quantile(3.0 * groups, 2.3263);  // p = 0.01 upper tail
  INFO("chi-square " << stat << " vs critical " << crit);
  REQUIRE(stat < crit);
}

TEST_CASE("structured_mask validates its geometry") {
  Rng rng(1);
  REQUIRE_THROWS_AS(structured_mask(6, 4, 4, 1, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(structured_mask(4, 4, 2, 0, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(structured_mask(4, 4, 2, 5, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(structured_mask(0, 4, 2, 1, rng), std::invalid_argument);
}

TEST_CASE("random_mask drops floor(rN) indices and keep-all is rng-neutral") {
  Rng rng(17);
  DropMask m = random_mask(64, 0.75, rng);
  REQUIRE(m.kept_count() == 16);
  REQUIRE(m.group_n == 0);
  validate_mask(m, 64);
  DropMask m2 = random_mask(10, 0.39, rng);  // floor(3.9) = 3 dropped
  REQUIRE(m2.kept_count() == 7);
  std::string before = rng.serialize();
  DropMask all = random_mask(32, 0.0, rng);
  REQUIRE(all.kept_count() == 32);
  REQUIRE(rng.serialize() == before);
  REQUIRE_THROWS_AS(random_mask(16, 1.0, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(random_mask(16, -0.1, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(random_mask(0, 0.5, rng), std::invalid_argument);
}

TEST_CASE("keep_all_mask covers every token") {
  DropMask m = keep_all_mask(9);
  REQUIRE(m.kept_count() == 9);
  for (int i = 0; i < 9; ++i) REQUIRE(m.kept_indices[static_cast<size_t>(i)] == i);
  validate_mask(m, 9);
  REQUIRE_THROWS_AS(validate_mask(m, 10), std::invalid_argument);
}

TEST_CASE("pad_with_mask after apply_drop restores kept rows and masks the rest") {
  Rng rng(23);
  int hits = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    int rows = 2 * (1 + static_cast<int>(rng.below(4)));  // 2,4,6,8
    int cols = 2 * (1 + static_cast<int>(rng.below(4)));
    int64_t n = static_cast<int64_t>(rows) * cols, b = 2, c = 5;
    TokenBatch<float> x;
    x.tokens = randn(rng, {b, n, c});
    x.positions = make_positions(rows, cols);
    x.grid_rows = rows;
    x.grid_cols = cols;
    Tensor<float> mask_tok = randn(rng, {c});

    DropMask m;
    if (rep % 2 == 0) {
      m = structured_mask(rows, cols, 2, 1 + static_cast<int>(rng.below(3)), rng);
    } else {
      m = random_mask(n, 0.9 * rng.uniform(), rng);
    }

    TokenBatch<float> sparse = apply_drop(x, m);
    REQUIRE(sparse.tokens.dim(1) == m.kept_count());
    // surviving tokens keep their original grid positions
    for (int64_t j = 0; j < m.kept_count(); ++j) {
      int idx = m.kept_indices[static_cast<size_t>(j)];
      REQUIRE(sparse.positions[static_cast<size_t>(j)].row == idx / cols);
      REQUIRE(sparse.positions[static_cast<size_t>(j)].col == idx % cols);
    }
    TokenBatch<float> padded = pad_with_mask(sparse, m, mask_tok.data());
    REQUIRE(padded.tokens.same_shape(x.tokens));
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t t = 0; t < n; ++t) {
        const float* got = padded.tokens.data() + (bi * n + t) * c;
        const float* want = m.keep[static_cast<size_t>(t)]
                                ? x.tokens.data() + (bi * n + t) * c
                                : mask_tok.data();
        for (int64_t cc = 0; cc < c; ++cc) REQUIRE(got[cc] == want[cc]);
      }
    }
    ++hits;
  }
  REQUIRE(hits == 1000);
}

TEST_CASE("apply_drop validates mask and positions") {
  Rng rng(29);
  TokenBatch<float> x;
  x.tokens = randn(rng, {1, 16, 3});
  x.positions = make_positions(4, 4);
  x.grid_rows = 4;
  x.grid_cols = 4;
  DropMask wrong = keep_all_mask(9);
  REQUIRE_THROWS_AS(apply_drop(x, wrong), std::invalid_argument);
  DropMask m = structured_mask(4, 4, 2, 1, rng);
  TokenBatch<float> sparse = apply_drop(x, m);
  Tensor<float> tok({3});
  tok.fill(0.5f);
  DropMask other = structured_mask(4, 4, 2, 2, rng);
  REQUIRE_THROWS_AS(pad_with_mask(sparse, other, tok.data()), std::invalid_argument);
}
