#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

// Class-conditional toy data: one isotropic Gaussian bump per image, centered
// uniformly inside the quadrant named by the label (0 top-left, 1 top-right,
// 2 bottom-left, 3 bottom-right).
struct BlobDatasetSpec {
  int height = 16;
  int width = 16;
  int channels = 1;
  int num_classes = 4;
  double sigma = 1.8;
  double amp_lo = 0.8;
  double amp_hi = 1.2;
  int64_t size = 4096;
  uint64_t seed = 0;

  void validate() const;
};

struct DataStats {
  double mean = 0.0;
  double stdev = 1.0;
};

struct BlobDataset {
  BlobDatasetSpec spec;
  Tensor<float> images;  // (size, H, W, ch), standardized by `stats`
  std::vector<int> labels;
  DataStats stats;  // raw-pixel statistics the standardization divides out
};

// Draws `batch` labeled images; pixels standardized by `stats` when given,
// otherwise by the batch's own raw mean and standard deviation.
std::pair<Tensor<float>, std::vector<int>> make_blob_batch(const BlobDatasetSpec& spec, Rng& rng,
                                                           int64_t batch,
                                                           const DataStats* stats = nullptr);

// The full fixed dataset for a training run, standardized by its own stats.
BlobDataset make_blob_dataset(const BlobDatasetSpec& spec);

// Copies rows of the dataset into a batch tensor.
void gather_batch(const BlobDataset& ds, const std::vector<int64_t>& idx, Tensor<float>& x0,
                  std::vector<int>& labels);

// Fraction of images whose brightest pixel, after 3x3 box smoothing clipped
// at the borders, falls in the labeled quadrant. Ties break toward the
// row-major first maximum. Images must be square with an even side.
double quadrant_accuracy(const Tensor<float>& images, const std::vector<int>& labels);

}  // namespace sprint
