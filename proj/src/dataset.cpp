#include "sprint/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace sprint {

void BlobDatasetSpec::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw std::invalid_argument("BlobDatasetSpec: non-positive image dimensions");
  if (height % 2 != 0 || width % 2 != 0)
    throw std::invalid_argument("BlobDatasetSpec: image sides must be even for quadrants");
  if (num_classes != 4)
    throw std::invalid_argument("BlobDatasetSpec: quadrant data defines exactly 4 classes");
  if (sigma <= 0.0) throw std::invalid_argument("BlobDatasetSpec: sigma must be positive");
  if (amp_hi < amp_lo) throw std::invalid_argument("BlobDatasetSpec: amplitude range inverted");
  if (size <= 0) throw std::invalid_argument("BlobDatasetSpec: empty dataset");
}

namespace {

// One raw image; draws, in order: label, center row, center col, amplitude.
void draw_blob(const BlobDatasetSpec& spec, Rng& rng, float* img, int* label) {
  int cls = static_cast<int>(rng.below(static_cast<uint64_t>(spec.num_classes)));
  double qh = spec.height / 2.0, qw = spec.width / 2.0;
  double row0 = (cls / 2) * qh, col0 = (cls % 2) * qw;
  double cy = row0 + 0.5 + rng.uniform() * (qh - 1.0);
  double cx = col0 + 0.5 + rng.uniform() * (qw - 1.0);
  double amp = spec.amp_lo + rng.uniform() * (spec.amp_hi - spec.amp_lo);
  double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      float val = static_cast<float>(amp * std::exp(-d2 * inv));
      for (int c = 0; c < spec.channels; ++c)
        img[(static_cast<int64_t>(y) * spec.width + x) * spec.channels + c] = val;
    }
  }
  *label = cls;
}

DataStats raw_stats(const Tensor<float>& images) {
  double sum = 0.0, sum2 = 0.0;
  for (int64_t i = 0; i < images.numel(); ++i) {
    double v = static_cast<double>(images[i]);
    sum += v;
    sum2 += v * v;
  }
  double n = static_cast<double>(images.numel());
  DataStats s;
  s.mean = sum / n;
  double var = sum2 / n - s.mean * s.mean;
  s.stdev = std::sqrt(var > 0.0 ? var : 1.0);
  return s;
}

void standardize(Tensor<float>& images, const DataStats& s) {
  float mu = static_cast<float>(s.mean);
  float inv = static_cast<float>(1.0 / s.stdev);
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = (images[i] - mu) * inv;
}

}  // namespace

std::pair<Tensor<float>, std::vector<int>> make_blob_batch(const BlobDatasetSpec& spec, Rng& rng,
                                                           int64_t batch,
                                                           const DataStats* stats) {
  spec.validate();
  if (batch <= 0) throw std::invalid_argument("make_blob_batch: empty batch");
  Tensor<float> images({batch, spec.height, spec.width, spec.channels});
  std::vector<int> labels(static_cast<size_t>(batch));
  int64_t per = images.numel() / batch;
  for (int64_t b = 0; b < batch; ++b)
    draw_blob(spec, rng, images.data() + b * per, &labels[static_cast<size_t>(b)]);
  DataStats s = stats ? *stats : raw_stats(images);
  standardize(images, s);
  return {std::move(images), std::move(labels)};
}

BlobDataset make_blob_dataset(const BlobDatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  BlobDataset ds;
  ds.spec = spec;
  ds.images = Tensor<float>({spec.size, spec.height, spec.width, spec.channels});
  ds.labels.resize(static_cast<size_t>(spec.size));
  int64_t per = ds.images.numel() / spec.size;
  for (int64_t b = 0; b < spec.size; ++b)
    draw_blob(spec, rng, ds.images.data() + b * per, &ds.labels[static_cast<size_t>(b)]);
  ds.stats = raw_stats(ds.images);
  standardize(ds.images, ds.stats);
  return ds;
}

void gather_batch(const BlobDataset& ds, const std::vector<int64_t>& idx, Tensor<float>& x0,
                  std::vector<int>& labels) {
  int64_t b = static_cast<int64_t>(idx.size());
  std::vector<int64_t> shape = ds.images.shape;
  shape[0] = b;
  if (x0.shape != shape) x0 = Tensor<float>(shape);
  labels.resize(static_cast<size_t>(b));
  int64_t per = x0.numel() / b;
  for (int64_t i = 0; i < b; ++i) {
    int64_t j = idx[static_cast<size_t>(i)];
    if (j < 0 || j >= ds.spec.size) throw std::out_of_range("gather_batch: index out of range");
    std::copy(ds.images.data() + j * per, ds.images.data() + (j + 1) * per, x0.data() + i * per);
    labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(j)];
  }
}

double quadrant_accuracy(const Tensor<float>& images, const std::vector<int>& labels) {
  if (images.rank() != 4) throw std::invalid_argument("quadrant_accuracy: expected (B,H,W,ch)");
  int64_t batch = images.dim(0), h = images.dim(1), w = images.dim(2), ch = images.dim(3);
  if (h != w || h % 2 != 0)
    throw std::invalid_argument("quadrant_accuracy: images must be square with an even side");
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("quadrant_accuracy: labels do not match batch");

  int64_t hits = 0;
  std::vector<double> intensity(static_cast<size_t>(h * w));
  for (int64_t b = 0; b < batch; ++b) {
    const float* img = images.data() + b * h * w * ch;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double v = 0.0;
        for (int64_t c = 0; c < ch; ++c) v += static_cast<double>(img[(y * w + x) * ch + c]);
        intensity[static_cast<size_t>(y * w + x)] = v / static_cast<double>(ch);
      }
    double best = -1.0;
    int64_t best_y = 0, best_x = 0;
    bool first = true;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += intensity[static_cast<size_t>(yy * w + xx)];
            ++cnt;
          }
        double s = acc / cnt;
        if (first || s > best) {
          best = s;
          best_y = y;
          best_x = x;
          first = false;
        }
      }
    }
    int quad = static_cast<int>((best_y >= h / 2 ? 2 : 0) + (best_x >= w / 2 ? 1 : 0));
    if (quad == labels[static_cast<size_t>(b)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

}  // namespace sprint
