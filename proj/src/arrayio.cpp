#include "sprint/arrayio.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sprint {

namespace {
constexpr const char* kMagic = "SPRINT-ARR v1";
}

void write_array(const std::string& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_array: cannot write " + path);
  out << kMagic << "\n" << t.rank() << "\n";
  for (size_t i = 0; i < t.shape.size(); ++i) out << (i ? " " : "") << t.shape[i];
  out << "\n";
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel()) * 4);
  if (!out) throw std::runtime_error("write_array: write failed for " + path);
}

Tensor<float> read_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_array: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw std::runtime_error("read_array: bad magic in " + path);
  std::string line;
  std::getline(in, line);
  int rank = 0;
  try {
    rank = std::stoi(line);
  } catch (const std::exception&) {
    throw std::runtime_error("read_array: bad rank in " + path);
  }
  if (rank < 0 || rank > 8) throw std::runtime_error("read_array: unreasonable rank in " + path);
  std::getline(in, line);
  std::istringstream dims(line);
  std::vector<int64_t> shape(static_cast<size_t>(rank));
  for (auto& d : shape)
    if (!(dims >> d) || d < 0) throw std::runtime_error("read_array: bad shape in " + path);
  Tensor<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel()) * 4);
  if (!in) throw std::runtime_error("read_array: truncated data in " + path);
  return t;
}

void write_pgm(const std::string& path, const float* img, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("write_pgm: empty image");
  const int64_t n = static_cast<int64_t>(height) * width;
  float lo = img[0], hi = img[0];
  for (int64_t i = 1; i < n; ++i) {
    lo = std::min(lo, img[i]);
    hi = std::max(hi, img[i]);
  }
  float span = hi - lo;
  if (span <= 0.0f) span = 1.0f;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_pgm: cannot write " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (int64_t i = 0; i < n; ++i) {
    float v = (img[i] - lo) / span;
    out.put(static_cast<char>(static_cast<unsigned char>(v * 255.0f + 0.5f)));
  }
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace sprint
