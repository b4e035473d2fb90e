#pragma once

#include <string>

#include "sprint/tensor.hpp"

namespace sprint {

// Portable array file: "SPRINT-ARR v1\n<rank>\n<d0 d1 ...>\n" followed by the
// elements as little-endian float32.
void write_array(const std::string& path, const Tensor<float>& t);
Tensor<float> read_array(const std::string& path);

// 8-bit grayscale PGM, min-max normalized per image.
void write_pgm(const std::string& path, const float* img, int height, int width);

}  // namespace sprint
