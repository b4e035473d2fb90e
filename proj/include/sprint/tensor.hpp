#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sprint {

// 64-byte aligned allocation for every numeric buffer. Vectorized kernels
// split loops at runtime alignment boundaries, so reduction order (and with
// it the last bit of the result) would otherwise depend on where the heap
// happened to place a buffer; pinning the base alignment makes every run of
// the same shape bitwise reproducible.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  static_assert(Align >= alignof(T), "alignment below the type's natural one");

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}

  // the non-type Align parameter defeats the default rebind machinery
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }

  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

// Dense row-major array with a shape tag. Kernels operate on raw pointers;
// the shape exists for allocation, bounds checks at module boundaries, and I/O.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  AlignedVec<T> v;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    }
    v.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int64_t dim(int i) const {
    if (i < 0 || i >= rank()) throw std::out_of_range("Tensor::dim: axis " + std::to_string(i));
    return shape[static_cast<size_t>(i)];
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

}  // namespace sprint
