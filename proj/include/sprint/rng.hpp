#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace sprint {

// Deterministic random source. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard); the draw transforms below are written
// out explicitly so the stream does not depend on unspecified
// std::*_distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1], safe as a log argument.
  double uniform_pos() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller; pairs are generated together and the
  // second value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    double a = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Multiply-shift map; the slight modulo-free
  // bias is below 2^-53 for the n used here.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(eng_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  uint64_t raw() { return eng_(); }

  // State round-trip for checkpoint resume.
  std::string serialize() const {
    std::ostringstream os;
    os << eng_ << " " << (has_spare_ ? 1 : 0) << " ";
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    is >> eng_ >> flag >> spare_;
    if (!is) throw std::invalid_argument("Rng::deserialize: malformed state string");
    has_spare_ = (flag != 0);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sprint
