#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace rgan {

/// Row-major dense matrix; one sample per row throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Raised when a transition matrix has no usable inverse.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on non-finite losses or gradients during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a checkpoint or serialized document cannot be decoded.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derives an independent 64-bit seed for a named consumer of randomness.
///
/// The stream name is hashed with FNV-1a, mixed with the root seed and
/// finished with the splitmix64 finalizer, so `derive_seed(s, "data")` and
/// `derive_seed(s, "init")` are decorrelated while staying reproducible.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = root ^ (h + 0x9e3779b97f4a7c15ULL + (root << 6) + (root >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
  return derive_seed(derive_seed(root, stream), std::to_string(index));
}

/// 64-bit FNV-1a digest rendered as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
  return out;
}

}  // namespace rgan
