#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace nnhisd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for malformed inputs: dimension mismatches, invalid parameters.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN/Inf or an iterative kernel breaks down.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box; used for sampling and for divergence guards.
struct Box {
  Vector lower;
  Vector upper;

  [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }
  [[nodiscard]] Vector center() const { return 0.5 * (lower + upper); }
  [[nodiscard]] Vector half_width() const { return 0.5 * (upper - lower); }

  [[nodiscard]] bool contains(const Vector& x) const {
    return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
  }

  /// Box with the same center and half-widths scaled by `factor`.
  [[nodiscard]] Box inflated(double factor) const {
    Vector c = center();
    Vector h = factor * half_width();
    return {c - h, c + h};
  }

  static Box cube(int dim, double lo, double hi) {
    return {Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  }
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline void require_dim(const Vector& x, int dim, const char* what) {
  if (x.size() != dim) {
    throw ArgumentError(std::string(what) + ": expected dimension " + std::to_string(dim) + ", got " +
                        std::to_string(x.size()));
  }
}

// ---------------------------------------------------------------------------
// Seeding. Every command owns one base seed; component seeds are derived by
// hashing (base, stream) so editing one component does not shift the others.

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Stream ids used across the toolkit.
namespace streams {
inline constexpr std::uint64_t sampling = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t gradient_mask = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t batches = 5;
inline constexpr std::uint64_t eigen_init = 6;
}  // namespace streams

using Rng = std::mt19937_64;

/// Random point uniformly distributed in `box`.
inline Vector uniform_in(const Box& box, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x[i] = box.lower[i] + u(rng) * (box.upper[i] - box.lower[i]);
  return x;
}

}  // namespace nnhisd
