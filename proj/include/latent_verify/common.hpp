#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy. Every failure the library reports derives from lv::Error so
// callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LV_DEFINE_ERROR(Name)                   \
  class Name : public Error {                   \
   public:                                      \
    explicit Name(const std::string& what)      \
        : Error(std::string(#Name ": ") + what) {} \
  };

LV_DEFINE_ERROR(DomainError)
LV_DEFINE_ERROR(InvalidFractions)
LV_DEFINE_ERROR(TrainingDiverged)
LV_DEFINE_ERROR(InvalidConfidence)
LV_DEFINE_ERROR(IncompleteNegationCover)
LV_DEFINE_ERROR(UnknownProposition)
LV_DEFINE_ERROR(TooLarge)
LV_DEFINE_ERROR(NotConverged)
LV_DEFINE_ERROR(NoWitness)
LV_DEFINE_ERROR(FormatError)
LV_DEFINE_ERROR(ConfigError)
LV_DEFINE_ERROR(StaleArtifact)
LV_DEFINE_ERROR(MissingStage)

#undef LV_DEFINE_ERROR

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t pos)
      : Error("SyntaxError: " + what + " at position " + std::to_string(pos)), position(pos) {}
  std::size_t position;
};

// splitmix64 finalizer; used to derive independent per-index seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline Mat gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * gaussian(rng);
  return m;
}

// Axis-aligned box in R^n. Empty dimension count is allowed (0-dim box).
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw Error("Box: bound size mismatch");
  }

  Eigen::Index dim() const { return lo.size(); }
  Vec center() const { return 0.5 * (lo + hi); }
  Vec half_widths() const { return 0.5 * (hi - lo); }
  double volume() const { return (hi - lo).prod(); }

  bool contains(const Vec& x, double slack = 0.0) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
  }

  bool contains(const Box& other) const {
    return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
  }

  // Closed-set intersection: touching boxes intersect.
  bool intersects(const Box& other) const {
    return (lo.array() <= other.hi.array()).all() && (other.lo.array() <= hi.array()).all();
  }

  Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

  Vec sample(Rng& rng) const {
    Vec x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = uniform(rng, lo[i], hi[i]);
    return x;
  }

  static Box cube(Eigen::Index n, double lo, double hi) {
    return Box(Vec::Constant(n, lo), Vec::Constant(n, hi));
  }
};

}  // namespace lv
