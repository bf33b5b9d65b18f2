#pragma once

#include "latent_verify/common.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace lv {

enum class SystemKind { Nonlinear3D, Nonlinear6D, Lidar26D };

inline std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::Nonlinear3D: return "nonlinear3d";
    case SystemKind::Nonlinear6D: return "nonlinear6d";
    case SystemKind::Lidar26D: return "lidar26d";
  }
  return "?";
}

inline SystemKind system_kind_from_string(const std::string& s) {
  if (s == "nonlinear3d") return SystemKind::Nonlinear3D;
  if (s == "nonlinear6d") return SystemKind::Nonlinear6D;
  if (s == "lidar26d") return SystemKind::Lidar26D;
  throw ConfigError("unknown system '" + s + "'");
}

// ---------------------------------------------------------------------------
// Closed-form dynamics

inline double theta_3d(double a) { return std::numbers::pi / 7.0 * std::cos(a); }

inline Vec step_3d(const Vec& x) {
  const double th = theta_3d(x[2]);
  const double c = std::cos(th), s = std::sin(th);
  Vec y(3);
  y << 0.7 * (x[0] * c - x[1] * s), 0.7 * (x[0] * s + x[1] * c), 0.7 * x[2];
  return y;
}

inline Vec lift_6d(const Vec& s) {
  Vec x(6);
  const double th = theta_3d(s[2]);
  x << s[0], s[1], s[2], std::cos(s[2]), std::cos(th), std::sin(th);
  return x;
}

inline Vec step_6d(const Vec& x) {
  if (!(x[3] >= -1.0 && x[3] <= 1.0))
    throw DomainError("step_6d: x4 = " + std::to_string(x[3]) + " outside [-1, 1]");
  const double inner = std::numbers::pi / 7.0 * std::cos(0.7 * std::acos(x[3]));
  Vec y(6);
  y << 0.7 * (x[0] * x[4] - x[1] * x[5]), 0.7 * (x[0] * x[5] + x[1] * x[4]), 0.7 * x[2],
      std::cos(0.7 * x[2]), std::cos(inner), std::sin(inner);
  return y;
}

// ---------------------------------------------------------------------------
// LiDAR environment

struct Rect2 {
  double xlo, ylo, xhi, yhi;
  bool contains(double x, double y) const { return x >= xlo && x <= xhi && y >= ylo && y <= yhi; }
};

struct LidarEnv {
  Rect2 bounds{0.0, 0.0, 10.0, 10.0};
  std::vector<Rect2> obstacles;
  std::array<double, 2> goal{8.25, 5.0};  // controller attraction point
  double max_range = 5.0;
  int n_beams = 24;
  double dt = 0.1;
  double u_max = 1.0;
  double k_att = 1.0;
  double k_rep = 0.6;
  double r_safe = 1.2;
};

// Distance along a ray to the exit of a box that contains the origin.
inline double ray_exit_box(double px, double py, double dx, double dy, const Rect2& b) {
  double t = std::numeric_limits<double>::infinity();
  if (dx > 0) t = std::min(t, (b.xhi - px) / dx);
  if (dx < 0) t = std::min(t, (b.xlo - px) / dx);
  if (dy > 0) t = std::min(t, (b.yhi - py) / dy);
  if (dy < 0) t = std::min(t, (b.ylo - py) / dy);
  return std::max(t, 0.0);
}

// Slab test; returns +inf on miss.
inline double ray_enter_box(double px, double py, double dx, double dy, const Rect2& b) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  const double p[2] = {px, py}, d[2] = {dx, dy}, lo[2] = {b.xlo, b.ylo}, hi[2] = {b.xhi, b.yhi};
  for (int a = 0; a < 2; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (p[a] < lo[a] || p[a] > hi[a]) return std::numeric_limits<double>::infinity();
    } else {
      double ta = (lo[a] - p[a]) / d[a], tb = (hi[a] - p[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return std::numeric_limits<double>::infinity();
    }
  }
  return t0;
}

inline double beam_heading(int k, int n_beams) { return 2.0 * std::numbers::pi * k / n_beams; }

inline Vec raycast(const Vec& pos, const LidarEnv& env) {
  Vec r(env.n_beams);
  for (const auto& o : env.obstacles) {
    if (o.contains(pos[0], pos[1])) {
      r.setZero();
      return r;
    }
  }
  for (int k = 0; k < env.n_beams; ++k) {
    const double h = beam_heading(k, env.n_beams);
    const double dx = std::cos(h), dy = std::sin(h);
    double t = ray_exit_box(pos[0], pos[1], dx, dy, env.bounds);
    for (const auto& o : env.obstacles) t = std::min(t, ray_enter_box(pos[0], pos[1], dx, dy, o));
    r[k] = std::clamp(t, 0.0, env.max_range);
  }
  return r;
}

// Potential-field controller reading only the range vector and the goal direction.
inline Vec lidar_control(const Vec& x, const LidarEnv& env) {
  Vec u(2);
  u << env.goal[0] - x[0], env.goal[1] - x[1];
  u *= env.k_att;
  const double un = u.norm();
  if (un > env.u_max) u *= env.u_max / un;
  for (int k = 0; k < env.n_beams; ++k) {
    const double r = std::max(x[2 + k], 0.05);
    if (r >= env.r_safe) continue;
    const double h = beam_heading(k, env.n_beams);
    const double w = env.k_rep * (1.0 / r - 1.0 / env.r_safe);
    u[0] -= w * std::cos(h) / env.n_beams;
    u[1] -= w * std::sin(h) / env.n_beams;
  }
  const double n = u.norm();
  if (n > env.u_max) u *= env.u_max / n;
  return u;
}

inline Vec lidar_lift(const Vec& pos, const LidarEnv& env) {
  Vec x(2 + env.n_beams);
  x.head(2) = pos;
  x.tail(env.n_beams) = raycast(pos, env);
  return x;
}

inline Vec step_lidar(const Vec& x, const LidarEnv& env) {
  Vec pos = x.head(2) + env.dt * lidar_control(x, env);
  pos[0] = std::clamp(pos[0], env.bounds.xlo, env.bounds.xhi);
  pos[1] = std::clamp(pos[1], env.bounds.ylo, env.bounds.yhi);
  return lidar_lift(pos, env);
}

// ---------------------------------------------------------------------------
// System description

// A region is a box in base coordinates. The unsafe region may additionally
// contain everything outside X, in which case the outside state q_u carries
// its label.
struct RegionSpec {
  std::string name;
  Box box;  // dim 0 means the part inside X is empty
  bool includes_outside = false;
  bool empty_inside() const { return box.dim() == 0; }
};

// Boxes whose union is base_box minus r (closed, overlapping on faces).
inline std::vector<Box> complement_boxes(const Box& base_box, const Box& r) {
  std::vector<Box> out;
  if (r.dim() == 0) {
    out.push_back(base_box);
    return out;
  }
  Vec lo = base_box.lo, hi = base_box.hi;
  for (Eigen::Index d = 0; d < base_box.dim(); ++d) {
    if (r.lo[d] > base_box.lo[d]) {
      Box b(lo, hi);
      b.hi[d] = r.lo[d];
      out.push_back(b);
    }
    if (r.hi[d] < base_box.hi[d]) {
      Box b(lo, hi);
      b.lo[d] = r.hi[d];
      out.push_back(b);
    }
    lo[d] = std::max(base_box.lo[d], r.lo[d]);
    hi[d] = std::min(base_box.hi[d], r.hi[d]);
  }
  return out;
}

// Per-coordinate affine map of the state box onto [-1,1]^n, scaled by 1/sqrt(n)
// so the image lies in the unit ball.
struct Normalizer {
  Vec center;
  Vec scale;  // normalized = (x - center) .* scale

  Vec apply(const Vec& x) const { return (x - center).cwiseProduct(scale); }
  Vec invert(const Vec& z) const { return z.cwiseQuotient(scale) + center; }
  Mat apply_cols(const Mat& X) const {
    return (X.colwise() - center).array().colwise() * scale.array();
  }

  static Normalizer from_box(const Box& b) {
    const double n = static_cast<double>(b.dim());
    Normalizer nz;
    nz.center = b.center();
    nz.scale = (b.half_widths().array().inverse() / std::sqrt(n)).matrix();
    return nz;
  }
};

struct SystemSpec {
  SystemKind kind = SystemKind::Nonlinear3D;
  int state_dim = 3;
  int base_dim = 3;
  Box base_box;   // X in base coordinates
  Box state_box;  // bounding box used for normalization
  std::vector<RegionSpec> regions;
  LidarEnv env;

  Normalizer normalizer() const { return Normalizer::from_box(state_box); }

  Vec lift(const Vec& base) const {
    switch (kind) {
      case SystemKind::Nonlinear3D: return base;
      case SystemKind::Nonlinear6D: return lift_6d(base);
      case SystemKind::Lidar26D: return lidar_lift(base, env);
    }
    return base;
  }

  Vec base_of(const Vec& state) const { return state.head(base_dim); }

  Vec step(const Vec& state) const {
    switch (kind) {
      case SystemKind::Nonlinear3D: return step_3d(state);
      case SystemKind::Nonlinear6D: return step_6d(state);
      case SystemKind::Lidar26D: return step_lidar(state, env);
    }
    return state;
  }

  // Box containing every lifted state of X.
  Box lifted_bounds() const {
    if (kind != SystemKind::Nonlinear6D) return state_box;
    const double c1 = std::cos(1.0), t_lo = theta_3d(1.0), t_hi = theta_3d(0.0);
    Vec lo(6), hi(6);
    lo << base_box.lo, c1, std::cos(t_hi), std::sin(t_lo);
    hi << base_box.hi, 1.0, std::cos(t_lo), std::sin(t_hi);
    return Box(lo, hi);
  }

  bool in_domain(const Vec& state) const { return base_box.contains(base_of(state)); }

  const RegionSpec& region(const std::string& name) const {
    for (const auto& r : regions)
      if (r.name == name) return r;
    throw UnknownProposition("no region named '" + name + "'");
  }

  // Membership of a raw state in region r (outside X counts for includes_outside).
  bool in_region(const RegionSpec& r, const Vec& state) const {
    const Vec b = base_of(state);
    if (!base_box.contains(b)) return r.includes_outside;
    return !r.empty_inside() && r.box.contains(b);
  }

  void validate() const {
    const int expect = kind == SystemKind::Nonlinear3D ? 3 : kind == SystemKind::Nonlinear6D ? 6 : 26;
    if (state_dim != expect) throw ConfigError("state_dim does not match system");
    if (kind == SystemKind::Lidar26D && env.n_beams != state_dim - 2)
      throw ConfigError("lidar n_beams must equal state_dim - 2");
    if (kind == SystemKind::Lidar26D && !(env.max_range > 0)) throw ConfigError("max_range must be positive");
    for (const auto& r : regions)
      if (!r.empty_inside() && !base_box.contains(r.box))
        throw ConfigError("region '" + r.name + "' not contained in X");
  }
};

inline SystemSpec make_nonlinear3d() {
  SystemSpec s;
  s.kind = SystemKind::Nonlinear3D;
  s.state_dim = s.base_dim = 3;
  s.base_box = Box::cube(3, -1.0, 1.0);
  s.state_box = s.base_box;
  s.regions.push_back({"goal", Box::cube(3, -0.2, 0.2), false});
  s.regions.push_back({"unsafe", Box(), true});
  return s;
}

inline Box obstacle_6d() {
  Vec lo(3), hi(3);
  lo << 0.3, -0.7, -0.25;
  hi << 0.6, -0.3, 0.25;
  return Box(lo, hi);
}

inline SystemSpec make_nonlinear6d(bool with_obstacle) {
  SystemSpec s;
  s.kind = SystemKind::Nonlinear6D;
  s.state_dim = 6;
  s.base_dim = 3;
  s.base_box = Box::cube(3, -1.0, 1.0);
  s.state_box = Box::cube(6, -1.0, 1.0);
  s.regions.push_back({"goal", Box::cube(3, -0.2, 0.2), false});
  s.regions.push_back({"unsafe", with_obstacle ? obstacle_6d() : Box(), true});
  return s;
}

inline SystemSpec make_lidar26d(const LidarEnv& env, std::vector<RegionSpec> regions) {
  SystemSpec s;
  s.kind = SystemKind::Lidar26D;
  s.state_dim = 2 + env.n_beams;
  s.base_dim = 2;
  s.env = env;
  s.base_box = Box(Vec::Map(std::array<double, 2>{env.bounds.xlo, env.bounds.ylo}.data(), 2),
                   Vec::Map(std::array<double, 2>{env.bounds.xhi, env.bounds.yhi}.data(), 2));
  Vec lo = Vec::Zero(s.state_dim), hi = Vec::Constant(s.state_dim, env.max_range);
  lo.head(2) = s.base_box.lo;
  hi.head(2) = s.base_box.hi;
  s.state_box = Box(lo, hi);
  s.regions = std::move(regions);
  return s;
}

inline Box box2(double xlo, double ylo, double xhi, double yhi) {
  Vec lo(2), hi(2);
  lo << xlo, ylo;
  hi << xhi, yhi;
  return Box(lo, hi);
}

// One obstacle between the start area and one goal.
inline SystemSpec make_lidar_reach() {
  LidarEnv env;
  env.obstacles.push_back({4.0, 3.5, 5.5, 6.5});
  env.goal = {8.25, 5.0};
  std::vector<RegionSpec> regions;
  regions.push_back({"goal", box2(7.5, 4.25, 9.0, 5.75), false});
  regions.push_back({"unsafe", box2(4.0, 3.5, 5.5, 6.5), true});
  return make_lidar26d(env, regions);
}

// Same obstacle; goalB is a vertical band every approach from the left crosses.
inline SystemSpec make_lidar_two_goals() {
  SystemSpec s = make_lidar_reach();
  s.regions = {RegionSpec{"goalA", box2(7.5, 4.25, 9.0, 5.75), false},
               RegionSpec{"goalB", box2(6.25, 0.0, 6.75, 10.0), false},
               RegionSpec{"unsafe", box2(4.0, 3.5, 5.5, 6.5), true}};
  return s;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Learning, Regression, Prediction };

struct Dataset {
  Mat x;   // n_x x n, normalized
  Mat xp;  // n_x x n, normalized successors
  std::uint64_t seed = 0;
  Split split = Split::Learning;

  Eigen::Index size() const { return x.cols(); }
  Eigen::Index dim() const { return x.rows(); }
};

// Uniform sample in base coordinates for index i of a stream.
inline Vec sample_base(const Box& b, std::uint64_t seed, std::uint64_t i) {
  Rng rng(mix_seed(seed, i));
  return b.sample(rng);
}

inline Dataset sample_dataset(const SystemSpec& spec, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error("sample_dataset: n must be >= 1");
  const Normalizer nz = spec.normalizer();
  Dataset d;
  d.seed = seed;
  d.x.resize(spec.state_dim, n);
  d.xp.resize(spec.state_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec s = spec.lift(sample_base(spec.base_box, seed, static_cast<std::uint64_t>(i)));
    d.x.col(i) = nz.apply(s);
    d.xp.col(i) = nz.apply(spec.step(s));
  }
  return d;
}

inline std::array<Dataset, 3> split_dataset(const Dataset& d, double learn, double regress, double predict) {
  if (!(learn > 0 && regress > 0 && predict > 0) || learn + regress + predict > 1.0 + 1e-12)
    throw InvalidFractions("fractions must be positive with sum <= 1");
  const double n = static_cast<double>(d.size());
  const Eigen::Index a = static_cast<Eigen::Index>(std::floor(learn * n + 1e-9));
  const Eigen::Index b = static_cast<Eigen::Index>(std::floor(regress * n + 1e-9));
  const Eigen::Index c = static_cast<Eigen::Index>(std::floor(predict * n + 1e-9));
  std::array<Dataset, 3> out;
  const Split kinds[3] = {Split::Learning, Split::Regression, Split::Prediction};
  const Eigen::Index starts[3] = {0, a, a + b}, sizes[3] = {a, b, c};
  for (int k = 0; k < 3; ++k) {
    out[k].seed = d.seed;
    out[k].split = kinds[k];
    out[k].x = d.x.middleCols(starts[k], sizes[k]);
    out[k].xp = d.xp.middleCols(starts[k], sizes[k]);
  }
  return out;
}

// Largest sampled spectral norm of the normalized one-step map's Jacobian
// (central differences), times a margin. An estimate, not a certified bound.
inline double estimate_dynamics_lipschitz(const SystemSpec& spec, int samples = 2000, std::uint64_t seed = 0,
                                          double margin = 1.1, double h = 1e-5) {
  const Normalizer nz = spec.normalizer();
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec x = nz.apply(spec.lift(sample_base(spec.base_box, seed, static_cast<std::uint64_t>(i))));
    Mat J(x.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      // one-sided where a perturbation leaves the domain of step
      auto image = [&](const Vec& v, Vec& out) {
        try {
          out = nz.apply(spec.step(nz.invert(v)));
          return true;
        } catch (const DomainError&) {
          return false;
        }
      };
      Vec a = x, b = x, fa, fb;
      a[k] += h;
      b[k] -= h;
      double span = 2 * h;
      if (!image(a, fa)) image(x, fa), span = h;
      if (!image(b, fb)) image(x, fb), span -= h;
      J.col(k) = span > 0 ? Vec((fa - fb) / span) : Vec::Zero(x.size());
    }
    best = std::max(best, Eigen::JacobiSVD<Mat>(J).singularValues()[0]);
  }
  return margin * best;
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  const Eigen::Index n = d.dim();
  for (Eigen::Index i = 0; i < n; ++i) f << (i ? "," : "") << "x_" << i;
  for (Eigen::Index i = 0; i < n; ++i) f << ",xp_" << i;
  f << "\n";
  char buf[64];
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", d.x(i, j));
      f << (i ? "," : "") << buf;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", d.xp(i, j));
      f << "," << buf;
    }
    f << "\n";
  }
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::string line;
  std::getline(f, line);
  const auto cols = std::count(line.begin(), line.end(), ',') + 1;
  if (cols % 2 != 0) throw FormatError(path + ": odd column count");
  const Eigen::Index n = cols / 2;
  std::vector<double> vals;
  Eigen::Index rows = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index k = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++k;
    }
    if (k != cols) throw FormatError(path + ": bad row " + std::to_string(rows + 2));
    ++rows;
  }
  Dataset d;
  d.x.resize(n, rows);
  d.xp.resize(n, rows);
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      d.x(i, j) = vals[j * cols + i];
      d.xp(i, j) = vals[j * cols + n + i];
    }
  return d;
}

}  // namespace lv
