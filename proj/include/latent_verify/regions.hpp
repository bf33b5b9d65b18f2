#pragma once

#include "latent_verify/common.hpp"
#include "latent_verify/encoder.hpp"
#include "latent_verify/geometry.hpp"
#include "latent_verify/systems.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace lv {

// log of the volume of the unit i-ball
inline double log_ball_volume(int i) { return 0.5 * i * std::log(std::numbers::pi) - std::lgamma(0.5 * i + 1.0); }

inline double eps_randup(double N, double delta, double L_h, int n_x, int n_p) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidConfidence("delta must lie in (0, 1)");
  if (!(N >= 1) || !(L_h > 0) || n_p < 1 || n_p > n_x) throw Error("eps_randup: invalid arguments");
  const double log_term = n_x * std::log(4.0 * L_h * std::sqrt(static_cast<double>(n_x))) - std::log(delta);
  if (log_term <= 0.0) return 0.0;
  const double log_inner = log_ball_volume(n_x) - std::log(N) - log_ball_volume(n_p) + std::log(log_term);
  return L_h * std::exp(log_inner / n_p);
}

// Produces the i-th normalized sample of a set.
using Sampler = std::function<Vec(std::uint64_t)>;

inline Sampler box_sampler(const SystemSpec& spec, const Box& base, std::uint64_t seed) {
  const Normalizer nz = spec.normalizer();
  return [spec, base, seed, nz](std::uint64_t i) { return nz.apply(spec.lift(sample_base(base, seed, i))); };
}

// Hull of h(samples) built chunk-wise to bound memory.
inline ConvexPolygon encoded_hull(const CicoNetwork& enc, const Sampler& s, std::uint64_t N, int chunk = 8192) {
  if (enc.latent_dim() != 2) throw ConfigError("region geometry requires a 2D latent space");
  std::vector<P2> acc;
  for (std::uint64_t start = 0; start < N; start += chunk) {
    const auto n = static_cast<Eigen::Index>(std::min<std::uint64_t>(chunk, N - start));
    Mat X(enc.input_dim, n);
    for (Eigen::Index j = 0; j < n; ++j) X.col(j) = s(start + j);
    const Mat Z = enc.encode_batch(X);
    for (Eigen::Index j = 0; j < n; ++j) acc.emplace_back(Z(0, j), Z(1, j));
    acc = convex_hull(std::move(acc)).vertices();
  }
  return ConvexPolygon(acc);
}

struct MappedRegion {
  ConvexPolygon under;
  ConvexPolygon over;
  double epsilon = 0.0;
};

inline MappedRegion map_region(const CicoNetwork& enc, const Sampler& s, std::uint64_t N, double delta, double L_h) {
  MappedRegion m;
  m.under = encoded_hull(enc, s, N);
  m.epsilon = eps_randup(static_cast<double>(N), delta, L_h, enc.input_dim, enc.latent_dim());
  m.over = minkowski_expand(m.under, m.epsilon);
  return m;
}

struct LatentDomain {
  ConvexPolygon Z;
  double epsilon = 0.0;  // what an over-approximation of h(X) would need; Z itself is not inflated
};

inline LatentDomain build_latent_domain(const CicoNetwork& enc, const Sampler& x_sampler, std::uint64_t N,
                                        double delta, double L_h) {
  LatentDomain d;
  d.Z = encoded_hull(enc, x_sampler, N);
  d.epsilon = eps_randup(static_cast<double>(N), delta, L_h, enc.input_dim, enc.latent_dim());
  return d;
}

// ---------------------------------------------------------------------------
// Partition

struct Cell {
  Rect rect;
  bool boundary = false;
  ConvexPolygon shape;  // rect clipped to Z
};

struct Partition {
  ConvexPolygon Z;
  std::vector<Cell> cells;  // the outside state q_u is implicit, index cells.size()
  std::size_t q_u() const { return cells.size(); }
  std::size_t num_states() const { return cells.size() + 1; }
};

inline void add_cell(Partition& p, const Rect& r) {
  Cell c;
  c.rect = r;
  if (p.Z.contains(r)) {
    c.shape = rect_polygon(r);
  } else {
    c.shape = clip_rect(r, p.Z);
    if (c.shape.kind() != ConvexPolygon::Kind::Polygon || c.shape.area() <= 0.0) return;
    c.boundary = true;
  }
  p.cells.push_back(std::move(c));
}

inline Partition partition_domain(const ConvexPolygon& Z, int nx, int ny) {
  if (nx < 1 || ny < 1) throw ConfigError("partition resolution must be >= 1");
  Partition p;
  p.Z = Z;
  const Rect bb = Z.bounding_box();
  const double wx = (bb.hi.x() - bb.lo.x()) / nx, wy = (bb.hi.y() - bb.lo.y()) / ny;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Rect r{P2(bb.lo.x() + i * wx, bb.lo.y() + j * wy),
             P2(i + 1 == nx ? bb.hi.x() : bb.lo.x() + (i + 1) * wx, j + 1 == ny ? bb.hi.y() : bb.lo.y() + (j + 1) * wy)};
      add_cell(p, r);
    }
  return p;
}

// Cell containing z, or q_u. Cells share faces; the first match wins.
inline std::size_t locate(const Partition& p, const P2& z) {
  for (std::size_t i = 0; i < p.cells.size(); ++i) {
    const Cell& c = p.cells[i];
    if (!c.rect.contains(z)) continue;
    if (!c.boundary || c.shape.contains(z, 1e-12)) return i;
  }
  return p.q_u();
}

// ---------------------------------------------------------------------------
// Labels

struct LatentRegionPair {
  std::string label;
  bool includes_outside = false;
  bool empty_inside = false;
  ConvexPolygon under;  // c_{Z,i}
  ConvexPolygon over;   // hat r_{Z,i}
  std::vector<ConvexPolygon> negation_overs;
  double epsilon = 0.0;
  double negation_epsilon = 0.0;
};

struct LabelingMap {
  std::vector<std::string> ap;  // p_0, n_0, p_1, n_1, ...
  std::vector<std::vector<bool>> assignment;  // per state (cells then q_u)

  int index(const std::string& name) const {
    for (std::size_t i = 0; i < ap.size(); ++i)
      if (ap[i] == name) return static_cast<int>(i);
    throw UnknownProposition("'" + name + "' is not an atomic proposition");
  }
  bool has(std::size_t state, const std::string& name) const { return assignment[state][index(name)]; }
};

inline std::string negated_name(const std::string& p) { return "n_" + p; }

inline std::vector<std::string> ap_for(const std::vector<LatentRegionPair>& regions) {
  std::vector<std::string> ap;
  for (const auto& r : regions) {
    ap.push_back(r.label);
    ap.push_back(negated_name(r.label));
  }
  return ap;
}

struct RegionMappingConfig {
  std::uint64_t samples = 100000;
  double delta = 0.05;
  std::uint64_t seed = 0;
  std::uint64_t cover_probes = 20000;
};

inline int count_over_approximations(const SystemSpec& spec) {
  int k = 0;
  for (const auto& r : spec.regions) k += (r.empty_inside() ? 0 : 1) + static_cast<int>(complement_boxes(spec.base_box, r.box).size());
  return k;
}

// Sampled test that the negation parts cover X minus the region.
inline void check_negation_cover(const Box& base_box, const RegionSpec& r, const std::vector<Box>& parts,
                                 std::uint64_t probes, std::uint64_t seed) {
  Rng rng(seed);
  for (std::uint64_t i = 0; i < probes; ++i) {
    const Vec b = base_box.sample(rng);
    if (!r.empty_inside() && r.box.contains(b)) continue;
    bool covered = false;
    for (const auto& p : parts) covered = covered || p.contains(b);
    if (!covered) throw IncompleteNegationCover("region '" + r.name + "'");
  }
}

// Maps every region of the system and its complement parts. delta is split
// evenly over all over-approximated sets.
inline std::vector<LatentRegionPair> map_regions(const SystemSpec& spec, const CicoNetwork& enc, double L_h,
                                                 const RegionMappingConfig& cfg, double* delta_each = nullptr) {
  const int count = count_over_approximations(spec);
  const double de = cfg.delta / std::max(1, count);
  if (delta_each) *delta_each = de;
  std::vector<LatentRegionPair> out;
  std::uint64_t stream = 1;
  for (const auto& r : spec.regions) {
    LatentRegionPair lp;
    lp.label = r.name;
    lp.includes_outside = r.includes_outside;
    lp.empty_inside = r.empty_inside();
    if (!r.empty_inside()) {
      const auto m = map_region(enc, box_sampler(spec, r.box, mix_seed(cfg.seed, stream++)), cfg.samples, de, L_h);
      lp.under = m.under;
      lp.over = m.over;
      lp.epsilon = m.epsilon;
    }
    const auto parts = complement_boxes(spec.base_box, r.box);
    check_negation_cover(spec.base_box, r, parts, cfg.cover_probes, mix_seed(cfg.seed, 0xc0ffee + stream));
    for (const auto& part : parts) {
      const auto m = map_region(enc, box_sampler(spec, part, mix_seed(cfg.seed, stream++)), cfg.samples, de, L_h);
      lp.negation_overs.push_back(m.over);
      lp.negation_epsilon = m.epsilon;
    }
    out.push_back(std::move(lp));
  }
  return out;
}

inline std::vector<bool> cell_labels(const Cell& c, const std::vector<LatentRegionPair>& regions) {
  std::vector<bool> lab(2 * regions.size(), false);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    bool pos = !c.boundary && !r.empty_inside && r.under.kind() == ConvexPolygon::Kind::Polygon && r.under.contains(c.rect);
    for (const auto& n : r.negation_overs) {
      if (!pos) break;
      if (intersects(n, c.shape)) pos = false;
    }
    const bool neg = r.empty_inside || !intersects(r.over, c.shape);
    lab[2 * i] = pos;
    lab[2 * i + 1] = neg && !pos;
  }
  return lab;
}

inline std::vector<bool> outside_labels(const std::vector<LatentRegionPair>& regions) {
  std::vector<bool> lab(2 * regions.size(), false);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    lab[2 * i] = regions[i].includes_outside;
    lab[2 * i + 1] = !regions[i].includes_outside;
  }
  return lab;
}

inline LabelingMap build_labels(const Partition& p, const std::vector<LatentRegionPair>& regions) {
  LabelingMap L;
  L.ap = ap_for(regions);
  for (const auto& c : p.cells) L.assignment.push_back(cell_labels(c, regions));
  L.assignment.push_back(outside_labels(regions));
  return L;
}

// Labels of a concrete (raw) state in the same AP order.
inline std::vector<bool> state_labels(const SystemSpec& spec, const std::vector<LatentRegionPair>& regions,
                                      const Vec& raw_state) {
  std::vector<bool> lab(2 * regions.size(), false);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const bool in = spec.in_region(spec.region(regions[i].label), raw_state);
    lab[2 * i] = in;
    lab[2 * i + 1] = !in;
  }
  return lab;
}

}  // namespace lv
