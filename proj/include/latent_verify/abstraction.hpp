#pragma once

#include "latent_verify/inclusion_gp.hpp"
#include "latent_verify/ltl/check.hpp"
#include "latent_verify/nts.hpp"
#include "latent_verify/regions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>
#include <tuple>
#include <vector>

namespace lv {

struct AbstractionConfig {
  int u_intervals = 8;
  RegionBoundConfig bounds;
  int threads = 0;  // 0: hardware concurrency
};

// Certified image boxes of one cell, one per u-interval.
using CellImages = std::vector<Rect>;

// Bucket grid over the partition for box queries.
class CellIndex {
 public:
  explicit CellIndex(const Partition& p) : p_(p) {
    bb_ = p.Z.bounding_box();
    n_ = std::max<int>(1, static_cast<int>(std::sqrt(static_cast<double>(p.cells.size()))));
    buckets_.assign(static_cast<std::size_t>(n_) * n_, {});
    for (std::size_t i = 0; i < p.cells.size(); ++i) {
      int x0, x1, y0, y1;
      range(p.cells[i].rect, x0, x1, y0, y1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) buckets_[static_cast<std::size_t>(y) * n_ + x].push_back(i);
    }
  }

  // Cells whose shape meets the closed box r, sorted.
  std::vector<std::size_t> query(const Rect& r) const {
    std::vector<std::size_t> out;
    if (r.hi.x() < bb_.lo.x() || r.lo.x() > bb_.hi.x() || r.hi.y() < bb_.lo.y() || r.lo.y() > bb_.hi.y()) return out;
    int x0, x1, y0, y1;
    range(r, x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        for (auto i : buckets_[static_cast<std::size_t>(y) * n_ + x]) out.push_back(i);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    std::vector<std::size_t> hit;
    for (auto i : out) {
      const Cell& c = p_.cells[i];
      if (!c.rect.intersects(r)) continue;
      if (c.boundary && !intersects(c.shape, r)) continue;
      hit.push_back(i);
    }
    return hit;
  }

 private:
  void range(const Rect& r, int& x0, int& x1, int& y0, int& y1) const {
    auto cx = [&](double v) {
      const double t = (v - bb_.lo.x()) / std::max(1e-300, bb_.hi.x() - bb_.lo.x());
      return std::clamp(static_cast<int>(std::floor(t * n_)), 0, n_ - 1);
    };
    auto cy = [&](double v) {
      const double t = (v - bb_.lo.y()) / std::max(1e-300, bb_.hi.y() - bb_.lo.y());
      return std::clamp(static_cast<int>(std::floor(t * n_)), 0, n_ - 1);
    };
    x0 = cx(r.lo.x());
    x1 = cx(r.hi.x());
    y0 = cy(r.lo.y());
    y1 = cy(r.hi.y());
  }

  const Partition& p_;
  Rect bb_;
  int n_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

inline CellImages cell_images(const InclusionGpModel& m, const Rect& q, const AbstractionConfig& cfg) {
  if (m.latent_dim() != 2) throw ConfigError("abstraction needs a 2-dimensional latent space");
  if (cfg.u_intervals < 1) throw ConfigError("u_intervals must be >= 1");
  CellImages out;
  const double a = m.data.a, b = m.data.b;
  for (int k = 0; k < cfg.u_intervals; ++k) {
    const double u0 = a + (b - a) * k / cfg.u_intervals;
    const double u1 = k + 1 == cfg.u_intervals ? b : a + (b - a) * (k + 1) / cfg.u_intervals;
    const auto bd = bound_over_region(m, q, u0, u1, cfg.bounds);
    out.push_back(Rect{P2(bd[0].lo, bd[1].lo), P2(bd[0].hi, bd[1].hi)});
  }
  return out;
}

namespace detail {

inline auto rect_key(const Rect& r) { return std::make_tuple(r.lo.x(), r.lo.y(), r.hi.x(), r.hi.y()); }

template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t T = std::max<std::size_t>(
      1, std::min<std::size_t>(n, threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency())));
  if (T == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < T; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += T) f(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Image boxes for every cell. Cells whose rectangle appears in prev (same
// rectangle, same model) reuse the cached boxes.
inline std::vector<CellImages> compute_images(const Partition& p, const InclusionGpModel& m,
                                              const AbstractionConfig& cfg,
                                              const std::map<std::tuple<double, double, double, double>, CellImages>* prev =
                                                  nullptr) {
  std::vector<CellImages> images(p.cells.size());
  detail::parallel_for(p.cells.size(), cfg.threads, [&](std::size_t i) {
    if (prev) {
      const auto it = prev->find(detail::rect_key(p.cells[i].rect));
      if (it != prev->end()) {
        images[i] = it->second;
        return;
      }
    }
    images[i] = cell_images(m, p.cells[i].rect, cfg);
  });
  return images;
}

// T(q, q') = 1 iff some image box of q meets q'; boxes leaving Z add q_u.
inline Nts assemble_nts(const Partition& p, const LabelingMap& labels, const std::vector<CellImages>& images) {
  if (labels.assignment.size() != p.num_states()) throw DomainError("labeling does not match the partition");
  if (images.size() != p.cells.size()) throw DomainError("image table does not match the partition");
  const CellIndex index(p);
  Nts n;
  n.ap = labels.ap;
  n.labels = labels.assignment;
  n.succ.resize(p.num_states());
  const std::size_t qu = p.q_u();
  for (std::size_t i = 0; i < p.cells.size(); ++i) {
    auto& row = n.succ[i];
    bool leaves = false;
    for (const Rect& box : images[i]) {
      const auto hit = index.query(box);
      row.insert(row.end(), hit.begin(), hit.end());
      if (!p.Z.contains(box)) leaves = true;
    }
    if (leaves) row.push_back(qu);
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  n.succ[qu] = {qu};
  n.validate();
  return n;
}

inline Nts build_nts(const Partition& p, const LabelingMap& labels, const InclusionGpModel& m,
                     const AbstractionConfig& cfg = {}) {
  return assemble_nts(p, labels, compute_images(p, m, cfg));
}

// ---------------------------------------------------------------------------
// Refinement

struct RefinementPlan {
  std::vector<std::size_t> cells;  // indices into the old partition
};

inline Rect bisect_half(const Rect& r, bool first) {
  Rect h = r;
  const P2 w = r.hi - r.lo;
  if (w.x() >= w.y()) {
    const double mid = 0.5 * (r.lo.x() + r.hi.x());
    (first ? h.hi.x() : h.lo.x()) = mid;
  } else {
    const double mid = 0.5 * (r.lo.y() + r.hi.y());
    (first ? h.hi.y() : h.lo.y()) = mid;
  }
  return h;
}

inline RefinementPlan plan_refinement(const Nts& nts, const ltl::CheckResult& r, const Partition& p) {
  if (nts.size() != p.num_states()) throw DomainError("NTS does not match the partition");
  std::vector<char> decided(nts.size(), 0), frontier(nts.size(), 0);
  for (auto q : r.yes) decided[q] = 1;
  for (auto q : r.no) decided[q] = 1;
  for (std::size_t q = 0; q < nts.size(); ++q)
    for (auto s : nts.succ[q]) {
      if (decided[s]) frontier[q] = 1;  // successor in Q_yes or Q_no
      if (decided[q]) frontier[s] = 1;  // predecessor in Q_yes or Q_no
    }
  RefinementPlan plan;
  for (auto q : r.maybe)
    if (q < p.cells.size() && frontier[q]) plan.cells.push_back(q);
  return plan;
}

// Bisects every planned cell along its longest edge. Unsplit cells keep
// their order; the halves are appended.
inline Partition apply_refinement(const Partition& p, const RefinementPlan& plan) {
  std::vector<char> split(p.cells.size(), 0);
  for (auto q : plan.cells) split[q] = 1;
  Partition out;
  out.Z = p.Z;
  for (std::size_t i = 0; i < p.cells.size(); ++i)
    if (!split[i]) out.cells.push_back(p.cells[i]);
  for (auto q : plan.cells) {
    add_cell(out, bisect_half(p.cells[q].rect, true));
    add_cell(out, bisect_half(p.cells[q].rect, false));
  }
  return out;
}

inline std::pair<Partition, RefinementPlan> refine(const Nts& nts, const ltl::CheckResult& r, const Partition& p) {
  auto plan = plan_refinement(nts, r, p);
  return {apply_refinement(p, plan), std::move(plan)};
}

// ---------------------------------------------------------------------------
// Full abstraction with cached images across refinements.

struct Abstraction {
  Partition partition;
  LabelingMap labels;
  std::vector<CellImages> images;
  Nts nts;

  std::map<std::tuple<double, double, double, double>, CellImages> image_cache() const {
    std::map<std::tuple<double, double, double, double>, CellImages> c;
    for (std::size_t i = 0; i < partition.cells.size(); ++i) c.emplace(detail::rect_key(partition.cells[i].rect), images[i]);
    return c;
  }
};

inline Abstraction build_abstraction(Partition p, const std::vector<LatentRegionPair>& regions,
                                     const InclusionGpModel& m, const AbstractionConfig& cfg,
                                     const Abstraction* previous = nullptr) {
  Abstraction a;
  a.partition = std::move(p);
  a.labels = build_labels(a.partition, regions);
  if (previous) {
    const auto cache = previous->image_cache();
    a.images = compute_images(a.partition, m, cfg, &cache);
  } else {
    a.images = compute_images(a.partition, m, cfg);
  }
  a.nts = assemble_nts(a.partition, a.labels, a.images);
  return a;
}

}  // namespace lv
