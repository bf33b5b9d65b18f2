#pragma once

#include "latent_verify/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace lv {

using P2 = Eigen::Vector2d;

inline double cross(const P2& o, const P2& a, const P2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

struct Rect {
  P2 lo{0, 0};
  P2 hi{0, 0};

  P2 center() const { return 0.5 * (lo + hi); }
  P2 half() const { return 0.5 * (hi - lo); }
  double area() const { return (hi - lo).prod(); }
  bool contains(const P2& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
  }
  bool intersects(const Rect& o) const {
    return lo.x() <= o.hi.x() && o.lo.x() <= hi.x() && lo.y() <= o.hi.y() && o.lo.y() <= hi.y();
  }
  std::vector<P2> corners() const {
    return {lo, P2(hi.x(), lo.y()), hi, P2(lo.x(), hi.y())};
  }
};

// Convex polygon, CCW, starting at the lexicographically smallest vertex.
// Fewer than three vertices means a degenerate point or segment.
class ConvexPolygon {
 public:
  enum class Kind { Empty, Point, Segment, Polygon };

  ConvexPolygon() = default;
  explicit ConvexPolygon(std::vector<P2> ccw) : v_(std::move(ccw)) {}

  const std::vector<P2>& vertices() const { return v_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }
  Kind kind() const {
    switch (v_.size()) {
      case 0: return Kind::Empty;
      case 1: return Kind::Point;
      case 2: return Kind::Segment;
      default: return Kind::Polygon;
    }
  }

  double area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) {
      const P2& p = v_[i];
      const P2& q = v_[(i + 1) % v_.size()];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }

  double perimeter() const {
    if (v_.size() < 2) return 0.0;
    if (v_.size() == 2) return 2.0 * (v_[1] - v_[0]).norm();
    double p = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) p += (v_[(i + 1) % v_.size()] - v_[i]).norm();
    return p;
  }

  Rect bounding_box() const {
    Rect r{P2::Constant(1e300), P2::Constant(-1e300)};
    for (const auto& p : v_) {
      r.lo = r.lo.cwiseMin(p);
      r.hi = r.hi.cwiseMax(p);
    }
    return r;
  }

  P2 centroid_of_vertices() const {
    P2 c = P2::Zero();
    for (const auto& p : v_) c += p;
    return v_.empty() ? c : P2(c / static_cast<double>(v_.size()));
  }

  // Closed containment with absolute slack on each edge's half-plane.
  bool contains(const P2& p, double slack = 0.0) const {
    switch (kind()) {
      case Kind::Empty: return false;
      case Kind::Point: return (p - v_[0]).norm() <= slack;
      case Kind::Segment: return segment_distance(p, v_[0], v_[1]) <= slack;
      case Kind::Polygon:
        for (std::size_t i = 0; i < v_.size(); ++i) {
          const P2& a = v_[i];
          const P2& b = v_[(i + 1) % v_.size()];
          if (cross(a, b, p) / (b - a).norm() < -slack) return false;
        }
        return true;
    }
    return false;
  }

  bool contains(const Rect& r) const {
    for (const auto& c : r.corners())
      if (!contains(c)) return false;
    return true;
  }

  static double segment_distance(const P2& p, const P2& a, const P2& b) {
    const P2 ab = b - a;
    const double L2 = ab.squaredNorm();
    double t = L2 > 0 ? (p - a).dot(ab) / L2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  }

  // Euclidean distance to the set; zero inside.
  double distance(const P2& p) const {
    if (v_.empty()) return 1e300;
    if (kind() == Kind::Polygon && contains(p)) return 0.0;
    if (v_.size() == 1) return (p - v_[0]).norm();
    double d = 1e300;
    for (std::size_t i = 0; i < v_.size(); ++i) d = std::min(d, segment_distance(p, v_[i], v_[(i + 1) % v_.size()]));
    return d;
  }

 private:
  std::vector<P2> v_;
};

// Andrew's monotone chain; drops collinear points.
inline ConvexPolygon convex_hull(std::vector<P2> pts) {
  std::sort(pts.begin(), pts.end(), [](const P2& a, const P2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 1) return ConvexPolygon(pts);
  std::vector<P2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return ConvexPolygon(h);
}

inline ConvexPolygon hull_of_columns(const Mat& Z) {
  std::vector<P2> pts;
  pts.reserve(Z.cols());
  for (Eigen::Index i = 0; i < Z.cols(); ++i) pts.emplace_back(Z(0, i), Z(1, i));
  return convex_hull(std::move(pts));
}

inline ConvexPolygon rect_polygon(const Rect& r) { return convex_hull(r.corners()); }

namespace detail {

inline std::vector<P2> axes_of(const ConvexPolygon& p) {
  std::vector<P2> ax;
  const auto& v = p.vertices();
  if (v.size() < 2) return ax;
  const std::size_t m = v.size() == 2 ? 1 : v.size();
  for (std::size_t i = 0; i < m; ++i) {
    const P2 e = v[(i + 1) % v.size()] - v[i];
    ax.emplace_back(-e.y(), e.x());
    if (v.size() == 2) ax.push_back(e);
  }
  return ax;
}

inline void project(const ConvexPolygon& p, const P2& a, double& lo, double& hi) {
  lo = 1e300;
  hi = -1e300;
  for (const auto& q : p.vertices()) {
    const double t = a.dot(q);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
}

}  // namespace detail

// Separating-axis test for closed convex sets; touching counts as intersecting.
inline bool intersects(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (a.empty() || b.empty()) return false;
  if (a.size() == 1) return b.contains(a.vertices()[0], 1e-12);
  if (b.size() == 1) return a.contains(b.vertices()[0], 1e-12);
  auto axes = detail::axes_of(a);
  const auto axb = detail::axes_of(b);
  axes.insert(axes.end(), axb.begin(), axb.end());
  for (const auto& ax : axes) {
    const double n = ax.norm();
    if (n == 0.0) continue;
    double alo, ahi, blo, bhi;
    detail::project(a, ax / n, alo, ahi);
    detail::project(b, ax / n, blo, bhi);
    if (ahi < blo - 1e-12 || bhi < alo - 1e-12) return false;
  }
  return true;
}

inline bool intersects(const ConvexPolygon& a, const Rect& r) { return intersects(a, rect_polygon(r)); }

// Outer polygonal approximation of p ⊕ B_eps(0). Each vertex's normal-cone
// arc is replaced by a circumscribed polyline, so the disc sum is contained.
inline ConvexPolygon minkowski_expand(const ConvexPolygon& p, double eps, int arc_pieces_per_quarter = 4) {
  if (eps < 0) throw Error("minkowski_expand: negative eps");
  if (eps == 0.0 || p.empty()) return p;
  const auto& v = p.vertices();
  const std::size_t m = v.size();
  std::vector<P2> out;
  auto add_arc = [&](const P2& c, double a0, double a1) {
    const double span = a1 - a0;
    const int pieces = std::max(1, static_cast<int>(std::ceil(span / (std::numbers::pi / 2) * arc_pieces_per_quarter)));
    const double d = span / pieces;
    const double r = eps / std::cos(d / 2);
    out.push_back(c + eps * P2(std::cos(a0), std::sin(a0)));
    for (int k = 0; k < pieces; ++k) {
      const double a = a0 + (k + 0.5) * d;
      out.push_back(c + r * P2(std::cos(a), std::sin(a)));
    }
    out.push_back(c + eps * P2(std::cos(a1), std::sin(a1)));
  };
  if (m == 1) {
    add_arc(v[0], 0.0, 2 * std::numbers::pi);
    return convex_hull(out);
  }
  std::vector<double> normal_angle(m);
  for (std::size_t i = 0; i < m; ++i) {
    const P2 e = v[(i + 1) % m] - v[i];
    normal_angle[i] = std::atan2(-e.x(), e.y());
  }
  for (std::size_t i = 0; i < m; ++i) {
    double a0 = normal_angle[(i + m - 1) % m];
    double a1 = normal_angle[i];
    while (a1 < a0) a1 += 2 * std::numbers::pi;
    if (m == 2 && a1 - a0 < 1e-12) a1 = a0 + std::numbers::pi;
    add_arc(v[i], a0, a1);
  }
  return convex_hull(out);
}

// Sutherland-Hodgman clip of a rectangle against a convex polygon.
inline ConvexPolygon clip_rect(const Rect& r, const ConvexPolygon& clip) {
  std::vector<P2> poly = r.corners();
  const auto& c = clip.vertices();
  if (c.size() < 3) return ConvexPolygon();
  for (std::size_t i = 0; i < c.size() && !poly.empty(); ++i) {
    const P2& a = c[i];
    const P2& b = c[(i + 1) % c.size()];
    std::vector<P2> next;
    for (std::size_t j = 0; j < poly.size(); ++j) {
      const P2& p = poly[j];
      const P2& q = poly[(j + 1) % poly.size()];
      const double sp = cross(a, b, p), sq = cross(a, b, q);
      if (sp >= 0) next.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        next.push_back(p + t * (q - p));
      }
    }
    poly.swap(next);
  }
  return convex_hull(poly);
}

}  // namespace lv
