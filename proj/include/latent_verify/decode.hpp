#pragma once

#include "latent_verify/regions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace lv {

// Where decoding searches: a box of raw coordinates, the map from those
// coordinates to the encoder input, and a map back used to seed from the
// decoder net. Empty maps are the identity.
struct DecodeDomain {
  Box box;
  std::function<Vec(const Vec&)> embed;
  std::function<Vec(const Vec&)> from_input;

  Vec to_input(const Vec& x) const { return embed ? embed(x) : x; }
  Vec seed_from_input(const Vec& u) const { return box.clamp(from_input ? from_input(u) : u); }
};

inline DecodeDomain identity_domain(const Box& b) { return {b, {}, {}}; }

// Base coordinates of the system, lifted and normalized for the encoder.
inline DecodeDomain system_domain(const SystemSpec& spec) {
  const Normalizer nz = spec.normalizer();
  DecodeDomain d;
  d.box = spec.base_box;
  d.embed = [spec, nz](const Vec& b) { return nz.apply(spec.lift(b)); };
  d.from_input = [spec, nz](const Vec& u) { return spec.base_of(nz.invert(u)); };
  return d;
}

struct DecodeConfig {
  int starts = 16;
  int iterations = 2000;
  double step = 0.0;        // c in c / sqrt(t); 0 means 0.1 times the box diagonal
  double tolerance = 1e-4;  // decode_point accepts objectives up to this
  std::uint64_t seed = 0;
};

struct DecodeResult {
  Vec x;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

namespace detail {

// d h(embed(x)) / dx; the embedding part by central differences.
inline Mat decode_jacobian(const CicoNetwork& enc, const DecodeDomain& d, const Vec& x) {
  if (!d.embed) return enc.jacobian(x);
  const Vec u = d.embed(x);
  Mat Je(u.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(x[k]));
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    Je.col(k) = (d.embed(xp) - d.embed(xm)) / (2 * h);
  }
  return enc.jacobian(u) * Je;
}

// Projected subgradient descent. Steps are c / sqrt(t), capped by the Polyak
// step toward objective zero. Returns the best iterate.
template <class Objective>
DecodeResult descend(const Box& box, Vec x, Objective&& f, int iterations, double c, double stop_below) {
  DecodeResult best;
  Vec g;
  double v = f(x, g);
  best.x = x;
  best.objective = v;
  for (int t = 1; t <= iterations; ++t) {
    best.iterations = t;
    if (best.objective < stop_below) break;
    const double gn = g.squaredNorm();
    if (!(gn > 0)) break;
    const double step = std::min(c / std::sqrt(static_cast<double>(t)), v / gn);
    x = box.clamp(x - step * g);
    v = f(x, g);
    if (v < best.objective) {
      best.objective = v;
      best.x = x;
    }
  }
  return best;
}

inline double box_diagonal(const Box& b) { return (b.hi - b.lo).norm(); }

}  // namespace detail

// min over X of ||h(x) - z|| from one start.
inline DecodeResult decode_point_from(const CicoNetwork& enc, const Vec& z, const DecodeDomain& dom, const Vec& x0,
                                      const DecodeConfig& cfg = {}) {
  auto f = [&](const Vec& x, Vec& g) {
    const Vec r = enc.encode(dom.to_input(x)) - z;
    const double n = r.norm();
    g = n > 0 ? Vec(detail::decode_jacobian(enc, dom, x).transpose() * (r / n)) : Vec::Zero(x.size());
    return n;
  };
  const double c = cfg.step > 0 ? cfg.step : 0.1 * detail::box_diagonal(dom.box);
  auto r = detail::descend(dom.box, dom.box.clamp(x0), f, cfg.iterations, c, 0.1 * cfg.tolerance);
  r.converged = r.objective <= cfg.tolerance;
  return r;
}

// Multi-start decode; the first start is the box center.
inline DecodeResult decode_point(const CicoNetwork& enc, const Vec& z, const DecodeDomain& dom,
                                 const DecodeConfig& cfg = {}) {
  if (z.size() != enc.latent_dim()) throw DomainError("latent point has the wrong dimension");
  Rng rng(mix_seed(cfg.seed, 0xdec0de));
  DecodeResult best;
  best.objective = 1e300;
  for (int s = 0; s < std::max(1, cfg.starts); ++s) {
    const Vec x0 = s == 0 ? dom.box.center() : dom.box.sample(rng);
    auto r = decode_point_from(enc, z, dom, x0, cfg);
    if (r.objective < best.objective) best = std::move(r);
    if (best.converged && best.objective < 0.1 * cfg.tolerance) break;
  }
  if (!best.converged)
    throw NotConverged("decode objective " + std::to_string(best.objective) + " above tolerance " +
                       std::to_string(cfg.tolerance));
  return best;
}

// Fresh forward pass: h(x) inside the closed rectangle q.
inline bool encodes_into(const CicoNetwork& enc, const DecodeDomain& dom, const Vec& x, const Rect& q) {
  const Vec z = enc.encode(dom.to_input(x));
  return z[0] >= q.lo.x() && z[0] <= q.hi.x() && z[1] >= q.lo.y() && z[1] <= q.hi.y();
}

// max_j |h_j(x) - q_c_j| / r_q_j
inline double cell_ratio(const CicoNetwork& enc, const DecodeDomain& dom, const Vec& x, const Rect& q) {
  const Vec z = enc.encode(dom.to_input(x));
  const P2 c = q.center(), r = 0.5 * (q.hi - q.lo);
  return std::max(std::abs(z[0] - c.x()) / r.x(), std::abs(z[1] - c.y()) / r.y());
}

// Finds x in X with h(x) in the latent rectangle q. Starts from the decoder
// output of samples of q (random points of X without a decoder) and stops at
// the first iterate with ratio below one that a fresh forward pass confirms.
inline DecodeResult decode_cell(const CicoNetwork& enc, const Rect& q, const DecodeDomain& dom,
                                const DecoderNet* decoder, const DecodeConfig& cfg = {}) {
  if (enc.latent_dim() != 2) throw ConfigError("decode_cell needs a 2-dimensional latent space");
  const P2 c = q.center(), r = 0.5 * (q.hi - q.lo);
  if (!(r.x() > 0 && r.y() > 0)) throw DomainError("decode_cell needs a nondegenerate rectangle");
  Rng rng(mix_seed(cfg.seed, 0xce11));
  auto f = [&](const Vec& x, Vec& g) {
    const Vec z = enc.encode(dom.to_input(x));
    const double a = (z[0] - c.x()) / r.x(), b = (z[1] - c.y()) / r.y();
    const int j = std::abs(a) >= std::abs(b) ? 0 : 1;
    const double s = (j == 0 ? (a >= 0 ? 1.0 : -1.0) / r.x() : (b >= 0 ? 1.0 : -1.0) / r.y());
    g = s * detail::decode_jacobian(enc, dom, x).row(j).transpose();
    return std::max(std::abs(a), std::abs(b));
  };
  const double step = cfg.step > 0 ? cfg.step : 0.1 * detail::box_diagonal(dom.box);
  DecodeResult best;
  best.objective = 1e300;
  int used = 0;
  for (int s = 0; s < std::max(1, cfg.starts); ++s) {
    Vec zs(2);
    zs << uniform(rng, q.lo.x(), q.hi.x()), uniform(rng, q.lo.y(), q.hi.y());
    const Vec x0 = decoder ? dom.seed_from_input(decoder->net(zs)) : dom.box.sample(rng);
    // Polyak cap toward ratio 0.5 keeps steps proportionate near the cell
    auto shifted = [&](const Vec& x, Vec& g) { return f(x, g) - 0.5; };
    auto run = detail::descend(dom.box, x0, shifted, cfg.iterations, step, 0.5);
    used += run.iterations;
    run.objective += 0.5;
    if (run.objective < best.objective) best = run;
    if (best.objective < 1.0 && encodes_into(enc, dom, best.x, q)) {
      best.converged = true;
      best.iterations = used;
      return best;
    }
  }
  throw NotConverged("no start reached the cell (best ratio " + std::to_string(best.objective) + ")");
}

struct PreimageRegion {
  Box box;                // bounding box of accepted samples, inflated and clipped to X
  double epsilon = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
};

// Random-walk sampling of {x in X : h(x) in q} from the witnesses. The
// bounding box of accepted samples is inflated by the RandUp epsilon of the
// sample count in the raw space (Lipschitz 1, n to n).
inline PreimageRegion preimage_overapprox(const CicoNetwork& enc, const Rect& q, const DecodeDomain& dom,
                                          const std::vector<Vec>& witnesses, std::size_t N, double delta,
                                          std::uint64_t seed = 0) {
  if (witnesses.empty()) throw NoWitness("pre-image sampling needs at least one witness");
  for (const auto& w : witnesses)
    if (!dom.box.contains(w) || !encodes_into(enc, dom, w, q)) throw NoWitness("witness does not encode into the cell");
  Rng rng(mix_seed(seed, 0x9e1));
  const Eigen::Index n = dom.box.dim();
  std::vector<Vec> chain = witnesses;
  Vec lo = witnesses[0], hi = witnesses[0];
  double step = 0.05 * detail::box_diagonal(dom.box);
  PreimageRegion out;
  std::size_t window_acc = 0, window = 0;
  const std::size_t max_proposals = 50 * std::max<std::size_t>(N, 1);
  while (out.accepted < N && out.proposed < max_proposals) {
    Vec& cur = chain[out.proposed % chain.size()];
    Vec dir(n);
    for (Eigen::Index k = 0; k < n; ++k) dir[k] = gaussian(rng);
    const Vec cand = cur + uniform(rng, 0.0, step) * dir.normalized();
    ++out.proposed;
    ++window;
    if (dom.box.contains(cand) && encodes_into(enc, dom, cand, q)) {
      cur = cand;
      lo = lo.cwiseMin(cand);
      hi = hi.cwiseMax(cand);
      ++out.accepted;
      ++window_acc;
    }
    if (window == 200) {  // aim for roughly a quarter accepted
      const double rate = static_cast<double>(window_acc) / window;
      step *= rate > 0.25 ? 1.3 : 0.7;
      window = window_acc = 0;
    }
  }
  out.epsilon = out.accepted ? eps_randup(static_cast<double>(out.accepted), delta, 1.0, static_cast<int>(n),
                                          static_cast<int>(n))
                             : 0.0;
  out.box = Box((lo.array() - out.epsilon).matrix().cwiseMax(dom.box.lo),
                (hi.array() + out.epsilon).matrix().cwiseMin(dom.box.hi));
  return out;
}

}  // namespace lv
