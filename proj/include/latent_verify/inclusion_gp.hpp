#pragma once

#include "latent_verify/common.hpp"
#include "latent_verify/geometry.hpp"
#include "latent_verify/gp.hpp"
#include "latent_verify/nn.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace lv {

struct AugmentedDataset {
  Mat Z;   // latent inputs, columns
  Vec c;   // augmentation in [a, b]
  Mat Zp;  // latent successors, columns
  double a = 0.0;
  double b = 1.0;

  Eigen::Index size() const { return Z.cols(); }
  Mat inputs() const {
    Mat X(Z.rows() + 1, Z.cols());
    X << Z, c.transpose();
    return X;
  }
};

// Interval image of a box under a softplus MLP.
inline void mlp_interval(const Mlp& m, const Vec& lo, const Vec& hi, Vec& out_lo, Vec& out_hi) {
  Vec l = lo, h = hi;
  for (std::size_t k = 0; k < m.W.size(); ++k) {
    const Vec c = 0.5 * (l + h), r = 0.5 * (h - l);
    const Vec pc = m.W[k] * c + m.b[k].col(0), pr = m.W[k].cwiseAbs() * r;
    l = pc - pr;
    h = pc + pr;
    if (k + 1 < m.W.size() || m.softplus_output) {
      l = l.unaryExpr([](double z) { return softplus(z); });
      h = h.unaryExpr([](double z) { return softplus(z); });
    }
  }
  out_lo = l;
  out_hi = h;
}

// One GP per latent output dimension, optionally on learned features.
struct DimModel {
  bool deep = false;
  Mlp psi;
  ExactGp gp;
  double mu_norm = 0.0;  // RKHS norm of mu - mean
  double B = 0.0;
  double dstar = 0.0;

  Mat features(const Mat& inputs) const { return deep ? psi.forward(inputs) : inputs; }

  void refresh() {
    gp.fit();
    mu_norm = gp.mean_rkhs_norm();
  }
};

struct InclusionGpModel {
  AugmentedDataset data;
  std::vector<DimModel> dims;

  int latent_dim() const { return static_cast<int>(dims.size()); }
};

struct GpFitConfig {
  bool deep_kernel = false;
  int psi_width = 32;
  int psi_out = 2;
  int psi_steps = 200;
  double psi_lr = 5e-3;
  int c_rounds = 3;
  int c_starts = 9;
  int c_refine_steps = 12;
  HyperFitConfig hyper;
  int hyper_subset = 0;  // fit plain-kernel hyperparameters on the first n points; 0 uses all
  double jitter = 1e-6;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Hyperparameter and feature fitting

inline ExactGp make_gp(const Mat& F, const Vec& y, double jitter) {
  ExactGp gp;
  gp.X = F;
  gp.y = y;
  gp.mean = y.mean();
  gp.kernel.jitter = jitter;
  const double var = (y.array() - gp.mean).square().mean();
  gp.kernel.sf2 = std::max(var, 1e-6);
  gp.kernel.ell.resize(F.rows());
  for (Eigen::Index k = 0; k < F.rows(); ++k) {
    const double span = F.row(k).maxCoeff() - F.row(k).minCoeff();
    gp.kernel.ell[k] = std::max(0.3 * span, 1e-2);
  }
  return gp;
}

// Gradient of the log marginal likelihood w.r.t. the feature matrix.
inline Mat lml_feature_gradient(const ExactGp& gp) {
  const Eigen::Index M = gp.size();
  const Mat K = gp.kernel.cross(gp.X, gp.X);
  Mat Minv = gp.L.triangularView<Eigen::Lower>().solve(Mat::Identity(M, M));
  Minv = Minv.transpose() * Minv;
  const Mat P = (gp.w * gp.w.transpose() - Minv).cwiseProduct(K);
  const Vec rs = P.rowwise().sum();
  Mat G = -(gp.X * rs.asDiagonal() - gp.X * P);
  G.array().colwise() /= gp.kernel.ell.array().square();
  return G;
}

// Joint ascent on feature net weights and kernel hyperparameters.
inline void fit_deep_kernel(DimModel& dm, const Mat& inputs, const Vec& y, const GpFitConfig& cfg) {
  ad::Adam opt(cfg.psi_lr);
  const Eigen::Index d = dm.psi.out_dim();
  Mat theta(d + 1, 1);
  auto params = dm.psi.params();
  double best = -1e300;
  Mlp best_psi = dm.psi;
  SeKernel best_k = dm.gp.kernel;
  for (int s = 0; s < cfg.psi_steps; ++s) {
    dm.gp.X = dm.psi.forward(inputs);
    try {
      dm.gp.fit();
    } catch (const NotConverged&) {
      break;
    }
    const double lml = dm.gp.log_marginal_likelihood();
    if (std::isfinite(lml) && lml > best) {
      best = lml;
      best_psi = dm.psi;
      best_k = dm.gp.kernel;
    }
    const Mat G = lml_feature_gradient(dm.gp);
    ad::Tape t;
    MlpGrad g(dm.psi);
    const ad::Var F = mlp_forward(t, dm.psi, g, t.constant(inputs));
    const ad::Var obj = ad::mean(t, ad::mul(t, F, t.constant(-G * static_cast<double>(G.size()))));
    t.backward(obj);
    Mat hg(d + 1, 1);
    hg.col(0) = -dm.gp.lml_gradient();
    theta(0, 0) = std::log(dm.gp.kernel.sf2);
    for (Eigen::Index k = 0; k < d; ++k) theta(k + 1, 0) = std::log(dm.gp.kernel.ell[k]);
    auto ps = params;
    ps.push_back(&theta);
    auto gs = g.ptrs();
    gs.push_back(&hg);
    opt.step(ps, gs);
    dm.gp.kernel.sf2 = std::exp(std::clamp(theta(0, 0), std::log(cfg.hyper.min_sf2), std::log(cfg.hyper.max_sf2)));
    for (Eigen::Index k = 0; k < d; ++k)
      dm.gp.kernel.ell[k] = std::exp(std::clamp(theta(k + 1, 0), std::log(cfg.hyper.min_ell), std::log(cfg.hyper.max_ell)));
  }
  dm.psi = best_psi;
  dm.gp.kernel = best_k;
  dm.gp.X = dm.psi.forward(inputs);
}

inline void fit_dims(InclusionGpModel& m, const GpFitConfig& cfg) {
  const Mat inputs = m.data.inputs();
  const int np = static_cast<int>(m.data.Zp.rows());
  if (static_cast<int>(m.dims.size()) != np) m.dims.assign(np, DimModel{});
  for (int j = 0; j < np; ++j) {
    DimModel& dm = m.dims[j];
    const Vec y = m.data.Zp.row(j).transpose();
    const double jitter = cfg.jitter;
    dm.deep = cfg.deep_kernel;
    if (dm.deep) {
      if (dm.psi.W.empty()) {
        Rng rng(mix_seed(cfg.seed, 100 + j));
        dm.psi = Mlp({static_cast<int>(inputs.rows()), cfg.psi_width, cfg.psi_width, cfg.psi_out}, rng);
      }
      dm.gp = make_gp(dm.psi.forward(inputs), y, jitter);
      fit_hyperparameters(dm.gp, cfg.hyper);
      fit_deep_kernel(dm, inputs, y, cfg);
    } else {
      const bool warm = dm.gp.kernel.ell.size() == inputs.rows();
      const SeKernel prev = dm.gp.kernel;
      const Eigen::Index M = inputs.cols();
      if (cfg.hyper_subset > 0 && M > cfg.hyper_subset) {
        ExactGp sub = make_gp(inputs.leftCols(cfg.hyper_subset), y.head(cfg.hyper_subset), jitter);
        if (warm) sub.kernel = prev;
        fit_hyperparameters(sub, cfg.hyper);
        dm.gp = make_gp(inputs, y, jitter);
        dm.gp.kernel = sub.kernel;
        dm.gp.fit();
      } else {
        dm.gp = make_gp(inputs, y, jitter);
        if (warm) dm.gp.kernel = prev;
        fit_hyperparameters(dm.gp, cfg.hyper);
      }
    }
    dm.refresh();
  }
}

// ---------------------------------------------------------------------------
// Latent augmentation c

namespace detail {

// Leave-one-out predictive NLL of point i at augmentation value c, summed over dims.
struct LooState {
  std::vector<Mat> A;  // inverse Gram per dim
  std::vector<Vec> w;
};

inline LooState loo_state(const InclusionGpModel& m) {
  LooState s;
  for (const auto& dm : m.dims) {
    const Eigen::Index M = dm.gp.size();
    Mat Li = dm.gp.L.triangularView<Eigen::Lower>().solve(Mat::Identity(M, M));
    s.A.push_back(Li.transpose() * Li);
    s.w.push_back(dm.gp.w);
  }
  return s;
}

inline double loo_nll(const InclusionGpModel& m, const LooState& s, Eigen::Index i, double c) {
  Vec x(m.data.Z.rows() + 1);
  x << m.data.Z.col(i), c;
  double nll = 0.0;
  for (std::size_t j = 0; j < m.dims.size(); ++j) {
    const DimModel& dm = m.dims[j];
    const Vec f = dm.features(x);
    const Vec k = dm.gp.kernel.cross(dm.gp.X, f).col(0);
    const Mat& A = s.A[j];
    const double aii = A(i, i);
    const Vec wi = s.w[j] - A.col(i) * (s.w[j][i] / aii);
    const double mu = dm.gp.mean + k.dot(wi);
    const double aik = A.row(i).dot(k);
    const double var = std::max(dm.gp.kernel.sf2 - k.dot(A * k) + aik * aik / aii, 0.0) + dm.gp.kernel.jitter;
    const double r = m.data.Zp(j, i) - mu;
    nll += 0.5 * std::log(2 * std::numbers::pi * var) + 0.5 * r * r / var;
  }
  return nll;
}

}  // namespace detail

// Initial c from the first principal direction of the residual of a linear
// fit of successors on inputs, rescaled to [a, b].
inline Vec pca_init_c(const Mat& Z, const Mat& Zp, double a, double b) {
  const Eigen::Index n = Z.cols();
  Mat X(Z.rows() + 1, n);
  X << Z, Mat::Ones(1, n);
  const Mat coef = (X * X.transpose() + 1e-9 * Mat::Identity(X.rows(), X.rows())).ldlt().solve(X * Zp.transpose());
  Mat R = Zp - coef.transpose() * X;
  R = R.colwise() - R.rowwise().mean();
  Eigen::SelfAdjointEigenSolver<Mat> es(R * R.transpose());
  const Vec dir = es.eigenvectors().col(es.eigenvalues().size() - 1);
  Vec p = (dir.transpose() * R).transpose();
  const double lo = p.minCoeff(), hi = p.maxCoeff();
  if (hi - lo < 1e-12) return Vec::Constant(n, 0.5 * (a + b));
  return ((p.array() - lo) / (hi - lo) * (b - a) + a).matrix();
}

inline AugmentedDataset fit_latent_c(const Mat& Z, const Mat& Zp, double a, double b, const GpFitConfig& cfg,
                                     InclusionGpModel* fitted = nullptr) {
  if (Z.cols() == 0 || Z.cols() != Zp.cols()) throw Error("fit_latent_c: need matching nonempty pairs");
  if (!(a < b)) throw Error("fit_latent_c: need a < b");
  InclusionGpModel m;
  m.data.Z = Z;
  m.data.Zp = Zp;
  m.data.a = a;
  m.data.b = b;
  m.data.c = pca_init_c(Z, Zp, a, b);
  for (int round = 0; round < cfg.c_rounds; ++round) {
    fit_dims(m, cfg);
    const auto st = detail::loo_state(m);
    Vec next = m.data.c;
    for (Eigen::Index i = 0; i < Z.cols(); ++i) {
      auto f = [&](double c) { return detail::loo_nll(m, st, i, c); };
      // multi-start grid, then projected gradient steps from the best start
      double best_c = m.data.c[i], best = f(best_c);
      for (int s = 0; s < cfg.c_starts; ++s) {
        const double c = a + (b - a) * s / std::max(1, cfg.c_starts - 1);
        const double v = f(c);
        if (v < best) best = v, best_c = c;
      }
      double step = 0.5 * (b - a) / std::max(1, cfg.c_starts - 1);
      double c = best_c;
      for (int t = 0; t < cfg.c_refine_steps && step > 1e-6 * (b - a); ++t) {
        const double hd = 1e-5 * (b - a);
        const double g = (f(std::min(b, c + hd)) - f(std::max(a, c - hd))) / (std::min(b, c + hd) - std::max(a, c - hd));
        const double cand = std::clamp(c - (g > 0 ? step : -step), a, b);
        const double v = f(cand);
        if (v < best) {
          best = v;
          c = cand;
        } else {
          step *= 0.5;
        }
      }
      next[i] = c;
    }
    m.data.c = next;
  }
  fit_dims(m, cfg);
  if (fitted) *fitted = m;
  return m.data;
}

inline InclusionGpModel fit_inclusion_gp(const AugmentedDataset& data, const GpFitConfig& cfg) {
  for (Eigen::Index i = 0; i < data.c.size(); ++i)
    if (data.c[i] < data.a || data.c[i] > data.b) throw DomainError("c outside [a, b]");
  InclusionGpModel m;
  m.data = data;
  fit_dims(m, cfg);
  return m;
}

// ---------------------------------------------------------------------------
// Queries

struct GpPrediction {
  Vec mu;
  Vec sigma;
};

inline Vec augmented(const Vec& z, double c) {
  Vec x(z.size() + 1);
  x << z, c;
  return x;
}

inline GpPrediction gp_posterior(const InclusionGpModel& m, const Vec& z, double c) {
  GpPrediction p{Vec(m.latent_dim()), Vec(m.latent_dim())};
  const Vec x = augmented(z, c);
  for (int j = 0; j < m.latent_dim(); ++j) {
    const auto& dm = m.dims[j];
    const Posterior q = dm.gp.posterior(dm.features(x));
    p.mu[j] = q.mu;
    p.sigma[j] = q.sigma;
  }
  return p;
}

inline double bound_scale(const DimModel& dm) {
  if (dm.dstar < 0 || dm.dstar > dm.B * dm.B) throw DomainError("need 0 <= d* <= B^2");
  return std::sqrt(dm.B * dm.B - dm.dstar);
}

inline Vec error_bound(const InclusionGpModel& m, const Vec& z, double c) {
  const GpPrediction p = gp_posterior(m, z, c);
  Vec e(m.latent_dim());
  for (int j = 0; j < m.latent_dim(); ++j) e[j] = p.sigma[j] * bound_scale(m.dims[j]);
  return e;
}

struct RkhsConstants {
  double B = 0.0;
  double dstar = 0.0;
};

inline RkhsConstants rkhs_constants(double L_g, double diameter, double safety = 2.0) {
  if (!(L_g > 0)) throw DomainError("L_g must be positive");
  return {safety * L_g * diameter, 0.0};
}

inline void set_constants(InclusionGpModel& m, const RkhsConstants& k) {
  for (auto& dm : m.dims) {
    dm.B = k.B;
    dm.dstar = k.dstar;
  }
}

// ||mu||_H <= ||f||_H for the interpolant of f.
inline void floor_constants_at_mean_norm(InclusionGpModel& m) {
  for (auto& dm : m.dims) dm.B = std::max(dm.B, dm.mu_norm);
}

enum class RegionBoundMethod { SecondOrder, GridLipschitz };

struct RegionBoundConfig {
  RegionBoundMethod method = RegionBoundMethod::SecondOrder;
  int max_pieces = 64;   // branch-and-bound budget per output dimension
  double tolerance = 1e-4;
  int grid = 6;          // points per dimension for GridLipschitz
  int local_points = 64;  // sigma from the nearest training inputs; 0 uses all
};

struct DimRegionBound {
  double mu_lo = 0.0;
  double mu_hi = 0.0;
  double eps_bar = 0.0;
  double lo = 0.0;  // certified lower end of the image interval
  double hi = 0.0;  // certified upper end
};

namespace detail {

struct Piece {
  Vec lo, hi;
  BoxBound b;
  double center_up = 0.0, center_dn = 0.0;
  bool split_up = true, split_dn = true;
};

inline void feature_box(const DimModel& dm, const Vec& lo, const Vec& hi, Vec& flo, Vec& fhi) {
  if (dm.deep) {
    mlp_interval(dm.psi, lo, hi, flo, fhi);
  } else {
    flo = lo;
    fhi = hi;
  }
}

inline void evaluate(const DimModel& dm, const ExactGp* var_gp, double beta, std::vector<Piece>& ps,
                     std::size_t from) {
  const std::size_t n = ps.size() - from;
  if (n == 0) return;
  const Eigen::Index d = dm.gp.kernel.dim();
  Mat C(d, n), H(d, n), P(ps[from].lo.size(), n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec flo, fhi;
    feature_box(dm, ps[from + i].lo, ps[from + i].hi, flo, fhi);
    C.col(i) = 0.5 * (flo + fhi);
    H.col(i) = 0.5 * (fhi - flo);
    P.col(i) = 0.5 * (ps[from + i].lo + ps[from + i].hi);
  }
  const auto bb = second_order_bounds(dm.gp, dm.mu_norm, C, H, var_gp);
  Vec mu, sg;
  dm.gp.posterior_batch(dm.features(P), mu, sg);
  for (std::size_t i = 0; i < n; ++i) {
    ps[from + i].b = bb[i];
    ps[from + i].center_up = mu[i] + beta * sg[i];
    ps[from + i].center_dn = mu[i] - beta * sg[i];
  }
}

inline DimRegionBound branch_and_bound(const DimModel& dm, const Vec& lo, const Vec& hi, const RegionBoundConfig& cfg) {
  const double beta = bound_scale(dm);
  std::vector<Piece> ps(1);
  ps[0].lo = lo;
  ps[0].hi = hi;
  ExactGp local;
  const ExactGp* var_gp = nullptr;
  if (cfg.local_points > 0 && dm.gp.size() > cfg.local_points) {
    Vec flo, fhi;
    feature_box(dm, lo, hi, flo, fhi);
    local = nearest_subset(dm.gp, 0.5 * (flo + fhi), cfg.local_points);
    var_gp = &local;
  }
  evaluate(dm, var_gp, beta, ps, 0);
  // split where the box is widest in lengthscale units
  const Vec scale = dm.deep ? Vec((hi - lo).cwiseMax(1e-300)) : dm.gp.kernel.ell;
  while (static_cast<int>(ps.size()) < cfg.max_pieces) {
    double U = -1e300, Lo = 1e300, best_up = -1e300, best_dn = 1e300;
    for (const auto& p : ps) {
      U = std::max(U, p.b.mu_hi + beta * p.b.sigma_hi);
      Lo = std::min(Lo, p.b.mu_lo - beta * p.b.sigma_hi);
      best_up = std::max(best_up, p.center_up);
      best_dn = std::min(best_dn, p.center_dn);
    }
    if (U - best_up <= cfg.tolerance && best_dn - Lo <= cfg.tolerance) break;
    // split the pieces holding the loosest ends, a batch at a time
    std::vector<std::pair<double, std::size_t>> gaps;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const double gu = ps[i].b.mu_hi + beta * ps[i].b.sigma_hi - best_up;
      const double gd = best_dn - (ps[i].b.mu_lo - beta * ps[i].b.sigma_hi);
      const double g = std::max(gu, gd);
      if (g > cfg.tolerance) gaps.emplace_back(g, i);
    }
    if (gaps.empty()) break;
    std::sort(gaps.begin(), gaps.end(), std::greater<>());
    const std::size_t room = static_cast<std::size_t>(cfg.max_pieces) - ps.size();
    gaps.resize(std::min({gaps.size(), room, std::max<std::size_t>(1, ps.size() / 2)}));
    std::vector<Piece> fresh;
    std::vector<std::size_t> slots;
    for (const auto& [g, i] : gaps) {
      const Piece& p = ps[i];
      Eigen::Index k = 0;
      ((p.hi - p.lo).cwiseQuotient(scale)).maxCoeff(&k);
      if (p.hi[k] - p.lo[k] <= 0) continue;
      const double mid = 0.5 * (p.lo[k] + p.hi[k]);
      Piece a = p, b = p;
      a.hi[k] = mid;
      b.lo[k] = mid;
      fresh.push_back(a);
      fresh.push_back(b);
      slots.push_back(i);
    }
    if (fresh.empty()) break;
    evaluate(dm, var_gp, beta, fresh, 0);
    for (std::size_t t = 0; t < slots.size(); ++t) {
      ps[slots[t]] = fresh[2 * t];
      ps.push_back(fresh[2 * t + 1]);
    }
  }
  DimRegionBound r{1e300, -1e300, 0.0, 1e300, -1e300};
  for (const auto& p : ps) {
    r.mu_lo = std::min(r.mu_lo, p.b.mu_lo);
    r.mu_hi = std::max(r.mu_hi, p.b.mu_hi);
    r.eps_bar = std::max(r.eps_bar, beta * p.b.sigma_hi);
    r.lo = std::min(r.lo, p.b.mu_lo - beta * p.b.sigma_hi);
    r.hi = std::max(r.hi, p.b.mu_hi + beta * p.b.sigma_hi);
  }
  return r;
}

}  // namespace detail

// Certified bounds of mu, eps and the image interval over q x [u_lo, u_hi].
inline std::vector<DimRegionBound> bound_over_region(const InclusionGpModel& m, const Rect& q, double u_lo, double u_hi,
                                                     const RegionBoundConfig& cfg = {}) {
  Vec lo(3), hi(3);
  lo << q.lo.x(), q.lo.y(), u_lo;
  hi << q.hi.x(), q.hi.y(), u_hi;
  std::vector<DimRegionBound> out;
  for (const auto& dm : m.dims) {
    if (cfg.method == RegionBoundMethod::SecondOrder) {
      out.push_back(detail::branch_and_bound(dm, lo, hi, cfg));
    } else {
      if (dm.deep) throw ConfigError("grid-Lipschitz bounds need a plain SE kernel");
      const double beta = bound_scale(dm);
      const BoxBound b = grid_lipschitz_bound(dm.gp, dm.mu_norm, lo, hi, cfg.grid);
      out.push_back({b.mu_lo, b.mu_hi, beta * b.sigma_hi, b.mu_lo - beta * b.sigma_hi, b.mu_hi + beta * b.sigma_hi});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_inclusion_gp(std::ostream& os, const InclusionGpModel& m) {
  os << "inclusion-gp 1\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g %.17g", m.data.a, m.data.b);
  os << "range " << buf << "\n";
  write_matrix(os, m.data.Z);
  write_matrix(os, m.data.c);
  write_matrix(os, m.data.Zp);
  os << "dims " << m.dims.size() << "\n";
  for (const auto& dm : m.dims) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g", dm.B, dm.dstar);
    os << "deep " << (dm.deep ? 1 : 0) << "\nconstants " << buf << "\n";
    if (dm.deep) write_mlp(os, dm.psi);
    std::snprintf(buf, sizeof buf, "%.17g %.17g", dm.gp.kernel.sf2, dm.gp.kernel.jitter);
    os << "kernel " << buf << "\n";
    write_matrix(os, dm.gp.kernel.ell);
  }
}

inline InclusionGpModel read_inclusion_gp(std::istream& is) {
  expect_token(is, "inclusion-gp");
  expect_token(is, "1");
  InclusionGpModel m;
  std::string a, b;
  expect_token(is, "range");
  if (!(is >> a >> b)) throw FormatError("bad range");
  m.data.a = std::stod(a);
  m.data.b = std::stod(b);
  m.data.Z = read_matrix(is);
  m.data.c = read_matrix(is);
  m.data.Zp = read_matrix(is);
  expect_token(is, "dims");
  std::size_t n = 0;
  if (!(is >> n)) throw FormatError("bad dims");
  const Mat inputs = m.data.inputs();
  for (std::size_t j = 0; j < n; ++j) {
    DimModel dm;
    int deep = 0;
    expect_token(is, "deep");
    is >> deep;
    dm.deep = deep != 0;
    expect_token(is, "constants");
    if (!(is >> a >> b)) throw FormatError("bad constants");
    dm.B = std::stod(a);
    dm.dstar = std::stod(b);
    if (dm.deep) dm.psi = read_mlp(is);
    expect_token(is, "kernel");
    if (!(is >> a >> b)) throw FormatError("bad kernel");
    dm.gp.kernel.sf2 = std::stod(a);
    dm.gp.kernel.jitter = std::stod(b);
    dm.gp.kernel.ell = read_matrix(is).col(0);
    dm.gp.X = dm.features(inputs);
    dm.gp.y = m.data.Zp.row(j).transpose();
    dm.gp.mean = dm.gp.y.mean();
    dm.refresh();
    m.dims.push_back(std::move(dm));
  }
  return m;
}

}  // namespace lv
