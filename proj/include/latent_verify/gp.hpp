#pragma once

#include "latent_verify/autodiff.hpp"
#include "latent_verify/common.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace lv {

struct SeKernel {
  double sf2 = 1.0;
  Vec ell;  // per input dimension
  double jitter = 1e-6;

  Eigen::Index dim() const { return ell.size(); }

  void validate() const {
    if (!(sf2 > 0) || !(jitter > 0) || ell.size() == 0 || (ell.array() <= 0).any())
      throw DomainError("SE kernel parameters must be positive");
  }

  double operator()(const Vec& x, const Vec& y) const {
    return sf2 * std::exp(-0.5 * (x - y).cwiseQuotient(ell).squaredNorm());
  }

  // Columns of A against columns of B.
  // Squared distances summed from coordinate differences.
  Mat cross(const Mat& A, const Mat& B) const {
    const Mat At = (A.array().colwise() / ell.array()).matrix().transpose();
    const Mat Bs = B.array().colwise() / ell.array();
    Mat D = Mat::Zero(A.cols(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j)
      for (Eigen::Index k = 0; k < At.cols(); ++k) D.col(j).array() += (At.col(k).array() - Bs(k, j)).square();
    return sf2 * (-0.5 * D.array()).exp().matrix();
  }
};

struct Posterior {
  double mu = 0.0;
  double sigma = 0.0;
};

// Exact GP regression with a constant prior mean.
struct ExactGp {
  SeKernel kernel;
  Mat X;  // inputs as columns
  Vec y;  // raw outputs
  double mean = 0.0;

  Mat L;  // Cholesky factor of K + jitter I
  Vec w;  // (K + jitter I)^{-1} (y - mean)

  Eigen::Index size() const { return X.cols(); }

  void fit() {
    kernel.validate();
    if (X.cols() != y.size() || X.rows() != kernel.dim()) throw Error("ExactGp: shape mismatch");
    Mat K = kernel.cross(X, X);
    K.diagonal().array() += kernel.jitter;
    Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) throw NotConverged("Gram matrix is not positive definite");
    L = llt.matrixL();
    const Vec r0 = (y.array() - mean).matrix();
    w = llt.solve(r0);
    // Two refinement steps with the residual accumulated in extended precision.
    for (int it = 0; it < 2; ++it) {
      Vec r(w.size());
      for (Eigen::Index i = 0; i < K.rows(); ++i) {
        long double acc = r0[i];
        for (Eigen::Index j = 0; j < K.cols(); ++j) acc -= static_cast<long double>(K(i, j)) * w[j];
        r[i] = static_cast<double>(acc);
      }
      w += llt.solve(r);
    }
  }

  Posterior posterior(const Vec& x) const {
    const Vec k = kernel.cross(X, x).col(0);
    const Vec v = L.triangularView<Eigen::Lower>().solve(k);
    return {mean + k.dot(w), std::sqrt(std::max(0.0, kernel.sf2 - v.squaredNorm()))};
  }

  // mu and sigma at each column.
  void posterior_batch(const Mat& Xq, Vec& mu, Vec& sigma) const {
    const Mat Kq = kernel.cross(X, Xq);
    mu = (Kq.transpose() * w).array() + mean;
    const Mat V = L.triangularView<Eigen::Lower>().solve(Kq);
    sigma = (kernel.sf2 - V.colwise().squaredNorm().array()).max(0.0).sqrt().matrix().transpose();
  }

  // RKHS norm of the posterior mean minus its constant.
  double mean_rkhs_norm() const {
    const Mat K = kernel.cross(X, X);
    return std::sqrt(std::max(0.0, w.dot(K * w)));
  }

  double log_marginal_likelihood() const {
    return -0.5 * (y.array() - mean).matrix().dot(w) - L.diagonal().array().log().sum() -
           0.5 * size() * std::log(2 * std::numbers::pi);
  }

  // Gradient of the log marginal likelihood w.r.t. (log sf2, log ell_1..d).
  Vec lml_gradient() const {
    const Eigen::Index M = size(), d = kernel.dim();
    const Mat K = kernel.cross(X, X);
    Mat Minv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(M, M));
    Minv = Minv.transpose() * Minv;
    const Mat W = w * w.transpose() - Minv;
    Vec g(d + 1);
    g[0] = 0.5 * W.cwiseProduct(K).sum();
    for (Eigen::Index k = 0; k < d; ++k) {
      const Vec xs = X.row(k).transpose() / kernel.ell[k];
      Mat D2 = (-2.0 * xs * xs.transpose()).colwise() + xs.cwiseAbs2();
      D2.rowwise() += xs.cwiseAbs2().transpose();
      g[k + 1] = 0.5 * W.cwiseProduct(K).cwiseProduct(D2).sum();
    }
    return g;
  }
};

struct HyperFitConfig {
  int steps = 150;
  double lr = 0.05;
  double min_ell = 1e-3;
  double max_ell = 1e3;
  double min_sf2 = 1e-8;
  double max_sf2 = 1e3;
};

// Adam ascent on the log marginal likelihood in log-parameter space.
inline double fit_hyperparameters(ExactGp& gp, const HyperFitConfig& cfg = {}) {
  const Eigen::Index d = gp.kernel.dim();
  Mat theta(d + 1, 1), grad(d + 1, 1);
  theta(0, 0) = std::log(gp.kernel.sf2);
  for (Eigen::Index k = 0; k < d; ++k) theta(k + 1, 0) = std::log(gp.kernel.ell[k]);
  auto apply = [&] {
    theta(0, 0) = std::clamp(theta(0, 0), std::log(cfg.min_sf2), std::log(cfg.max_sf2));
    gp.kernel.sf2 = std::exp(theta(0, 0));
    for (Eigen::Index k = 0; k < d; ++k) {
      theta(k + 1, 0) = std::clamp(theta(k + 1, 0), std::log(cfg.min_ell), std::log(cfg.max_ell));
      gp.kernel.ell[k] = std::exp(theta(k + 1, 0));
    }
  };
  ad::Adam opt(cfg.lr);
  apply();
  gp.fit();
  Mat best = theta;
  double best_lml = gp.log_marginal_likelihood();
  for (int s = 0; s < cfg.steps; ++s) {
    grad = -gp.lml_gradient();
    opt.step({&theta}, {&grad});
    apply();
    try {
      gp.fit();
    } catch (const NotConverged&) {
      continue;
    }
    const double lml = gp.log_marginal_likelihood();
    if (std::isfinite(lml) && lml > best_lml) {
      best_lml = lml;
      best = theta;
    }
  }
  theta = best;
  apply();
  gp.fit();
  return best_lml;
}

// ---------------------------------------------------------------------------
// Certified bounds of mu and sigma over an axis-aligned box of kernel inputs.
//
// Both use the representer form: mu = <f, k_x> with f in the RKHS, and
// sigma(x) = min_a ||(k_x - sum a_i k_{x_i}, sqrt(jitter) a)||.

struct BoxBound {
  double mu_lo = 0.0;
  double mu_hi = 0.0;
  double sigma_hi = 0.0;
};

// Per-center quantities for the second-order bound.
struct CenterTerms {
  Vec mu;       // per center
  Mat dmu;      // d x centers
  Vec s2;       // posterior variance
  Mat ab;       // d x centers: (L^-1 k_c) . (L^-1 d_k k_c)
  std::vector<Mat> G;  // d x d per center
};

// d/dc_k k(c, x_i) = -k(c, x_i) (c_k - x_ik) / ell_k^2, for every center column.
inline Mat kernel_gradient(const ExactGp& gp, const Mat& Kc, const Mat& C, Eigen::Index k) {
  Mat Dk(gp.size(), C.cols());
  const double il2 = 1.0 / (gp.kernel.ell[k] * gp.kernel.ell[k]);
  for (Eigen::Index j = 0; j < C.cols(); ++j)
    Dk.col(j) = -Kc.col(j).cwiseProduct((C(k, j) - gp.X.row(k).transpose().array()).matrix()) * il2;
  return Dk;
}

// The mean terms come from gp, the variance terms from var_gp, which must
// share the kernel and condition on a subset of gp's inputs.
inline CenterTerms center_terms(const ExactGp& gp, const Mat& C, const ExactGp& var_gp) {
  const Eigen::Index d = gp.kernel.dim(), n = C.cols();
  const Mat Kc = gp.kernel.cross(gp.X, C);  // M x n
  CenterTerms t;
  t.mu = (Kc.transpose() * gp.w).array() + gp.mean;
  t.dmu.resize(d, n);
  t.ab.resize(d, n);
  t.G.assign(n, Mat(d, d));
  for (Eigen::Index k = 0; k < d; ++k) t.dmu.row(k) = (kernel_gradient(gp, Kc, C, k).transpose() * gp.w).transpose();
  const Mat Kv = &var_gp == &gp ? Kc : var_gp.kernel.cross(var_gp.X, C);
  const auto Lt = var_gp.L.triangularView<Eigen::Lower>();
  const Mat A = Lt.solve(Kv);
  t.s2 = (var_gp.kernel.sf2 - A.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  std::vector<Mat> B(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    B[k] = Lt.solve(kernel_gradient(var_gp, Kv, C, k));
    t.ab.row(k) = A.cwiseProduct(B[k]).colwise().sum();
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < d; ++k)
      for (Eigen::Index l = k; l < d; ++l) {
        const double prior = k == l ? gp.kernel.sf2 / (gp.kernel.ell[k] * gp.kernel.ell[k]) : 0.0;
        t.G[j](k, l) = t.G[j](l, k) = prior - B[k].col(j).dot(B[l].col(j));
      }
  return t;
}

// Conditioning on fewer points never lowers the posterior variance, so a GP
// on the K inputs nearest to x (in lengthscale units) bounds sigma from above.
inline ExactGp nearest_subset(const ExactGp& gp, const Vec& x, Eigen::Index K) {
  const Mat D = (gp.X.colwise() - x).array().colwise() / gp.kernel.ell.array();
  const Vec d2 = D.colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> idx(gp.size());
  for (Eigen::Index i = 0; i < gp.size(); ++i) idx[i] = i;
  K = std::min(K, gp.size());
  std::partial_sort(idx.begin(), idx.begin() + K, idx.end(), [&](auto a, auto b) { return d2[a] < d2[b]; });
  idx.resize(K);
  std::sort(idx.begin(), idx.end());
  ExactGp s;
  s.kernel = gp.kernel;
  s.X.resize(gp.X.rows(), K);
  for (Eigen::Index i = 0; i < K; ++i) s.X.col(i) = gp.X.col(idx[i]);
  s.y = Vec::Zero(K);
  s.fit();
  return s;
}

// Second-order bound for boxes given by center columns C and half-width columns H.
// mu_norm is the RKHS norm of mu - mean. var_gp (default gp) supplies sigma.
inline std::vector<BoxBound> second_order_bounds(const ExactGp& gp, double mu_norm, const Mat& C, const Mat& H,
                                                 const ExactGp* var_gp = nullptr) {
  const CenterTerms t = center_terms(gp, C, var_gp ? *var_gp : gp);
  const double sf = std::sqrt(gp.kernel.sf2);
  std::vector<BoxBound> out(C.cols());
  for (Eigen::Index j = 0; j < C.cols(); ++j) {
    const Vec h = H.col(j);
    const double r2 = h.cwiseQuotient(gp.kernel.ell).squaredNorm();
    const double rem = 0.5 * std::sqrt(3.0) * sf * r2;
    const double lin = t.dmu.col(j).cwiseAbs().dot(h);
    out[j].mu_lo = t.mu[j] - lin - mu_norm * rem;
    out[j].mu_hi = t.mu[j] + lin + mu_norm * rem;
    const double s2 = t.s2[j] + 2.0 * t.ab.col(j).cwiseAbs().dot(h) + h.dot(t.G[j].cwiseAbs() * h);
    // sigma is also 1-Lipschitz in the RKHS distance of k_x
    const double first = std::sqrt(t.s2[j]) + sf * std::sqrt(r2);
    out[j].sigma_hi = std::min(std::sqrt(std::max(0.0, s2)) + rem, first);
    out[j].sigma_hi = std::min(out[j].sigma_hi, sf);
  }
  return out;
}

// Grid evaluation refined with Lipschitz constants: n points per dimension at
// sub-box centers, extremum widened by L times the half diagonal (in
// lengthscale units).
inline BoxBound grid_lipschitz_bound(const ExactGp& gp, double mu_norm, const Vec& lo, const Vec& hi, int n) {
  const Eigen::Index d = lo.size();
  long total = 1;
  for (Eigen::Index k = 0; k < d; ++k) total *= n;
  Mat P(d, total);
  for (long t = 0; t < total; ++t) {
    long r = t;
    for (Eigen::Index k = 0; k < d; ++k) {
      const long i = r % n;
      r /= n;
      P(k, t) = lo[k] + (hi[k] - lo[k]) * (i + 0.5) / n;
    }
  }
  Vec mu, sigma;
  gp.posterior_batch(P, mu, sigma);
  const double half_diag = (0.5 * (hi - lo) / n).cwiseQuotient(gp.kernel.ell).norm();
  const double sf = std::sqrt(gp.kernel.sf2);
  BoxBound b;
  b.mu_lo = mu.minCoeff() - mu_norm * sf * half_diag;
  b.mu_hi = mu.maxCoeff() + mu_norm * sf * half_diag;
  b.sigma_hi = std::min(sf, sigma.maxCoeff() + sf * half_diag);
  return b;
}

}  // namespace lv
