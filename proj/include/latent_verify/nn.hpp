#pragma once

#include "latent_verify/autodiff.hpp"
#include "latent_verify/common.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace lv {

inline double softplus(double z, double beta = 1.0) {
  const double bz = beta * z;
  return (bz > 30.0 ? bz : std::log1p(std::exp(bz))) / beta;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Mat softplus(const Mat& X, double beta = 1.0) {
  return X.unaryExpr([beta](double z) { return softplus(z, beta); });
}

// ---------------------------------------------------------------------------
// Text serialization helpers; %.17g round-trips doubles exactly.

inline void write_matrix(std::ostream& os, const Mat& m) {
  os << m.rows() << " " << m.cols() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << (j ? " " : "") << buf;
    }
    os << "\n";
  }
}

inline Mat read_matrix(std::istream& is) {
  Eigen::Index r = 0, c = 0;
  if (!(is >> r >> c) || r < 0 || c < 0) throw FormatError("bad matrix header");
  Mat m(r, c);
  std::string tok;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      if (!(is >> tok)) throw FormatError("truncated matrix");
      m(i, j) = std::stod(tok);
    }
  return m;
}

inline void expect_token(std::istream& is, const std::string& want) {
  std::string got;
  if (!(is >> got) || got != want) throw FormatError("expected '" + want + "', got '" + got + "'");
}

// ---------------------------------------------------------------------------
// Plain feedforward net: softplus hidden layers, optional softplus output.

struct Mlp {
  std::vector<Mat> W;
  std::vector<Mat> b;  // column vectors
  bool softplus_output = false;

  Mlp() = default;
  Mlp(const std::vector<int>& widths, Rng& rng, bool softplus_out = false) : softplus_output(softplus_out) {
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      W.push_back(gaussian_matrix(rng, widths[k + 1], widths[k], 1.0 / std::sqrt(widths[k])));
      b.push_back(Mat::Zero(widths[k + 1], 1));
    }
  }

  Eigen::Index in_dim() const { return W.front().cols(); }
  Eigen::Index out_dim() const { return W.back().rows(); }

  Mat forward(const Mat& X) const {
    Mat a = X;
    for (std::size_t k = 0; k < W.size(); ++k) {
      Mat pre = (W[k] * a).colwise() + b[k].col(0);
      a = (k + 1 < W.size() || softplus_output) ? softplus(pre) : pre;
    }
    return a;
  }

  Vec operator()(const Vec& x) const { return forward(x); }

  std::vector<Mat*> params() {
    std::vector<Mat*> p;
    for (std::size_t k = 0; k < W.size(); ++k) {
      p.push_back(&W[k]);
      p.push_back(&b[k]);
    }
    return p;
  }
};

struct MlpGrad {
  std::vector<Mat> W;
  std::vector<Mat> b;

  explicit MlpGrad(const Mlp& m) {
    for (std::size_t k = 0; k < m.W.size(); ++k) {
      W.push_back(Mat::Zero(m.W[k].rows(), m.W[k].cols()));
      b.push_back(Mat::Zero(m.b[k].rows(), 1));
    }
  }
  void zero() {
    for (auto& w : W) w.setZero();
    for (auto& x : b) x.setZero();
  }
  std::vector<Mat*> ptrs() {
    std::vector<Mat*> p;
    for (std::size_t k = 0; k < W.size(); ++k) {
      p.push_back(&W[k]);
      p.push_back(&b[k]);
    }
    return p;
  }
};

inline ad::Var mlp_forward(ad::Tape& t, const Mlp& m, MlpGrad& g, ad::Var x) {
  ad::Var a = x;
  for (std::size_t k = 0; k < m.W.size(); ++k) {
    const ad::Var W = t.param(m.W[k], &g.W[k]);
    const ad::Var b = t.param(m.b[k], &g.b[k]);
    a = ad::add_bias(t, ad::matmul(t, W, a), b);
    if (k + 1 < m.W.size() || m.softplus_output) a = ad::softplus(t, a);
  }
  return a;
}

inline void write_mlp(std::ostream& os, const Mlp& m) {
  os << "mlp " << m.W.size() << " " << (m.softplus_output ? 1 : 0) << "\n";
  for (std::size_t k = 0; k < m.W.size(); ++k) {
    write_matrix(os, m.W[k]);
    write_matrix(os, m.b[k]);
  }
}

inline Mlp read_mlp(std::istream& is) {
  expect_token(is, "mlp");
  std::size_t n = 0;
  int sp = 0;
  if (!(is >> n >> sp)) throw FormatError("bad mlp header");
  Mlp m;
  m.softplus_output = sp != 0;
  for (std::size_t k = 0; k < n; ++k) {
    m.W.push_back(read_matrix(is));
    m.b.push_back(read_matrix(is));
  }
  return m;
}

}  // namespace lv
