#pragma once

#include "latent_verify/common.hpp"

#include <functional>
#include <vector>

namespace lv::ad {

// Reverse-mode tape over dense matrices. Batches are stored column-wise.
class Tape {
 public:
  using Var = int;

  Var constant(Mat value) { return push(std::move(value), {}); }

  // Gradient of the final scalar w.r.t. this leaf is accumulated into *sink.
  Var param(const Mat& value, Mat* sink) {
    const Var v = push(value, {});
    sinks_.emplace_back(v, sink);
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v].value; }
  const Mat& grad(Var v) const { return nodes_[v].grad; }

  Var push(Mat value, std::function<void(Tape&, Var)> back) {
    nodes_.push_back({std::move(value), Mat(), std::move(back)});
    return static_cast<Var>(nodes_.size() - 1);
  }

  Mat& g(Var v) {
    Node& n = nodes_[v];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(Var v) const { return nodes_[v].grad.size() != 0; }

  void backward(Var out) {
    if (value(out).size() != 1) throw Error("Tape::backward: output must be scalar");
    g(out)(0, 0) = 1.0;
    for (Var i = out; i >= 0; --i) {
      if (!has_grad(i) || !nodes_[i].back) continue;
      nodes_[i].back(*this, i);
    }
    for (auto& [v, sink] : sinks_)
      if (has_grad(v)) *sink += nodes_[v].grad;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, Var)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<Var, Mat*>> sinks_;
};

using Var = Tape::Var;

inline Var matmul(Tape& t, Var a, Var b) {
  return t.push(t.value(a) * t.value(b), [a, b](Tape& t, Var self) {
    const Mat& G = t.grad(self);
    t.g(a) += G * t.value(b).transpose();
    t.g(b) += t.value(a).transpose() * G;
  });
}

inline Var add(Tape& t, Var a, Var b) {
  return t.push(t.value(a) + t.value(b), [a, b](Tape& t, Var self) {
    t.g(a) += t.grad(self);
    t.g(b) += t.grad(self);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  return t.push(t.value(a) - t.value(b), [a, b](Tape& t, Var self) {
    t.g(a) += t.grad(self);
    t.g(b) -= t.grad(self);
  });
}

inline Var mul(Tape& t, Var a, Var b) {
  return t.push(t.value(a).cwiseProduct(t.value(b)), [a, b](Tape& t, Var self) {
    const Mat& G = t.grad(self);
    t.g(a) += G.cwiseProduct(t.value(b));
    t.g(b) += G.cwiseProduct(t.value(a));
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.push(s * t.value(a), [a, s](Tape& t, Var self) { t.g(a) += s * t.grad(self); });
}

// X (d x B) plus column vector b (d x 1) broadcast over columns.
inline Var add_bias(Tape& t, Var x, Var b) {
  Mat v = t.value(x).colwise() + t.value(b).col(0);
  return t.push(std::move(v), [x, b](Tape& t, Var self) {
    t.g(x) += t.grad(self);
    t.g(b) += t.grad(self).rowwise().sum();
  });
}

inline Var softplus(Tape& t, Var x, double beta = 1.0) {
  const Mat& X = t.value(x);
  Mat v = X.unaryExpr([beta](double z) {
    const double bz = beta * z;
    return (bz > 30.0 ? bz : std::log1p(std::exp(bz))) / beta;
  });
  return t.push(std::move(v), [x, beta](Tape& t, Var self) {
    const Mat s = t.value(x).unaryExpr([beta](double z) { return 1.0 / (1.0 + std::exp(-beta * z)); });
    t.g(x) += t.grad(self).cwiseProduct(s);
  });
}

inline Var relu(Tape& t, Var x) {
  return t.push(t.value(x).cwiseMax(0.0), [x](Tape& t, Var self) {
    t.g(x) += t.grad(self).cwiseProduct(t.value(x).unaryExpr([](double z) { return z > 0 ? 1.0 : 0.0; }));
  });
}

inline Var vexp(Tape& t, Var x) {
  return t.push(t.value(x).array().exp().matrix(), [x](Tape& t, Var self) {
    t.g(x) += t.grad(self).cwiseProduct(t.value(self));
  });
}

inline Var square(Tape& t, Var x) {
  return t.push(t.value(x).cwiseAbs2(), [x](Tape& t, Var self) {
    t.g(x) += 2.0 * t.grad(self).cwiseProduct(t.value(x));
  });
}

inline Var vabs(Tape& t, Var x) {
  return t.push(t.value(x).cwiseAbs(), [x](Tape& t, Var self) {
    t.g(x) += t.grad(self).cwiseProduct(t.value(x).unaryExpr([](double z) { return z > 0 ? 1.0 : z < 0 ? -1.0 : 0.0; }));
  });
}

// Per-column Euclidean norm: (d x B) -> (1 x B). Zero columns get zero gradient.
inline Var col_norm(Tape& t, Var x) {
  Mat v = t.value(x).colwise().norm();
  return t.push(std::move(v), [x](Tape& t, Var self) {
    const Mat& X = t.value(x);
    const Mat& n = t.value(self);
    Mat& gx = t.g(x);
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (n(0, j) > 0) gx.col(j) += (t.grad(self)(0, j) / n(0, j)) * X.col(j);
  });
}

// Sum over rows: (d x B) -> (1 x B).
inline Var col_sum(Tape& t, Var x) {
  Mat v = t.value(x).colwise().sum();
  return t.push(std::move(v), [x](Tape& t, Var self) {
    t.g(x).rowwise() += t.grad(self).row(0);
  });
}

inline Var mean(Tape& t, Var x) {
  const double n = static_cast<double>(t.value(x).size());
  Mat v(1, 1);
  v(0, 0) = t.value(x).mean();
  return t.push(std::move(v), [x, n](Tape& t, Var self) { t.g(x).array() += t.grad(self)(0, 0) / n; });
}

inline Var rows(Tape& t, Var x, Eigen::Index r0, Eigen::Index n) {
  Mat v = t.value(x).middleRows(r0, n);
  return t.push(std::move(v), [x, r0, n](Tape& t, Var self) { t.g(x).middleRows(r0, n) += t.grad(self); });
}

inline Var cols(Tape& t, Var x, Eigen::Index c0, Eigen::Index n) {
  Mat v = t.value(x).middleCols(c0, n);
  return t.push(std::move(v), [x, c0, n](Tape& t, Var self) { t.g(x).middleCols(c0, n) += t.grad(self); });
}

inline Var vstack(Tape& t, Var a, Var b) {
  const Mat& A = t.value(a);
  const Mat& B = t.value(b);
  Mat v(A.rows() + B.rows(), A.cols());
  v << A, B;
  const Eigen::Index ra = A.rows();
  return t.push(std::move(v), [a, b, ra](Tape& t, Var self) {
    const Mat& G = t.grad(self);
    t.g(a) += G.topRows(ra);
    t.g(b) += G.bottomRows(G.rows() - ra);
  });
}

inline Var hstack(Tape& t, Var a, Var b) {
  const Mat& A = t.value(a);
  const Mat& B = t.value(b);
  Mat v(A.rows(), A.cols() + B.cols());
  v << A, B;
  const Eigen::Index ca = A.cols();
  return t.push(std::move(v), [a, b, ca](Tape& t, Var self) {
    const Mat& G = t.grad(self);
    t.g(a) += G.leftCols(ca);
    t.g(b) += G.rightCols(G.cols() - ca);
  });
}

inline Var weighted_sum(Tape& t, const std::vector<std::pair<double, Var>>& terms) {
  Mat v = Mat::Zero(1, 1);
  for (const auto& [w, x] : terms) v(0, 0) += w * t.value(x)(0, 0);
  return t.push(std::move(v), [terms](Tape& t, Var self) {
    for (const auto& [w, x] : terms) t.g(x)(0, 0) += w * t.grad(self)(0, 0);
  });
}

// Adam over a fixed list of parameter matrices.
class Adam {
 public:
  explicit Adam(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void step(const std::vector<Mat*>& params, const std::vector<Mat*>& grads) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Mat::Zero(p->rows(), p->cols()));
        v_.push_back(Mat::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1 - b1_) * *grads[i];
      v_[i] = b2_ * v_[i] + (1 - b2_) * grads[i]->cwiseAbs2();
      params[i]->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace lv::ad
