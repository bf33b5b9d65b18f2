#pragma once

#include "latent_verify/autodiff.hpp"
#include "latent_verify/common.hpp"
#include "latent_verify/geometry.hpp"
#include "latent_verify/nn.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace lv {

struct CicoLayer {
  Mat W;
  Mat b;  // column
  bool nonneg = false;
};

// Input skip: adds W * x_net to the pre-activation of layer `target`.
struct CicoSkip {
  int target = 1;
  Mat W;
};

// Input-convex encoder. Latent coordinates are the passthrough inputs
// (identity) followed by the outputs of the convex network applied to the
// remaining inputs.
struct CicoNetwork {
  int input_dim = 0;
  std::vector<int> passthrough;
  std::vector<int> net_inputs;
  std::vector<CicoLayer> layers;
  std::vector<CicoSkip> skips;
  double beta = 1.0;
  // VAE log-variance head over the net outputs; used only during training.
  Mat logvar_W;
  Mat logvar_b;

  int net_out_dim() const { return static_cast<int>(layers.back().W.rows()); }
  int latent_dim() const { return static_cast<int>(passthrough.size()) + net_out_dim(); }

  Mat gather(const Mat& X, const std::vector<int>& idx) const {
    Mat out(idx.size(), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
    return out;
  }

  Mat net_forward(const Mat& Xn) const {
    Mat a = Xn;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      Mat pre = (layers[k].W * a).colwise() + layers[k].b.col(0);
      for (const auto& s : skips)
        if (s.target == static_cast<int>(k)) pre += s.W * Xn;
      a = k + 1 < layers.size() ? softplus(pre, beta) : pre;
    }
    return a;
  }

  Mat encode_batch(const Mat& X) const {
    Mat Z(latent_dim(), X.cols());
    const auto np = static_cast<Eigen::Index>(passthrough.size());
    if (np) Z.topRows(np) = gather(X, passthrough);
    Z.bottomRows(net_out_dim()) = net_forward(gather(X, net_inputs));
    return Z;
  }

  Vec encode(const Vec& x) const { return encode_batch(x); }

  // Analytic Jacobian d h / d x, shape n_p x n_x.
  Mat jacobian(const Vec& x) const {
    const Vec xn = gather(x, net_inputs);
    const auto nin = static_cast<Eigen::Index>(net_inputs.size());
    Vec a = xn;
    Mat dA = Mat::Identity(nin, nin);
    Mat dPre;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      Vec pre = layers[k].W * a + layers[k].b.col(0);
      dPre = layers[k].W * dA;
      for (const auto& s : skips)
        if (s.target == static_cast<int>(k)) {
          pre += s.W * xn;
          dPre += s.W;
        }
      if (k + 1 < layers.size()) {
        const Vec d = (beta * pre).unaryExpr([](double z) { return sigmoid(z); });
        a = pre.unaryExpr([this](double z) { return softplus(z, beta); });
        dA = d.asDiagonal() * dPre;
      }
    }
    Mat J = Mat::Zero(latent_dim(), input_dim);
    for (std::size_t i = 0; i < passthrough.size(); ++i) J(i, passthrough[i]) = 1.0;
    const auto np = static_cast<Eigen::Index>(passthrough.size());
    for (std::size_t j = 0; j < net_inputs.size(); ++j) J.block(np, net_inputs[j], net_out_dim(), 1) = dPre.col(j);
    return J;
  }
};

inline std::vector<int> complement_indices(int n, const std::vector<int>& taken) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (std::find(taken.begin(), taken.end(), i) == taken.end()) out.push_back(i);
  return out;
}

// hidden: widths of the hidden layers; the output layer adds the last one.
inline CicoNetwork make_cico(int input_dim, int latent_dim, const std::vector<int>& passthrough,
                             const std::vector<int>& hidden, int skip_target, Rng& rng) {
  CicoNetwork net;
  net.input_dim = input_dim;
  net.passthrough = passthrough;
  net.net_inputs = complement_indices(input_dim, passthrough);
  const int nin = static_cast<int>(net.net_inputs.size());
  const int nout = latent_dim - static_cast<int>(passthrough.size());
  if (nout < 1 || nin < 1) throw ConfigError("encoder needs at least one net input and output");
  std::vector<int> widths = {nin};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(nout);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    CicoLayer L;
    const int fan_in = widths[k];
    if (k == 0) {
      L.W = gaussian_matrix(rng, widths[k + 1], fan_in, 1.0 / std::sqrt(fan_in));
    } else {
      L.W.resize(widths[k + 1], fan_in);
      for (Eigen::Index i = 0; i < L.W.size(); ++i) L.W.data()[i] = uniform(rng, 0.0, 2.0 / fan_in);
      L.nonneg = true;
    }
    L.b = Mat::Zero(widths[k + 1], 1);
    net.layers.push_back(std::move(L));
  }
  if (skip_target >= 1 && skip_target < static_cast<int>(net.layers.size())) {
    const int rows = widths[skip_target + 1];
    if (rows < nin) throw ConfigError("skip target layer narrower than the net input");
    net.skips.push_back({skip_target, gaussian_matrix(rng, rows, nin, 0.1 / std::sqrt(nin))});
  }
  net.logvar_W = Mat::Zero(nout, nin);
  net.logvar_b = Mat::Constant(nout, 1, -4.0);
  return net;
}

// Pairs first-layer rows as (w, -w) with shared downstream weights, so the
// initial network is even in its inputs with the minimum at the origin.
// first_layer_gain sharpens the softplus kinks.
inline void mirror_init(CicoNetwork& net, double first_layer_gain) {
  auto& L0 = net.layers[0];
  const Eigen::Index h = L0.W.rows() / 2;
  L0.W *= first_layer_gain;
  L0.W.bottomRows(h) = -L0.W.topRows(h);
  L0.b.bottomRows(h) = L0.b.topRows(h);
  if (net.layers.size() > 1) net.layers[1].W.middleCols(h, h) = net.layers[1].W.leftCols(h);
}

// Radial start: first-layer rows are mirrored unit directions (evenly spaced
// for two net inputs, random otherwise) times gain, the next layer averages
// them with relative jitter, hidden biases are set and skips scaled down.
// The result is close to a cone in the net inputs with its tip at `tip`
// (the origin when empty). axis_scale weights the net inputs.
inline void radial_init(CicoNetwork& net, double gain, double jitter, double hidden_bias, double skip_scale,
                        Rng& rng, const Vec& tip = Vec(), const Vec& axis_scale = Vec()) {
  auto& L0 = net.layers[0];
  const Eigen::Index h = L0.W.rows() / 2, nin = L0.W.cols();
  for (Eigen::Index k = 0; k < h; ++k) {
    Vec d(nin);
    if (nin == 2) {
      const double a = std::numbers::pi * (k + 0.5) / h;
      d << std::cos(a), std::sin(a);
    } else {
      for (Eigen::Index j = 0; j < nin; ++j) d[j] = gaussian(rng);
      d.normalize();
    }
    if (axis_scale.size()) d = d.cwiseProduct(axis_scale);
    L0.W.row(k) = gain * d.transpose();
  }
  L0.W.bottomRows(h) = -L0.W.topRows(h);
  L0.b = tip.size() ? Mat(-L0.W * tip) : Mat::Zero(L0.W.rows(), 1);
  if (net.layers.size() > 1) {
    auto& L1 = net.layers[1];
    const Eigen::Index fi = L1.W.cols();
    for (Eigen::Index i = 0; i < L1.W.rows(); ++i)
      for (Eigen::Index j = 0; j < fi; ++j) L1.W(i, j) = (1.0 + jitter * uniform(rng, -1.0, 1.0)) / fi;
    L1.W.middleCols(h, h) = L1.W.leftCols(h);
  }
  for (auto& s : net.skips) s.W *= skip_scale;
  for (std::size_t l = 1; l + 1 < net.layers.size(); ++l) net.layers[l].b.setConstant(hidden_bias);
}

// Rescales the output layer so each net output has the given standard
// deviation and zero mean over X.
inline void standardize_output(CicoNetwork& net, const Mat& X, double target_std) {
  const Mat Xn = net.gather(X, net.net_inputs);
  Mat Z = net.net_forward(Xn);
  auto& L = net.layers.back();
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double mu = Z.row(i).mean();
    const double sd = std::sqrt((Z.row(i).array() - mu).square().mean());
    if (sd > 0) {
      L.W.row(i) *= target_std / sd;
      L.b(i, 0) *= target_std / sd;
    }
  }
  for (auto& s : net.skips)
    if (s.target + 1 == static_cast<int>(net.layers.size())) s.W *= 0.0;
  Z = net.net_forward(Xn);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) L.b(i, 0) -= Z.row(i).mean();
}

// ---------------------------------------------------------------------------
// Auxiliary training nets

struct LatentDynNet {
  Mlp center;
  Mlp radius;  // softplus output, so the radius is nonnegative
};

struct DecoderNet {
  Mlp net;
};

struct AutoencoderModel {
  CicoNetwork encoder;
  LatentDynNet dyn;
  DecoderNet decoder;
};

inline AutoencoderModel make_model(int input_dim, int latent_dim, const std::vector<int>& passthrough,
                                   const std::vector<int>& hidden, int skip_target, int aux_width, Rng& rng) {
  AutoencoderModel m;
  m.encoder = make_cico(input_dim, latent_dim, passthrough, hidden, skip_target, rng);
  m.dyn.center = Mlp({latent_dim, aux_width, aux_width, latent_dim}, rng);
  m.dyn.radius = Mlp({latent_dim, aux_width, 1}, rng, true);
  m.decoder.net = Mlp({latent_dim, aux_width, aux_width, input_dim}, rng);
  return m;
}

struct LossWeights {
  std::array<double, 5> alpha{1.0, 0.1, 1.0, 0.01, 0.1};
  Mat A_X;  // empty means identity
  Mat A_Z;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double lr = 1e-3;
  double lr_final = 1e-4;
  double rank_tol = 1e-6;
  std::uint64_t seed = 0;
  double prior_var = 1.0;
};

struct LossParts {
  std::array<double, 5> L{};
  double total = 0.0;
};

// ---------------------------------------------------------------------------
// Loss graph

struct ModelGrad {
  std::vector<Mat> enc_W, enc_b, skip_W;
  Mat lv_W, lv_b;
  MlpGrad center, radius, decoder;

  explicit ModelGrad(const AutoencoderModel& m)
      : center(m.dyn.center), radius(m.dyn.radius), decoder(m.decoder.net) {
    for (const auto& L : m.encoder.layers) {
      enc_W.push_back(Mat::Zero(L.W.rows(), L.W.cols()));
      enc_b.push_back(Mat::Zero(L.b.rows(), 1));
    }
    for (const auto& s : m.encoder.skips) skip_W.push_back(Mat::Zero(s.W.rows(), s.W.cols()));
    lv_W = Mat::Zero(m.encoder.logvar_W.rows(), m.encoder.logvar_W.cols());
    lv_b = Mat::Zero(m.encoder.logvar_b.rows(), 1);
  }

  void zero() {
    for (auto& g : enc_W) g.setZero();
    for (auto& g : enc_b) g.setZero();
    for (auto& g : skip_W) g.setZero();
    lv_W.setZero();
    lv_b.setZero();
    center.zero();
    radius.zero();
    decoder.zero();
  }
};

inline std::vector<Mat*> model_params(AutoencoderModel& m) {
  std::vector<Mat*> p;
  for (auto& L : m.encoder.layers) {
    p.push_back(&L.W);
    p.push_back(&L.b);
  }
  for (auto& s : m.encoder.skips) p.push_back(&s.W);
  p.push_back(&m.encoder.logvar_W);
  p.push_back(&m.encoder.logvar_b);
  for (auto* q : m.dyn.center.params()) p.push_back(q);
  for (auto* q : m.dyn.radius.params()) p.push_back(q);
  for (auto* q : m.decoder.net.params()) p.push_back(q);
  return p;
}

inline std::vector<Mat*> grad_ptrs(ModelGrad& g) {
  std::vector<Mat*> p;
  for (std::size_t k = 0; k < g.enc_W.size(); ++k) {
    p.push_back(&g.enc_W[k]);
    p.push_back(&g.enc_b[k]);
  }
  for (auto& s : g.skip_W) p.push_back(&s);
  p.push_back(&g.lv_W);
  p.push_back(&g.lv_b);
  for (auto* q : g.center.ptrs()) p.push_back(q);
  for (auto* q : g.radius.ptrs()) p.push_back(q);
  for (auto* q : g.decoder.ptrs()) p.push_back(q);
  return p;
}

struct LossGraph {
  std::array<ad::Var, 5> L{};
  ad::Var total = 0;
};

namespace detail {

inline Mat chol_upper_or_identity(const Mat& A, Eigen::Index n) {
  if (A.size() == 0) return Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) throw ConfigError("weighting matrix not positive definite");
  return llt.matrixU();
}

}  // namespace detail

// noise: (net_out x 2B) standard normal draws for the VAE term; zero gives
// the deterministic mean.
inline LossGraph build_loss(ad::Tape& t, const AutoencoderModel& m, ModelGrad& g, const Mat& X, const Mat& XP,
                            const LossWeights& w, const Mat& noise, double prior_var) {
  using namespace ad;
  const CicoNetwork& enc = m.encoder;
  const Eigen::Index B = X.cols();
  Mat Xall(X.rows(), 2 * B);
  Xall << X, XP;
  const Mat Xn = enc.gather(Xall, enc.net_inputs);
  const auto np = static_cast<Eigen::Index>(enc.passthrough.size());

  const Var xn = t.constant(Xn);
  Var a = xn;
  for (std::size_t k = 0; k < enc.layers.size(); ++k) {
    const Var W = t.param(enc.layers[k].W, &g.enc_W[k]);
    const Var b = t.param(enc.layers[k].b, &g.enc_b[k]);
    Var pre = add_bias(t, matmul(t, W, a), b);
    for (std::size_t s = 0; s < enc.skips.size(); ++s)
      if (enc.skips[s].target == static_cast<int>(k))
        pre = add(t, pre, matmul(t, t.param(enc.skips[s].W, &g.skip_W[s]), xn));
    a = k + 1 < enc.layers.size() ? softplus(t, pre, enc.beta) : pre;
  }
  const Var mu_net = a;
  auto with_pass = [&](Var net_part) {
    return np ? vstack(t, t.constant(enc.gather(Xall, enc.passthrough)), net_part) : net_part;
  };
  const Var z_all = with_pass(mu_net);
  const Var z = cols(t, z_all, 0, B), zp = cols(t, z_all, B, B);
  const Var x_all = t.constant(Xall);

  LossGraph out;
  // L1, L2 on x
  const Var c = mlp_forward(t, m.dyn.center, g.center, z);
  const Var r = mlp_forward(t, m.dyn.radius, g.radius, z);
  out.L[0] = mean(t, relu(t, sub(t, col_norm(t, sub(t, zp, c)), r)));
  out.L[1] = mean(t, r);
  // L3 on {x, x'}
  out.L[2] = mean(t, col_norm(t, sub(t, x_all, mlp_forward(t, m.decoder.net, g.decoder, z_all))));
  // L4 on {x, x'}: Gaussian decoder likelihood plus KL to N(0, prior_var I)
  const Var lv = add_bias(t, matmul(t, t.param(enc.logvar_W, &g.lv_W), xn), t.param(enc.logvar_b, &g.lv_b));
  const Var sd = vexp(t, scale(t, lv, 0.5));
  const Var z_tilde = with_pass(add(t, mu_net, mul(t, sd, t.constant(noise))));
  const Var nll = scale(t, col_sum(t, square(t, sub(t, x_all, mlp_forward(t, m.decoder.net, g.decoder, z_tilde)))), 0.5);
  const Var var_ratio = scale(t, vexp(t, lv), 1.0 / prior_var);
  const Var mu2 = scale(t, square(t, mu_net), 1.0 / prior_var);
  const Var kl_terms = sub(t, add(t, var_ratio, mu2), lv);
  const double kl_const = -1.0 + std::log(prior_var);
  const Var kl = scale(t, col_sum(t, kl_terms), 0.5);
  Mat kl_offset = Mat::Constant(1, 2 * B, 0.5 * kl_const * static_cast<double>(enc.net_out_dim()));
  out.L[3] = mean(t, add(t, add(t, nll, kl), t.constant(kl_offset)));
  // L5 on (x, x')
  const Mat UX = detail::chol_upper_or_identity(w.A_X, X.rows());
  const Mat UZ = detail::chol_upper_or_identity(w.A_Z, enc.latent_dim());
  const Var dx = col_norm(t, t.constant(UX * (X - XP)));
  const Var dz = col_norm(t, matmul(t, t.constant(UZ), sub(t, z, zp)));
  out.L[4] = mean(t, vabs(t, sub(t, dx, dz)));

  out.total = weighted_sum(t, {{w.alpha[0], out.L[0]},
                               {w.alpha[1], out.L[1]},
                               {w.alpha[2], out.L[2]},
                               {w.alpha[3], out.L[3]},
                               {w.alpha[4], out.L[4]}});
  return out;
}

inline LossParts loss_components(const Mat& X, const Mat& XP, const AutoencoderModel& m, const LossWeights& w,
                                 double prior_var = 1.0, const Mat* noise = nullptr) {
  ad::Tape t;
  ModelGrad g(m);
  const Mat zero = Mat::Zero(m.encoder.net_out_dim(), 2 * X.cols());
  const LossGraph lg = build_loss(t, m, g, X, XP, w, noise ? *noise : zero, prior_var);
  LossParts p;
  for (int j = 0; j < 5; ++j) p.L[j] = t.value(lg.L[j])(0, 0);
  p.total = t.value(lg.total)(0, 0);
  return p;
}

inline void project_nonneg(CicoNetwork& net) {
  for (auto& L : net.layers)
    if (L.nonneg) L.W = L.W.cwiseMax(0.0);
}

struct TrainHistory {
  std::vector<LossParts> epoch_loss;  // mean over batches, deterministic L4 noise
};

inline bool all_finite(const std::vector<Mat*>& ps) {
  for (const auto* p : ps)
    if (!p->allFinite()) return false;
  return true;
}

// Adam with projection onto the nonnegative orthant after every step.
inline TrainHistory train(AutoencoderModel& m, const Mat& X, const Mat& XP, const LossWeights& w,
                          const TrainConfig& cfg) {
  if (X.cols() == 0) throw Error("train: empty learning set");
  if (m.encoder.latent_dim() >= m.encoder.input_dim) throw ConfigError("latent dim must be below state dim");
  Rng rng(mix_seed(cfg.seed, 0x7a11));
  ad::Adam opt(cfg.lr);
  ModelGrad g(m);
  auto params = model_params(m);
  auto grads = grad_ptrs(g);
  const Eigen::Index n = X.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainHistory hist;
  const int nb = static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
  const double decay = cfg.epochs > 1 ? std::pow(cfg.lr_final / cfg.lr, 1.0 / (cfg.epochs - 1)) : 1.0;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    opt.set_lr(cfg.lr * std::pow(decay, ep));
    std::shuffle(order.begin(), order.end(), rng);
    LossParts acc;
    for (int bi = 0; bi < nb; ++bi) {
      const Eigen::Index s = static_cast<Eigen::Index>(bi) * cfg.batch_size;
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - s);
      Mat xb(X.rows(), bs), xpb(X.rows(), bs);
      for (Eigen::Index j = 0; j < bs; ++j) {
        xb.col(j) = X.col(order[s + j]);
        xpb.col(j) = XP.col(order[s + j]);
      }
      Mat noise(m.encoder.net_out_dim(), 2 * bs);
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gaussian(rng);
      ad::Tape t;
      g.zero();
      const LossGraph lg = build_loss(t, m, g, xb, xpb, w, noise, cfg.prior_var);
      const double tot = t.value(lg.total)(0, 0);
      if (!std::isfinite(tot)) throw TrainingDiverged("loss is " + std::to_string(tot) + " at epoch " + std::to_string(ep));
      t.backward(lg.total);
      opt.step(params, grads);
      project_nonneg(m.encoder);
      if (!all_finite(params)) throw TrainingDiverged("non-finite weights at epoch " + std::to_string(ep));
      for (int j = 0; j < 5; ++j) acc.L[j] += t.value(lg.L[j])(0, 0) * bs / n;
      acc.total += tot * bs / n;
    }
    hist.epoch_loss.push_back(acc);
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Audit

struct LayerAudit {
  std::string name;
  bool nonneg_required = false;
  bool nonneg_ok = true;
  double min_sv = 0.0;
  double max_sv = 0.0;
  bool full_rank = false;
};

struct AuditReport {
  std::vector<LayerAudit> layers;
  std::vector<LayerAudit> skips;
  bool skips_injective = true;
  int probes = 0;
  int jacobian_rank_failures = 0;
  bool monotone_convex_activation = true;
  bool pass = false;

  std::string summary() const {
    std::ostringstream os;
    for (const auto& l : layers)
      os << l.name << ": nonneg " << (l.nonneg_required ? (l.nonneg_ok ? "ok" : "FAIL") : "n/a") << ", sv ["
         << l.min_sv << ", " << l.max_sv << "] " << (l.full_rank ? "full rank" : "RANK FAIL") << "\n";
    for (const auto& s : skips)
      os << s.name << ": sv [" << s.min_sv << ", " << s.max_sv << "] " << (s.full_rank ? "injective" : "NOT INJECTIVE")
         << "\n";
    os << "jacobian rank failures: " << jacobian_rank_failures << "/" << probes << "\n";
    os << "overall: " << (pass ? "pass" : "FAIL") << "\n";
    return os.str();
  }
};

inline Vec singular_values(const Mat& M) { return Eigen::JacobiSVD<Mat>(M).singularValues(); }

// Jacobian by central differences; independent of the analytic one.
inline Mat fd_jacobian(const CicoNetwork& net, const Vec& x, double h = 1e-6) {
  Mat J(net.latent_dim(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    J.col(i) = (net.encode(a) - net.encode(b)) / (2 * h);
  }
  return J;
}

inline AuditReport check_cico(const CicoNetwork& net, int probes, double rank_tol = 1e-6, std::uint64_t seed = 0,
                              const Box* domain = nullptr) {
  AuditReport rep;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& L = net.layers[k];
    LayerAudit a;
    a.name = "layer " + std::to_string(k);
    a.nonneg_required = k > 0;
    a.nonneg_ok = k == 0 || (L.nonneg && L.W.minCoeff() >= 0.0);
    const Vec sv = singular_values(L.W);
    a.max_sv = sv.size() ? sv[0] : 0.0;
    a.min_sv = sv.size() ? sv[sv.size() - 1] : 0.0;
    a.full_rank = a.max_sv > 0 && a.min_sv > rank_tol * a.max_sv;
    rep.layers.push_back(a);
  }
  const auto nin = static_cast<Eigen::Index>(net.net_inputs.size());
  if (!rep.layers.empty() && net.layers[0].W.rows() < nin) rep.layers[0].full_rank = false;
  for (std::size_t s = 0; s < net.skips.size(); ++s) {
    LayerAudit a;
    a.name = "skip " + std::to_string(s) + " -> layer " + std::to_string(net.skips[s].target);
    const Vec sv = singular_values(net.skips[s].W);
    a.max_sv = sv.size() ? sv[0] : 0.0;
    a.min_sv = sv.size() ? sv[sv.size() - 1] : 0.0;
    a.full_rank = net.skips[s].W.rows() >= nin && net.skips[s].W.cols() == nin && a.max_sv > 0 &&
                  a.min_sv > rank_tol * a.max_sv;
    rep.skips_injective = rep.skips_injective && a.full_rank;
    rep.skips.push_back(a);
  }
  rep.monotone_convex_activation = net.beta > 0;
  Rng rng(mix_seed(seed, 0xa0d1));
  const Box dom = domain ? *domain : Box::cube(net.input_dim, -1.0 / std::sqrt(net.input_dim), 1.0 / std::sqrt(net.input_dim));
  rep.probes = probes;
  for (int p = 0; p < probes; ++p) {
    const Vec x = dom.sample(rng);
    const Vec sv = singular_values(fd_jacobian(net, x));
    const bool ok = sv.size() == net.latent_dim() && sv[0] > 0 && sv[sv.size() - 1] > rank_tol * sv[0];
    if (!ok) ++rep.jacobian_rank_failures;
  }
  rep.pass = rep.skips_injective && rep.jacobian_rank_failures == 0 && rep.monotone_convex_activation;
  for (const auto& l : rep.layers) rep.pass = rep.pass && l.nonneg_ok && l.full_rank;
  return rep;
}

// ---------------------------------------------------------------------------
// Lipschitz bound

struct LipschitzBreakdown {
  double net_path_product = 0.0;  // sum over paths of spectral-norm products
  double net_elementwise = 0.0;   // || W_L ... W_2 |W_1| + ... ||_2, valid for nonneg deep layers
  double net = 0.0;
  double total = 0.0;
};

inline double spectral_norm(const Mat& M) { return M.size() ? singular_values(M)[0] : 0.0; }

inline LipschitzBreakdown lipschitz_breakdown(const CicoNetwork& net) {
  LipschitzBreakdown b;
  const double slope = net.beta > 0 ? 1.0 : 0.0;
  const std::size_t L = net.layers.size();
  // tail[k] = product of norms of layers k..L-1 with activation slopes between
  std::vector<double> tail(L + 1, 1.0);
  for (std::size_t k = L; k-- > 0;) tail[k] = spectral_norm(net.layers[k].W) * (k + 1 < L ? slope : 1.0) * tail[k + 1];
  b.net_path_product = tail[0];
  for (const auto& s : net.skips) b.net_path_product += spectral_norm(s.W) * tail[s.target + 1] * (s.target + 1 < static_cast<int>(L) ? slope : 1.0);
  bool deep_nonneg = true;
  for (std::size_t k = 1; k < L; ++k) deep_nonneg = deep_nonneg && net.layers[k].W.minCoeff() >= 0.0;
  if (deep_nonneg) {
    Mat P = net.layers[0].W.cwiseAbs();
    for (std::size_t k = 1; k < L; ++k) {
      P = net.layers[k].W * P;
      for (const auto& s : net.skips)
        if (s.target == static_cast<int>(k)) P += s.W.cwiseAbs();
    }
    b.net_elementwise = spectral_norm(P);
    b.net = std::min(b.net_elementwise, b.net_path_product);
  } else {
    b.net_elementwise = std::numeric_limits<double>::infinity();
    b.net = b.net_path_product;
  }
  // passthrough and net inputs are disjoint coordinate blocks
  b.total = net.passthrough.empty() ? b.net : std::max(1.0, b.net);
  return b;
}

inline double lipschitz_bound(const CicoNetwork& net) { return lipschitz_breakdown(net).total; }

// Bound on sup ||J_net|| over a box of net inputs by interval propagation of
// pre-activations and Jacobian entries.
inline double jacobian_norm_bound_on_box(const CicoNetwork& net, const Vec& lo, const Vec& hi) {
  const Vec xc = 0.5 * (lo + hi), xr = 0.5 * (hi - lo);
  const auto nin = lo.size();
  Vec a_lo = lo, a_hi = hi;
  Mat J_lo = Mat::Identity(nin, nin), J_hi = J_lo;
  Mat P_lo, P_hi;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Mat& W = net.layers[k].W;
    const Mat Wa = W.cwiseAbs();
    const Vec ac = 0.5 * (a_lo + a_hi), ar = 0.5 * (a_hi - a_lo);
    Vec pc = W * ac + net.layers[k].b.col(0), pr = Wa * ar;
    const Mat Jc = 0.5 * (J_lo + J_hi), Jr = 0.5 * (J_hi - J_lo);
    Mat Pc = W * Jc, Pr = Wa * Jr;
    for (const auto& s : net.skips)
      if (s.target == static_cast<int>(k)) {
        pc += s.W * xc;
        pr += s.W.cwiseAbs() * xr;
        Pc += s.W;
      }
    P_lo = Pc - Pr;
    P_hi = Pc + Pr;
    if (k + 1 == net.layers.size()) break;
    const Vec pre_lo = pc - pr, pre_hi = pc + pr;
    a_lo = pre_lo.unaryExpr([&](double z) { return softplus(z, net.beta); });
    a_hi = pre_hi.unaryExpr([&](double z) { return softplus(z, net.beta); });
    J_lo.resize(P_lo.rows(), nin);
    J_hi.resize(P_lo.rows(), nin);
    for (Eigen::Index i = 0; i < P_lo.rows(); ++i) {
      const double d1 = sigmoid(net.beta * pre_lo[i]), d2 = sigmoid(net.beta * pre_hi[i]);
      for (Eigen::Index j = 0; j < nin; ++j) {
        const double p1 = P_lo(i, j), p2 = P_hi(i, j);
        const double c[4] = {d1 * p1, d1 * p2, d2 * p1, d2 * p2};
        J_lo(i, j) = *std::min_element(c, c + 4);
        J_hi(i, j) = *std::max_element(c, c + 4);
      }
    }
  }
  return spectral_norm(P_lo.cwiseAbs().cwiseMax(P_hi.cwiseAbs()));
}

// Lipschitz bound of the encoder over a box of full inputs: the box is split
// into at most max_boxes sub-boxes over the net inputs and the largest
// sub-box Jacobian bound is taken, then compared with the global bound.
inline double lipschitz_bound_on_domain(const CicoNetwork& net, const Box& domain, int max_boxes = 4096) {
  const Vec lo = net.gather(domain.lo, net.net_inputs), hi = net.gather(domain.hi, net.net_inputs);
  const auto nin = lo.size();
  int s = std::max(1, static_cast<int>(std::floor(std::pow(static_cast<double>(max_boxes), 1.0 / nin) + 1e-9)));
  long total = 1;
  for (Eigen::Index d = 0; d < nin; ++d) total *= s;
  double worst = 0.0;
  std::vector<int> idx(nin, 0);
  for (long t = 0; t < total; ++t) {
    long r = t;
    for (Eigen::Index d = 0; d < nin; ++d) {
      idx[d] = static_cast<int>(r % s);
      r /= s;
    }
    Vec blo(nin), bhi(nin);
    for (Eigen::Index d = 0; d < nin; ++d) {
      const double w = (hi[d] - lo[d]) / s;
      blo[d] = lo[d] + idx[d] * w;
      bhi[d] = idx[d] + 1 == s ? hi[d] : lo[d] + (idx[d] + 1) * w;
    }
    worst = std::max(worst, jacobian_norm_bound_on_box(net, blo, bhi));
  }
  const double local = std::min(worst, lipschitz_breakdown(net).net);
  return net.passthrough.empty() ? local : std::max(1.0, local);
}

// ---------------------------------------------------------------------------
// Outlier remapping for simulation-time monitoring (not convex).

struct WrappedEncoder {
  const CicoNetwork* net = nullptr;
  ConvexPolygon Z;
  std::function<bool(const Vec&)> in_domain;

  Vec operator()(const Vec& x) const {
    const Vec z = net->encode(x);
    if (in_domain(x)) return z;
    const Rect bb = Z.bounding_box();
    const P2 c = Z.centroid_of_vertices();
    P2 d(z[0] - c.x(), z[1] - c.y());
    if (d.norm() < 1e-12) d = P2(1.0, 0.0);
    d.normalize();
    // far enough along d to leave the bounding box, hence Z
    const double reach = (bb.hi - bb.lo).norm() + 1.0;
    const P2 out = c + reach * d + 0.01 * d;
    Vec r = z;
    r[0] = out.x();
    r[1] = out.y();
    return r;
  }
};

// ---------------------------------------------------------------------------
// Serialization

inline void write_cico(std::ostream& os, const CicoNetwork& n) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", n.beta);
  os << "cico 1\ninput_dim " << n.input_dim << "\nbeta " << buf << "\npassthrough " << n.passthrough.size();
  for (int i : n.passthrough) os << " " << i;
  os << "\nnet_inputs " << n.net_inputs.size();
  for (int i : n.net_inputs) os << " " << i;
  os << "\nlayers " << n.layers.size() << "\n";
  for (const auto& L : n.layers) {
    os << "layer " << (L.nonneg ? 1 : 0) << "\n";
    write_matrix(os, L.W);
    write_matrix(os, L.b);
  }
  os << "skips " << n.skips.size() << "\n";
  for (const auto& s : n.skips) {
    os << "skip " << s.target << "\n";
    write_matrix(os, s.W);
  }
  os << "logvar\n";
  write_matrix(os, n.logvar_W);
  write_matrix(os, n.logvar_b);
}

inline CicoNetwork read_cico(std::istream& is) {
  CicoNetwork n;
  expect_token(is, "cico");
  int version = 0;
  is >> version;
  if (version != 1) throw FormatError("unsupported cico version");
  std::string tok;
  expect_token(is, "input_dim");
  is >> n.input_dim;
  expect_token(is, "beta");
  is >> tok;
  n.beta = std::stod(tok);
  std::size_t cnt = 0;
  expect_token(is, "passthrough");
  is >> cnt;
  n.passthrough.resize(cnt);
  for (auto& i : n.passthrough) is >> i;
  expect_token(is, "net_inputs");
  is >> cnt;
  n.net_inputs.resize(cnt);
  for (auto& i : n.net_inputs) is >> i;
  expect_token(is, "layers");
  is >> cnt;
  for (std::size_t k = 0; k < cnt; ++k) {
    expect_token(is, "layer");
    int nn = 0;
    is >> nn;
    CicoLayer L;
    L.nonneg = nn != 0;
    L.W = read_matrix(is);
    L.b = read_matrix(is);
    n.layers.push_back(std::move(L));
  }
  expect_token(is, "skips");
  is >> cnt;
  for (std::size_t k = 0; k < cnt; ++k) {
    expect_token(is, "skip");
    CicoSkip s;
    is >> s.target;
    s.W = read_matrix(is);
    n.skips.push_back(std::move(s));
  }
  expect_token(is, "logvar");
  n.logvar_W = read_matrix(is);
  n.logvar_b = read_matrix(is);
  if (!is) throw FormatError("truncated cico network");
  return n;
}

inline void save_model(const std::string& path, const AutoencoderModel& m) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << "latent-verify-autoencoder 1\n";
  write_cico(f, m.encoder);
  write_mlp(f, m.dyn.center);
  write_mlp(f, m.dyn.radius);
  write_mlp(f, m.decoder.net);
}

inline AutoencoderModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  expect_token(f, "latent-verify-autoencoder");
  int v = 0;
  f >> v;
  if (v != 1) throw FormatError("unsupported model version");
  AutoencoderModel m;
  m.encoder = read_cico(f);
  m.dyn.center = read_mlp(f);
  m.dyn.radius = read_mlp(f);
  m.decoder.net = read_mlp(f);
  return m;
}

}  // namespace lv
