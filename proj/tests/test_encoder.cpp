#include "latent_verify/encoder.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lv;

namespace {

Mat random_cols(Rng& rng, Eigen::Index rows, Eigen::Index cols, double r) {
  Mat X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform(rng, -r, r);
  return X;
}

AutoencoderModel small_model(Rng& rng, int nx = 3, int np = 2, std::vector<int> pass = {0}) {
  return make_model(nx, np, pass, {8, 6, 5}, 1, 6, rng);
}

double total_with(const AutoencoderModel& m, const Mat& X, const Mat& XP, const LossWeights& w, const Mat& noise) {
  return loss_components(X, XP, m, w, 0.7, &noise).total;
}

}  // namespace

TEST(Encoder, PassthroughIsIdentity) {
  Rng rng(1);
  const auto net = make_cico(3, 2, {0}, {16, 8}, 1, rng);
  for (int i = 0; i < 100; ++i) {
    Vec x = random_cols(rng, 3, 1, 0.5);
    EXPECT_EQ(net.encode(x)[0], x[0]);
  }
}

TEST(Encoder, ConvexityMidpointChecks) {
  Rng rng(2);
  auto net = make_cico(4, 2, {}, {16, 12, 8}, 1, rng);
  for (int i = 0; i < 10000; ++i) {
    const Vec x = random_cols(rng, 4, 1, 1.0), y = random_cols(rng, 4, 1, 1.0);
    const double l = uniform(rng);
    const Vec lhs = net.encode(l * x + (1 - l) * y);
    const Vec rhs = l * net.encode(x) + (1 - l) * net.encode(y);
    EXPECT_TRUE(((lhs - rhs).array() <= 1e-9).all());
  }
}

TEST(Encoder, ZeroWeightsGiveBias) {
  Rng rng(3);
  auto net = make_cico(3, 2, {}, {4}, -1, rng);
  for (auto& L : net.layers) L.W.setZero();
  net.layers.back().b << 0.25, -1.5;
  const Vec z = net.encode(random_cols(rng, 3, 1, 1.0));
  EXPECT_EQ(z[0], 0.25);
  EXPECT_EQ(z[1], -1.5);
}

TEST(Encoder, AnalyticJacobianMatchesFiniteDifference) {
  Rng rng(4);
  const auto net = make_cico(5, 2, {1}, {12, 8, 6}, 1, rng);
  for (int i = 0; i < 20; ++i) {
    const Vec x = random_cols(rng, 5, 1, 0.4);
    EXPECT_LE((net.jacobian(x) - fd_jacobian(net, x)).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Loss, GradientsMatchFiniteDifferencesPerTerm) {
  Rng rng(5);
  for (int term = 0; term < 5; ++term) {
    AutoencoderModel m = small_model(rng, 4, 2, {2});
    m.encoder.logvar_W = gaussian_matrix(rng, 1, 3, 0.3);
    const Mat X = random_cols(rng, 4, 7, 0.5), XP = 0.7 * X + random_cols(rng, 4, 7, 0.05);
    Mat noise = gaussian_matrix(rng, 1, 14);
    LossWeights w;
    w.alpha = {0, 0, 0, 0, 0};
    w.alpha[term] = 1.0;
    ad::Tape t;
    ModelGrad g(m);
    const LossGraph lg = build_loss(t, m, g, X, XP, w, noise, 0.7);
    t.backward(lg.total);
    auto params = model_params(m);
    auto grads = grad_ptrs(g);
    double gmax = 0, emax = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (Eigen::Index i = 0; i < params[p]->size(); ++i) {
        double& v = params[p]->data()[i];
        const double old = v, h = 1e-6;
        v = old + h;
        const double fp = total_with(m, X, XP, w, noise);
        v = old - h;
        const double fm = total_with(m, X, XP, w, noise);
        v = old;
        const double fd = (fp - fm) / (2 * h);
        const double an = grads[p]->data()[i];
        gmax = std::max(gmax, std::abs(an));
        emax = std::max(emax, std::abs(fd - an));
      }
    }
    ASSERT_GT(gmax, 0.0) << "term " << term;
    EXPECT_LE(emax / gmax, 1e-4) << "term L" << term + 1;
  }
}

TEST(Loss, HingeZeroWhenInsideBall) {
  Rng rng(6);
  AutoencoderModel m = small_model(rng);
  for (auto& W : m.dyn.radius.W) W.setZero();
  m.dyn.radius.b.back()(0, 0) = 50.0;  // huge radius
  const Mat X = random_cols(rng, 3, 10, 0.5);
  LossWeights w;
  EXPECT_EQ(loss_components(X, 0.7 * X, m, w).L[0], 0.0);
}

TEST(Loss, ConstantRadiusGivesL2) {
  Rng rng(7);
  AutoencoderModel m = small_model(rng);
  for (auto& W : m.dyn.radius.W) W.setZero();
  m.dyn.radius.b.back()(0, 0) = std::log(std::exp(0.5) - 1.0);
  const Mat X = random_cols(rng, 3, 10, 0.5);
  EXPECT_NEAR(loss_components(X, 0.7 * X, m, LossWeights{}).L[1], 0.5, 1e-12);
}

TEST(Loss, PerfectReconstructionGivesZeroL3) {
  Rng rng(8);
  AutoencoderModel m = make_model(2, 2, {0}, {3}, -1, 4, rng);
  for (auto& L : m.encoder.layers) L.W.setZero();
  m.encoder.layers.back().b(0, 0) = 0.3;
  m.decoder.net = Mlp({2, 2}, rng);
  m.decoder.net.W[0] = Mat::Identity(2, 2);
  m.decoder.net.b[0].setZero();
  Mat X(2, 5);
  X << -0.4, -0.1, 0.0, 0.2, 0.5, 0.3, 0.3, 0.3, 0.3, 0.3;
  EXPECT_EQ(loss_components(X, X, m, LossWeights{}).L[2], 0.0);
}

TEST(Loss, IsometricPairGivesZeroL5) {
  Rng rng(9);
  AutoencoderModel m = make_model(3, 2, {0}, {3}, -1, 4, rng);
  for (auto& L : m.encoder.layers) L.W.setZero();
  // pairs differing only in the passthrough coordinate are isometric
  Mat X = random_cols(rng, 3, 6, 0.5), XP = X;
  XP.row(0).array() += 0.2;
  EXPECT_NEAR(loss_components(X, XP, m, LossWeights{}).L[4], 0.0, 1e-15);
}

TEST(Train, ReconstructionOnlyDecreases) {
  Rng rng(10);
  AutoencoderModel m = make_model(3, 2, {0}, {16, 8}, 1, 16, rng);
  const Mat X = random_cols(rng, 3, 400, 0.5);
  Mat XP(3, 400);
  for (Eigen::Index i = 0; i < 400; ++i) XP.col(i) = 0.7 * X.col(i);
  LossWeights w;
  w.alpha = {0, 0, 1, 0, 0};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  cfg.lr = 3e-3;
  cfg.lr_final = 3e-4;
  const auto hist = train(m, X, XP, w, cfg);
  const int win = 5;
  double prev = 1e300;
  for (std::size_t e = win; e <= hist.epoch_loss.size(); e += win) {
    double avg = 0;
    for (std::size_t k = e - win; k < e; ++k) avg += hist.epoch_loss[k].L[2] / win;
    EXPECT_LE(avg, prev + 1e-3);
    prev = avg;
  }
  EXPECT_LT(hist.epoch_loss.back().L[2], hist.epoch_loss.front().L[2]);
  for (std::size_t k = 1; k < m.encoder.layers.size(); ++k) EXPECT_GE(m.encoder.layers[k].W.minCoeff(), 0.0);
  EXPECT_TRUE(check_cico(m.encoder, 50).pass);
}

TEST(Train, DivergenceIsReported) {
  Rng rng(11);
  AutoencoderModel m = small_model(rng);
  Mat X = random_cols(rng, 3, 16, 0.5);
  X(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(m, X, X, LossWeights{}, cfg), TrainingDiverged);
}

TEST(Audit, DetectsNegativeWeightAndRankDeficiency) {
  Rng rng(12);
  auto net = make_cico(3, 2, {}, {8, 6, 4}, 1, rng);
  EXPECT_TRUE(check_cico(net, 20).pass);
  auto bad = net;
  bad.layers[3].W(0, 0) = -0.1;
  const auto rep = check_cico(bad, 5);
  EXPECT_FALSE(rep.layers[3].nonneg_ok);
  EXPECT_FALSE(rep.pass);
  auto sing = net;
  sing.layers[3].W.row(1) = sing.layers[3].W.row(0);
  const auto rep2 = check_cico(sing, 5);
  EXPECT_FALSE(rep2.layers[3].full_rank);
  EXPECT_FALSE(rep2.pass);
}

TEST(Lipschitz, SingleAffineLayerExact) {
  Rng rng(13);
  auto net = make_cico(3, 2, {}, {}, -1, rng);
  ASSERT_EQ(net.layers.size(), 1u);
  EXPECT_NEAR(lipschitz_bound(net), singular_values(net.layers[0].W)[0], 1e-12);
}

TEST(Lipschitz, TwoLayerBoundAndSlopeOracle) {
  Rng rng(14);
  auto net = make_cico(3, 1, {}, {10}, -1, rng);
  const double L = lipschitz_bound(net);
  EXPECT_LE(L, spectral_norm(net.layers[1].W) * spectral_norm(net.layers[0].W) + 1e-12);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const Vec x = random_cols(rng, 3, 1, 2.0), y = x + random_cols(rng, 3, 1, 0.05);
    worst = std::max(worst, (net.encode(x) - net.encode(y)).norm() / (x - y).norm());
  }
  EXPECT_LE(worst, L);
}

TEST(Lipschitz, DeepNetworkSlopeOracle) {
  Rng rng(15);
  auto net = make_cico(4, 2, {0}, {16, 12, 8}, 1, rng);
  const auto b = lipschitz_breakdown(net);
  EXPECT_LE(b.net_elementwise, b.net_path_product * (1 + 1e-12));
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const Vec x = random_cols(rng, 4, 1, 1.0), y = random_cols(rng, 4, 1, 1.0);
    worst = std::max(worst, (net.encode(x) - net.encode(y)).norm() / (x - y).norm());
  }
  EXPECT_LE(worst, b.total);
  EXPECT_GE(b.total, 1.0);
}

TEST(Lipschitz, BoxBoundDominatesSampledNetJacobians) {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    Rng rng(seed);
    auto net = make_cico(3, 2, {0}, {12, 8}, 1, rng);
    mirror_init(net, 4.0);
    Vec lo(2), hi(2);
    lo << uniform(rng, -1, 0), uniform(rng, -1, 0);
    hi = lo + Vec::Constant(2, uniform(rng, 0.01, 0.8));
    const double bound = jacobian_norm_bound_on_box(net, lo, hi);
    for (int i = 0; i < 2000; ++i) {
      Vec x(3);
      x << uniform(rng, -1, 1), uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]);
      const Mat J = net.jacobian(x).bottomRows(1);
      EXPECT_LE(singular_values(J)[0], bound * (1 + 1e-12));
    }
  }
}

TEST(Lipschitz, DomainBoundSoundAndNoLooserThanGlobal) {
  for (std::uint64_t seed = 30; seed < 34; ++seed) {
    Rng rng(seed);
    auto net = make_cico(3, 2, {0}, {16, 8}, 1, rng);
    mirror_init(net, 8.0);
    const Box dom = Box::cube(3, -0.5, 0.5);
    const double L = lipschitz_bound_on_domain(net, dom, 256);
    EXPECT_LE(L, lipschitz_bound(net) * (1 + 1e-12));
    double worst = 0;
    for (int i = 0; i < 50000; ++i) {
      const Vec x = dom.sample(rng), y = dom.sample(rng);
      worst = std::max(worst, (net.encode(x) - net.encode(y)).norm() / (x - y).norm());
      worst = std::max(worst, singular_values(net.jacobian(x))[0]);
    }
    EXPECT_LE(worst, L * (1 + 1e-12));
  }
}

TEST(Remap, InsideIdentityOutsideLeavesZ) {
  Rng rng(16);
  const auto net = make_cico(3, 2, {0}, {8, 4}, 1, rng);
  const Box X = Box::cube(3, -0.5, 0.5);
  std::vector<P2> pts;
  for (int i = 0; i < 2000; ++i) {
    const Vec z = net.encode(X.sample(rng));
    pts.emplace_back(z[0], z[1]);
  }
  WrappedEncoder w{&net, convex_hull(pts), [&](const Vec& x) { return X.contains(x); }};
  for (int i = 0; i < 200; ++i) {
    const Vec x = X.sample(rng);
    EXPECT_TRUE((w(x) - net.encode(x)).isZero(0.0));
    const Vec xo = Box::cube(3, -2, 2).sample(rng);
    if (!X.contains(xo)) {
      const Vec z = w(xo);
      EXPECT_FALSE(w.Z.contains(P2(z[0], z[1])));
    }
  }
}

TEST(Serialization, RoundTripBitExact) {
  Rng rng(17);
  const auto m = make_model(6, 2, {0}, {16, 8, 4}, 1, 8, rng);
  const auto path = (std::filesystem::temp_directory_path() / "lv_model_test.txt").string();
  save_model(path, m);
  const auto r = load_model(path);
  ASSERT_EQ(r.encoder.layers.size(), m.encoder.layers.size());
  for (std::size_t k = 0; k < m.encoder.layers.size(); ++k) {
    EXPECT_TRUE(r.encoder.layers[k].W == m.encoder.layers[k].W);
    EXPECT_TRUE(r.encoder.layers[k].b == m.encoder.layers[k].b);
    EXPECT_EQ(r.encoder.layers[k].nonneg, m.encoder.layers[k].nonneg);
  }
  EXPECT_TRUE(r.encoder.skips[0].W == m.encoder.skips[0].W);
  EXPECT_EQ(r.encoder.passthrough, m.encoder.passthrough);
  EXPECT_TRUE(r.decoder.net.W[1] == m.decoder.net.W[1]);
  EXPECT_TRUE(r.dyn.radius.softplus_output);
  const Vec x = random_cols(rng, 6, 1, 0.3);
  EXPECT_TRUE(r.encoder.encode(x) == m.encoder.encode(x));
  std::filesystem::remove(path);
}
