#include "latent_verify/decode.hpp"

#include <gtest/gtest.h>

using namespace lv;

namespace {

CicoNetwork bowl_encoder(std::uint64_t seed) {
  Rng rng(seed);
  auto net = make_cico(3, 2, {0}, {16, 8}, 1, rng);
  mirror_init(net, 4.0);
  return net;
}

// h(x) = (x0, w . (x1, x2) + b)
CicoNetwork linear_encoder() {
  Rng rng(5);
  auto net = make_cico(3, 2, {0}, {}, -1, rng);
  net.layers[0].W << 0.8, -0.6;
  net.layers[0].b << 0.1;
  return net;
}

Rect cell_around(const Vec& z, double r) { return Rect{P2(z[0] - r, z[1] - r), P2(z[0] + r, z[1] + r)}; }

}  // namespace

TEST(DecodePoint, FeasibleTargetReachesTolerance) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const Vec x0 = dom.box.sample(rng);
    const auto r = decode_point(net, net.encode(x0), dom);
    EXPECT_LE(r.objective, 1e-4);
    EXPECT_LE((net.encode(r.x) - net.encode(x0)).norm(), 1e-4);
    EXPECT_TRUE(dom.box.contains(r.x));
  }
}

TEST(DecodePoint, FarTargetIsNotConverged) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Vec z(2);
  z << 50.0, -50.0;
  DecodeConfig cfg;
  cfg.starts = 3;
  cfg.iterations = 200;
  EXPECT_THROW(decode_point(net, z, dom, cfg), NotConverged);
}

// Multi-start oracle: a convex objective has no spurious local minima.
TEST(DecodePoint, RestartsAgree) {
  const auto net = bowl_encoder(3);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    const Vec z = net.encode(dom.box.sample(rng));
    std::vector<double> obj;
    for (int s = 0; s < 5; ++s) obj.push_back(decode_point_from(net, z, dom, dom.box.sample(rng)).objective);
    EXPECT_LE(*std::max_element(obj.begin(), obj.end()) - *std::min_element(obj.begin(), obj.end()), 1e-3);
  }
}

TEST(DecodePoint, ReturnedObjectiveIsRecomputable) {
  const auto net = bowl_encoder(6);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Rng rng(7);
  const Vec z = net.encode(dom.box.sample(rng));
  const Vec x0 = dom.box.sample(rng);
  DecodeConfig cfg;
  cfg.iterations = 50;
  const auto r = decode_point_from(net, z, dom, x0, cfg);
  EXPECT_NEAR(r.objective, (net.encode(r.x) - z).norm(), 1e-12);
  EXPECT_LE(r.objective, (net.encode(x0) - z).norm());
}

TEST(DecodeCell, FeasibleCellConverges) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Vec x = dom.box.sample(rng);
    const Rect q = cell_around(net.encode(x), 0.01);
    const auto r = decode_cell(net, q, dom, nullptr);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(cell_ratio(net, dom, r.x, q), 1.0);
    EXPECT_TRUE(encodes_into(net, dom, r.x, q));
  }
}

TEST(DecodeCell, DecoderSeedsAndSystemDomain) {
  const SystemSpec spec = make_nonlinear3d();
  Rng rng(9);
  auto m = make_model(3, 2, {0}, {16, 8}, 1, 16, rng);
  mirror_init(m.encoder, 4.0);
  const auto dom = system_domain(spec);
  const Normalizer nz = spec.normalizer();
  for (int i = 0; i < 10; ++i) {
    const Vec b = spec.base_box.sample(rng);
    const Rect q = cell_around(m.encoder.encode(nz.apply(b)), 0.02);
    const auto r = decode_cell(m.encoder, q, dom, &m.decoder);
    EXPECT_TRUE(spec.base_box.contains(r.x));
    EXPECT_TRUE(q.contains(P2(m.encoder.encode(nz.apply(r.x))[0], m.encoder.encode(nz.apply(r.x))[1])));
  }
}

TEST(DecodeCell, UnreachableCellThrows) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  DecodeConfig cfg;
  cfg.starts = 2;
  cfg.iterations = 100;
  EXPECT_THROW(decode_cell(net, Rect{P2(10, 10), P2(11, 11)}, dom, nullptr, cfg), NotConverged);
}

TEST(DecodeCell, DegenerateCellRejected) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  EXPECT_THROW(decode_cell(net, Rect{P2(0, 0), P2(0, 1)}, dom, nullptr), DomainError);
}

// Analytic slab oracle for a linear encoder.
TEST(Preimage, LinearEncoderSlabContained) {
  const auto net = linear_encoder();
  const auto dom = identity_domain(Box::cube(3, -1, 1));
  const Rect q{P2(-0.3, -0.2), P2(0.4, 0.25)};
  const auto w = decode_cell(net, q, dom, nullptr);
  const auto pre = preimage_overapprox(net, q, dom, {w.x}, 4000, 0.05, 1);
  EXPECT_GE(pre.epsilon, 0.0);
  Rng rng(11);
  int inside = 0;
  while (inside < 10000) {
    const Vec x = dom.box.sample(rng);
    const double s = 0.8 * x[1] - 0.6 * x[2] + 0.1;
    if (x[0] < -0.3 || x[0] > 0.4 || s < -0.2 || s > 0.25) continue;
    ++inside;
    ASSERT_TRUE(pre.box.contains(x)) << x.transpose();
  }
}

TEST(Preimage, BoxHoldsWitnessesAndStaysInDomain) {
  const auto net = bowl_encoder(12);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  Rng rng(13);
  const Vec x = dom.box.sample(rng);
  const Rect q = cell_around(net.encode(x), 0.03);
  const auto pre = preimage_overapprox(net, q, dom, {x}, 500, 0.05, 2);
  EXPECT_GT(pre.accepted, 0u);
  EXPECT_TRUE(pre.box.contains(x));
  EXPECT_TRUE(dom.box.contains(pre.box));
}

TEST(Preimage, NeedsWitness) {
  const auto net = bowl_encoder(1);
  const auto dom = identity_domain(Box::cube(3, -0.5, 0.5));
  const Rect q{P2(0, 0), P2(0.1, 0.1)};
  EXPECT_THROW(preimage_overapprox(net, q, dom, {}, 100, 0.05), NoWitness);
  EXPECT_THROW(preimage_overapprox(net, Rect{P2(10, 10), P2(11, 11)}, dom, {Vec::Zero(3)}, 100, 0.05), NoWitness);
}
