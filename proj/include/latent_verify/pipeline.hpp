#pragma once

#include "latent_verify/abstraction.hpp"
#include "latent_verify/decode.hpp"
#include "latent_verify/encoder.hpp"
#include "latent_verify/inclusion_gp.hpp"
#include "latent_verify/ltl/check.hpp"
#include "latent_verify/regions.hpp"
#include "latent_verify/systems.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace lv {

// ---------------------------------------------------------------------------
// Study configuration

struct DataSettings {
  int learn = 2000;
  int regress = 400;
  int predict = 2000;
};

struct EncoderSettings {
  std::vector<int> passthrough{0};
  std::vector<int> hidden{128, 64, 32, 16};
  int skip_target = 1;
  int aux_width = 64;
  std::string init = "radial";  // radial, mirror or default
  double gain = 50.0;
  double jitter = 0.1;
  double hidden_bias = 4.0;
  double skip_scale = 0.01;
  std::vector<double> tip_base;  // base point under the radial tip; empty means the centre of X
  std::vector<double> axis_scale;  // per state coordinate, radial init only; empty means all ones
  double target_std = 0.3;
  int epochs = 30;
  int batch = 128;
  double lr = 1e-3;
  double lr_final = 1e-4;
  std::array<double, 5> alpha{1.0, 0.1, 0.1, 0.01, 1.0};
  int audit_probes = 200;
};

struct RegionSettings {
  std::uint64_t samples = 100000;
  std::uint64_t domain_samples = 100000;
  double delta = 0.05;
  int lipschitz_boxes = 512;
};

struct GpSettings {
  std::string c_mode = "angle";  // angle, pca or learned
  std::vector<int> c_dims{1, 2};
  int c_rounds = 1;
  int hyper_subset = 0;
  double jitter = 1e-6;
  std::string b_rule = "formula";  // formula, calibrated or user
  double safety = 2.0;
  bool floor_mu_norm = true;
  std::vector<double> B;
  int u_intervals = 8;
  double tolerance = 1e-3;
  int max_pieces = 16;
  int local_points = 64;
  bool deep_kernel = false;
};

struct PartitionSettings {
  int nx = 40;
  int ny = 40;
};

struct RefinementSettings {
  int rounds = 5;
};

struct DecodeSettings {
  int max_cells = 0;  // 0 decodes every Q_yes cell
  std::uint64_t preimage_samples = 500;
  int starts = 16;
  int iterations = 2000;
};

struct MonitorSettings {
  int trajectories = 10000;
  int horizon = 200;
  std::uint64_t max_draws = 20000000;
};

struct StudyConfig {
  std::string name = "study";
  std::string system = "nonlinear3d";
  std::uint64_t seed = 0;
  std::string formula = "!unsafe U goal";
  DataSettings data;
  EncoderSettings encoder;
  RegionSettings regions;
  GpSettings gp;
  PartitionSettings partition;
  RefinementSettings refinement;
  DecodeSettings decode;
  MonitorSettings monitor;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataSettings, learn, regress, predict)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderSettings, passthrough, hidden, skip_target, aux_width, init,
                                                gain, jitter, hidden_bias, skip_scale, tip_base, axis_scale,
                                                target_std, epochs, batch, lr,
                                                lr_final, alpha, audit_probes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RegionSettings, samples, domain_samples, delta, lipschitz_boxes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GpSettings, c_mode, c_dims, c_rounds, hyper_subset, jitter, b_rule,
                                                safety, floor_mu_norm, B, u_intervals, tolerance, max_pieces,
                                                local_points, deep_kernel)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PartitionSettings, nx, ny)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RefinementSettings, rounds)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DecodeSettings, max_cells, preimage_samples, starts, iterations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MonitorSettings, trajectories, horizon, max_draws)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StudyConfig, name, system, seed, formula, data, encoder, regions, gp,
                                                partition, refinement, decode, monitor)

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    if (!known.contains(k)) throw ConfigError("unknown key '" + path + k + "'");
    if (v.is_object()) reject_unknown_keys(v, known.at(k), path + k + ".");
  }
}

}  // namespace detail

inline SystemSpec make_system(const std::string& name) {
  if (name == "nonlinear3d") return make_nonlinear3d();
  if (name == "nonlinear6d") return make_nonlinear6d(false);
  if (name == "nonlinear6d_obstacle") return make_nonlinear6d(true);
  if (name == "lidar_reach") return make_lidar_reach();
  if (name == "lidar_two_goals") return make_lidar_two_goals();
  throw ConfigError("unknown system '" + name + "'");
}

inline void validate(const StudyConfig& c) {
  const SystemSpec spec = make_system(c.system);
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.data.learn < 1 || c.data.regress < 1 || c.data.predict < 1) fail("data sizes must be positive");
  for (int p : c.encoder.passthrough)
    if (p < 0 || p >= spec.state_dim) fail("encoder.passthrough index out of range");
  if (c.encoder.passthrough.size() > 1) fail("a 2D latent space allows at most one passthrough coordinate");
  if (c.encoder.init != "radial" && c.encoder.init != "mirror" && c.encoder.init != "default")
    fail("encoder.init must be radial, mirror or default");
  if (c.encoder.epochs < 0 || c.encoder.batch < 1) fail("encoder.epochs must be >= 0 and batch >= 1");
  if (!c.encoder.tip_base.empty() && static_cast<int>(c.encoder.tip_base.size()) != spec.base_dim)
    fail("encoder.tip_base needs one value per base coordinate");
  if (!c.encoder.axis_scale.empty() && static_cast<int>(c.encoder.axis_scale.size()) != spec.state_dim)
    fail("encoder.axis_scale needs one value per state coordinate");
  if (!(c.regions.delta > 0 && c.regions.delta < 1)) fail("regions.delta must lie in (0, 1)");
  if (c.gp.c_mode != "angle" && c.gp.c_mode != "pca" && c.gp.c_mode != "learned")
    fail("gp.c_mode must be angle, pca or learned");
  if (c.gp.c_mode == "angle") {
    if (c.gp.c_dims.size() != 2) fail("gp.c_dims needs two state coordinates");
    for (int d : c.gp.c_dims)
      if (d < 0 || d >= spec.state_dim) fail("gp.c_dims index out of range");
  }
  if (c.gp.b_rule != "formula" && c.gp.b_rule != "calibrated" && c.gp.b_rule != "user")
    fail("gp.b_rule must be formula, calibrated or user");
  if (c.gp.b_rule == "user" && c.gp.B.size() != 2) fail("gp.B needs one value per latent dimension");
  if (!(c.gp.safety > 0)) fail("gp.safety must be positive");
  if (c.gp.u_intervals < 1) fail("gp.u_intervals must be >= 1");
  if (c.partition.nx < 1 || c.partition.ny < 1) fail("partition resolution must be >= 1");
  if (c.refinement.rounds < 0) fail("refinement.rounds must be >= 0");
  if (c.monitor.horizon < 1) fail("monitor.horizon must be >= 1");
  std::set<std::string> props;
  try {
    ltl::collect_props(ltl::parse(c.formula), props);
  } catch (const SyntaxError& e) {
    fail(std::string("formula: ") + e.what());
  }
  for (const auto& p : props) {
    bool known = false;
    for (const auto& r : spec.regions) known = known || r.name == p;
    if (!known) fail("formula mentions '" + p + "', which is not a region of " + c.system);
  }
}

inline StudyConfig parse_config(const nlohmann::json& j) {
  StudyConfig c;
  try {
    c = j.get<StudyConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  detail::reject_unknown_keys(j, nlohmann::json(c), "");
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Stages

struct DataSplits {
  Dataset learn, regress, predict;
};

inline Dataset generate_data(const StudyConfig& c) {
  const SystemSpec spec = make_system(c.system);
  return sample_dataset(spec, c.data.learn + c.data.regress + c.data.predict, mix_seed(c.seed, 1));
}

inline DataSplits split_data(const StudyConfig& c, const Dataset& d) {
  const Eigen::Index n = c.data.learn + c.data.regress + c.data.predict;
  if (d.size() != n) throw StaleArtifact("dataset has " + std::to_string(d.size()) + " pairs, config asks for " +
                                         std::to_string(n));
  DataSplits s;
  auto slice = [&](Dataset& out, Eigen::Index start, Eigen::Index len, Split k) {
    out.seed = d.seed;
    out.split = k;
    out.x = d.x.middleCols(start, len);
    out.xp = d.xp.middleCols(start, len);
  };
  slice(s.learn, 0, c.data.learn, Split::Learning);
  slice(s.regress, c.data.learn, c.data.regress, Split::Regression);
  slice(s.predict, c.data.learn + c.data.regress, c.data.predict, Split::Prediction);
  return s;
}

inline AutoencoderModel train_encoder(const StudyConfig& c, const Dataset& learn, TrainHistory* history = nullptr) {
  const SystemSpec spec = make_system(c.system);
  const auto& e = c.encoder;
  Rng rng(mix_seed(c.seed, 2));
  auto m = make_model(spec.state_dim, 2, e.passthrough, e.hidden, e.skip_target, e.aux_width, rng);
  if (e.init == "radial") {
    Vec tip_base = spec.base_box.center();
    if (!e.tip_base.empty()) tip_base = Eigen::Map<const Vec>(e.tip_base.data(), static_cast<Eigen::Index>(e.tip_base.size()));
    const Vec tip = m.encoder.gather(spec.normalizer().apply(spec.lift(tip_base)), m.encoder.net_inputs);
    Vec scale;
    if (!e.axis_scale.empty()) {
      const Vec all = Eigen::Map<const Vec>(e.axis_scale.data(), static_cast<Eigen::Index>(e.axis_scale.size()));
      scale = m.encoder.gather(all, m.encoder.net_inputs);
    }
    radial_init(m.encoder, e.gain, e.jitter, e.hidden_bias, e.skip_scale, rng, tip, scale);
  }
  if (e.init == "mirror") mirror_init(m.encoder, e.gain);
  standardize_output(m.encoder, learn.x, e.target_std);
  if (e.epochs > 0) {
    LossWeights w;
    w.alpha = e.alpha;
    TrainConfig tc;
    tc.epochs = e.epochs;
    tc.batch_size = e.batch;
    tc.lr = e.lr;
    tc.lr_final = e.lr_final;
    tc.seed = mix_seed(c.seed, 3);
    auto h = train(m, learn.x, learn.xp, w, tc);
    if (history) *history = std::move(h);
  }
  return m;
}

// Normalized image of the lifted state bounds.
inline Box normalized_bounds(const SystemSpec& spec) {
  const Normalizer nz = spec.normalizer();
  const Box b = spec.lifted_bounds();
  return Box(nz.apply(b.lo), nz.apply(b.hi));
}

struct RegionStage {
  double L_h = 1.0;
  double delta_each = 0.0;
  LatentDomain domain;
  std::vector<LatentRegionPair> regions;
};

inline RegionStage map_study_regions(const StudyConfig& c, const CicoNetwork& enc) {
  const SystemSpec spec = make_system(c.system);
  RegionStage s;
  s.L_h = std::max(1.0, lipschitz_bound_on_domain(enc, normalized_bounds(spec), c.regions.lipschitz_boxes));
  s.domain = build_latent_domain(enc, box_sampler(spec, spec.base_box, mix_seed(c.seed, 4)), c.regions.domain_samples,
                                 c.regions.delta, s.L_h);
  RegionMappingConfig rc;
  rc.samples = c.regions.samples;
  rc.delta = c.regions.delta;
  rc.seed = mix_seed(c.seed, 5);
  s.regions = map_regions(spec, enc, s.L_h, rc, &s.delta_each);
  return s;
}

inline double angle_coordinate(const Vec& x, const std::vector<int>& dims) {
  return std::atan2(x[dims[1]], x[dims[0]]) / (2.0 * std::numbers::pi) + 0.5;
}

struct GpStage {
  InclusionGpModel model;
  double L_g = 0.0;
  double diameter = 0.0;
  std::vector<double> heldout_ratio;  // max |error| / sigma on the prediction split, per dimension
  std::vector<double> heldout_error;
};

// Held-out |error| / sigma. Without an explicit c the most favourable c of a
// grid is used, matching the existential reading of the inclusion.
inline void heldout_check(const StudyConfig& c, const CicoNetwork& enc, const InclusionGpModel& m, const Dataset& d,
                          std::vector<double>& ratio, std::vector<double>& err) {
  const Mat Z = enc.encode_batch(d.x), Zp = enc.encode_batch(d.xp);
  const int np = static_cast<int>(Zp.rows());
  ratio.assign(np, 0.0);
  err.assign(np, 0.0);
  for (Eigen::Index i = 0; i < Z.cols(); ++i) {
    std::vector<double> best_r(np, 1e300), best_e(np, 1e300);
    auto consider = [&](double cv) {
      const auto p = gp_posterior(m, Z.col(i), cv);
      for (int j = 0; j < np; ++j) {
        const double e = std::abs(Zp(j, i) - p.mu[j]);
        best_r[j] = std::min(best_r[j], e / std::max(p.sigma[j], 1e-300));
        best_e[j] = std::min(best_e[j], e);
      }
    };
    if (c.gp.c_mode == "angle") {
      consider(angle_coordinate(d.x.col(i), c.gp.c_dims));
    } else {
      for (int k = 0; k <= 40; ++k) consider(m.data.a + (m.data.b - m.data.a) * k / 40.0);
    }
    for (int j = 0; j < np; ++j) {
      ratio[j] = std::max(ratio[j], best_r[j]);
      err[j] = std::max(err[j], best_e[j]);
    }
  }
}

inline GpStage fit_study_gp(const StudyConfig& c, const CicoNetwork& enc, const RegionStage& rs,
                            const DataSplits& data) {
  const SystemSpec spec = make_system(c.system);
  GpFitConfig g;
  g.c_rounds = c.gp.c_rounds;
  g.hyper_subset = c.gp.hyper_subset;
  g.jitter = c.gp.jitter;
  g.deep_kernel = c.gp.deep_kernel;
  g.seed = mix_seed(c.seed, 6);
  const Mat Z = enc.encode_batch(data.regress.x), Zp = enc.encode_batch(data.regress.xp);
  GpStage s;
  if (c.gp.c_mode == "learned") {
    fit_latent_c(Z, Zp, 0.0, 1.0, g, &s.model);
  } else {
    AugmentedDataset d;
    d.Z = Z;
    d.Zp = Zp;
    d.a = 0.0;
    d.b = 1.0;
    if (c.gp.c_mode == "pca") {
      d.c = pca_init_c(Z, Zp, 0.0, 1.0);
    } else {
      d.c.resize(Z.cols());
      for (Eigen::Index i = 0; i < Z.cols(); ++i) d.c[i] = angle_coordinate(data.regress.x.col(i), c.gp.c_dims);
    }
    s.model = fit_inclusion_gp(d, g);
  }
  const Rect bb = rs.domain.Z.bounding_box();
  s.diameter = (bb.hi - bb.lo).norm();
  s.L_g = rs.L_h * estimate_dynamics_lipschitz(spec, 2000, mix_seed(c.seed, 7));
  heldout_check(c, enc, s.model, data.predict, s.heldout_ratio, s.heldout_error);
  if (c.gp.b_rule == "formula") {
    set_constants(s.model, rkhs_constants(s.L_g, s.diameter, c.gp.safety));
  } else if (c.gp.b_rule == "user") {
    for (std::size_t j = 0; j < s.model.dims.size(); ++j) {
      s.model.dims[j].B = c.gp.B[j];
      s.model.dims[j].dstar = 0.0;
    }
  } else {
    for (std::size_t j = 0; j < s.model.dims.size(); ++j) {
      s.model.dims[j].B = c.gp.safety * s.heldout_ratio[j];
      s.model.dims[j].dstar = 0.0;
    }
  }
  if (c.gp.floor_mu_norm) floor_constants_at_mean_norm(s.model);
  return s;
}

// ---------------------------------------------------------------------------
// Verification and refinement

inline AbstractionConfig abstraction_config(const StudyConfig& c) {
  AbstractionConfig a;
  a.u_intervals = c.gp.u_intervals;
  a.bounds.tolerance = c.gp.tolerance;
  a.bounds.max_pieces = c.gp.max_pieces;
  a.bounds.local_points = c.gp.local_points;
  return a;
}

// phi-bar over the doubled proposition set of the labeling.
inline ltl::Formula abstract_formula(const StudyConfig& c, const std::vector<std::string>& ap) {
  return ltl::relabel_negations(ltl::to_nnf(ltl::parse(c.formula)), ap);
}

struct RoundSummary {
  int round = 0;
  std::size_t cells = 0, yes = 0, no = 0, maybe = 0;
  double yes_area = 0.0, no_area = 0.0, maybe_area = 0.0;
  double coverage = 0.0;  // Q_yes share of non-boundary cell area
  double seconds = 0.0;
};

inline RoundSummary summarize(const Abstraction& a, const ltl::CheckResult& r) {
  RoundSummary s;
  s.cells = a.partition.cells.size();
  double inner = 0.0, inner_yes = 0.0;
  for (std::size_t q = 0; q < a.partition.cells.size(); ++q) {
    const auto& cell = a.partition.cells[q];
    const double area = cell.shape.area();
    switch (r.verdict(q)) {
      case ltl::CheckResult::Verdict::Yes: ++s.yes, s.yes_area += area; break;
      case ltl::CheckResult::Verdict::No: ++s.no, s.no_area += area; break;
      case ltl::CheckResult::Verdict::Maybe: ++s.maybe, s.maybe_area += area; break;
    }
    if (cell.boundary) continue;
    inner += area;
    if (r.verdict(q) == ltl::CheckResult::Verdict::Yes) inner_yes += area;
  }
  s.coverage = inner > 0 ? inner_yes / inner : 0.0;
  return s;
}

struct Verification {
  Abstraction abstraction;
  ltl::CheckResult result;
  std::vector<RoundSummary> rounds;
};

inline ltl::CheckResult check_abstraction(const StudyConfig& c, const Abstraction& a) {
  return ltl::check(a.nts, abstract_formula(c, a.nts.ap));
}

// Builds (or continues from `start`) and runs `rounds` verify-refine cycles.
inline Verification verify_and_refine(const StudyConfig& c, const InclusionGpModel& m, const RegionStage& rs,
                                      int rounds, const Verification* start = nullptr) {
  using clock = std::chrono::steady_clock;
  const AbstractionConfig ac = abstraction_config(c);
  Verification v;
  auto t0 = clock::now();
  if (start) {
    v = *start;
  } else {
    v.abstraction = build_abstraction(partition_domain(rs.domain.Z, c.partition.nx, c.partition.ny), rs.regions, m, ac);
    v.result = check_abstraction(c, v.abstraction);
    v.rounds.push_back(summarize(v.abstraction, v.result));
    v.rounds.back().seconds = std::chrono::duration<double>(clock::now() - t0).count();
  }
  for (int k = 0; k < rounds; ++k) {
    t0 = clock::now();
    auto [p, plan] = refine(v.abstraction.nts, v.result, v.abstraction.partition);
    if (plan.cells.empty()) break;
    Abstraction next = build_abstraction(std::move(p), rs.regions, m, ac, &v.abstraction);
    v.abstraction = std::move(next);
    v.result = check_abstraction(c, v.abstraction);
    v.rounds.push_back(summarize(v.abstraction, v.result));
    v.rounds.back().round = static_cast<int>(v.rounds.size()) - 1;
    v.rounds.back().seconds = std::chrono::duration<double>(clock::now() - t0).count();
  }
  return v;
}

// ---------------------------------------------------------------------------
// Decoding and runtime monitoring

struct DecodedCell {
  std::size_t cell = 0;
  bool ok = false;
  Vec witness;  // base coordinates
  PreimageRegion preimage;
  std::string error;
};

inline std::vector<DecodedCell> decode_cells(const StudyConfig& c, const AutoencoderModel& model, const Partition& p,
                                             const std::vector<std::size_t>& cells, bool preimages) {
  const SystemSpec spec = make_system(c.system);
  const DecodeDomain dom = system_domain(spec);
  DecodeConfig dc;
  dc.starts = c.decode.starts;
  dc.iterations = c.decode.iterations;
  std::vector<DecodedCell> out;
  for (std::size_t q : cells) {
    if (c.decode.max_cells > 0 && static_cast<int>(out.size()) >= c.decode.max_cells) break;
    DecodedCell d;
    d.cell = q;
    dc.seed = mix_seed(c.seed, 1000 + q);
    try {
      const auto r = decode_cell(model.encoder, p.cells[q].rect, dom, &model.decoder, dc);
      d.witness = r.x;
      d.ok = true;
      if (preimages)
        d.preimage = preimage_overapprox(model.encoder, p.cells[q].rect, dom, {r.x}, c.decode.preimage_samples,
                                         c.regions.delta, mix_seed(c.seed, 2000 + q));
    } catch (const Error& e) {
      d.error = e.what();
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline ltl::Letter state_letter(const SystemSpec& spec, const Vec& state) {
  ltl::Letter l;
  for (const auto& r : spec.regions)
    if (spec.in_region(r, state)) l.insert(r.name);
  return l;
}

// Simulates from a base point for `horizon` steps and evaluates phi on the
// trace with its final state repeated forever.
inline bool monitor_trajectory(const SystemSpec& spec, const ltl::Formula& phi, const Vec& base, int horizon) {
  ltl::LassoTrace t;
  Vec x = spec.lift(base);
  for (int k = 0; k < horizon; ++k) {
    t.stem.push_back(state_letter(spec, x));
    x = spec.step(x);
  }
  t.loop.push_back(state_letter(spec, x));
  return ltl::evaluate(phi, t);
}

// Uniform draws from X whose encoding lands in a marked cell.
inline std::vector<Vec> sample_marked_states(const SystemSpec& spec, const CicoNetwork& enc, const Partition& p,
                                             const std::vector<char>& marked, std::size_t count,
                                             std::uint64_t max_draws, std::uint64_t seed,
                                             std::vector<std::size_t>* cells = nullptr) {
  const Normalizer nz = spec.normalizer();
  const CellIndex index(p);
  std::vector<Vec> out;
  if (std::find(marked.begin(), marked.end(), 1) == marked.end()) return out;
  const Eigen::Index chunk = 4096;
  for (std::uint64_t start = 0; start < max_draws && out.size() < count; start += chunk) {
    Mat B(spec.base_dim, chunk), X(spec.state_dim, chunk);
    for (Eigen::Index j = 0; j < chunk; ++j) {
      B.col(j) = sample_base(spec.base_box, seed, start + static_cast<std::uint64_t>(j));
      X.col(j) = nz.apply(spec.lift(B.col(j)));
    }
    const Mat Z = enc.encode_batch(X);
    for (Eigen::Index j = 0; j < chunk && out.size() < count; ++j) {
      const P2 z(Z(0, j), Z(1, j));
      for (std::size_t q : index.query(Rect{z, z})) {
        if (!marked[q] || !(p.cells[q].boundary ? p.cells[q].shape.contains(z, 1e-12) : p.cells[q].rect.contains(z)))
          continue;
        out.push_back(B.col(j));
        if (cells) cells->push_back(q);
        break;
      }
    }
  }
  return out;
}

inline std::vector<char> verdict_mask(const ltl::CheckResult& r, std::size_t cells) {
  std::vector<char> m(cells, 0);
  for (auto q : r.yes)
    if (q < cells) m[q] = 1;
  return m;
}

struct MonitorReport {
  std::size_t trajectories = 0;
  std::size_t violations = 0;
  std::uint64_t draws = 0;
};

inline MonitorReport monitor_yes_states(const StudyConfig& c, const CicoNetwork& enc, const Verification& v,
                                        std::size_t count, std::uint64_t seed) {
  const SystemSpec spec = make_system(c.system);
  const auto phi = ltl::parse(c.formula);
  const auto starts = sample_marked_states(spec, enc, v.abstraction.partition,
                                           verdict_mask(v.result, v.abstraction.partition.cells.size()), count,
                                           c.monitor.max_draws, seed);
  MonitorReport r;
  r.trajectories = starts.size();
  for (const auto& b : starts)
    if (!monitor_trajectory(spec, phi, b, c.monitor.horizon)) ++r.violations;
  return r;
}

}  // namespace lv
