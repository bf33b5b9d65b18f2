// Acceptance run: one PASS/FAIL line per criterion.
#include "latent_verify/pipeline.hpp"
#include "support/oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using namespace lv;
using namespace lv::oracle;

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ---------------------------------------------------------------------------
// Criteria on library components

Outcome gp_posterior_vs_dense() {
  const auto t0 = clock_type::now();
  Rng rng(101);
  double worst_mu = 0, worst_var = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 3;  // augmented [z, c] inputs
    const int n = 1 + static_cast<int>(rng() % 30);
    const SeKernel k = random_kernel(rng, d);
    const Mat X = random_cols(rng, d, n, -1, 1);
    const Vec y = random_cols(rng, n, 1, -2, 2).col(0);
    const ExactGp gp = gp_on(k, X, y);
    for (int i = 0; i < 20; ++i) {
      const Vec x = random_cols(rng, d, 1, -1.5, 1.5).col(0);
      const Posterior a = gp.posterior(x), b = dense_posterior(k, X, y, gp.mean, x);
      worst_mu = std::max(worst_mu, std::abs(a.mu - b.mu));
      worst_var = std::max(worst_var, std::abs(a.sigma * a.sigma - b.sigma * b.sigma));
    }
  }
  const double s = since(t0);
  return {worst_mu <= 1e-8 && worst_var <= 1e-8 && s < 10,
          "max |dmu| " + fmt(worst_mu) + ", max |dvar| " + fmt(worst_var) + " over 100 datasets (n<=30); " + fmt(s, 3) +
              " s"};
}

Outcome planted_rkhs_bound() {
  const auto t0 = clock_type::now();
  Rng rng(102);
  long violations = 0, points = 0;
  double tightest = 1e300;
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + static_cast<int>(rng() % 3);
    const SeKernel k = random_kernel(rng, d);
    const int centers = 3 + static_cast<int>(rng() % 8);
    const Mat C = random_cols(rng, d, centers, -1, 1);
    const Vec alpha = random_cols(rng, centers, 1, -1, 1).col(0);
    const double B = std::sqrt(alpha.dot(k.cross(C, C) * alpha));
    const double dstar = 0.0;
    auto f = [&](const Vec& x) { return k.cross(C, x).col(0).dot(alpha); };
    const int n = 5 + static_cast<int>(rng() % 26);
    const Mat X = random_cols(rng, d, n, -1, 1);
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = f(X.col(i));
    ExactGp gp = gp_on(k, X, y);
    gp.mean = 0.0;
    gp.fit();
    for (int i = 0; i < 1000; ++i) {
      const Vec x = random_cols(rng, d, 1, -1, 1).col(0);
      const Posterior p = gp.posterior(x);
      const double bound = p.sigma * std::sqrt(B * B - dstar);
      const double err = std::abs(p.mu - f(x));
      violations += err > bound;
      if (err > 1e-9) tightest = std::min(tightest, bound / err);
      ++points;
    }
  }
  const double s = since(t0);
  return {violations == 0 && s < 60, std::to_string(violations) + " violations in " + std::to_string(points) +
                                         " points (smallest bound/error ratio " + fmt(tightest) + "); " + fmt(s, 3) + " s"};
}

Outcome region_bounds_vs_sweep() {
  const auto t0 = clock_type::now();
  Rng rng(103);
  int violations = 0, checks = 0;
  for (int t = 0; t < 20; ++t) {
    const bool deep = t % 4 == 3;
    const InclusionGpModel m = random_model(rng, 12, deep);
    const Rect q = random_rect(rng, 0.3);
    const double u0 = uniform(rng, 0, 0.8), u1 = u0 + uniform(rng, 0, 0.2);
    const Sweep sw = sweep(m, q, u0, u1, 100);
    std::vector<RegionBoundMethod> methods{RegionBoundMethod::SecondOrder};
    if (!deep) methods.push_back(RegionBoundMethod::GridLipschitz);
    for (const auto method : methods) {
      RegionBoundConfig cfg;
      cfg.method = method;
      const auto b = bound_over_region(m, q, u0, u1, cfg);
      for (int j = 0; j < 2; ++j) {
        ++checks;
        violations += !(b[j].mu_lo <= sw.mu_lo[j] && b[j].mu_hi >= sw.mu_hi[j] && b[j].eps_bar >= sw.eps[j] &&
                        b[j].lo <= sw.lo[j] && b[j].hi >= sw.hi[j]);
      }
    }
  }
  const double s = since(t0);
  return {violations == 0 && s < 300, std::to_string(violations) + " of " + std::to_string(checks) +
                                          " certified intervals miss a 10^6-point sweep (20 models); " + fmt(s, 3) + " s"};
}

Outcome randup_coverage() {
  const auto t0 = clock_type::now();
  const double delta = 0.05;
  const std::uint64_t N = 20000, fresh = 10000;
  double worst = 1.0;
  long under_misses = 0, over_misses_of_under = 0;
  int instances = 0;
  for (int t = 0; t < 20; ++t) {
    const bool six = t % 2 == 1;
    const SystemSpec spec = six ? make_nonlinear6d(true) : make_nonlinear3d();
    Rng rng(mix_seed(104, t));
    auto net = make_cico(spec.state_dim, 2, {0}, {16, 8}, 1, rng);
    mirror_init(net, uniform(rng, 2.0, 6.0));
    const double L = std::max(1.0, lipschitz_bound_on_domain(net, normalized_bounds(spec), 256));
    std::vector<Box> boxes{spec.region("goal").box};
    if (six) boxes.push_back(obstacle_6d());
    for (const auto& b : complement_boxes(spec.base_box, spec.region("goal").box)) boxes.push_back(b);
    const Box region = boxes[(t / 2) % boxes.size()];
    const Sampler s = box_sampler(spec, region, mix_seed(t, 1));
    const MappedRegion m = map_region(net, s, N, delta, L);
    // every sampled in-region encoding lies in the under-hull
    for (std::uint64_t start = 0; start < N; start += 8192) {
      const auto n = static_cast<Eigen::Index>(std::min<std::uint64_t>(8192, N - start));
      Mat X(net.input_dim, n);
      for (Eigen::Index j = 0; j < n; ++j) X.col(j) = s(start + j);
      const Mat Z = net.encode_batch(X);
      for (Eigen::Index j = 0; j < n; ++j) under_misses += !m.under.contains(P2(Z(0, j), Z(1, j)));
    }
    for (const auto& v : m.under.vertices()) over_misses_of_under += !m.over.contains(v);
    const Sampler f = box_sampler(spec, region, mix_seed(t, 2));
    std::uint64_t inside = 0;
    for (std::uint64_t i = 0; i < fresh; ++i) {
      const Vec z = net.encode(f(i));
      inside += m.over.contains(P2(z[0], z[1]));
    }
    worst = std::min(worst, static_cast<double>(inside) / fresh);
    ++instances;
  }
  const double s = since(t0);
  return {worst >= 1 - delta && under_misses == 0 && over_misses_of_under == 0 && s < 120,
          "worst fresh-sample frequency in hull+eps " + fmt(worst, 6) + " (need >= " + fmt(1 - delta) + ") over " +
              std::to_string(instances) + " instances; " + std::to_string(under_misses) +
              " in-region encodings outside the under-hull; " + fmt(s, 3) + " s"};
}

Outcome checker_vs_brute_force() {
  const auto t0 = clock_type::now();
  Rng rng(106);
  int disagreements = 0;
  for (int i = 0; i < 200; ++i) {
    const auto n = random_nts(rng, 1 + rng() % 6);
    const auto f = random_formula(rng, 3, false);
    disagreements += !(check(n, f) == brute_force_check(n, f));
  }
  const double s = since(t0);
  return {disagreements == 0 && s < 120,
          std::to_string(disagreements) + " disagreements on 200 instances; " + fmt(s, 3) + " s"};
}

Outcome nnf_preservation() {
  Rng rng(107);
  int disagreements = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_formula(rng, 3, true);
    const auto t = random_lasso(rng, 4, 4);
    disagreements += evaluate(f, t) != evaluate(to_nnf(f), t);
  }
  return {disagreements == 0, std::to_string(disagreements) + " disagreements on 1000 (formula, lasso) pairs"};
}

// ---------------------------------------------------------------------------
// Studies

struct Study {
  StudyConfig cfg;
  SystemSpec spec;
  AutoencoderModel model;
  RegionStage regions;
  std::optional<GpStage> gp;
  std::optional<Verification> first;  // round 0
  std::optional<Verification> last;   // after refinement
  double seconds = 0;
};

StudyConfig load(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open " + p.string());
  return parse_config(nlohmann::json::parse(f));
}

Study run_study(const StudyConfig& cfg, bool verify) {
  const auto t0 = clock_type::now();
  Study s;
  s.cfg = cfg;
  s.spec = make_system(cfg.system);
  const DataSplits data = split_data(cfg, generate_data(cfg));
  s.model = train_encoder(cfg, data.learn);
  progress(cfg.name + ": encoder trained (" + fmt(since(t0), 3) + " s)");
  s.regions = map_study_regions(cfg, s.model.encoder);
  progress(cfg.name + ": regions mapped (" + fmt(since(t0), 3) + " s)");
  if (verify) {
    s.gp = fit_study_gp(cfg, s.model.encoder, s.regions, data);
    progress(cfg.name + ": GP fitted (" + fmt(since(t0), 3) + " s)");
    s.first = verify_and_refine(cfg, s.gp->model, s.regions, 0);
    const auto& r0 = s.first->rounds.back();
    progress(cfg.name + ": round 0 yes " + std::to_string(r0.yes) + " no " + std::to_string(r0.no) + " maybe " +
             std::to_string(r0.maybe) + " (" + fmt(since(t0), 3) + " s)");
    s.last = s.first;
    for (int k = 0; k < cfg.refinement.rounds; ++k) {
      const std::size_t before = s.last->rounds.size();
      s.last = verify_and_refine(cfg, s.gp->model, s.regions, 1, &*s.last);
      if (s.last->rounds.size() == before) break;
      const auto& r = s.last->rounds.back();
      progress(cfg.name + ": round " + std::to_string(r.round) + " cells " + std::to_string(r.cells) + " yes " +
               std::to_string(r.yes) + " coverage " + fmt(100 * r.coverage, 3) + "% (" + fmt(since(t0), 3) + " s)");
    }
  }
  s.seconds = since(t0);
  return s;
}

struct LabelCount {
  long checked = 0, outside = 0, positive_violations = 0, negation_violations = 0;
};

// L(cell(h(x))) against the true labels of x; encodings in q_u are counted apart.
LabelCount label_soundness(const Study& s, std::size_t samples, std::uint64_t seed) {
  const Partition p = s.last ? s.last->abstraction.partition
                             : partition_domain(s.regions.domain.Z, s.cfg.partition.nx, s.cfg.partition.ny);
  const LabelingMap L = s.last ? s.last->abstraction.labels : build_labels(p, s.regions.regions);
  const Normalizer nz = s.spec.normalizer();
  const CellIndex index(p);
  Rng rng(seed);
  LabelCount c;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vec x = s.spec.lift(s.spec.base_box.sample(rng));
    const Vec z = s.model.encoder.encode(nz.apply(x));
    const P2 pz(z[0], z[1]);
    std::size_t q = p.q_u();
    for (std::size_t cand : index.query(Rect{pz, pz}))
      if (p.cells[cand].boundary ? p.cells[cand].shape.contains(pz, 1e-12) : p.cells[cand].rect.contains(pz)) {
        q = cand;
        break;
      }
    if (q == p.q_u()) {
      ++c.outside;
      continue;
    }
    ++c.checked;
    const auto truth = state_labels(s.spec, s.regions.regions, x);
    for (std::size_t a = 0; a < truth.size(); a += 2) {
      c.positive_violations += L.assignment[q][a] && !truth[a];
      c.negation_violations += L.assignment[q][a + 1] && !truth[a + 1];
    }
  }
  return c;
}

Outcome labeling(const std::vector<const Study*>& studies) {
  bool pass = true;
  std::string detail;
  for (const Study* s : studies) {
    const LabelCount c = label_soundness(*s, 10000, mix_seed(s->cfg.seed, 105));
    const double neg_freq = c.checked ? static_cast<double>(c.negation_violations) / c.checked : 0.0;
    const bool ok = c.positive_violations == 0 && neg_freq <= s->cfg.regions.delta;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + s->cfg.name + ": " + std::to_string(c.positive_violations) +
              " positive, " + fmt(neg_freq) + " negation violation freq over " + std::to_string(c.checked) +
              " states (" + std::to_string(c.outside) + " encoded outside Z)";
  }
  return {pass, detail};
}

Outcome audit(const std::vector<const Study*>& studies) {
  bool pass = true;
  std::string detail;
  for (const Study* s : studies) {
    const Box dom = normalized_bounds(s->spec);
    const AuditReport r = check_cico(s->model.encoder, 1000, 1e-6, mix_seed(s->cfg.seed, 111), &dom);
    pass = pass && r.pass;
    detail += (detail.empty() ? "" : "; ") + s->cfg.name + " " + (r.pass ? "pass" : "FAIL") + " (" +
              std::to_string(r.jacobian_rank_failures) + "/" + std::to_string(r.probes) + " rank failures)";
  }
  return {pass, detail};
}

MonitorReport monitor(const Study& s, const Verification& v, std::size_t n, std::uint64_t salt) {
  return monitor_yes_states(s.cfg, s.model.encoder, v, n, mix_seed(s.cfg.seed, salt));
}

Outcome soundness_3d(const Study& s) {
  const MonitorReport r = monitor(s, *s.first, 10000, 108);
  const bool vacuous = r.trajectories == 0;
  return {!vacuous && r.violations == 0 && r.trajectories == 10000,
          std::to_string(r.violations) + " counterexamples in " + std::to_string(r.trajectories) +
              " trajectories from round-0 Q_yes (" + std::to_string(s.first->result.yes.size()) + " cells)" + (vacuous ? "; Q_yes empty" : "")};
}

Outcome coverage_3d(const Study& s) {
  const auto& r = s.last->rounds.back();
  const MonitorReport m = monitor(s, *s.last, 10000, 109);
  const bool sound = m.trajectories > 0 && m.violations == 0;
  const bool pass = r.coverage >= 0.8 && sound && s.seconds < 1800;
  std::string rounds;
  for (const auto& k : s.last->rounds) rounds += (rounds.empty() ? "" : " ") + fmt(100 * k.coverage, 3) + "%";
  return {pass, "Q_yes covers " + fmt(100 * r.coverage, 4) + "% of non-boundary area after " +
                    std::to_string(r.round) + " refinement rounds (need >= 80%; per round: " + rounds + "); " +
                    std::to_string(m.violations) + " counterexamples in " + std::to_string(m.trajectories) +
                    " trajectories from final Q_yes; end to end " + fmt(s.seconds, 4) + " s"};
}

Outcome obstacle_6d(const Study& s) {
  const Verification& v = *s.last;
  const auto phi = ltl::parse(s.cfg.formula);
  const DecodeDomain dom = system_domain(s.spec);
  const auto decoded = decode_cells(s.cfg, s.model, v.abstraction.partition, v.result.yes, true);
  std::size_t ok = 0, runs = 0, bad = 0;
  Rng rng(mix_seed(s.cfg.seed, 110));
  for (const auto& d : decoded) {
    if (!d.ok) continue;
    ++ok;
    const Rect& q = v.abstraction.partition.cells[d.cell].rect;
    std::vector<Vec> starts{d.witness};
    for (int k = 0; k < 20000 && starts.size() < 20; ++k) {
      const Vec x = d.preimage.box.sample(rng);
      if (encodes_into(s.model.encoder, dom, x, q)) starts.push_back(x);
    }
    for (const auto& x : starts) {
      ++runs;
      bad += !monitor_trajectory(s.spec, phi, x, s.cfg.monitor.horizon);
    }
  }
  // Q_no: fraction of trajectories that reach the obstacle (reported only).
  std::vector<char> no_mask(v.abstraction.partition.cells.size(), 0);
  for (auto q : v.result.no)
    if (q < no_mask.size()) no_mask[q] = 1;
  const auto no_starts = sample_marked_states(s.spec, s.model.encoder, v.abstraction.partition, no_mask, 2000,
                                              s.cfg.monitor.max_draws, mix_seed(s.cfg.seed, 112));
  std::size_t collide = 0;
  for (const auto& b : no_starts) {
    Vec x = s.spec.lift(b);
    bool hit = false;
    for (int k = 0; k <= s.cfg.monitor.horizon && !hit; ++k) {
      hit = s.spec.in_region(s.spec.region("unsafe"), x);
      x = s.spec.step(x);
    }
    collide += hit;
  }
  const MonitorReport m = monitor(s, v, s.cfg.monitor.trajectories, 113);
  const bool pass = ok > 0 && bad == 0 && m.violations == 0;
  return {pass, std::to_string(bad) + " failures in " + std::to_string(runs) + " trajectories from " +
                    std::to_string(ok) + "/" + std::to_string(decoded.size()) + " decoded Q_yes cells; sampled Q_yes: " +
                    std::to_string(m.violations) + "/" + std::to_string(m.trajectories) +
                    "; note: " + (no_starts.empty() ? std::string("Q_no empty")
                                                    : fmt(100.0 * collide / no_starts.size(), 3) + "% of " +
                                                          std::to_string(no_starts.size()) +
                                                          " Q_no trajectories collide")};
}

Outcome lidar(const std::vector<const Study*>& studies) {
  bool pass = true;
  std::string detail;
  for (const Study* s : studies) {
    const MonitorReport m = monitor(*s, *s->last, 1000, 114);
    pass = pass && m.violations == 0;
    const auto& r = s->last->rounds.back();
    detail += (detail.empty() ? "" : "; ") + s->cfg.name + ": completed (" + std::to_string(r.cells) + " cells, " +
              fmt(s->seconds, 4) + " s), " + std::to_string(m.violations) + " counterexamples in " +
              std::to_string(m.trajectories) + " trajectories" +
              (m.trajectories == 0 ? " (Q_yes empty, sampling vacuous)" : "");
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  std::string config_dir = LV_CONFIG_DIR;
  std::string report;
  bool strict = false;
  app.add_option("--config-dir", config_dir, "directory with the shipped study configs");
  app.add_option("--report", report, "also write the criterion lines to this file");
  app.add_flag("--strict", strict, "exit nonzero when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  std::map<int, Outcome> out;
  auto record = [&](int id, auto&& fn) {
    progress("criterion " + std::to_string(id));
    try {
      out[id] = fn();
    } catch (const std::exception& e) {
      out[id] = {false, std::string("error: ") + e.what()};
    }
  };

  record(1, gp_posterior_vs_dense);
  record(2, planted_rkhs_bound);
  record(3, region_bounds_vs_sweep);
  record(4, randup_coverage);
  record(6, checker_vs_brute_force);
  record(7, nnf_preservation);

  const std::filesystem::path dir(config_dir);
  std::vector<Study> studies;
  try {
    studies.push_back(run_study(load(dir / "nonlinear3d.json"), true));
    studies.push_back(run_study(load(dir / "nonlinear6d_obstacle.json"), true));
    studies.push_back(run_study(load(dir / "nonlinear6d.json"), false));
    studies.push_back(run_study(load(dir / "lidar_reach.json"), true));
    studies.push_back(run_study(load(dir / "lidar_two_goals.json"), true));
  } catch (const std::exception& e) {
    for (int id : {5, 8, 9, 10, 11, 12})
      if (!out.count(id)) out[id] = {false, std::string("study pipeline failed: ") + e.what()};
  }
  if (studies.size() == 5) {
    std::vector<const Study*> all;
    for (const auto& s : studies) all.push_back(&s);
    record(8, [&] { return soundness_3d(studies[0]); });
    record(9, [&] { return coverage_3d(studies[0]); });
    record(10, [&] { return obstacle_6d(studies[1]); });
    record(12, [&] { return lidar({&studies[3], &studies[4]}); });
    record(5, [&] { return labeling(all); });
    record(11, [&] { return audit(all); });
  }

  int failed = 0;
  std::ostringstream lines;
  for (int id = 1; id <= 12; ++id) {
    const Outcome& o = out[id];
    failed += !o.pass;
    lines << "criterion " << std::setw(2) << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
  }
  lines << (12 - failed) << "/12 criteria pass\n";
  std::cout << lines.str() << std::flush;
  if (!report.empty()) std::ofstream(report) << lines.str();
  return strict && failed ? 1 : 0;
}
