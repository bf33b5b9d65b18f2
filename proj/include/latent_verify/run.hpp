#pragma once

#include "latent_verify/pipeline.hpp"

#include <openssl/evp.h>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace lv {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Hashing and files

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp.string());
    f << bytes;
  }
  fs::rename(tmp, p);
}

inline std::string hash_file(const fs::path& p) { return sha256_hex(read_file(p)); }

// ---------------------------------------------------------------------------
// JSON forms of stage artifacts

inline json polygon_json(const ConvexPolygon& p) {
  json a = json::array();
  for (const auto& v : p.vertices()) a.push_back({v.x(), v.y()});
  return a;
}

inline ConvexPolygon polygon_from(const json& a) {
  std::vector<P2> v;
  for (const auto& e : a) v.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
  return ConvexPolygon(std::move(v));
}

inline json rect_json(const Rect& r) { return {r.lo.x(), r.lo.y(), r.hi.x(), r.hi.y()}; }
inline Rect rect_from(const json& a) {
  return Rect{P2(a.at(0).get<double>(), a.at(1).get<double>()), P2(a.at(2).get<double>(), a.at(3).get<double>())};
}

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json regions_json(const RegionStage& s) {
  json j;
  j["L_h"] = s.L_h;
  j["delta_each"] = s.delta_each;
  j["domain"] = {{"Z", polygon_json(s.domain.Z)}, {"epsilon", s.domain.epsilon}};
  j["regions"] = json::array();
  for (const auto& r : s.regions) {
    json n = json::array();
    for (const auto& p : r.negation_overs) n.push_back(polygon_json(p));
    j["regions"].push_back({{"label", r.label},
                            {"includes_outside", r.includes_outside},
                            {"empty_inside", r.empty_inside},
                            {"under", polygon_json(r.under)},
                            {"over", polygon_json(r.over)},
                            {"epsilon", r.epsilon},
                            {"negation_overs", n},
                            {"negation_epsilon", r.negation_epsilon}});
  }
  return j;
}

inline RegionStage regions_from(const json& j) {
  RegionStage s;
  s.L_h = j.at("L_h");
  s.delta_each = j.at("delta_each");
  s.domain.Z = polygon_from(j.at("domain").at("Z"));
  s.domain.epsilon = j.at("domain").at("epsilon");
  for (const auto& r : j.at("regions")) {
    LatentRegionPair p;
    p.label = r.at("label");
    p.includes_outside = r.at("includes_outside");
    p.empty_inside = r.at("empty_inside");
    p.under = polygon_from(r.at("under"));
    p.over = polygon_from(r.at("over"));
    p.epsilon = r.at("epsilon");
    for (const auto& n : r.at("negation_overs")) p.negation_overs.push_back(polygon_from(n));
    p.negation_epsilon = r.at("negation_epsilon");
    s.regions.push_back(std::move(p));
  }
  return s;
}

inline json partition_json(const Abstraction& a) {
  json cells = json::array(), images = json::array();
  for (std::size_t q = 0; q < a.partition.cells.size(); ++q) {
    cells.push_back(rect_json(a.partition.cells[q].rect));
    json im = json::array();
    for (const auto& r : a.images[q]) im.push_back(rect_json(r));
    images.push_back(im);
  }
  return {{"Z", polygon_json(a.partition.Z)}, {"cells", cells}, {"images", images}};
}

// Rebuilds the partition, labels and NTS from stored rectangles and images.
inline Abstraction abstraction_from(const json& j, const RegionStage& rs) {
  Abstraction a;
  a.partition.Z = polygon_from(j.at("Z"));
  for (const auto& c : j.at("cells")) add_cell(a.partition, rect_from(c));
  if (a.partition.cells.size() != j.at("cells").size()) throw FormatError("stored cells no longer meet the domain");
  for (const auto& im : j.at("images")) {
    CellImages ci;
    for (const auto& r : im) ci.push_back(rect_from(r));
    a.images.push_back(std::move(ci));
  }
  if (a.images.size() != a.partition.cells.size()) throw FormatError("image table does not match the cells");
  a.labels = build_labels(a.partition, rs.regions);
  a.nts = assemble_nts(a.partition, a.labels, a.images);
  return a;
}

inline json result_json(const ltl::CheckResult& r) { return {{"yes", r.yes}, {"no", r.no}, {"maybe", r.maybe}}; }
inline ltl::CheckResult result_from(const json& j) {
  ltl::CheckResult r;
  r.yes = j.at("yes").get<std::vector<std::size_t>>();
  r.no = j.at("no").get<std::vector<std::size_t>>();
  r.maybe = j.at("maybe").get<std::vector<std::size_t>>();
  return r;
}

inline json round_json(const RoundSummary& s) {
  return {{"round", s.round},         {"cells", s.cells},       {"yes", s.yes},
          {"no", s.no},               {"maybe", s.maybe},       {"yes_area", s.yes_area},
          {"no_area", s.no_area},     {"maybe_area", s.maybe_area}, {"coverage", s.coverage}};
}

inline RoundSummary round_from(const json& j) {
  RoundSummary s;
  s.round = j.at("round");
  s.cells = j.at("cells");
  s.yes = j.at("yes");
  s.no = j.at("no");
  s.maybe = j.at("maybe");
  s.yes_area = j.at("yes_area");
  s.no_area = j.at("no_area");
  s.maybe_area = j.at("maybe_area");
  s.coverage = j.at("coverage");
  return s;
}

// ---------------------------------------------------------------------------
// Report

struct CellStyle {
  const char* fill;
  const char* name;
};

// Colors: goal dark green, Q_yes light green, obstacles black, Q_? yellow, Q_no red.
inline CellStyle cell_style(const Abstraction& a, const ltl::CheckResult& r, std::size_t q) {
  const auto& L = a.labels;
  for (std::size_t i = 0; i + 1 < L.ap.size(); i += 2) {
    if (!L.assignment[q][i]) continue;
    if (L.ap[i].rfind("unsafe", 0) == 0) return {"#000000", "obstacle"};
    return {"#006400", "goal"};
  }
  switch (r.verdict(q)) {
    case ltl::CheckResult::Verdict::Yes: return {"#90ee90", "yes"};
    case ltl::CheckResult::Verdict::No: return {"#ff0000", "no"};
    default: return {"#ffff00", "maybe"};
  }
}

inline std::string partition_svg(const Abstraction& a, const ltl::CheckResult& r) {
  const Rect bb = a.partition.Z.bounding_box();
  const double w = bb.hi.x() - bb.lo.x(), h = bb.hi.y() - bb.lo.y();
  const double s = 800.0 / std::max(w, h);
  auto X = [&](double x) { return (x - bb.lo.x()) * s; };
  auto Y = [&](double y) { return (bb.hi.y() - y) * s; };
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * s << "\" height=\"" << h * s << "\" viewBox=\"0 0 "
     << w * s << ' ' << h * s << "\">\n";
  for (std::size_t q = 0; q < a.partition.cells.size(); ++q) {
    const Rect& c = a.partition.cells[q].rect;
    const CellStyle st = cell_style(a, r, q);
    os << "<rect id=\"cell" << q << "\" class=\"" << st.name << "\" x=\"" << X(c.lo.x()) << "\" y=\"" << Y(c.hi.y())
       << "\" width=\"" << (c.hi.x() - c.lo.x()) * s << "\" height=\"" << (c.hi.y() - c.lo.y()) * s << "\" fill=\""
       << st.fill << "\" stroke=\"#555555\" stroke-width=\"0.3\"/>\n";
  }
  os << "<polygon points=\"";
  for (const auto& v : a.partition.Z.vertices()) os << X(v.x()) << ',' << Y(v.y()) << ' ';
  os << "\" fill=\"none\" stroke=\"#0000ff\" stroke-width=\"1.5\"/>\n</svg>\n";
  return os.str();
}

inline std::string summary_csv(const std::vector<RoundSummary>& rounds) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "round,cells,yes,no,maybe,yes_area,no_area,maybe_area,coverage\n";
  for (const auto& s : rounds)
    os << s.round << ',' << s.cells << ',' << s.yes << ',' << s.no << ',' << s.maybe << ',' << s.yes_area << ','
       << s.no_area << ',' << s.maybe_area << ',' << s.coverage << '\n';
  return os.str();
}

inline std::string cells_csv(const Abstraction& a, const ltl::CheckResult& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "cell,lo_x,lo_y,hi_x,hi_y,boundary,verdict,labels\n";
  for (std::size_t q = 0; q < a.partition.cells.size(); ++q) {
    const Rect& c = a.partition.cells[q].rect;
    const auto v = r.verdict(q);
    os << q << ',' << c.lo.x() << ',' << c.lo.y() << ',' << c.hi.x() << ',' << c.hi.y() << ','
       << a.partition.cells[q].boundary << ','
       << (v == ltl::CheckResult::Verdict::Yes ? "yes" : v == ltl::CheckResult::Verdict::No ? "no" : "maybe") << ',';
    bool first = true;
    for (std::size_t i = 0; i < a.labels.ap.size(); ++i)
      if (a.labels.assignment[q][i]) os << (first ? "" : ";") << a.labels.ap[i], first = false;
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Run directory

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s = {"gen-data", "train-encoder", "map-regions", "fit-gp",
                                             "build-abstraction", "verify", "refine", "decode", "report"};
  return s;
}

// Exclusive lock on a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw Error("run directory " + dir.string() + " is locked (" + path_.string() + " exists)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
    }
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

class Run {
 public:
  Run(StudyConfig cfg, fs::path dir, std::ostream& log = std::cout)
      : cfg_(std::move(cfg)), dir_(std::move(dir)), log_(log) {
    const fs::path m = dir_ / "manifest.json";
    manifest_ = fs::exists(m) ? json::parse(read_file(m)) : json::object();
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  }

  const json& manifest() const { return manifest_; }
  const fs::path& dir() const { return dir_; }
  const StudyConfig& config() const { return cfg_; }

  // Runs one stage; returns false when it was already up to date.
  bool run_stage(const std::string& stage) {
    if (std::find(stage_names().begin(), stage_names().end(), stage) == stage_names().end())
      throw ConfigError("unknown command '" + stage + "'");
    for (const auto& d : deps(stage)) require_fresh(d, stage);
    const json inputs = current_inputs(stage);
    if (stage != "refine" && up_to_date(stage, inputs)) {
      log_ << stage << ": up to date\n";
      if (stage == "verify") print_counts(load_verification(false));
      return false;
    }
    const auto t0 = std::chrono::steady_clock::now();
    json info = json::object();
    const std::map<std::string, std::string> artifacts = execute(stage, info);
    json rec;
    rec["inputs"] = inputs;
    rec["artifacts"] = json::object();
    for (const auto& [name, file] : artifacts) rec["artifacts"][name] = hash_file(dir_ / file);
    rec["info"] = info;
    rec["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_["stages"][stage] = rec;
    manifest_["config_hash"] = sha256_hex(json(cfg_).dump());
    manifest_["seed"] = cfg_.seed;
    save_manifest();
    return true;
  }

  void run_all() {
    for (const auto& s : stage_names()) run_stage(s);
  }

 private:
  // -------------------------------------------------------------------------
  // Dependencies and freshness

  std::vector<std::string> deps(const std::string& s) const {
    if (s == "gen-data") return {};
    if (s == "train-encoder") return {"gen-data"};
    if (s == "map-regions") return {"train-encoder"};
    if (s == "fit-gp") return {"gen-data", "train-encoder", "map-regions"};
    if (s == "build-abstraction") return {"map-regions", "fit-gp"};
    if (s == "verify") return {"build-abstraction"};
    if (s == "refine") return {"verify"};
    if (s == "decode" || s == "report") {
      std::vector<std::string> d = {"train-encoder", "verify"};
      if (done("refine") && s == "report") d.push_back("refine");
      if (done("refine") && s == "decode") d.push_back("refine");
      if (s == "report" && done("decode")) d.push_back("decode");
      return d;
    }
    return {};
  }

  bool done(const std::string& s) const { return manifest_["stages"].contains(s); }

  // Config sections each stage reads.
  json config_slice(const std::string& s) const {
    const json c = cfg_;
    json out = {{"system", c["system"]}, {"seed", c["seed"]}, {"data", c["data"]}};
    if (s == "gen-data") return out;
    out["encoder"] = c["encoder"];
    if (s == "train-encoder") return out;
    out["regions"] = c["regions"];
    if (s == "map-regions") return out;
    out["gp"] = c["gp"];
    if (s == "fit-gp") return out;
    out["partition"] = c["partition"];
    if (s == "build-abstraction") return out;
    out["formula"] = c["formula"];
    if (s == "verify") return out;
    if (s == "refine") {
      out["refinement"] = c["refinement"];
      return out;
    }
    if (s == "decode") {
      out["decode"] = c["decode"];
      return out;
    }
    return out;
  }

  json current_inputs(const std::string& s) const {
    json in;
    in["config"] = sha256_hex(config_slice(s).dump());
    for (const auto& d : deps(s)) in[d] = artifact_digest(d);
    return in;
  }

  std::string artifact_digest(const std::string& s) const {
    if (!done(s)) return "";
    return sha256_hex(manifest_["stages"][s]["artifacts"].dump());
  }

  bool up_to_date(const std::string& s, const json& inputs) const {
    if (!done(s)) return false;
    const json& rec = manifest_["stages"][s];
    if (rec["inputs"] != inputs) return false;
    for (const auto& [file, h] : rec["artifacts"].items())
      if (!fs::exists(dir_ / file) || hash_file(dir_ / file) != h.get<std::string>()) return false;
    return true;
  }

  // A dependency must exist, match its files and its own inputs, recursively.
  void require_fresh(const std::string& d, const std::string& by) const {
    if (!done(d)) throw MissingStage("'" + by + "' needs stage '" + d + "' to run first");
    const json& rec = manifest_["stages"][d];
    for (const auto& [file, h] : rec["artifacts"].items()) {
      if (!fs::exists(dir_ / file)) throw MissingStage("artifact " + file + " of stage '" + d + "' is missing");
      if (hash_file(dir_ / file) != h.get<std::string>())
        throw StaleArtifact("artifact " + file + " of stage '" + d + "' changed since it was written; rerun '" + d + "'");
    }
    if (rec["inputs"]["config"] != sha256_hex(config_slice(d).dump()))
      throw StaleArtifact("configuration read by stage '" + d + "' changed; rerun '" + d + "'");
    for (const auto& dd : deps(d)) {
      require_fresh(dd, d);
      if (rec["inputs"].value(dd, std::string()) != artifact_digest(dd))
        throw StaleArtifact("stage '" + d + "' is older than its input '" + dd + "'; rerun '" + d + "'");
    }
  }

  void save_manifest() {
    write_file(dir_ / "manifest.json", manifest_.dump(2) + "\n");
  }

  // -------------------------------------------------------------------------
  // Loading

  DataSplits load_data() const {
    return split_data(cfg_, read_dataset_csv((dir_ / "data.csv").string()));
  }
  AutoencoderModel load_encoder() const { return load_model((dir_ / "encoder.txt").string()); }
  RegionStage load_regions() const { return regions_from(json::parse(read_file(dir_ / "regions.json"))); }
  InclusionGpModel load_gp() const {
    std::istringstream is(read_file(dir_ / "gp.txt"));
    return read_inclusion_gp(is);
  }

  // The latest verification: refined if refine ran, else round 0.
  Verification load_verification(bool prefer_refined) const {
    const RegionStage rs = load_regions();
    Verification v;
    const bool refined = prefer_refined && done("refine") && fs::exists(dir_ / "refined.json");
    const json a = json::parse(read_file(dir_ / (refined ? "refined.json" : "abstraction.json")));
    v.abstraction = abstraction_from(refined ? a.at("partition") : a, rs);
    const json r = json::parse(read_file(dir_ / (refined ? "refined.json" : "verification.json")));
    v.result = result_from(r.at("result"));
    for (const auto& s : r.at("rounds")) v.rounds.push_back(round_from(s));
    return v;
  }

  void print_counts(const Verification& v) const {
    const auto& s = v.rounds.back();
    log_ << std::setprecision(6) << "Q_yes " << s.yes << " (area " << s.yes_area << ")  Q_no " << s.no << " (area "
         << s.no_area << ")  Q_? " << s.maybe << " (area " << s.maybe_area << ")  coverage " << 100.0 * s.coverage
         << "% of non-boundary area\n";
  }

  // -------------------------------------------------------------------------
  // Stages

  std::map<std::string, std::string> execute(const std::string& s, json& info) {
    if (s == "gen-data") {
      const Dataset d = generate_data(cfg_);
      write_dataset_csv(d, (dir_ / "data.csv").string());
      info["pairs"] = d.size();
      log_ << "gen-data: " << d.size() << " pairs\n";
      return {{"data.csv", "data.csv"}};
    }
    if (s == "train-encoder") {
      const DataSplits d = load_data();
      TrainHistory h;
      const AutoencoderModel m = train_encoder(cfg_, d.learn, &h);
      const AuditReport rep = check_cico(m.encoder, cfg_.encoder.audit_probes);
      save_model((dir_ / "encoder.txt").string(), m);
      info["audit_pass"] = rep.pass;
      if (!h.epoch_loss.empty()) info["final_loss"] = h.epoch_loss.back().total;
      log_ << "train-encoder: audit " << (rep.pass ? "pass" : "FAIL") << "\n" << rep.summary();
      return {{"encoder.txt", "encoder.txt"}};
    }
    if (s == "map-regions") {
      const RegionStage rs = map_study_regions(cfg_, load_encoder().encoder);
      write_file(dir_ / "regions.json", regions_json(rs).dump() + "\n");
      info["L_h"] = rs.L_h;
      info["delta_each"] = rs.delta_each;
      info["epsilon"] = json::array();
      for (const auto& r : rs.regions) info["epsilon"].push_back(r.epsilon);
      manifest_["constants"]["L_h"] = rs.L_h;
      manifest_["constants"]["delta"] = cfg_.regions.delta;
      manifest_["constants"]["delta_each"] = rs.delta_each;
      manifest_["constants"]["epsilon"] = rs.regions.empty() ? 0.0 : rs.regions[0].negation_epsilon;
      log_ << "map-regions: L_h " << rs.L_h << ", " << rs.regions.size() << " regions\n";
      return {{"regions.json", "regions.json"}};
    }
    if (s == "fit-gp") {
      const GpStage g = fit_study_gp(cfg_, load_encoder().encoder, load_regions(), load_data());
      std::ostringstream os;
      write_inclusion_gp(os, g.model);
      write_file(dir_ / "gp.txt", os.str());
      json B = json::array(), mu = json::array();
      for (const auto& dm : g.model.dims) B.push_back(dm.B), mu.push_back(dm.mu_norm);
      info["B"] = B;
      info["mu_norm"] = mu;
      info["L_g"] = g.L_g;
      info["heldout_ratio"] = g.heldout_ratio;
      manifest_["constants"]["B"] = B;
      manifest_["constants"]["d_star"] = 0.0;
      manifest_["constants"]["U"] = cfg_.gp.u_intervals;
      log_ << "fit-gp: B " << B.dump() << "\n";
      return {{"gp.txt", "gp.txt"}};
    }
    if (s == "build-abstraction") {
      const RegionStage rs = load_regions();
      const Abstraction a = build_abstraction(partition_domain(rs.domain.Z, cfg_.partition.nx, cfg_.partition.ny),
                                              rs.regions, load_gp(), abstraction_config(cfg_));
      write_file(dir_ / "abstraction.json", partition_json(a).dump() + "\n");
      info["cells"] = a.partition.cells.size();
      info["transitions"] = a.nts.num_transitions();
      log_ << "build-abstraction: " << a.partition.cells.size() << " cells, " << a.nts.num_transitions()
           << " transitions\n";
      return {{"abstraction.json", "abstraction.json"}};
    }
    if (s == "verify") {
      Verification v;
      v.abstraction = abstraction_from(json::parse(read_file(dir_ / "abstraction.json")), load_regions());
      v.result = check_abstraction(cfg_, v.abstraction);
      v.rounds.push_back(summarize(v.abstraction, v.result));
      json out = {{"result", result_json(v.result)}, {"rounds", json::array({round_json(v.rounds[0])})}};
      write_file(dir_ / "verification.json", out.dump() + "\n");
      info = round_json(v.rounds[0]);
      log_ << "verify: ";
      print_counts(v);
      return {{"verification.json", "verification.json"}};
    }
    if (s == "refine") {
      const Verification start = load_verification(true);
      const Verification v = verify_and_refine(cfg_, load_gp(), load_regions(), cfg_.refinement.rounds, &start);
      json rounds = json::array();
      for (const auto& r : v.rounds) rounds.push_back(round_json(r));
      json out = {{"partition", partition_json(v.abstraction)}, {"result", result_json(v.result)}, {"rounds", rounds}};
      write_file(dir_ / "refined.json", out.dump() + "\n");
      info["rounds"] = rounds;
      for (std::size_t k = start.rounds.size(); k < v.rounds.size(); ++k) {
        log_ << "refine round " << v.rounds[k].round << ": " << v.rounds[k].cells << " cells, ";
        print_counts(Verification{{}, {}, {v.rounds[k]}});
      }
      if (v.rounds.size() == start.rounds.size())
        log_ << (cfg_.refinement.rounds == 0 ? "refine: 0 rounds requested\n" : "refine: nothing left to refine\n");
      return {{"refined.json", "refined.json"}};
    }
    if (s == "decode") {
      const Verification v = load_verification(true);
      const auto cells = decode_cells(cfg_, load_encoder(), v.abstraction.partition, v.result.yes, true);
      json out = json::array();
      std::size_t ok = 0;
      for (const auto& d : cells) {
        json e = {{"cell", d.cell}, {"ok", d.ok}};
        if (d.ok) {
          ++ok;
          e["witness"] = vec_json(d.witness);
          e["preimage"] = {{"lo", vec_json(d.preimage.box.lo)},
                           {"hi", vec_json(d.preimage.box.hi)},
                           {"epsilon", d.preimage.epsilon},
                           {"accepted", d.preimage.accepted},
                           {"proposed", d.preimage.proposed}};
        } else {
          e["error"] = d.error;
        }
        out.push_back(e);
      }
      write_file(dir_ / "decode.json", out.dump(1) + "\n");
      info["cells"] = cells.size();
      info["decoded"] = ok;
      log_ << "decode: " << ok << " of " << cells.size() << " Q_yes cells decoded\n";
      return {{"decode.json", "decode.json"}};
    }
    // report
    const Verification v = load_verification(true);
    write_file(dir_ / "report" / "partition.svg", partition_svg(v.abstraction, v.result));
    write_file(dir_ / "report" / "summary.csv", summary_csv(v.rounds));
    write_file(dir_ / "report" / "cells.csv", cells_csv(v.abstraction, v.result));
    json m = manifest_;
    m["stages"]["report"] = {{"note", "this copy is written by the report stage itself"}};
    write_file(dir_ / "report" / "manifest", m.dump(2) + "\n");
    log_ << "report: written to " << (dir_ / "report").string() << "\n";
    return {{"report/partition.svg", "report/partition.svg"},
            {"report/summary.csv", "report/summary.csv"},
            {"report/cells.csv", "report/cells.csv"}};
  }

  StudyConfig cfg_;
  fs::path dir_;
  std::ostream& log_;
  json manifest_;
};

inline StudyConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace lv
