#include "latent_verify/run.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <regex>

namespace fs = std::filesystem;
using lv::json;

namespace {

const std::string kCli = LV_CLI_PATH;
const std::string kTiny = LV_TEST_DATA "/tiny3d.json";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lv_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

struct Out {
  int code;
  std::string text;
};

Out cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>&1";
  FILE* f = ::popen(cmd.c_str(), "r");
  std::string text;
  char buf[4096];
  while (f && std::fgets(buf, sizeof buf, f)) text += buf;
  const int st = f ? ::pclose(f) : -1;
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, text};
}

Out stage(const std::string& cmd, const fs::path& dir, const std::string& config = kTiny) {
  return cli(cmd + " --config " + config + " --run-dir " + dir.string());
}

json artifact_hashes(const fs::path& dir) {
  const json m = json::parse(lv::read_file(dir / "manifest.json"));
  json h;
  for (const auto& [s, rec] : m["stages"].items()) h[s] = rec["artifacts"];
  return h;
}

}  // namespace

TEST(Cli, FullRunIsDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(stage("run", a).code, 0);
  ASSERT_EQ(stage("run", b).code, 0);
  EXPECT_EQ(artifact_hashes(a), artifact_hashes(b));
  EXPECT_EQ(artifact_hashes(a).size(), lv::stage_names().size());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SeedOverrideChangesData) {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  ASSERT_EQ(stage("gen-data", a).code, 0);
  ASSERT_EQ(cli("gen-data --config " + kTiny + " --run-dir " + b.string() + " --seed 8").code, 0);
  EXPECT_NE(lv::hash_file(a / "data.csv"), lv::hash_file(b / "data.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, FreshStageIsNoOp) {
  const fs::path d = scratch("noop");
  for (const char* s : {"gen-data", "train-encoder", "map-regions", "fit-gp", "build-abstraction", "verify"})
    ASSERT_EQ(stage(s, d).code, 0) << s;
  const std::string before = lv::read_file(d / "manifest.json");
  const auto t = fs::last_write_time(d / "verification.json");
  const Out again = stage("verify", d);
  EXPECT_EQ(again.code, 0);
  EXPECT_NE(again.text.find("up to date"), std::string::npos);
  EXPECT_NE(again.text.find("Q_yes"), std::string::npos);
  EXPECT_EQ(lv::read_file(d / "manifest.json"), before);
  EXPECT_EQ(fs::last_write_time(d / "verification.json"), t);
  fs::remove_all(d);
}

TEST(Cli, MissingStageExitsThree) {
  const fs::path d = scratch("missing");
  const Out o = stage("fit-gp", d);
  EXPECT_EQ(o.code, 3);
  EXPECT_NE(o.text.find("MissingStage"), std::string::npos);
  ASSERT_EQ(stage("gen-data", d).code, 0);
  EXPECT_EQ(stage("map-regions", d).code, 3);
  fs::remove_all(d);
}

TEST(Cli, TamperedDatasetIsStale) {
  const fs::path d = scratch("tamper");
  for (const char* s : {"gen-data", "train-encoder", "map-regions"}) ASSERT_EQ(stage(s, d).code, 0) << s;
  {
    std::ofstream f(d / "data.csv", std::ios::app);
    f << "0,0,0,0,0,0\n";
  }
  const Out o = stage("fit-gp", d);
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.text.find("data.csv"), std::string::npos);
  // Downstream stages see it through the dependency chain as well.
  EXPECT_EQ(stage("map-regions", d).code, 4);
  fs::remove_all(d);
}

TEST(Cli, ChangedConfigSectionIsStale) {
  const fs::path d = scratch("cfg");
  for (const char* s : {"gen-data", "train-encoder"}) ASSERT_EQ(stage(s, d).code, 0) << s;
  json j = json::parse(lv::read_file(kTiny));
  j["encoder"]["epochs"] = 4;
  const fs::path alt = d / "alt.json";
  lv::write_file(alt, j.dump());
  EXPECT_EQ(stage("map-regions", d, alt.string()).code, 4);
  // Changing a section only later stages read leaves earlier ones valid.
  j = json::parse(lv::read_file(kTiny));
  j["partition"]["nx"] = 5;
  lv::write_file(alt, j.dump());
  EXPECT_EQ(stage("map-regions", d, alt.string()).code, 0);
  fs::remove_all(d);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path d = scratch("conf");
  fs::create_directories(d);
  json j = json::parse(lv::read_file(kTiny));
  j["gp"]["unknown_knob"] = 1;
  lv::write_file(d / "a.json", j.dump());
  Out o = stage("gen-data", d, (d / "a.json").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.text.find("unknown_knob"), std::string::npos);

  j = json::parse(lv::read_file(kTiny));
  j["system"] = "pendulum";
  lv::write_file(d / "b.json", j.dump());
  EXPECT_EQ(stage("gen-data", d, (d / "b.json").string()).code, 2);

  j = json::parse(lv::read_file(kTiny));
  j["formula"] = "!unsafe U (goal";
  lv::write_file(d / "d.json", j.dump());
  EXPECT_EQ(stage("gen-data", d, (d / "d.json").string()).code, 2);
  j["formula"] = "!unsafe U target";
  lv::write_file(d / "d.json", j.dump());
  o = stage("gen-data", d, (d / "d.json").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.text.find("target"), std::string::npos);

  lv::write_file(d / "c.json", "{ not json");
  EXPECT_EQ(stage("gen-data", d, (d / "c.json").string()).code, 2);

  EXPECT_EQ(stage("no-such-command", d).code, 2);
  fs::remove_all(d);
}

TEST(Cli, LockedRunDirIsRefused) {
  const fs::path d = scratch("lock");
  fs::create_directories(d);
  lv::write_file(d / ".lock", "1\n");
  const Out o = stage("gen-data", d);
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.text.find("locked"), std::string::npos);
  EXPECT_FALSE(fs::exists(d / "data.csv"));
  fs::remove(d / ".lock");
  EXPECT_EQ(stage("gen-data", d).code, 0);
  EXPECT_FALSE(fs::exists(d / ".lock"));
  fs::remove_all(d);
}

TEST(Cli, ReportSvgHasOneRectPerCell) {
  const fs::path d = scratch("svg");
  ASSERT_EQ(stage("run", d).code, 0);
  const std::string svg = lv::read_file(d / "report" / "partition.svg");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const json ref = json::parse(lv::read_file(d / "refined.json"));
  const std::size_t cells = ref["partition"]["cells"].size();
  const std::regex rect("<rect [^>]*/>");
  const auto n = std::distance(std::sregex_iterator(svg.begin(), svg.end(), rect), std::sregex_iterator());
  EXPECT_EQ(static_cast<std::size_t>(n), cells);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '<'), std::count(svg.begin(), svg.end(), '>'));

  const std::string csv = lv::read_file(d / "report" / "cells.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), cells + 1);
  EXPECT_TRUE(fs::exists(d / "report" / "summary.csv"));
  EXPECT_TRUE(fs::exists(d / "report" / "manifest"));

  const json m = json::parse(lv::read_file(d / "manifest.json"));
  for (const char* k : {"L_h", "delta", "epsilon", "B", "d_star", "U"}) EXPECT_TRUE(m["constants"].contains(k)) << k;
  fs::remove_all(d);
}

TEST(Cli, StoredAbstractionRoundTrips) {
  const fs::path d = scratch("rt");
  for (const char* s : {"gen-data", "train-encoder", "map-regions", "fit-gp", "build-abstraction", "verify"})
    ASSERT_EQ(stage(s, d).code, 0) << s;
  const lv::StudyConfig cfg = lv::load_config(kTiny);
  const lv::RegionStage rs = lv::regions_from(json::parse(lv::read_file(d / "regions.json")));
  EXPECT_EQ(lv::regions_json(rs), json::parse(lv::read_file(d / "regions.json")));
  const lv::Abstraction a = lv::abstraction_from(json::parse(lv::read_file(d / "abstraction.json")), rs);
  const lv::ltl::CheckResult r = lv::check_abstraction(cfg, a);
  const json stored = json::parse(lv::read_file(d / "verification.json"));
  EXPECT_EQ(lv::result_json(r), stored["result"]);
  fs::remove_all(d);
}
