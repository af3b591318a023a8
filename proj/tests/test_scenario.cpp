#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "iqcsync/scenario.hpp"
#include "json.hpp"

namespace iqcsync {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json toy_json() { return json::parse(read_file(fs::path(IQCSYNC_CONFIG_DIR) / "toy.json")); }

std::string field_of(const json& j) {
  try {
    parse_config(j.dump());
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("iqcsync_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  static inline int counter_ = 0;
};

TEST(ParseConfig, ShippedScenarios) {
  for (const char* name : {"pendulum_thm1.json", "pendulum_thm2.json", "pendulum_thm3.json", "toy.json"}) {
    const ScenarioConfig cfg = load_config((fs::path(IQCSYNC_CONFIG_DIR) / name).string());
    EXPECT_NO_THROW(cfg.model.validate()) << name;
    EXPECT_NO_THROW(cfg.topo.validate()) << name;
  }
  const ScenarioConfig p = load_config((fs::path(IQCSYNC_CONFIG_DIR) / "pendulum_thm2.json").string());
  EXPECT_EQ(p.method, Method::Thm2);
  EXPECT_EQ(p.topo.N, 20);
  EXPECT_DOUBLE_EQ(p.T, 30.0);
}

TEST(ParseConfig, ErrorsNameTheField) {
  json j = toy_json();
  j["model"]["R"] = json::array({json::array({-1.0})});
  EXPECT_EQ(field_of(j), "model.R");

  j = toy_json();
  j["topology"]["control_edges"] = json::array();
  EXPECT_EQ(field_of(j).rfind("topology", 0), 0u);

  j = toy_json();
  j["simulation"]["horizon"] = 3;
  EXPECT_EQ(field_of(j), "simulation.horizon");

  j = toy_json();
  j["synthesis"]["method"] = "THM7";
  EXPECT_EQ(field_of(j), "synthesis.method");

  j = toy_json();
  j["uncertainty"]["schedule"]["values"] = json::array({1.0, -1.5, 0.0});
  EXPECT_EQ(field_of(j).rfind("uncertainty", 0), 0u);

  j = toy_json();
  j["synthesis"]["objective"] = "trace";
  EXPECT_EQ(field_of(j), "synthesis.Mcov");
}

TEST(ParseConfig, SyntaxErrorReportsLine) {
  try {
    parse_config("{\n  \"name\": \"x\",\n  \"model\": [\n}");
    FAIL() << "expected a parse error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(InitialState, SeededAndReproducible) {
  ScenarioConfig cfg = parse_config(toy_json().dump());
  const Vector a = initial_state(cfg);
  EXPECT_TRUE(a.isApprox(initial_state(cfg)));
  EXPECT_DOUBLE_EQ(a(0), 0.3);
  for (int i = 1; i <= 2; ++i) {
    EXPECT_GE(a(i), -0.5);
    EXPECT_LT(a(i), 0.5);
  }
  cfg.seed = 2;
  EXPECT_FALSE(a.isApprox(initial_state(cfg)));
  EXPECT_TRUE(initial_errors(cfg).isApprox(Vector::Constant(2, 0.3) - initial_state(cfg).tail(2)));
}

TEST(Certificate, JsonRoundTripKeepsSoundness) {
  const ScenarioConfig cfg = parse_config(toy_json().dump());
  const Certificate c = run_synthesis(cfg);
  ASSERT_TRUE(c.feasible()) << c.message;
  const StoredCertificate back = certificate_from_json(certificate_to_json(c, cfg));
  EXPECT_EQ(back.scenario, "toy");
  EXPECT_EQ(back.N, 2);
  EXPECT_EQ(back.certificate.method, c.method);
  EXPECT_EQ(back.certificate.K, c.K);
  EXPECT_EQ(back.certificate.Y, c.Y);
  EXPECT_EQ(back.certificate.multipliers, c.multipliers);
  EXPECT_DOUBLE_EQ(back.certificate.bound, c.bound);
  const SpectralData sd = spectral(cfg.topo);
  EXPECT_TRUE(schur_reduce(back.certificate, cfg.model, cfg.topo, sd).all_negative());
  EXPECT_NO_THROW(check_certificate(back, cfg));

  ScenarioConfig other = load_config((fs::path(IQCSYNC_CONFIG_DIR) / "pendulum_thm1.json").string());
  EXPECT_THROW(check_certificate(back, other), std::invalid_argument);
}

TEST(Simulation, CsvIsDeterministic) {
  const ScenarioConfig cfg = parse_config(toy_json().dump());
  const Certificate c = run_synthesis(cfg);
  ASSERT_TRUE(c.feasible());
  std::ostringstream a, b;
  write_csv(run_simulation(cfg, c).trajectory, a, cfg.csv_stride);
  write_csv(run_simulation(cfg, c).trajectory, b, cfg.csv_stride);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "t,x0_1,x1_1,u1_1,e1_norm,x2_1,u2_1,e2_norm,cost");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, 1001);
}

TEST(Simulation, SummaryReportsGuarantee) {
  const ScenarioConfig cfg = parse_config(toy_json().dump());
  const Certificate c = run_synthesis(cfg);
  const ScenarioRun run = run_simulation(cfg, c);
  EXPECT_TRUE(run.summary.bound_satisfied);
  EXPECT_LE(run.summary.final_cost, run.summary.bound);
  EXPECT_NEAR(run.summary.bound, bound_formula(c.method, c.Y, initial_errors(cfg), spectral(cfg.topo)), 1e-12);
  EXPECT_LE(run.summary.max_audit_ratio, 1.0 + 1e-4);
  const json s = json::parse(summary_to_json(run.summary));
  EXPECT_EQ(s.at("scenario"), "toy");
  EXPECT_EQ(s.at("bound_satisfied"), "yes");
}

TEST(Simulation, SynchronisedStartCostsNothing) {
  json j = toy_json();
  j["simulation"]["followers"] = json::array({json::array({0.3}), json::array({0.3})});
  const ScenarioConfig cfg = parse_config(j.dump());
  Certificate c = run_synthesis(parse_config(toy_json().dump()));
  const ScenarioRun run = run_simulation(cfg, c);
  EXPECT_EQ(run.summary.final_cost, 0.0);
  EXPECT_EQ(run.summary.bound, 0.0);
  EXPECT_TRUE(run.summary.bound_satisfied);
}

TEST(Consensus, StepSizeFromFraction) {
  json j = toy_json();
  EXPECT_DOUBLE_EQ(consensus_beta(parse_config(j.dump())), 0.45);
  j["consensus"] = {{"beta", 1.5}};
  EXPECT_THROW(run_consensus(parse_config(j.dump())), std::invalid_argument);
}

TEST(FormatDouble, SeventeenSignificantDigits) {
  EXPECT_EQ(format_double(0.1), "1.0000000000000001e-01");
  EXPECT_EQ(format_double(0.0), "0.0000000000000000e+00");
  EXPECT_EQ(format_double(-2.5), "-2.5000000000000000e+00");
}

#ifdef IQCSYNC_CLI_PATH

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IQCSYNC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p.string();
}

TEST(Cli, SynthesiseAndSimulate) {
  TempDir dir;
  const std::string cfg = write_config(dir.path(), "toy.json", toy_json());
  const std::string out = " --out " + dir.path().string();
  ASSERT_EQ(run_cli("synth --config " + cfg + out), 0);
  ASSERT_TRUE(fs::exists(dir.path() / "certificate.json"));
  const std::string cert = (dir.path() / "certificate.json").string();
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --cert " + cert + out), 0);
  const json summary = json::parse(read_file(dir.path() / "summary.json"));
  EXPECT_EQ(summary.at("bound_satisfied"), "yes");
  const std::string first = read_file(dir.path() / "trajectory.csv");
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --cert " + cert + out), 0);
  EXPECT_EQ(read_file(dir.path() / "trajectory.csv"), first);
}

TEST(Cli, InvalidInputExitsWithOne) {
  TempDir dir;
  json j = toy_json();
  j["model"]["R"] = json::array({json::array({0.0})});
  EXPECT_EQ(run_cli("synth --config " + write_config(dir.path(), "bad_r.json", j)), 1);
  j = toy_json();
  j["topology"]["control_edges"] = json::array();
  EXPECT_EQ(run_cli("synth --config " + write_config(dir.path(), "disconnected.json", j)), 1);
  EXPECT_EQ(run_cli("synth --config " + (dir.path() / "missing.json").string()), 1);
  j = toy_json();
  j["consensus"] = {{"beta", 1.5}};
  EXPECT_EQ(run_cli("consensus --config " + write_config(dir.path(), "beta.json", j) + " --out " + dir.path().string()),
            1);
}

TEST(Cli, InfeasibleExitsWithTwo) {
  TempDir dir;
  json j = toy_json();
  j["model"]["A"] = json::array({json::array({1.0})});
  j["model"]["B1"] = json::array({json::array({0.0})});
  EXPECT_EQ(run_cli("synth --config " + write_config(dir.path(), "unstab.json", j) + " --out " + dir.path().string()),
            2);
}

TEST(Cli, TamperedGainStillSimulates) {
  TempDir dir;
  const std::string cfg = write_config(dir.path(), "toy.json", toy_json());
  const std::string out = " --out " + dir.path().string();
  ASSERT_EQ(run_cli("synth --config " + cfg + out), 0);
  json cert = json::parse(read_file(dir.path() / "certificate.json"));
  cert["K"] = json::array({json::array({0.5})});  // wrong sign, destabilising
  const std::string tampered = write_config(dir.path(), "tampered.json", cert);
  EXPECT_EQ(run_cli("simulate --config " + cfg + " --cert " + tampered + out), 0);
  const json summary = json::parse(read_file(dir.path() / "summary.json"));
  EXPECT_EQ(summary.at("bound_satisfied"), "no");
}

TEST(Cli, ConsensusCapExitsWithTwo) {
  TempDir dir;
  json j = toy_json();
  j["consensus"]["max_iterations"] = 1;
  j["consensus"]["tol"] = 1e-14;
  EXPECT_EQ(run_cli("consensus --config " + write_config(dir.path(), "cap.json", j) + " --out " + dir.path().string()),
            2);
  EXPECT_TRUE(fs::exists(dir.path() / "consensus_log.txt"));
}

#endif

}  // namespace
}  // namespace iqcsync
