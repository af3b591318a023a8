#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "iqcsync/scenario.hpp"

namespace fs = std::filesystem;
using namespace iqcsync;

namespace {

struct Args {
  std::string config;
  std::string cert;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

ScenarioConfig load(const Args& a) {
  ScenarioConfig cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  return cfg;
}

fs::path out_file(const Args& a, const std::string& name) {
  fs::create_directories(a.out);
  return fs::path(a.out) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

int cmd_synth(const Args& a) {
  const ScenarioConfig cfg = load(a);
  const Certificate cert = run_synthesis(cfg);
  std::cout << cfg.name << ": " << to_string(cert.method) << " (" << to_string(cert.objective) << ") "
            << sdp::to_string(cert.status) << "\n";
  if (!cert.message.empty()) std::cout << "  " << cert.message << "\n";
  if (cert.feasible()) {
    std::cout << "  K = " << cert.K.format(Eigen::IOFormat(8, 0, ", ", "; ", "", "", "[", "]")) << "\n"
              << "  bound = " << cert.bound << "\n";
    if (cert.gamma) std::cout << "  gamma = " << *cert.gamma << "\n";
    const fs::path path = out_file(a, "certificate.json");
    save_certificate(cert, cfg, path.string());
    std::cout << "  certificate written to " << path.string() << "\n";
    return 0;
  }
  return cert.status == sdp::Status::Infeasible ? 2 : 1;
}

int cmd_simulate(const Args& a) {
  const ScenarioConfig cfg = load(a);
  const StoredCertificate stored = load_certificate(a.cert);
  check_certificate(stored, cfg);
  const ScenarioRun run = run_simulation(cfg, stored.certificate);
  {
    std::ofstream csv(out_file(a, "trajectory.csv"), std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write trajectory.csv");
    write_csv(run.trajectory, csv, cfg.csv_stride);
  }
  const std::string summary = summary_to_json(run.summary);
  write_text(out_file(a, "summary.json"), summary);
  std::cout << summary;
  return 0;
}

int cmd_consensus(const Args& a) {
  const ScenarioConfig cfg = load(a);
  const double beta = consensus_beta(cfg);
  try {
    const AgreementResult r = run_consensus(cfg);
    write_text(out_file(a, "consensus.json"), agreement_to_json(r, beta, cfg.seed));
    save_certificate(r.certificate, cfg, out_file(a, "certificate.json").string());
    std::cout << "agreement after " << r.iterations << " rounds, deviation " << r.deviation_history.back()
              << "\n  K = " << r.K.format(Eigen::IOFormat(8, 0, ", ", "; ", "", "", "[", "]"))
              << "\n  shared LMI max eigenvalue " << r.lmi_max_eigenvalue
              << (r.lmi_max_eigenvalue < 0.0 ? " (feasible)" : " (infeasible)") << "\n";
    return 0;
  } catch (const ConsensusNotConverged& e) {
    std::cerr << "iqcsync: " << e.what() << "\n";
    std::ofstream log(out_file(a, "consensus_log.txt"), std::ios::binary);
    for (std::size_t k = 0; k < e.history().size(); ++k) log << k << ',' << format_double(e.history()[k]) << '\n';
    return 2;
  }
}

int cmd_table(const Args& a) {
  const ScenarioConfig cfg = load(a);
  const auto rows = run_table(cfg);
  const std::string table = format_table(rows);
  write_text(out_file(a, "table.txt"), table);
  std::cout << table;
  bool ok = true;
  for (const auto& r : rows)
    if (!r.summary.bound_satisfied) {
      std::cerr << "iqcsync: " << to_string(r.method) << " computed performance exceeds its predicted bound\n";
      ok = false;
    }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust leader-follower synchronisation: LMI synthesis and simulation"};
  app.require_subcommand(1);
  Args args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Output directory");
    sub->add_option("--seed", args.seed, "Seed for initial conditions and consensus objectives");
  };
  CLI::App* synth = app.add_subcommand("synth", "Synthesise a gain and write its certificate");
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a certificate on the scenario");
  CLI::App* consensus = app.add_subcommand("consensus", "Agree on a shared certificate by local averaging");
  CLI::App* table = app.add_subcommand("table", "Compare THM1, THM2 and THM3 on one scenario");
  for (CLI::App* sub : {synth, simulate, consensus, table}) add_common(sub);
  simulate->add_option("--cert", args.cert, "Certificate file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share exit code 1 with invalid scenario files.
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (synth->parsed()) return cmd_synth(args);
    if (simulate->parsed()) return cmd_simulate(args);
    if (consensus->parsed()) return cmd_consensus(args);
    return cmd_table(args);
  } catch (const ConfigError& e) {
    std::cerr << "iqcsync: invalid input: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "iqcsync: " << e.what() << "\n";
  }
  return 1;
}
