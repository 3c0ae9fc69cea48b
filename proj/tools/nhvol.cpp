#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "nhvol/error.hpp"
#include "nhvol/io.hpp"
#include "nhvol/report.hpp"

namespace {

using namespace nhvol;

ParameterOverrides overrides(const std::vector<std::string>& items) {
  ParameterOverrides out;
  for (const std::string& item : items) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--param", "expects name=value, got '" + item + "'");
    try {
      std::size_t used = 0;
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("--param", "'" + item.substr(eq + 1) + "' is not a number");
    }
  }
  return out;
}

void write_json(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << "\n";
}

int emit(const Report& rep, const std::string& out, bool json) {
  if (!out.empty()) write_json(out, rep.json);
  if (json) {
    std::cout << rep.json.dump(2) << "\n";
  } else {
    std::cout << rep.text;
  }
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant volumes of nonholonomic systems"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string file, out, basis, init, density;
  std::vector<std::string> params;
  bool json = false;
  int samples = 64, states = 10;
  double tol = 1e-8, t0 = 0.0, duration = 10.0, step = 1e-3, oracle_duration = 1.0;
  std::uint64_t seed = kDefaultSeed;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("file", file, "System file (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    cmd->add_option("--out", out, "Write the JSON report (CSV for simulate) to this path");
    cmd->add_option("--param", params, "Override a parameter, name=value");
  };

  CLI::App* audit_cmd = app.add_subcommand("audit", "Search for a configuration-dependent invariant volume");
  common(audit_cmd);
  audit_cmd->add_option("--samples", samples, "Random samples for zero tests and fits")->capture_default_str();
  audit_cmd->add_option("--tol", tol, "Tolerance of the multiplier fit and closedness test")->capture_default_str();
  audit_cmd->add_option("--basis", basis, "Comma-separated ansatz functions for the multipliers");
  audit_cmd->add_option("--states", states, "Trajectory states checked by the volume-rate oracle")->capture_default_str();
  audit_cmd->add_flag("--json", json, "Print the JSON report instead of the summary");

  CLI::App* verify_cmd = app.add_subcommand("verify", "Finite-difference volume-rate check along a trajectory");
  common(verify_cmd);
  verify_cmd->add_option("--density", density, "Candidate density rho(q); default 1");
  verify_cmd->add_option("--init", init, "Initial state q1,...,qn[;v1,...,vn]");
  verify_cmd->add_option("--T", oracle_duration, "Duration")->capture_default_str();
  verify_cmd->add_option("--h", step, "Step")->capture_default_str();
  verify_cmd->add_option("--samples", states, "States checked")->capture_default_str();
  verify_cmd->add_flag("--json", json, "Print the JSON report instead of the summary");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Integrate the constrained equations of motion");
  common(simulate_cmd);
  simulate_cmd->add_option("--t0", t0, "Initial time")->capture_default_str();
  simulate_cmd->add_option("--T", duration, "Duration")->capture_default_str();
  simulate_cmd->add_option("--h", step, "Step")->capture_default_str();
  simulate_cmd->add_option("--init", init, "Initial state q1,...,qn[;v1,...,vn]");
  simulate_cmd->add_flag("--json", json, "Print the JSON summary instead of text");

  CLI::App* eps_cmd = app.add_subcommand("eps", "Invariant volume test for a Suslov problem on a Lie algebra");
  common(eps_cmd);
  int eps_samples = 16;
  eps_cmd->add_option("--samples", eps_samples, "Momenta for the divergence oracle")->capture_default_str();
  eps_cmd->add_flag("--json", json, "Print the JSON report instead of the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    const ParameterOverrides p = overrides(params);
    if (*eps_cmd) return emit(eps_audit(load_eps(file, p), eps_samples, seed), out, json);

    const NonholonomicSystem sys = load_system(file, p);
    if (*audit_cmd) {
      AuditOptions opts;
      opts.samples = samples;
      opts.tol = tol;
      opts.seed = seed;
      if (!basis.empty()) opts.basis = basis;
      opts.oracle.states = states;
      return emit(audit(sys, opts), out, json);
    }
    if (*verify_cmd) {
      OracleOptions opts;
      opts.states = states;
      opts.duration = oracle_duration;
      opts.step = step;
      if (!init.empty()) opts.initial = parse_initial_state(init, sys.dimension());
      const auto rho = density.empty() ? std::nullopt : std::optional<std::string>(density);
      return emit(verify(sys, rho, seed, opts), out, json);
    }
    SimulateOptions opts;
    opts.t0 = t0;
    opts.duration = duration;
    opts.step = step;
    opts.seed = seed;
    if (!init.empty()) opts.initial = parse_initial_state(init, sys.dimension());
    const Simulation sim = simulate(sys, opts);
    const std::string path = out.empty() ? sys.name + "_trajectory.csv" : out;
    std::ofstream csv(path);
    if (!csv) throw Error("cannot write " + path);
    write_csv(csv, sys, sim.trajectory);
    std::cout << (json ? sim.summary.json.dump(2) + "\n" : sim.summary.text + "csv       " + path + "\n");
    return sim.summary.exit_code;
  } catch (const IntegrationError& e) {
    std::cerr << "error: " << e.what() << " (last good time " << e.last_good_time() << ")\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kExitError;
}
