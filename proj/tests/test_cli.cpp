#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nhvol/error.hpp"
#include "nhvol/io.hpp"
#include "nhvol/report.hpp"

using namespace nhvol;

namespace {

std::string first_difference(const std::string& a, const std::string& b) {
  std::istringstream x(a), y(b);
  std::string lx, ly;
  for (int line = 1;; ++line) {
    const bool gx = static_cast<bool>(std::getline(x, lx));
    const bool gy = static_cast<bool>(std::getline(y, ly));
    if (!gx && !gy) return "";
    if (lx != ly || gx != gy) return "line " + std::to_string(line) + ": '" + lx + "' vs '" + ly + "'";
  }
}

void compare_golden(const std::string& name, const Report& rep) {
  const std::string got = rounded(rep.json).dump(2);
  const std::string want = rounded(read_json("tests/golden/" + name + ".json")).dump(2);
  CAPTURE(name);
  CHECK_MESSAGE(got == want, first_difference(got, want));
}

}  // namespace

TEST_CASE("golden audit reports") {
  for (const char* name : {"chaplygin_sleigh", "falling_disk", "heisenberg", "vertical_disk", "rolling_ball",
                           "roller_racer", "mobius", "sleigh_oscillator", "chaplygin_sphere"}) {
    compare_golden(name, audit(load_system(std::string("systems/") + name + ".json")));
  }
}

TEST_CASE("golden eps reports") {
  for (const char* name : {"eps_sleigh", "eps_so3", "eps_abelian"}) {
    compare_golden(name, eps_audit(load_eps(std::string("systems/") + name + ".json")));
  }
}

TEST_CASE("audit exit codes") {
  CHECK(audit(load_system("systems/falling_disk.json")).exit_code == kExitExists);
  CHECK(audit(load_system("systems/chaplygin_sleigh.json")).exit_code == kExitRefuted);
  CHECK(audit(load_system("systems/chaplygin_sleigh.json", {{"a", 0.0}})).exit_code == kExitExists);
  CHECK(eps_audit(load_eps("systems/eps_sleigh.json")).exit_code == kExitRefuted);
}

TEST_CASE("reports embed version, seeds and tolerances") {
  AuditOptions opts;
  opts.seed = 7;
  opts.tol = 1e-7;
  const Report rep = audit(load_system("systems/heisenberg.json"), opts);
  CHECK(rep.json["tool"]["version"] == kVersion);
  CHECK(rep.json["settings"]["seed"] == 7);
  CHECK(rep.json["settings"]["tol"] == 1e-7);
  CHECK(rep.json["schema"] == "nhvol.audit/1");
}

TEST_CASE("custom basis reaches the report") {
  AuditOptions opts;
  opts.basis = "1, sin(theta)";
  const Report rep = audit(load_system("systems/chaplygin_sleigh.json"), opts);
  CHECK(rep.json["settings"]["basis"].size() == 2);
  CHECK(rep.exit_code == kExitRefuted);
}

TEST_CASE("initial state parsing") {
  const ReducedState z = parse_initial_state("1, 2, 3;0.5,0,-1", 3);
  CHECK(z.q(2) == 3.0);
  CHECK(z.v(2) == -1.0);
  CHECK(parse_initial_state("1,2,3", 3).v.norm() == 0.0);
  CHECK_THROWS_AS(parse_initial_state("1,2", 3), ValidationError);
  CHECK_THROWS_AS(parse_initial_state("1,b,3", 3), ValidationError);
  CHECK_THROWS_AS(parse_initial_state("1,2,3x", 3), ValidationError);
}

TEST_CASE("simulate summary") {
  SimulateOptions opts;
  opts.duration = 10.0;
  const Simulation sim = simulate(load_system("systems/chaplygin_sleigh.json"), opts);
  CHECK(sim.summary.json["energy_drift"].get<double>() < 1e-7);
  CHECK(sim.summary.json["max_residual"].get<double>() < 1e-9);
  CHECK(sim.summary.json["steps"] == 10000);

  opts.duration = 1.0;
  opts.initial = parse_initial_state("0.1,0.2,0.3", 3);
  const Simulation rest = simulate(load_system("systems/chaplygin_sleigh.json"), opts);
  CHECK(rest.trajectory.states.back().q(1) == 0.2);
}

TEST_CASE("verify with and without the density") {
  const auto fd = load_system("systems/falling_disk.json");
  CHECK(verify(fd, std::string("1/(J + m*R^2*sin(theta)^2)"), kDefaultSeed).exit_code == kExitExists);
  CHECK(verify(fd, std::nullopt, kDefaultSeed).exit_code == kExitRefuted);
  CHECK(verify(load_system("systems/vertical_disk.json"), std::nullopt, kDefaultSeed).exit_code == kExitExists);
}

TEST_CASE("rounding") {
  const auto doc = nlohmann::json::parse(R"({"a": 0.1234567891234, "b": [1e-12, -3e-10], "c": 5, "d": "x"})");
  const auto r = rounded(doc);
  CHECK(r["a"].get<double>() == doctest::Approx(0.123456789).epsilon(1e-15));
  CHECK(r["b"][0].get<double>() == 0.0);
  CHECK(r["b"][1].get<double>() == 0.0);
  CHECK(r["c"] == 5);
  CHECK(r["d"] == "x");
}
