#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "nhvol/dynamics.hpp"
#include "nhvol/liealg.hpp"
#include "nhvol/measure.hpp"

namespace nhvol {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitExists = 0;
inline constexpr int kExitRefuted = 1;
inline constexpr int kExitError = 2;

struct OracleOptions {
  int states = 10;
  double duration = 1.0;
  double step = 1e-3;
  double fd_step = 1e-5;
  double tol = 1e-4;
  std::optional<ReducedState> initial;  // default: seeded state at the reference point
};

struct AuditOptions {
  int samples = 64;
  double tol = 1e-8;
  std::uint64_t seed = kDefaultSeed;
  std::optional<std::string> basis;  // comma-separated; default ansatz otherwise
  OracleOptions oracle;
};

struct Report {
  nlohmann::json json;
  std::string text;
  int exit_code = kExitError;
};

/// Seeded velocity on D with g-norm 1/2 at the reference point.
ReducedState default_initial_state(const CompiledSystem& sys, std::uint64_t seed);

/// "q1,...,qn" or "q1,...,qn;v1,...,vn".
ReducedState parse_initial_state(const std::string& text, int dimension);

/// density_form, closedness, exactify, potential and the volume-rate oracle.
Report audit(const NonholonomicSystem& sys, const AuditOptions& options = {});

/// Volume-rate oracle alone, with an optional density expression.
Report verify(const NonholonomicSystem& sys, const std::optional<std::string>& density, std::uint64_t seed,
              const OracleOptions& options = {});

/// tr ad, theta, membership, Kozlov, and the finite-difference divergence on D*.
Report eps_audit(const LieAlgebraSystem& sys, int samples = 16, std::uint64_t seed = kDefaultSeed);

struct SimulateOptions {
  double t0 = 0.0;
  double duration = 10.0;
  double step = 1e-3;
  std::uint64_t seed = kDefaultSeed;
  std::optional<ReducedState> initial;
};

struct Simulation {
  Trajectory trajectory;
  Report summary;
};

Simulation simulate(const NonholonomicSystem& sys, const SimulateOptions& options = {});

/// Numbers rounded to multiples of `quantum`, for byte comparison.
nlohmann::json rounded(const nlohmann::json& doc, double quantum = 1e-9);

}  // namespace nhvol
