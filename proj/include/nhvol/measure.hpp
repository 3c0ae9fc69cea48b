#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nhvol/system.hpp"

namespace nhvol {

/// Scalar functions b_j from which multipliers k_a = sum_j c_aj b_j are built.
struct AnsatzBasis {
  std::vector<Expr> functions;
};

/// 1, then per coordinate: sin q, cos q for angles; q, sin q, cos q otherwise.
AnsatzBasis default_basis(const NonholonomicSystem& sys);

/// Comma-separated DSL expressions over the system's coordinates and parameters.
AnsatzBasis parse_basis(const std::string& text, const NonholonomicSystem& sys);

/// d a vanishes on the domain. Throws UndecidableError if every sample is excluded.
bool closedness(const KForm& a, const Domain& domain, const ZeroTestOptions& options = {});

/// f(x) = integral of a closed 1-form from a base point along axis-aligned
/// staircase paths, by composite 32-point Gauss-Legendre quadrature.
class PotentialField {
 public:
  PotentialField(const KForm& a, const Domain& domain, std::vector<double> base);

  const std::vector<double>& base() const noexcept { return base_; }
  /// Coordinates along which a has a nonzero component.
  const std::vector<int>& axes() const noexcept { return axes_; }

  /// Integral along the staircase that moves the axes in the given order, or
  /// nullopt if the path leaves the domain or crosses a guard.
  std::optional<double> along(std::span<const double> x, std::span<const int> order) const;
  /// Integral along the first admissible staircase. Throws RoutingError.
  double operator()(std::span<const double> x) const;
  /// |f along ascending axes - f along descending axes|; 0 if either is blocked.
  double discrepancy(std::span<const double> x) const;

 private:
  /// In the box and clear of the guards; with guard_values, also on the same
  /// side of every guard as the previous call.
  bool admissible(std::span<const double> q, std::vector<double>* guard_values = nullptr) const;

  int n_;
  Domain domain_;
  std::vector<double> base_;
  std::vector<int> axes_;
  Tape components_;
  Tape guards_;
};

struct PotentialOptions {
  std::vector<double> base;     // empty: reference point of the domain
  std::vector<Expr> candidates;  // positive factors h for the pattern f = c0 + sum c ln h
  int audit_samples = 32;
  std::uint64_t seed = kDefaultSeed;
};

/// Numeric grid of the potential over its active axes, with an optional
/// closed-form expression. density = exp(f).
struct Potential {
  std::vector<double> base;
  std::vector<int> axes;
  std::vector<std::vector<double>> nodes;  // per axis
  std::vector<double> values;              // row-major over nodes; NaN where unreachable
  int unreachable = 0;
  std::optional<Expr> expression;  // f with f(base) = 0
  double path_discrepancy = 0.0;   // max over grid points
  double derivative_residual = 0.0;  // max |df - a| over audit samples (central differences)
};

/// Potential of a closed 1-form. Throws PreconditionError if a is not closed.
Potential potential(const KForm& a, const Domain& domain, const PotentialOptions& options = {});

enum class MeasureStatus { ExactNoMultiplier, ExactWithMultiplier, InconsistentOnAnsatz, NotClosedNoAnsatz };

std::string to_string(MeasureStatus status);

/// Single-constraint obstruction: at `point` the pointwise equations for
/// (k, dk) in d(theta + k eta) = 0 are inconsistent, or determine k and a
/// partial derivative of k that disagree.
struct NonexistenceWitness {
  std::vector<double> point;
  std::string reason;
  double magnitude = 0.0;
};

struct FitStatistics {
  int unknowns = 0;
  int samples = 0;
  int equations = 0;
  int rank = 0;
  int nullspace = 0;
  double residual = 0.0;  // |A c - b| / |b|
};

struct MeasureVerdict {
  MeasureStatus status = MeasureStatus::NotClosedNoAnsatz;
  KForm theta{1, 1};
  std::vector<Expr> multipliers;  // k_a, empty unless ExactWithMultiplier
  KForm closed{1, 1};             // theta + sum k_a eta^a when exact
  std::optional<Potential> potential;
  FitStatistics fit;
  std::optional<NonexistenceWitness> witness;
  std::uint64_t seed = kDefaultSeed;

  bool exists() const noexcept {
    return status == MeasureStatus::ExactNoMultiplier || status == MeasureStatus::ExactWithMultiplier;
  }
};

struct ExactifyOptions {
  int min_samples = 64;  // at least 4 x unknowns are used regardless
  double tol = 1e-8;
  std::uint64_t seed = kDefaultSeed;
  bool reconstruct = true;
};

/// Searches for multipliers in the span of the basis making theta_C + k_a eta^a
/// closed, and reconstructs the potential when it succeeds.
MeasureVerdict exactify(const NonholonomicSystem& sys, const AnsatzBasis& basis, const ExactifyOptions& options = {});
MeasureVerdict exactify(const NonholonomicSystem& sys, const Realization& r, const KForm& theta,
                        const AnsatzBasis& basis, const ExactifyOptions& options = {});

/// Single-constraint pointwise obstruction check at seeded samples.
std::optional<NonexistenceWitness> pointwise_obstruction(const NonholonomicSystem& sys, const KForm& theta,
                                                         const ExactifyOptions& options = {});

/// Holonomic systems with closed constraint forms: the density is det m^{ab}.
/// Throws PreconditionError otherwise.
Expr holonomic_density(const NonholonomicSystem& sys);

/// Positive factors used in the potential pattern table: det m^{ab}, and the
/// coordinate-dependent factors of denominators in the form's coefficients.
std::vector<Expr> potential_candidates(const KForm& a, const Realization& r);

}  // namespace nhvol
