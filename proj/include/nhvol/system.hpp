#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nhvol/expr.hpp"
#include "nhvol/forms.hpp"

namespace nhvol {

/// Dense row-major matrix of expressions.
class ExprMatrix {
 public:
  ExprMatrix() = default;
  ExprMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols)) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  Expr& operator()(int i, int j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  const Expr& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  const std::vector<Expr>& entries() const noexcept { return data_; }

  /// Numeric value at a point.
  Eigen::MatrixXd evaluate(const Point& at) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Expr> data_;
};

/// Inverse of a square expression matrix as adjugate / determinant.
struct SymbolicInverse {
  ExprMatrix inverse;
  Expr determinant;
};

/// Adjugate inverse via Laplace expansion with memoized minors; sparse
/// matrices stay small. Throws DimensionError above 10x10.
SymbolicInverse invert(const ExprMatrix& a, bool symmetric = false);

/// Natural Lagrangian L = 1/2 g(v, v) - V(q) with linear constraints
/// eta^alpha(v) = 0 on a single chart.
struct NonholonomicSystem {
  std::string name;
  std::vector<std::string> coordinates;
  std::vector<bool> angular;  // coordinate is an angle (trig ansatz basis)
  std::vector<std::string> parameters;
  ExprMatrix metric;
  Expr potential;
  std::vector<KForm> constraints;
  Domain domain;  // domain.params holds the parameter values

  int dimension() const noexcept { return static_cast<int>(coordinates.size()); }
  int constraint_count() const noexcept { return static_cast<int>(constraints.size()); }
  Point at(std::span<const double> q) const { return Point{q, domain.params}; }
};

struct ValidationOptions {
  int samples = 64;
  std::uint64_t seed = kDefaultSeed;
  double tol = 1e-9;
};

/// Checks metric symmetry and positivity, constraint independence and m < n.
/// Throws ValidationError, PositivityError or DegenerateRealization.
void validate(const NonholonomicSystem& sys, const ValidationOptions& options = {});

/// Constraint mass matrix m^{ab} = eta^a(W^b), its inverse m_{ab} and det.
struct MassMatrix {
  ExprMatrix upper;  // m^{ab}
  ExprMatrix lower;  // m_{ab}
  Expr determinant;  // det m^{ab}
};

/// Quantities of the natural realization {P(W^1), ..., P(W^m)}, computed once.
struct Realization {
  ExprMatrix inverse_metric;
  std::vector<VectorField> duals;  // W^a = g^{-1} eta^a
  MassMatrix mass;
};

Realization realize(const NonholonomicSystem& sys);

/// g^{-1} a: the vector field with g(sharp(a), .) = a.
VectorField sharp(const NonholonomicSystem& sys, const KForm& a);
VectorField sharp(const ExprMatrix& inverse_metric, const KForm& a);

/// g(X, .) as a 1-form.
KForm flat(const NonholonomicSystem& sys, const VectorField& x);

/// g(X, Y).
Expr inner(const ExprMatrix& metric, const VectorField& x, const VectorField& y);

/// Throws DegenerateRealization if m^{ab} is singular at a domain sample.
MassMatrix mass_matrix(const NonholonomicSystem& sys);

/// theta_C = m_{ab} L_{W^a} eta^b.
KForm density_form(const NonholonomicSystem& sys);
KForm density_form(const NonholonomicSystem& sys, const Realization& r);

/// tr T^C = m_{ab} i_{W^a} d eta^b.
KForm torsion_trace(const NonholonomicSystem& sys);
KForm torsion_trace(const NonholonomicSystem& sys, const Realization& r);

struct FrobeniusResult {
  bool holonomic = true;
  struct Witness {
    int constraint = -1;
    int first = -1;
    int second = -1;
    double magnitude = 0.0;
    std::vector<double> point;
  };
  std::optional<Witness> witness;
};

/// Involutivity of D: eta^a([E_i, E_j]) vanishes for an adapted frame.
FrobeniusResult frobenius_test(const NonholonomicSystem& sys);

/// Proportionality constant in div_{mu_C}(X) = -c theta_C(qdot), settled by
/// the finite-difference oracle of volume_rate_audit (see tests/dynamics).
inline constexpr double kDivergenceFactor = 1.0;

/// Pointwise divergence of the constrained flow with respect to mu_C.
/// Throws ConstraintViolation if qdot is not in D_q.
double divergence(const NonholonomicSystem& sys, std::span<const double> q,
                  std::span<const double> qdot);

/// Same, with a precomputed density form.
double divergence(const NonholonomicSystem& sys, const KForm& theta, std::span<const double> q,
                  std::span<const double> qdot);

/// Constraint matrix A(q) with rows eta^a_i.
Eigen::MatrixXd constraint_matrix(const NonholonomicSystem& sys, std::span<const double> q);

/// Copy of the system with constraint k multiplied by h (a positive Expr).
NonholonomicSystem rescale_constraint(const NonholonomicSystem& sys, int k, const Expr& h);

/// Copy of the system with constraints permuted.
NonholonomicSystem reorder_constraints(const NonholonomicSystem& sys, std::span<const int> order);

/// Copy of the system with one parameter value replaced.
NonholonomicSystem with_parameter(const NonholonomicSystem& sys, const std::string& name, double value);

}  // namespace nhvol
