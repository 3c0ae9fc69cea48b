#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nhvol {

/// Structure constants c^k_{ij} with [e_i, e_j] = c^k_{ij} e_k, stored as
/// ad matrices: ad[i](k, j) = c^k_{ij}.
class StructureConstants {
 public:
  StructureConstants() = default;
  explicit StructureConstants(int dimension);

  int dimension() const noexcept { return n_; }
  double operator()(int k, int i, int j) const { return ad_[static_cast<std::size_t>(i)](k, j); }
  void set(int k, int i, int j, double value) { ad_[static_cast<std::size_t>(i)](k, j) = value; }

  /// Matrix of ad_{e_i} in the basis e.
  const Eigen::MatrixXd& ad(int i) const { return ad_[static_cast<std::size_t>(i)]; }
  /// Matrix of ad_x.
  Eigen::MatrixXd ad(const Eigen::VectorXd& x) const;
  Eigen::VectorXd bracket(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  /// Constants in the basis f_a = P(:, a) e.
  StructureConstants change_basis(const Eigen::MatrixXd& p) const;

 private:
  int n_ = 0;
  std::vector<Eigen::MatrixXd> ad_;
};

/// EPS data: algebra, inertia tensor (h = 1/2 p^T I^{-1} p) and constraint
/// covectors as rows.
struct LieAlgebraSystem {
  std::string name;
  StructureConstants constants;
  Eigen::MatrixXd inertia;
  Eigen::MatrixXd constraints;  // m x n

  int dimension() const noexcept { return constants.dimension(); }
  int constraint_count() const noexcept { return static_cast<int>(constraints.rows()); }
};

struct AlgebraViolation {
  std::string kind;  // "antisymmetry", "jacobi", "inertia", "constraints"
  int i = -1, j = -1, k = -1;
  double magnitude = 0.0;
  std::string message() const;
};

/// Antisymmetry and Jacobi over every index triple (tol 1e-12), inertia
/// symmetric positive-definite, constraints independent.
std::optional<AlgebraViolation> check(const LieAlgebraSystem& sys);
/// Throws ValidationError describing the first violation.
void validate(const LieAlgebraSystem& sys);

/// (tr ad)_j = sum_i c^i_{ji}.
Eigen::VectorXd trace_ad(const StructureConstants& c);

/// theta_j = (tr ad)_j + m_{ab} eta^b_k c^k_{ij} W^{a,i}, W^a = I^{-1} eta^a.
Eigen::VectorXd eps_theta(const LieAlgebraSystem& sys);

struct Membership {
  bool member = false;
  double residual = 0.0;
  Eigen::VectorXd coefficients;
};

/// Covectors with norm at or below this are treated as zero.
inline constexpr double kZeroCovector = 1e-12;

/// Least-squares distance of theta/|theta| to span of the normalized rows.
Membership membership(const Eigen::VectorXd& theta, const Eigen::MatrixXd& constraints, double tol = 1e-10);

/// kappa_ij = c^m_{ik} c^k_{jm}.
Eigen::MatrixXd killing_form(const StructureConstants& c);

struct KozlovResult {
  bool holds = false;
  double eigenvalue = 0.0;  // a, single-constraint case
  double residual = 0.0;
};

/// Single constraint: [I^{-1} eta, kappa^# eta] = a kappa^# eta. Several:
/// m_{ab} [I^{-1} eta^a, kappa^# eta^b] in span{kappa^# eta^a}. Throws
/// NotApplicable if the Killing form is degenerate.
KozlovResult kozlov_test(const LieAlgebraSystem& sys, double tol = 1e-10);

/// Associativity I([x, y])(z) = I(x)([y, z]) on basis triples.
bool bi_invariant(const LieAlgebraSystem& sys, double tol = 1e-10);

/// Right-hand side of the EPS equations at p. With project set, p is first
/// moved onto D* by the I^{-1}-least-norm correction; otherwise a constraint
/// violation above 1e-10 throws ConstraintViolation.
Eigen::VectorXd eps_field(const LieAlgebraSystem& sys, const Eigen::VectorXd& p, bool project = false);

/// Orthogonal projection of p onto D* = {p : eta^a(I^{-1} p) = 0} in the I^{-1} metric.
Eigen::VectorXd project_momentum(const LieAlgebraSystem& sys, const Eigen::VectorXd& p);

/// Lie-Poisson field of f with gradient grad_f(p): dp_j/dt = p_k c^k_{ij} (df)^i.
Eigen::VectorXd lie_poisson_field(const StructureConstants& c, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& df);

/// Divergence of the EPS flow on D* by central differences along a basis of D*.
double eps_fd_divergence(const LieAlgebraSystem& sys, const Eigen::VectorXd& p, double h = 1e-5);

/// Standard algebras.
StructureConstants so3();
/// Basis (rotation e1, translations e2, e3): [e1, e2] = -e3, [e1, e3] = e2.
StructureConstants se2();
StructureConstants heisenberg3();
StructureConstants abelian(int n);

}  // namespace nhvol
