#include "nhvol/liealg.hpp"

#include <cmath>
#include <sstream>

#include "nhvol/error.hpp"

namespace nhvol {

StructureConstants::StructureConstants(int dimension)
    : n_(dimension), ad_(static_cast<std::size_t>(dimension), Eigen::MatrixXd::Zero(dimension, dimension)) {}

Eigen::MatrixXd StructureConstants::ad(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    if (x(i) != 0.0) out += x(i) * ad_[static_cast<std::size_t>(i)];
  }
  return out;
}

Eigen::VectorXd StructureConstants::bracket(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  return ad(x) * y;
}

StructureConstants StructureConstants::change_basis(const Eigen::MatrixXd& p) const {
  // [f_a, f_b] = P_ia P_jb c^k_ij e_k = (P^{-1} c(P_a, P_b))_c f_c
  const Eigen::MatrixXd pinv = p.inverse();
  StructureConstants out(n_);
  for (int a = 0; a < n_; ++a) {
    const Eigen::MatrixXd ada = pinv * ad(Eigen::VectorXd(p.col(a))) * p;
    out.ad_[static_cast<std::size_t>(a)] = ada;
  }
  return out;
}

std::string AlgebraViolation::message() const {
  std::ostringstream os;
  if (kind == "antisymmetry") {
    os << "antisymmetry violated at (i, j, k) = (" << i + 1 << ", " << j + 1 << ", " << k + 1
       << "): c^k_ij + c^k_ji = " << magnitude;
  } else if (kind == "jacobi") {
    os << "Jacobi identity violated at (i, j, k) = (" << i + 1 << ", " << j + 1 << ", " << k + 1
       << "), magnitude " << magnitude;
  } else if (kind == "inertia") {
    os << "inertia tensor is not symmetric positive-definite";
  } else {
    os << "constraint covectors are linearly dependent";
  }
  return os.str();
}

std::optional<AlgebraViolation> check(const LieAlgebraSystem& sys) {
  const StructureConstants& c = sys.constants;
  const int n = c.dimension();
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const double s = c(k, i, j) + c(k, j, i);
        if (std::abs(s) > 1e-12) return AlgebraViolation{"antisymmetry", i, j, k, std::abs(s)};
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        const Eigen::VectorXd ei = Eigen::VectorXd::Unit(n, i), ej = Eigen::VectorXd::Unit(n, j),
                              ek = Eigen::VectorXd::Unit(n, k);
        const Eigen::VectorXd jac = c.bracket(ei, c.bracket(ej, ek)) + c.bracket(ej, c.bracket(ek, ei)) +
                                    c.bracket(ek, c.bracket(ei, ej));
        const double norm = jac.cwiseAbs().maxCoeff();
        if (norm > 1e-12) return AlgebraViolation{"jacobi", i, j, k, norm};
      }
    }
  }
  if (sys.inertia.rows() != n || sys.inertia.cols() != n ||
      (sys.inertia - sys.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, sys.inertia.norm())) {
    return AlgebraViolation{"inertia"};
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sys.inertia);
  if (llt.info() != Eigen::Success) return AlgebraViolation{"inertia"};
  if (sys.constraint_count() > 0) {
    if (sys.constraints.cols() != n || sys.constraint_count() >= n) return AlgebraViolation{"constraints"};
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.constraints);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0)) return AlgebraViolation{"constraints"};
  }
  return std::nullopt;
}

void validate(const LieAlgebraSystem& sys) {
  if (auto v = check(sys)) throw ValidationError("/" + v->kind, v->message());
}

Eigen::VectorXd trace_ad(const StructureConstants& c) {
  const int n = c.dimension();
  Eigen::VectorXd t(n);
  for (int j = 0; j < n; ++j) t(j) = c.ad(j).trace();
  return t;
}

namespace {

struct Duals {
  Eigen::MatrixXd w;      // n x m, columns W^a
  Eigen::MatrixXd mass;   // m^{ab}
  Eigen::MatrixXd lower;  // m_{ab}
};

Duals duals(const LieAlgebraSystem& sys) {
  Duals d;
  const Eigen::LLT<Eigen::MatrixXd> llt(sys.inertia);
  d.w = llt.solve(sys.constraints.transpose());
  d.mass = sys.constraints * d.w;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(d.mass);
  if (!lu.isInvertible()) throw DegenerateRealization("constraint mass matrix is singular");
  d.lower = lu.inverse();
  return d;
}

double max_constant(const StructureConstants& c) {
  double out = 0.0;
  for (int i = 0; i < c.dimension(); ++i) out = std::max(out, c.ad(i).cwiseAbs().maxCoeff());
  return out;
}

}  // namespace

Eigen::VectorXd eps_theta(const LieAlgebraSystem& sys) {
  const StructureConstants& c = sys.constants;
  Eigen::VectorXd theta = trace_ad(c);
  if (sys.constraint_count() == 0) return theta;
  const Duals d = duals(sys);
  const int m = sys.constraint_count();
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      // (ad*_{W^a} eta^b)_j = eta^b_k c^k_{ij} W^{a,i}
      const Eigen::VectorXd adstar = c.ad(Eigen::VectorXd(d.w.col(a))).transpose() * sys.constraints.row(b).transpose();
      theta += d.lower(a, b) * adstar;
    }
  }
  return theta;
}

Membership membership(const Eigen::VectorXd& theta, const Eigen::MatrixXd& constraints, double tol) {
  Membership out;
  const double tn = theta.norm();
  if (tn <= kZeroCovector) {
    out.member = true;
    out.coefficients = Eigen::VectorXd::Zero(constraints.rows());
    return out;
  }
  if (constraints.rows() == 0) {
    out.residual = 1.0;
    return out;
  }
  Eigen::MatrixXd rows = constraints;
  Eigen::VectorXd scale(rows.rows());
  for (int a = 0; a < rows.rows(); ++a) {
    scale(a) = rows.row(a).norm();
    rows.row(a) /= scale(a);
  }
  const Eigen::VectorXd target = theta / tn;
  const Eigen::VectorXd x = rows.transpose().colPivHouseholderQr().solve(target);
  out.residual = (rows.transpose() * x - target).norm();
  out.member = out.residual < tol;
  out.coefficients = (x.array() * tn / scale.array()).matrix();
  return out;
}

Eigen::MatrixXd killing_form(const StructureConstants& c) {
  const int n = c.dimension();
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = (c.ad(i) * c.ad(j)).trace();
  return k;
}

KozlovResult kozlov_test(const LieAlgebraSystem& sys, double tol) {
  const StructureConstants& c = sys.constants;
  const Eigen::MatrixXd kappa = killing_form(c);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(kappa);
  if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * std::max(1.0, kappa.norm())) {
    throw NotApplicable("Killing form is degenerate; use the membership test instead");
  }
  const int m = sys.constraint_count();
  if (m == 0) throw NotApplicable("Kozlov criterion needs at least one constraint");
  const Duals d = duals(sys);
  Eigen::MatrixXd ksharp(c.dimension(), m);
  for (int a = 0; a < m; ++a) ksharp.col(a) = lu.solve(Eigen::VectorXd(sys.constraints.row(a).transpose()));

  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(c.dimension());
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      lhs += d.lower(a, b) * c.bracket(d.w.col(a), ksharp.col(b));

  double reference = 0.0;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) reference += std::abs(d.lower(a, b)) * d.w.col(a).norm() * ksharp.col(b).norm();
  reference *= std::max(1.0, max_constant(c));

  KozlovResult out;
  if (lhs.norm() <= 1e-12 * reference) {
    out.holds = true;
    return out;
  }
  const double scale = lhs.norm();
  const Eigen::VectorXd x = ksharp.colPivHouseholderQr().solve(lhs);
  out.residual = (ksharp * x - lhs).norm() / scale;
  out.holds = out.residual < tol;
  if (m == 1) {
    // single constraint: [I^{-1} eta, kappa^# eta] = a kappa^# eta, with m_{11} folded out
    out.eigenvalue = x(0) / d.lower(0, 0);
  }
  return out;
}

bool bi_invariant(const LieAlgebraSystem& sys, double tol) {
  const StructureConstants& c = sys.constants;
  const int n = c.dimension();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd ei = Eigen::VectorXd::Unit(n, i), ej = Eigen::VectorXd::Unit(n, j),
                              ek = Eigen::VectorXd::Unit(n, k);
        const double lhs = ek.dot(sys.inertia * c.bracket(ei, ej));
        const double rhs = (sys.inertia * ei).dot(c.bracket(ej, ek));
        if (std::abs(lhs - rhs) > tol * std::max(1.0, sys.inertia.norm())) return false;
      }
  return true;
}

Eigen::VectorXd lie_poisson_field(const StructureConstants& c, const Eigen::VectorXd& p, const Eigen::VectorXd& df) {
  // dp_j/dt = p_k c^k_{ij} df^i = (ad_{df}^T p)_j
  return c.ad(df).transpose() * p;
}

Eigen::VectorXd project_momentum(const LieAlgebraSystem& sys, const Eigen::VectorXd& p) {
  if (sys.constraint_count() == 0) return p;
  const Duals d = duals(sys);
  // p - eta^T m^{-1} (W^T p): removes the W-components, orthogonal in the I^{-1} metric
  return p - sys.constraints.transpose() * (d.lower * (d.w.transpose() * p));
}

Eigen::VectorXd eps_field(const LieAlgebraSystem& sys, const Eigen::VectorXd& p_in, bool project) {
  const int n = sys.dimension();
  if (p_in.size() != n) throw DimensionError("eps_field: momentum has the wrong dimension");
  Eigen::VectorXd p = p_in;
  const Eigen::LLT<Eigen::MatrixXd> llt(sys.inertia);
  if (sys.constraint_count() > 0) {
    const Eigen::VectorXd viol = sys.constraints * llt.solve(p);
    if (viol.cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, p.norm())) {
      if (!project) throw ConstraintViolation("momentum is not on D*");
      p = project_momentum(sys, p);
    }
  }
  const Eigen::VectorXd v = llt.solve(p);
  Eigen::VectorXd x = lie_poisson_field(sys.constants, p, v);
  if (sys.constraint_count() == 0) return x;
  const Duals d = duals(sys);
  // d/dt eta^a(I^{-1} p) = W^a . (x + eta^T lambda) = 0
  const Eigen::VectorXd lambda = -d.lower * (d.w.transpose() * x);
  return x + sys.constraints.transpose() * lambda;
}

double eps_fd_divergence(const LieAlgebraSystem& sys, const Eigen::VectorXd& p, double h) {
  const int n = sys.dimension();
  Eigen::MatrixXd basis;
  if (sys.constraint_count() == 0) {
    basis = Eigen::MatrixXd::Identity(n, n);
  } else {
    // D* = I ker(eta): kernel of eta I^{-1}
    const Eigen::LLT<Eigen::MatrixXd> llt(sys.inertia);
    const Eigen::MatrixXd a = sys.constraints * llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    basis = lu.kernel();
  }
  const Eigen::MatrixXd pinv = basis.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd s0 = pinv * p;
  double trace = 0.0;
  for (int a = 0; a < basis.cols(); ++a) {
    Eigen::VectorXd sp = s0, sm = s0;
    sp(a) += h;
    sm(a) -= h;
    const Eigen::VectorXd fp = pinv * eps_field(sys, basis * sp);
    const Eigen::VectorXd fm = pinv * eps_field(sys, basis * sm);
    trace += (fp(a) - fm(a)) / (2 * h);
  }
  return trace;
}

StructureConstants so3() {
  StructureConstants c(3);
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    c.set(k, i, j, 1.0);
    c.set(k, j, i, -1.0);
  }
  return c;
}

StructureConstants se2() {
  StructureConstants c(3);
  c.set(2, 0, 1, -1.0);
  c.set(2, 1, 0, 1.0);
  c.set(1, 0, 2, 1.0);
  c.set(1, 2, 0, -1.0);
  return c;
}

StructureConstants heisenberg3() {
  StructureConstants c(3);
  c.set(2, 0, 1, 1.0);
  c.set(2, 1, 0, -1.0);
  return c;
}

StructureConstants abelian(int n) { return StructureConstants(n); }

}  // namespace nhvol
