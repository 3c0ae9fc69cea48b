#include "nhvol/system.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "nhvol/error.hpp"
#include "nhvol/frame.hpp"

namespace nhvol {

Eigen::MatrixXd ExprMatrix::evaluate(const Point& at) const {
  const Tape tape(data_);
  Eigen::MatrixXd out(rows_, cols_);
  std::vector<double> v(data_.size());
  tape.evaluate(at, v);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) out(i, j) = v[static_cast<std::size_t>(i * cols_ + j)];
  return out;
}

namespace {

class MinorTable {
 public:
  explicit MinorTable(const ExprMatrix& a) : a_(a) {}

  // Determinant of the submatrix on the given row and column masks.
  Expr det(std::uint32_t rows, std::uint32_t cols) {
    if (rows == 0) return Expr(1.0);
    const std::uint64_t key = (std::uint64_t{rows} << 32) | cols;
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const int r = std::countr_zero(rows);
    const std::uint32_t rest = rows & (rows - 1);
    Expr sum(0.0);
    int position = 0;
    for (std::uint32_t cs = cols; cs; cs &= cs - 1, ++position) {
      const int c = std::countr_zero(cs);
      const Expr& entry = a_(r, c);
      if (entry.is_constant(0.0)) continue;
      const Expr term = entry * det(rest, cols & ~(std::uint32_t{1} << c));
      sum = (position & 1) ? sum - term : sum + term;
    }
    memo_.emplace(key, sum);
    return sum;
  }

 private:
  const ExprMatrix& a_;
  std::unordered_map<std::uint64_t, Expr> memo_;
};

Eigen::MatrixXd evaluate_with(const Tape& tape, int rows, int cols, const Point& at) {
  std::vector<double> v(tape.outputs());
  tape.evaluate(at, v);
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return out;
}

std::vector<Expr> constraint_entries(const NonholonomicSystem& sys) {
  std::vector<Expr> out;
  for (const KForm& eta : sys.constraints)
    for (int i = 0; i < sys.dimension(); ++i) out.push_back(eta.component(i));
  return out;
}

}  // namespace

SymbolicInverse invert(const ExprMatrix& a, bool symmetric) {
  const int n = a.rows();
  if (a.cols() != n) throw DimensionError("invert: matrix is not square");
  if (n > 10) throw DimensionError("invert: symbolic inverse limited to 10x10");
  MinorTable minors(a);
  const std::uint32_t all = n == 32 ? ~0u : (1u << n) - 1;
  SymbolicInverse out{ExprMatrix(n, n), minors.det(all, all)};
  for (int i = 0; i < n; ++i) {
    for (int j = symmetric ? i : 0; j < n; ++j) {
      // inverse(j, i) = (-1)^(i+j) M_ij / det
      Expr cof = minors.det(all & ~(1u << i), all & ~(1u << j));
      if ((i + j) & 1) cof = -cof;
      const Expr entry = cof / out.determinant;
      out.inverse(j, i) = entry;
      if (symmetric) out.inverse(i, j) = entry;
    }
  }
  return out;
}

void validate(const NonholonomicSystem& sys, const ValidationOptions& options) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  if (n == 0) throw ValidationError("/coordinates", "no coordinates declared");
  if (n > kMaxChartDimension) throw ValidationError("/coordinates", "too many coordinates");
  if (sys.metric.rows() != n || sys.metric.cols() != n) {
    throw ValidationError("/metric", "metric must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (m < 1) throw ValidationError("/constraints", "at least one constraint is required");
  if (m >= n) {
    throw ValidationError("/constraints", "need fewer constraints (" + std::to_string(m) +
                                              ") than coordinates (" + std::to_string(n) + ")");
  }
  for (int a = 0; a < m; ++a) {
    const KForm& eta = sys.constraints[static_cast<std::size_t>(a)];
    if (eta.degree() != 1 || eta.dimension() != n) {
      throw ValidationError("/constraints/" + std::to_string(a), "constraint row must have length " + std::to_string(n));
    }
  }
  if (sys.domain.dimension() != static_cast<std::size_t>(n)) {
    throw ValidationError("/domain", "domain box must cover every coordinate");
  }
  for (int i = 0; i < n; ++i) {
    const Interval iv = sys.domain.box[static_cast<std::size_t>(i)];
    if (!(iv.lo < iv.hi)) {
      throw ValidationError("/domain/" + sys.coordinates[static_cast<std::size_t>(i)], "empty interval");
    }
  }

  const ZeroTestOptions zopts{options.samples, options.tol, options.seed};
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto r = zero_test(sys.metric(i, j) - sys.metric(j, i), sys.domain, zopts);
      if (!r.zero) {
        throw ValidationError("/metric/" + std::to_string(i) + "/" + std::to_string(j),
                              "metric is not symmetric");
      }
    }
  }

  const Tape metric_tape(sys.metric.entries());
  const Tape eta_tape(constraint_entries(sys));
  Sampler sampler(sys.domain, options.seed);
  int accepted = 0;
  for (int s = 0; s < options.samples; ++s) {
    auto q = sampler.next();
    if (!q) break;
    const Point at = sys.at(*q);
    Eigen::MatrixXd g;
    Eigen::MatrixXd a;
    try {
      g = evaluate_with(metric_tape, n, n, at);
      a = evaluate_with(eta_tape, m, n, at);
    } catch (const DomainError&) {
      continue;
    }
    ++accepted;
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) {
      throw PositivityError("metric is not positive-definite at a domain sample");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    if (sv(m - 1) <= 1e-10 * std::max(1.0, sv(0))) {
      throw DegenerateRealization("constraints are linearly dependent at a domain sample");
    }
  }
  if (accepted == 0) throw UndecidableError("validation: no admissible domain sample");
}

VectorField sharp(const ExprMatrix& inverse_metric, const KForm& a) {
  if (a.degree() != 1) throw DegreeError("sharp requires a 1-form");
  const int n = a.dimension();
  VectorField w(n);
  for (int i = 0; i < n; ++i) {
    Expr s(0.0);
    for (const auto& [idx, c] : a.terms()) {
      const Expr& gij = inverse_metric(i, std::countr_zero(idx));
      if (!gij.is_constant(0.0)) s += gij * c;
    }
    w[i] = s;
  }
  return w;
}

VectorField sharp(const NonholonomicSystem& sys, const KForm& a) {
  const Tape metric_tape(sys.metric.entries());
  Sampler sampler(sys.domain, kDefaultSeed);
  const int n = sys.dimension();
  for (int s = 0; s < 16; ++s) {
    auto q = sampler.next();
    if (!q) break;
    Eigen::MatrixXd g;
    try {
      g = evaluate_with(metric_tape, n, n, sys.at(*q));
    } catch (const DomainError&) {
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) throw PositivityError("metric is singular at a domain sample");
  }
  return sharp(invert(sys.metric, true).inverse, a);
}

KForm flat(const NonholonomicSystem& sys, const VectorField& x) {
  const int n = sys.dimension();
  std::vector<Expr> comps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Expr s(0.0);
    for (int j = 0; j < n; ++j) {
      if (!sys.metric(i, j).is_constant(0.0) && !x[j].is_constant(0.0)) s += sys.metric(i, j) * x[j];
    }
    comps[static_cast<std::size_t>(i)] = s;
  }
  return KForm::one_form(comps);
}

Expr inner(const ExprMatrix& metric, const VectorField& x, const VectorField& y) {
  Expr s(0.0);
  for (int i = 0; i < x.dimension(); ++i) {
    if (x[i].is_constant(0.0)) continue;
    for (int j = 0; j < y.dimension(); ++j) {
      if (y[j].is_constant(0.0) || metric(i, j).is_constant(0.0)) continue;
      s += x[i] * metric(i, j) * y[j];
    }
  }
  return s;
}

Realization realize(const NonholonomicSystem& sys) {
  Realization r;
  r.inverse_metric = invert(sys.metric, true).inverse;
  const int m = sys.constraint_count();
  for (const KForm& eta : sys.constraints) r.duals.push_back(sharp(r.inverse_metric, eta));
  r.mass.upper = ExprMatrix(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = a; b < m; ++b) {
      const Expr e = pairing(sys.constraints[static_cast<std::size_t>(a)], r.duals[static_cast<std::size_t>(b)]);
      r.mass.upper(a, b) = e;
      r.mass.upper(b, a) = e;
    }
  }
  SymbolicInverse inv = invert(r.mass.upper, true);
  r.mass.lower = std::move(inv.inverse);
  r.mass.determinant = inv.determinant;
  return r;
}

MassMatrix mass_matrix(const NonholonomicSystem& sys) {
  Realization r = realize(sys);
  const int m = sys.constraint_count();
  const Tape tape(r.mass.upper.entries());
  Sampler sampler(sys.domain, kDefaultSeed);
  for (int s = 0; s < 64; ++s) {
    auto q = sampler.next();
    if (!q) break;
    Eigen::MatrixXd mm;
    try {
      mm = evaluate_with(tape, m, m, sys.at(*q));
    } catch (const DomainError&) {
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(mm);
    if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-12) {
      throw DegenerateRealization("constraint mass matrix is singular at a domain sample");
    }
  }
  return std::move(r.mass);
}

KForm density_form(const NonholonomicSystem& sys, const Realization& r) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  KForm theta(n, 1);
  for (int b = 0; b < m; ++b) {
    const KForm& eta = sys.constraints[static_cast<std::size_t>(b)];
    for (int a = 0; a < m; ++a) {
      const Expr& mab = r.mass.lower(a, b);
      if (mab.is_constant(0.0)) continue;
      theta = theta + mab * lie_derivative(r.duals[static_cast<std::size_t>(a)], eta);
    }
  }
  return theta;
}

KForm density_form(const NonholonomicSystem& sys) { return density_form(sys, realize(sys)); }

KForm torsion_trace(const NonholonomicSystem& sys, const Realization& r) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  KForm t(n, 1);
  for (int b = 0; b < m; ++b) {
    const KForm deta = d(sys.constraints[static_cast<std::size_t>(b)]);
    if (deta.terms().empty()) continue;
    for (int a = 0; a < m; ++a) {
      const Expr& mab = r.mass.lower(a, b);
      if (mab.is_constant(0.0)) continue;
      t = t + mab * contract(r.duals[static_cast<std::size_t>(a)], deta);
    }
  }
  return t;
}

KForm torsion_trace(const NonholonomicSystem& sys) { return torsion_trace(sys, realize(sys)); }

FrobeniusResult frobenius_test(const NonholonomicSystem& sys) {
  const std::vector<VectorField> frame = adapted_frame(sys);
  FrobeniusResult result;
  const int k = static_cast<int>(frame.size());
  for (int a = 0; a < sys.constraint_count(); ++a) {
    // eta([X, Y]) = -d eta(X, Y) for X, Y tangent to D.
    const KForm deta = d(sys.constraints[static_cast<std::size_t>(a)]);
    for (int i = 0; i < k; ++i) {
      const KForm ix = contract(frame[static_cast<std::size_t>(i)], deta);
      for (int j = i + 1; j < k; ++j) {
        const Expr value = -pairing(ix, frame[static_cast<std::size_t>(j)]);
        const ZeroTestResult z = zero_test(value, sys.domain);
        if (!z.zero) {
          result.holonomic = false;
          result.witness = FrobeniusResult::Witness{a, i, j, z.max_normalized, z.worst_point};
          return result;
        }
      }
    }
  }
  return result;
}

Eigen::MatrixXd constraint_matrix(const NonholonomicSystem& sys, std::span<const double> q) {
  const Tape tape(constraint_entries(sys));
  return evaluate_with(tape, sys.constraint_count(), sys.dimension(), sys.at(q));
}

double divergence(const NonholonomicSystem& sys, const KForm& theta, std::span<const double> q,
                  std::span<const double> qdot) {
  const int n = sys.dimension();
  if (static_cast<int>(q.size()) != n || static_cast<int>(qdot.size()) != n) {
    throw DimensionError("divergence: state has the wrong dimension");
  }
  const Eigen::MatrixXd a = constraint_matrix(sys, q);
  const Eigen::Map<const Eigen::VectorXd> v(qdot.data(), n);
  const double residual = (a * v).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * std::max(1.0, v.norm())) {
    throw ConstraintViolation("velocity violates the constraints (residual " + std::to_string(residual) + ")");
  }
  std::vector<Expr> comps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) comps[static_cast<std::size_t>(i)] = theta.component(i);
  const std::vector<double> th = Tape(comps).evaluate_all(sys.at(q));
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += th[static_cast<std::size_t>(i)] * qdot[static_cast<std::size_t>(i)];
  return -kDivergenceFactor * s;
}

double divergence(const NonholonomicSystem& sys, std::span<const double> q, std::span<const double> qdot) {
  return divergence(sys, density_form(sys), q, qdot);
}

NonholonomicSystem rescale_constraint(const NonholonomicSystem& sys, int k, const Expr& h) {
  if (k < 0 || k >= sys.constraint_count()) throw DimensionError("rescale_constraint: index out of range");
  NonholonomicSystem out = sys;
  out.constraints[static_cast<std::size_t>(k)] = h * sys.constraints[static_cast<std::size_t>(k)];
  return out;
}

NonholonomicSystem reorder_constraints(const NonholonomicSystem& sys, std::span<const int> order) {
  if (static_cast<int>(order.size()) != sys.constraint_count()) {
    throw DimensionError("reorder_constraints: permutation has the wrong length");
  }
  NonholonomicSystem out = sys;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.constraints[i] = sys.constraints.at(static_cast<std::size_t>(order[i]));
  }
  return out;
}

NonholonomicSystem with_parameter(const NonholonomicSystem& sys, const std::string& name, double value) {
  NonholonomicSystem out = sys;
  auto it = std::find(sys.parameters.begin(), sys.parameters.end(), name);
  if (it == sys.parameters.end()) throw ValidationError("/parameters/" + name, "unknown parameter");
  out.domain.params[static_cast<std::size_t>(it - sys.parameters.begin())] = value;
  return out;
}

}  // namespace nhvol
