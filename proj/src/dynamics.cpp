#include "nhvol/dynamics.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>

#include "nhvol/error.hpp"

namespace nhvol {

namespace {


std::span<const double> as_span(const Eigen::VectorXd& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }

bool finite(const Eigen::VectorXd& x) { return x.allFinite(); }

}  // namespace

CompiledSystem::CompiledSystem(const NonholonomicSystem& sys) : CompiledSystem(sys, density_form(sys)) {}

CompiledSystem::CompiledSystem(const NonholonomicSystem& sys, const KForm& theta)
    : sys_(sys), n_(sys.dimension()), m_(sys.constraint_count()) {
  std::vector<Expr> roots;
  for (const Expr& e : sys.metric.entries()) roots.push_back(e);
  for (int k = 0; k < n_; ++k)
    for (const Expr& e : sys.metric.entries()) roots.push_back(differentiate(e, k));
  roots.push_back(sys.potential);
  for (int k = 0; k < n_; ++k) roots.push_back(differentiate(sys.potential, k));
  for (const KForm& eta : sys.constraints)
    for (int i = 0; i < n_; ++i) roots.push_back(eta.component(i));
  for (int k = 0; k < n_; ++k)
    for (const KForm& eta : sys.constraints)
      for (int i = 0; i < n_; ++i) roots.push_back(differentiate(eta.component(i), k));
  for (int i = 0; i < n_; ++i) roots.push_back(theta.component(i));
  tape_ = Tape(roots);
}

CompiledSystem::Values CompiledSystem::evaluate(std::span<const double> q) const {
  const std::vector<double> v = tape_.evaluate_all(sys_.at(q));
  std::size_t at = 0;
  auto matrix = [&](int rows, int cols) {
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out(i, j) = v[at++];
    return out;
  };
  Values out;
  out.g = matrix(n_, n_);
  for (int k = 0; k < n_; ++k) out.dg.push_back(matrix(n_, n_));
  out.potential = v[at++];
  out.grad_potential = matrix(n_, 1);
  out.a = matrix(m_, n_);
  for (int k = 0; k < n_; ++k) out.da.push_back(matrix(m_, n_));
  out.theta = matrix(n_, 1);
  return out;
}

Eigen::VectorXd CompiledSystem::acceleration(const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                             Eigen::VectorXd* multipliers) const {
  const Values x = evaluate(as_span(q));
  Eigen::VectorXd cv = Eigen::VectorXd::Zero(n_);
  for (int k = 0; k < n_; ++k) cv += v(k) * (x.dg[static_cast<std::size_t>(k)] * v);
  for (int i = 0; i < n_; ++i) cv(i) -= 0.5 * v.dot(x.dg[static_cast<std::size_t>(i)] * v);
  const Eigen::VectorXd rhs = -cv - x.grad_potential;
  const Eigen::LLT<Eigen::MatrixXd> llt(x.g);
  if (llt.info() != Eigen::Success) throw PositivityError("metric is not positive-definite at the current state");
  Eigen::VectorXd qdd = llt.solve(rhs);
  if (m_ == 0) return qdd;
  const Eigen::MatrixXd minv_at = llt.solve(x.a.transpose());
  const Eigen::MatrixXd s = x.a * minv_at;
  Eigen::VectorXd adot_v = Eigen::VectorXd::Zero(m_);
  for (int k = 0; k < n_; ++k) adot_v += v(k) * (x.da[static_cast<std::size_t>(k)] * v);
  const Eigen::VectorXd lambda = s.ldlt().solve(-adot_v - x.a * qdd);
  if (multipliers) *multipliers = lambda;
  return qdd + minv_at * lambda;
}

Eigen::VectorXd CompiledSystem::project(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  if (m_ == 0) return v;
  const Values x = evaluate(as_span(q));
  const Eigen::LLT<Eigen::MatrixXd> llt(x.g);
  const Eigen::MatrixXd minv_at = llt.solve(x.a.transpose());
  const Eigen::MatrixXd s = x.a * minv_at;
  return v - minv_at * s.ldlt().solve(x.a * v);
}

double CompiledSystem::energy(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  const Values x = evaluate(as_span(q));
  return 0.5 * v.dot(x.g * v) + x.potential;
}

double CompiledSystem::constraint_residual(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  if (m_ == 0) return 0.0;
  return (evaluate(as_span(q)).a * v).cwiseAbs().maxCoeff();
}

double CompiledSystem::divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  return -kDivergenceFactor * evaluate(as_span(q)).theta.dot(v);
}

ReducedState eom(const CompiledSystem& sys, const ReducedState& state) {
  return ReducedState{state.v, sys.acceleration(state.q, state.v)};
}

double Trajectory::energy_drift() const {
  if (energy.empty()) return 0.0;
  double worst = 0.0;
  for (double e : energy) worst = std::max(worst, std::abs(e - energy.front()));
  return worst / std::max(std::abs(energy.front()), 1e-300);
}

double Trajectory::max_residual() const {
  double worst = 0.0;
  for (double r : residual) worst = std::max(worst, r);
  return worst;
}

Trajectory integrate(const CompiledSystem& sys, const ReducedState& initial, double duration, double step,
                     double t0) {
  if (!(step > 0.0)) throw PreconditionError("step must be positive");
  if (!(duration >= 0.0)) throw PreconditionError("duration must be nonnegative");
  const int n = sys.dimension();
  if (initial.q.size() != n || initial.v.size() != n) throw DimensionError("initial state has the wrong dimension");
  if (!sys.system().domain.admits(as_span(initial.q))) {
    throw PreconditionError("initial configuration lies outside the domain");
  }

  Trajectory traj;
  traj.step = step;
  ReducedState z{initial.q, sys.project(initial.q, initial.v)};
  if (!finite(z.v)) throw PreconditionError("initial velocity cannot be projected onto D");
  auto record = [&](double t) {
    traj.time.push_back(t);
    traj.states.push_back(z);
    traj.energy.push_back(sys.energy(z.q, z.v));
    traj.residual.push_back(sys.constraint_residual(z.q, z.v));
    traj.divergence.push_back(sys.divergence(z.q, z.v));
  };
  record(t0);
  const int steps = static_cast<int>(std::llround(duration / step));
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * step;
    try {
      const ReducedState k1 = eom(sys, z);
      const ReducedState k2 = eom(sys, {z.q + 0.5 * step * k1.q, z.v + 0.5 * step * k1.v});
      const ReducedState k3 = eom(sys, {z.q + 0.5 * step * k2.q, z.v + 0.5 * step * k2.v});
      const ReducedState k4 = eom(sys, {z.q + step * k3.q, z.v + step * k3.v});
      ReducedState next{z.q + step / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
                        z.v + step / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
      if (!finite(next.q) || !finite(next.v)) throw IntegrationError("nonfinite state", t);
      next.v = sys.project(next.q, next.v);
      if (!finite(next.v)) throw IntegrationError("nonfinite state after projection", t);
      z = next;
      record(t0 + (k + 1) * step);
    } catch (const DomainError& e) {
      throw IntegrationError(std::string("left the domain of the expressions: ") + e.what(), t);
    } catch (const PositivityError& e) {
      throw IntegrationError(e.what(), t);
    }
  }
  return traj;
}

void write_csv(std::ostream& out, const NonholonomicSystem& sys, const Trajectory& traj) {
  out << "t";
  for (const std::string& c : sys.coordinates) out << "," << c;
  for (const std::string& c : sys.coordinates) out << ",d" << c;
  out << ",energy,residual,divergence\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < traj.time.size(); ++k) {
    out << traj.time[k];
    for (Eigen::Index i = 0; i < traj.states[k].q.size(); ++i) out << "," << traj.states[k].q(i);
    for (Eigen::Index i = 0; i < traj.states[k].v.size(); ++i) out << "," << traj.states[k].v(i);
    out << "," << traj.energy[k] << "," << traj.residual[k] << "," << traj.divergence[k] << "\n";
  }
}

ReducedChart::ReducedChart(const CompiledSystem& sys, const std::vector<VectorField>& frame)
    : sys_(&sys), n_(sys.dimension()), k_(static_cast<int>(frame.size())) {
  std::vector<Expr> e, de;
  for (int i = 0; i < n_; ++i)
    for (int a = 0; a < k_; ++a) e.push_back(frame[static_cast<std::size_t>(a)][i]);
  for (int j = 0; j < n_; ++j)
    for (int i = 0; i < n_; ++i)
      for (int a = 0; a < k_; ++a) de.push_back(differentiate(frame[static_cast<std::size_t>(a)][i], j));
  frame_ = Tape(e);
  dframe_ = Tape(de);
}

Eigen::MatrixXd ReducedChart::frame(std::span<const double> q) const {
  const std::vector<double> v = frame_.evaluate_all(sys_->system().at(q));
  Eigen::MatrixXd e(n_, k_);
  for (int i = 0; i < n_; ++i)
    for (int a = 0; a < k_; ++a) e(i, a) = v[static_cast<std::size_t>(i * k_ + a)];
  return e;
}

Eigen::VectorXd ReducedChart::lift(const ReducedState& state) const {
  const Eigen::MatrixXd e = frame(as_span(state.q));
  const Eigen::MatrixXd g = sys_->evaluate(as_span(state.q)).g;
  const Eigen::MatrixXd ge = g * e;
  Eigen::VectorXd x(n_ + k_);
  x.head(n_) = state.q;
  x.tail(k_) = (e.transpose() * ge).ldlt().solve(ge.transpose() * state.v);
  return x;
}

ReducedState ReducedChart::drop(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd q = x.head(n_);
  return ReducedState{q, frame(as_span(q)) * x.tail(k_)};
}

Eigen::VectorXd ReducedChart::field(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd q = x.head(n_);
  const Eigen::VectorXd s = x.tail(k_);
  const Eigen::MatrixXd e = frame(as_span(q));
  const Eigen::VectorXd v = e * s;
  const Eigen::VectorXd qdd = sys_->acceleration(q, v);
  const std::vector<double> de = dframe_.evaluate_all(sys_->system().at(as_span(q)));
  Eigen::MatrixXd edot = Eigen::MatrixXd::Zero(n_, k_);
  for (int j = 0; j < n_; ++j)
    for (int i = 0; i < n_; ++i)
      for (int a = 0; a < k_; ++a) edot(i, a) += v(j) * de[static_cast<std::size_t>((j * n_ + i) * k_ + a)];
  const Eigen::MatrixXd ge = sys_->evaluate(as_span(q)).g * e;
  Eigen::VectorXd out(n_ + k_);
  out.head(n_) = v;
  out.tail(k_) = (e.transpose() * ge).ldlt().solve(ge.transpose() * (qdd - edot * s));
  return out;
}

MuDensity mu_density(const NonholonomicSystem& sys, const Realization& r, const std::vector<VectorField>& frame) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  const int k = n - m;
  const int big = 2 * n;

  std::vector<Expr> p;
  for (int i = 0; i < n; ++i) p.push_back(Expr::coordinate(n + i, "p_" + sys.coordinates[static_cast<std::size_t>(i)]));

  KForm omega(big, 2);
  for (int i = 0; i < n; ++i) omega = omega + wedge(KForm::basis(big, i), KForm::basis(big, n + i));
  KForm top = KForm::scalar(big, Expr(1.0));
  for (int i = 0; i < n; ++i) top = wedge(top, omega);

  KForm eps = top;
  for (int b = 0; b < m; ++b) {
    VectorField u(big);
    for (int i = 0; i < n; ++i) {
      Expr c(0.0);
      for (int g = 0; g < m; ++g) c += r.mass.lower(b, g) * sys.constraints[static_cast<std::size_t>(g)].component(i);
      u[n + i] = c;
    }
    eps = contract(u, eps);
  }

  KForm sigma = KForm::scalar(big, Expr(1.0));
  for (int a = 0; a < m; ++a) {
    Expr pw(0.0);
    for (int i = 0; i < n; ++i) pw += p[static_cast<std::size_t>(i)] * r.duals[static_cast<std::size_t>(a)][i];
    sigma = wedge(sigma, d(KForm::scalar(big, pw)));
  }
  const KForm identity = wedge(sigma, eps) - top;

  Domain phase = sys.domain;
  for (int i = 0; i < n; ++i) phase.box.push_back(Interval{-1.0, 1.0});
  const ZeroTestResult check = zero_test(identity.coefficients(), phase, ZeroTestOptions{64, 1e-9, kDefaultSeed});
  if (!check.zero) {
    throw DegenerateRealization("sigma ^ eps = omega^n fails at a sample (normalized residual " +
                                std::to_string(check.max_normalized) + ")");
  }

  ChartMap map;
  map.target_dimension = n + k;
  for (int i = 0; i < n; ++i) map.components.push_back(Expr::coordinate(i, sys.coordinates[static_cast<std::size_t>(i)]));
  for (int i = 0; i < n; ++i) {
    Expr pi(0.0);
    for (int a = 0; a < k; ++a) {
      Expr ge(0.0);
      for (int j = 0; j < n; ++j) ge += sys.metric(i, j) * frame[static_cast<std::size_t>(a)][j];
      pi += ge * Expr::coordinate(n + a, "s" + std::to_string(a + 1));
    }
    map.components.push_back(pi);
  }
  const KForm pulled = pullback(map, eps);
  MuDensity out;
  out.coefficient = pulled.terms().empty() ? Expr(0.0) : pulled.terms().begin()->second;
  out.identity_residual = check.max_normalized;
  return out;
}

VolumeAudit volume_rate_audit(const CompiledSystem& sys, const ReducedChart& chart, const MuDensity& mu,
                              const Trajectory& traj, const VolumeAuditOptions& options) {
  VolumeAudit out;
  const NonholonomicSystem& s = sys.system();
  const int n = sys.dimension();
  const int dim = chart.dimension();
  std::vector<Expr> jroots{mu.coefficient};
  for (int i = 0; i < dim; ++i) jroots.push_back(differentiate(mu.coefficient, i));
  const Tape jtape(jroots);

  const int total = static_cast<int>(traj.states.size());
  const int count = std::min(options.samples, total);
  std::vector<double> cs;
  for (int c = 0; c < count; ++c) {
    const int idx = count == 1 ? 0 : static_cast<int>(std::llround(static_cast<double>(c) * (total - 1) / (count - 1)));
    const ReducedState& z = traj.states[static_cast<std::size_t>(idx)];
    const Eigen::VectorXd x = chart.lift(z);
    const double h = options.step;

    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      Eigen::VectorXd lo = z.q, hi = z.q;
      lo(i) -= 2.0 * h;
      hi(i) += 2.0 * h;
      ok = s.domain.admits(as_span(lo)) && s.domain.admits(as_span(hi));
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    try {
      auto trace = [&](double step) {
        double t = 0.0;
        for (int i = 0; i < dim; ++i) {
          Eigen::VectorXd lo = x, hi = x;
          lo(i) -= step;
          hi(i) += step;
          t += (chart.field(hi)(i) - chart.field(lo)(i)) / (2.0 * step);
        }
        return t;
      };
      const double t1 = trace(h);
      const double t2 = trace(2.0 * h);
      const double tr = std::abs(t1 - t2) > 1e-6 * std::max(1.0, std::abs(t1)) ? (4.0 * t1 - t2) / 3.0 : t1;

      const Eigen::VectorXd zf = chart.field(x);
      const std::vector<double> jv = jtape.evaluate_all(Point{as_span(x), s.domain.params});
      if (jv[0] == 0.0) throw DegenerateRealization("nonholonomic volume coefficient vanishes");
      double adv_j = 0.0;
      for (int i = 0; i < dim; ++i) adv_j += zf(i) * jv[static_cast<std::size_t>(1 + i)] / jv[0];
      double adv_rho = 0.0;
      if (options.log_density) {
        for (int i = 0; i < n; ++i) {
          Eigen::VectorXd lo = z.q, hi = z.q;
          lo(i) -= h;
          hi(i) += h;
          adv_rho += zf(i) * (options.log_density(as_span(hi)) - options.log_density(as_span(lo))) / (2.0 * h);
        }
      }
      VolumeSample smp;
      smp.time = traj.time[static_cast<std::size_t>(idx)];
      smp.trace = tr;
      smp.advective = adv_j + adv_rho;
      smp.rate = tr + adv_j + adv_rho;
      smp.scale = zf.norm();
      smp.theta_qdot = sys.evaluate(as_span(z.q)).theta.dot(z.v);
      out.max_rate = std::max(out.max_rate, std::abs(smp.rate) / std::max(1.0, smp.scale));
      if (std::abs(smp.theta_qdot) > 1e-6) cs.push_back(-(tr + adv_j) / smp.theta_qdot);
      out.samples.push_back(smp);
    } catch (const DomainError&) {
      ++out.skipped;
    } catch (const RoutingError&) {
      ++out.skipped;
    }
  }
  out.preserving = !out.samples.empty() && out.max_rate < options.tol;
  out.c_count = static_cast<int>(cs.size());
  if (!cs.empty()) {
    out.c_mean = std::accumulate(cs.begin(), cs.end(), 0.0) / static_cast<double>(cs.size());
    double var = 0.0;
    for (double c : cs) var += (c - out.c_mean) * (c - out.c_mean);
    out.c_std = cs.size() > 1 ? std::sqrt(var / static_cast<double>(cs.size() - 1)) : 0.0;
  }
  return out;
}

}  // namespace nhvol
