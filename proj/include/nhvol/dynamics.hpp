#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "nhvol/system.hpp"

namespace nhvol {

/// Position and velocity; the velocity satisfies eta^a(v) = 0.
struct ReducedState {
  Eigen::VectorXd q;
  Eigen::VectorXd v;
};

/// Numeric kernels of a system: metric, its first derivatives, potential,
/// constraint matrix and its derivatives, and theta_C, evaluated from tapes.
class CompiledSystem {
 public:
  explicit CompiledSystem(const NonholonomicSystem& sys);
  CompiledSystem(const NonholonomicSystem& sys, const KForm& theta);

  const NonholonomicSystem& system() const noexcept { return sys_; }
  int dimension() const noexcept { return n_; }
  int constraint_count() const noexcept { return m_; }

  struct Values {
    Eigen::MatrixXd g;
    std::vector<Eigen::MatrixXd> dg;  // dg[k](i, j) = d g_ij / dq^k
    double potential = 0.0;
    Eigen::VectorXd grad_potential;
    Eigen::MatrixXd a;                // constraint matrix, m x n
    std::vector<Eigen::MatrixXd> da;  // da[k](alpha, i) = d eta^alpha_i / dq^k
    Eigen::VectorXd theta;
  };
  /// Throws DomainError outside the expressions' domain.
  Values evaluate(std::span<const double> q) const;

  /// Accelerations from M qdd + C(q, v) v + grad V = A^T lambda with the
  /// multipliers chosen so that d/dt (A v) = 0.
  Eigen::VectorXd acceleration(const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                               Eigen::VectorXd* multipliers = nullptr) const;
  /// Metric least-norm correction of v onto ker A(q).
  Eigen::VectorXd project(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  double energy(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  double constraint_residual(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  /// -c theta_C(v).
  double divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;

 private:
  NonholonomicSystem sys_;
  int n_;
  int m_;
  Tape tape_;
};

/// Time derivative (qdot, vdot) of a state on the constraint surface.
ReducedState eom(const CompiledSystem& sys, const ReducedState& state);

struct Trajectory {
  double step = 0.0;
  std::vector<double> time;
  std::vector<ReducedState> states;
  std::vector<double> energy;
  std::vector<double> residual;
  std::vector<double> divergence;

  double energy_drift() const;  // max |H(t) - H(0)| / max(|H(0)|, 1e-300)
  double max_residual() const;
};

/// Classical fixed-step RK4 with velocity projection after every step.
/// Throws IntegrationError on a nonfinite state or on leaving the domain of
/// the expressions, with the last good time.
Trajectory integrate(const CompiledSystem& sys, const ReducedState& initial, double duration, double step,
                     double t0 = 0.0);

/// CSV with columns t, q..., v..., energy, residual, divergence.
void write_csv(std::ostream& out, const NonholonomicSystem& sys, const Trajectory& traj);

/// Coordinates (q, s) on D*, with p = g(sum_a s^a E_a, .) for the adapted frame E.
class ReducedChart {
 public:
  ReducedChart(const CompiledSystem& sys, const std::vector<VectorField>& frame);

  int dimension() const noexcept { return n_ + k_; }
  /// Frame matrix E(q), n x (n - m).
  Eigen::MatrixXd frame(std::span<const double> q) const;
  /// (q, v) -> (q, s) with v = E s.
  Eigen::VectorXd lift(const ReducedState& state) const;
  ReducedState drop(const Eigen::VectorXd& x) const;
  /// The constrained flow in (q, s) coordinates.
  Eigen::VectorXd field(const Eigen::VectorXd& x) const;

 private:
  const CompiledSystem* sys_;
  int n_;
  int k_;
  Tape frame_;   // E(i, a) row-major
  Tape dframe_;  // dE(i, a)/dq^j at ((j * n) + i) * k + a
};

/// Top-degree coefficient J(q, s) of the nonholonomic volume on the (q, s)
/// chart, from eps = i_{U_m} ... i_{U_1} omega^n with U_b = m_{bc} eta^c_i d/dp_i.
struct MuDensity {
  Expr coefficient;        // over the (q, s) chart; depends on q only
  double identity_residual = 0.0;  // sigma ^ eps - omega^n at samples, normalized
};

/// Throws DegenerateRealization if the wedge identity fails at a sample.
MuDensity mu_density(const NonholonomicSystem& sys, const Realization& r, const std::vector<VectorField>& frame);

struct VolumeSample {
  double time = 0.0;
  double trace = 0.0;       // FD trace of the reduced field's Jacobian
  double advective = 0.0;   // Z . grad ln(rho J)
  double rate = 0.0;        // trace + advective
  double scale = 0.0;       // |Z|
  double theta_qdot = 0.0;  // theta_C(qdot)
};

struct VolumeAudit {
  std::vector<VolumeSample> samples;
  int skipped = 0;
  double max_rate = 0.0;      // max |rate| / max(1, |Z|)
  bool preserving = false;
  double c_mean = 0.0;        // fitted c in trace + Z.grad ln J = -c theta_C(qdot)
  double c_std = 0.0;
  int c_count = 0;
};

struct VolumeAuditOptions {
  int samples = 32;
  double step = 1e-5;
  double tol = 1e-4;
  /// ln rho(q); none means rho = 1.
  std::function<double(std::span<const double>)> log_density;
};

/// Finite-difference divergence of the flow on D* relative to rho J dq ds,
/// at evenly spaced states of the trajectory.
VolumeAudit volume_rate_audit(const CompiledSystem& sys, const ReducedChart& chart, const MuDensity& mu,
                              const Trajectory& traj, const VolumeAuditOptions& options = {});

}  // namespace nhvol
