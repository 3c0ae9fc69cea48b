#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nhvol/dynamics.hpp"
#include "nhvol/error.hpp"
#include "nhvol/frame.hpp"
#include "nhvol/io.hpp"
#include "support.hpp"

using namespace nhvol;

namespace {

NonholonomicSystem bundled(const std::string& name) { return load_system("systems/" + name + ".json"); }

NonholonomicSystem from_text(const char* text) { return system_from_json(nlohmann::json::parse(text)); }

Expr px(const NonholonomicSystem& sys, const std::string& s) { return parse(s, sys.coordinates, sys.parameters); }

ReducedState state(std::vector<double> q, std::vector<double> v) {
  return ReducedState{Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size())),
                      Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
}

const char* kFreeParticle = R"json({
  "name": "free_particle",
  "coordinates": ["x", "y", "z"],
  "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
  "potential": "0",
  "constraints": [["0", "0", "1"]],
  "domain": {"x": [-1, 1], "y": [-1, 1], "z": [-1, 1]}
})json";

// Forward speed v, angular velocity w; classical sleigh equations.
struct SleighOde {
  double m, I, a;
  std::array<double, 5> operator()(const std::array<double, 5>& s) const {
    const double th = s[2], v = s[3], w = s[4];
    return {v * std::cos(th), v * std::sin(th), w, a * w * w, -m * a * v * w / (I + m * a * a)};
  }
  std::array<double, 5> run(std::array<double, 5> s, double t, int steps) const {
    const double h = t / steps;
    auto axpy = [](const std::array<double, 5>& x, double c, const std::array<double, 5>& y) {
      std::array<double, 5> out{};
      for (int i = 0; i < 5; ++i) out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + c * y[static_cast<std::size_t>(i)];
      return out;
    };
    for (int k = 0; k < steps; ++k) {
      const auto k1 = (*this)(s);
      const auto k2 = (*this)(axpy(s, h / 2, k1));
      const auto k3 = (*this)(axpy(s, h / 2, k2));
      const auto k4 = (*this)(axpy(s, h, k3));
      for (std::size_t i = 0; i < 5; ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return s;
  }
};

double sleigh_error(double h) {
  const SleighOde ode{1.1, 0.7, 0.5};
  const double th = 0.3, v = 0.4, w = 0.9;
  const CompiledSystem cs(bundled("chaplygin_sleigh"));
  const Trajectory traj =
      integrate(cs, state({0.1, -0.2, th}, {v * std::cos(th), v * std::sin(th), w}), 5.0, h);
  const auto ref = ode.run({0.1, -0.2, th, v, w}, 5.0, 200000);
  const ReducedState& z = traj.states.back();
  const double vf = std::cos(z.q(2)) * z.v(0) + std::sin(z.q(2)) * z.v(1);
  double err = 0.0;
  for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(z.q(i) - ref[static_cast<std::size_t>(i)]));
  err = std::max(err, std::abs(vf - ref[3]));
  return std::max(err, std::abs(z.v(2) - ref[4]));
}

struct Audited {
  MuDensity mu;
  VolumeAudit audit;
};

Audited audit(const NonholonomicSystem& sys, const ReducedState& z0, double duration, int samples,
              std::function<double(std::span<const double>)> log_density = {}) {
  const Realization r = realize(sys);
  const CompiledSystem cs(sys);
  const auto frame = adapted_frame(sys, r);
  const ReducedChart chart(cs, frame);
  const MuDensity mu = mu_density(sys, r, frame);
  const Trajectory traj = integrate(cs, z0, duration, 1e-3);
  VolumeAuditOptions opts;
  opts.samples = samples;
  opts.log_density = std::move(log_density);
  return {mu, volume_rate_audit(cs, chart, mu, traj, opts)};
}

}  // namespace

TEST_CASE("free particle with dz = 0") {
  const CompiledSystem cs(from_text(kFreeParticle));
  const Trajectory traj = integrate(cs, state({0.1, 0.2, 0.3}, {0.5, -0.25, 0.7}), 1.0, 1e-2);
  const ReducedState& z = traj.states.back();
  CHECK(z.q(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(z.q(1) == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(z.q(2) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::abs(z.v(2)) < 1e-15);
}

TEST_CASE("vertical disk: rates constant") {
  const CompiledSystem cs(bundled("vertical_disk"));
  const double R = 0.6;
  const double phi = 0.4, th_dot = 0.8, phi_dot = -0.3;
  const Trajectory traj = integrate(
      cs, state({0.0, 0.0, 0.2, phi}, {R * std::cos(phi) * th_dot, R * std::sin(phi) * th_dot, th_dot, phi_dot}),
      10.0, 1e-3);
  double drift = 0.0;
  for (const ReducedState& z : traj.states) {
    drift = std::max(drift, std::abs(z.v(2) - th_dot));
    drift = std::max(drift, std::abs(z.v(3) - phi_dot));
    drift = std::max(drift, std::abs(std::hypot(z.v(0), z.v(1)) - R * th_dot));
  }
  CHECK(drift < 1e-8);
}

TEST_CASE("sleigh against the classical ODE") {
  CHECK(sleigh_error(1e-3) < 1e-6);
  const double e1 = sleigh_error(0.1);
  const double e2 = sleigh_error(0.05);
  // fourth order: halving the step divides the error by about 16
  CHECK(e1 / e2 > 10.0);
  CHECK(e1 / e2 < 24.0);
}

TEST_CASE("multipliers enforce the constraints") {
  const auto fd = bundled("falling_disk");
  const CompiledSystem cs(fd);
  const ReducedState z = state({0.0, 0.0, 0.3, 0.5, 0.1}, {0.0, 0.0, 0.2, 0.4, -0.7});
  const Eigen::VectorXd v = cs.project(z.q, z.v);
  CHECK(cs.constraint_residual(z.q, v) < 1e-12);
  Eigen::VectorXd lambda;
  const Eigen::VectorXd qdd = cs.acceleration(z.q, v, &lambda);
  CHECK(lambda.size() == 2);
  // d/dt (A v) = A qdd + Adot v
  const double h = 1e-6;
  const Eigen::VectorXd q1 = z.q + h * v;
  const Eigen::VectorXd q0 = z.q - h * v;
  const auto a1 = cs.evaluate({q1.data(), 5}).a;
  const auto a0 = cs.evaluate({q0.data(), 5}).a;
  const auto a = cs.evaluate({z.q.data(), 5}).a;
  const Eigen::VectorXd rate = a * qdd + (a1 - a0) / (2 * h) * v;
  CHECK(rate.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("energy and constraint monitors") {
  const std::vector<std::pair<std::string, ReducedState>> cases{
      {"chaplygin_sleigh", state({0.0, 0.0, 0.3}, {0.2, 0.1, 0.9})},
      {"vertical_disk", state({0.0, 0.0, 0.0, 0.2}, {0.3, 0.1, 0.5, 0.2})},
      {"heisenberg", state({0.1, 0.0, 0.0}, {0.05, 0.05, 0.0})},
      {"rolling_ball", state({0.0, 0.0, 1.0, 0.0, 0.0}, {0.1, 0.2, 0.3, -0.2, 0.1})},
      {"roller_racer", state({0.0, 0.0, 0.0, 1.5}, {0.1, 0.0, 0.2, 0.1})},
  };
  for (const auto& [name, z0] : cases) {
    CAPTURE(name);
    const CompiledSystem cs(bundled(name));
    const Trajectory traj = integrate(cs, z0, 10.0, 1e-3);
    CHECK(traj.states.size() == 10001);
    CHECK(traj.energy_drift() < 1e-7);
    CHECK(traj.max_residual() < 1e-9);
  }
}

TEST_CASE("stationary trajectory") {
  const CompiledSystem cs(bundled("chaplygin_sleigh"));
  const Trajectory traj = integrate(cs, state({0.1, 0.2, 0.3}, {0.0, 0.0, 0.0}), 1.0, 1e-2);
  for (const ReducedState& z : traj.states) {
    CHECK(z.q(0) == 0.1);
    CHECK(z.q(2) == 0.3);
    CHECK(z.v.norm() == 0.0);
  }
}

TEST_CASE("integration errors") {
  const CompiledSystem cs(bundled("chaplygin_sleigh"));
  CHECK_THROWS_AS(integrate(cs, state({0, 0, 0}, {0, 0, 0}), 1.0, 0.0), PreconditionError);
  CHECK_THROWS_AS(integrate(cs, state({0, 0}, {0, 0}), 1.0, 0.1), DimensionError);
  CHECK_THROWS_AS(integrate(cs, state({5, 0, 0}, {0, 0, 0}), 1.0, 0.1), PreconditionError);

  const auto blowup = from_text(R"json({
    "name": "blowup",
    "coordinates": ["x", "y", "z"],
    "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
    "potential": "sqrt(1 - x)",
    "constraints": [["0", "0", "1"]],
    "domain": {"x": [-1, 0.99], "y": [-1, 1], "z": [-1, 1]}
  })json");
  try {
    integrate(CompiledSystem(blowup), state({0.5, 0.0, 0.0}, {1.0, 0.0, 0.0}), 10.0, 1e-2);
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.last_good_time() > 0.0);
    CHECK(e.last_good_time() < 1.0);
  }
}

TEST_CASE("csv output") {
  const auto s = bundled("chaplygin_sleigh");
  const Trajectory traj = integrate(CompiledSystem(s), state({0, 0, 0}, {0.1, 0, 0.2}), 0.02, 1e-2);
  std::ostringstream out;
  write_csv(out, s, traj);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x,y,theta,dx,dy,dtheta,energy,residual,divergence");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("reduced chart round trip") {
  const auto s = bundled("falling_disk");
  const Realization r = realize(s);
  const CompiledSystem cs(s);
  const ReducedChart chart(cs, adapted_frame(s, r));
  CHECK(chart.dimension() == 8);
  const ReducedState z{state({0.1, 0.2, 0.3, 0.4, 0.5}, {0, 0, 0.3, 0.2, 0.1}).q,
                       cs.project(state({0.1, 0.2, 0.3, 0.4, 0.5}, {0, 0, 0.3, 0.2, 0.1}).q,
                                  Eigen::VectorXd::LinSpaced(5, 0.1, 0.5))};
  const Eigen::VectorXd x = chart.lift(z);
  CHECK((chart.drop(x).v - z.v).norm() < 1e-12);
  const Eigen::VectorXd zf = chart.field(x);
  CHECK((zf.head(5) - z.v).norm() < 1e-12);
  // s-rates agree with the lifted acceleration
  const double h = 1e-6;
  const Eigen::VectorXd qdd = cs.acceleration(z.q, z.v);
  const ReducedState ahead{z.q + h * z.v, z.v + h * qdd};
  const ReducedState behind{z.q - h * z.v, z.v - h * qdd};
  const Eigen::VectorXd sdot = (chart.lift(ahead).tail(3) - chart.lift(behind).tail(3)) / (2 * h);
  CHECK((sdot - zf.tail(3)).norm() < 1e-6);
}

TEST_CASE("nonholonomic volume coefficient") {
  SUBCASE("flat case: J constant, equal to n!") {
    const auto s = from_text(kFreeParticle);
    const Realization r = realize(s);
    const MuDensity mu = mu_density(s, r, adapted_frame(s, r));
    CHECK(testing::forms_equal(d(KForm::scalar(5, mu.coefficient)), KForm(5, 1), testing::box(5)));
    CHECK(std::abs(evaluate(mu.coefficient, Point{std::vector<double>(5, 0.3), {}})) == doctest::Approx(6.0));
  }
  SUBCASE("heisenberg: wedge identity") {
    const auto s = bundled("heisenberg");
    const Realization r = realize(s);
    const MuDensity mu = mu_density(s, r, adapted_frame(s, r));
    CHECK(mu.identity_residual < 1e-9);
  }
  SUBCASE("rescaling divides J by h") {
    const auto s = bundled("chaplygin_sleigh");
    const Expr h = px(s, "2 + sin(theta) + x^2");
    const auto t = rescale_constraint(s, 0, h);
    const Realization r = realize(s);
    const Realization rt = realize(t);
    const auto frame = adapted_frame(s, r);
    const Expr j = mu_density(s, r, frame).coefficient;
    const Expr jt = mu_density(t, rt, frame).coefficient;
    Domain chart = s.domain;
    chart.box.push_back(Interval{-1, 1});
    chart.box.push_back(Interval{-1, 1});
    CHECK(zero_test({jt * h - j}, chart, ZeroTestOptions{64, 1e-9, kDefaultSeed}).zero);
  }
}

TEST_CASE("volume rate: vertical disk preserved with rho = 1") {
  const auto a = audit(bundled("vertical_disk"), state({0.0, 0.0, 0.1, 0.3}, {0.3, 0.1, 0.5, 0.4}), 2.0, 16).audit;
  CHECK(a.samples.size() == 16);
  CHECK(a.preserving);
  for (const VolumeSample& smp : a.samples) CHECK(std::abs(smp.rate) < 1e-6);
}

TEST_CASE("volume rate: falling disk preserved with rho = 1/(J + m R^2 sin^2 theta)") {
  const double m = 1.1, J = 0.3, R = 0.5;
  const auto fd = bundled("falling_disk");
  const ReducedState z0 = state({0.0, 0.0, 0.2, 0.1, 0.0}, {0.0, 0.0, 0.1, 0.3, -1.0});
  const auto plain = audit(fd, z0, 1.0, 10).audit;
  CHECK_FALSE(plain.preserving);
  const auto weighted = audit(fd, z0, 1.0, 10, [&](std::span<const double> q) {
                          return -std::log(J + m * R * R * std::sin(q[2]) * std::sin(q[2]));
                        }).audit;
  CHECK(weighted.samples.size() >= 8);
  CHECK(weighted.preserving);
}

TEST_CASE("volume rate: sleigh rate is -c m a v / (I + m a^2)") {
  const double m = 1.1, I = 0.7, a = 0.5;
  const auto res = audit(bundled("chaplygin_sleigh"), state({0.0, 0.0, 0.3}, {0.2, 0.1, 0.9}), 3.0, 10).audit;
  REQUIRE(res.c_count == 10);
  CHECK(res.c_std < 1e-3);
  CHECK(res.c_mean == doctest::Approx(kDivergenceFactor).epsilon(1e-6));
  CHECK_FALSE(res.preserving);
  for (const VolumeSample& smp : res.samples) {
    const double rate = smp.trace + smp.advective;
    CHECK(smp.theta_qdot != 0.0);
    CHECK(rate == doctest::Approx(-res.c_mean * smp.theta_qdot).epsilon(1e-6));
  }
  // theta_C(qdot) = m a v / (I + m a^2) with v the forward speed
  const CompiledSystem cs(bundled("chaplygin_sleigh"));
  const ReducedState z = state({0.0, 0.0, 0.3}, {0.4 * std::cos(0.3), 0.4 * std::sin(0.3), 0.9});
  CHECK(cs.divergence(z.q, z.v) == doctest::Approx(-kDivergenceFactor * m * a * 0.4 / (I + m * a * a)));
}

TEST_CASE("volume rate: roller racer refuted with rho = 1") {
  const auto res = audit(bundled("roller_racer"), state({0.0, 0.0, 0.0, 1.5}, {0.1, 0.0, 0.2, 0.3}), 1.0, 10).audit;
  CHECK(res.samples.size() == 10);
  CHECK_FALSE(res.preserving);
}

TEST_CASE("fitted c is the same across systems") {
  const std::vector<std::pair<std::string, ReducedState>> cases{
      {"chaplygin_sleigh", state({0.0, 0.0, 0.3}, {0.2, 0.1, 0.9})},
      {"falling_disk", state({0.0, 0.0, 0.2, 0.1, 0.0}, {0.0, 0.0, 0.1, 0.3, -1.0})},
      {"sleigh_oscillator", state({0.0, 0.0, 0.3, 0.2}, {0.1, 0.1, 0.5, 0.2})},
      {"chaplygin_sphere", state({0.1, 0.2, 0.8, 0.3, 0.1}, {0.0, 0.0, 0.3, -0.2, 0.4})},
  };
  for (const auto& [name, z0] : cases) {
    CAPTURE(name);
    const auto res = audit(bundled(name), z0, 1.0, 10).audit;
    REQUIRE(res.c_count >= 5);
    CHECK(res.c_mean == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.c_std < 1e-3);
  }
}
