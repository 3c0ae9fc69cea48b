#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nhvol/error.hpp"
#include "nhvol/frame.hpp"
#include "nhvol/io.hpp"
#include "support.hpp"

using namespace nhvol;
using testing::fields_equal;
using testing::forms_equal;

namespace {

NonholonomicSystem bundled(const std::string& name) { return load_system("systems/" + name + ".json"); }

Expr px(const NonholonomicSystem& sys, const std::string& s) { return parse(s, sys.coordinates, sys.parameters); }

KForm one(const NonholonomicSystem& sys, std::initializer_list<const char*> comps) {
  std::vector<Expr> c;
  for (const char* s : comps) c.push_back(px(sys, s));
  return KForm::one_form(c);
}

VectorField field(const NonholonomicSystem& sys, std::initializer_list<const char*> comps) {
  std::vector<Expr> c;
  for (const char* s : comps) c.push_back(px(sys, s));
  return VectorField(c);
}

NonholonomicSystem euclidean(int n, const std::vector<std::vector<std::string>>& constraints) {
  nlohmann::json doc;
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("q" + std::to_string(i));
  doc["coordinates"] = names;
  nlohmann::json g = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < n; ++j) row.push_back(i == j ? "1" : "0");
    g.push_back(row);
  }
  doc["metric"] = g;
  doc["constraints"] = constraints;
  for (const auto& name : names) doc["domain"][name] = {-1.0, 1.0};
  return system_from_json(doc);
}

}  // namespace

TEST_CASE("bundled systems validate") {
  for (const char* name : {"vertical_disk", "falling_disk", "rolling_ball", "heisenberg", "roller_racer",
                           "chaplygin_sphere", "sleigh_oscillator", "mobius", "chaplygin_sleigh"}) {
    CAPTURE(name);
    CHECK_NOTHROW(validate(bundled(name)));
  }
}

TEST_CASE("sharp") {
  const auto flat3 = euclidean(3, {{"0", "0", "1"}});
  CHECK(fields_equal(sharp(flat3, KForm::basis(3, 2)), VectorField::basis(3, 2), flat3.domain));

  const auto h = bundled("heisenberg");
  CHECK(fields_equal(sharp(h, h.constraints[0]), field(h, {"y", "-x", "-1"}), h.domain));

  const auto s = bundled("chaplygin_sleigh");
  const VectorField expected = field(s, {"-(m*a^2 + I)/(I*m)*sin(theta)", "(m*a^2 + I)/(I*m)*cos(theta)", "-a/I"});
  CHECK(fields_equal(sharp(s, s.constraints[0]), expected, s.domain));

  // g(sharp(a), .) = a
  const auto fd = bundled("falling_disk");
  for (const KForm& eta : fd.constraints) CHECK(forms_equal(flat(fd, sharp(fd, eta)), eta, fd.domain));
}

TEST_CASE("singular metric is rejected") {
  const auto doc = nlohmann::json::parse(R"({
    "coordinates": ["x", "y"],
    "metric": [["1", "0"], ["0", "x"]],
    "constraints": [["1", "1"]],
    "domain": {"x": [-1, 1], "y": [-1, 1]}
  })");
  const auto sys = system_from_json(doc);
  CHECK_THROWS_AS(validate(sys), PositivityError);
  CHECK_THROWS_AS(sharp(sys, sys.constraints[0]), PositivityError);
}

TEST_CASE("mass matrices") {
  const auto ball = bundled("rolling_ball");
  const MassMatrix mb = mass_matrix(ball);
  CHECK(is_zero(mb.upper(0, 0) - px(ball, "1 + r^2/k^2"), ball.domain));
  CHECK(is_zero(mb.upper(1, 1) - px(ball, "1 + r^2/k^2"), ball.domain));
  CHECK(is_zero(mb.upper(0, 1), ball.domain));

  const auto fd = bundled("falling_disk");
  const MassMatrix mf = mass_matrix(fd);
  CHECK(is_zero(mf.upper(0, 0) - px(fd, "1/m + R^2/I"), fd.domain));
  CHECK(is_zero(mf.upper(1, 1) - px(fd, "(J + m*R^2)/(J*m + m^2*R^2*sin(theta)^2)"), fd.domain));
  CHECK(is_zero(mf.upper(0, 1), fd.domain));

  const auto flat3 = euclidean(3, {{"0", "0", "1"}});
  CHECK(is_zero(mass_matrix(flat3).upper(0, 0) - 1.0, flat3.domain));

  // inverse check and symmetry at samples
  const auto vd = bundled("vertical_disk");
  const MassMatrix mv = mass_matrix(vd);
  CHECK(is_zero(mv.upper(0, 1) - mv.upper(1, 0), vd.domain));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const Expr prod = mv.upper(a, 0) * mv.lower(0, b) + mv.upper(a, 1) * mv.lower(1, b);
      CHECK(is_zero(prod - (a == b ? 1.0 : 0.0), vd.domain));
    }
}

TEST_CASE("dependent constraints are a degenerate realization") {
  const auto sys = euclidean(3, {{"0", "0", "1"}, {"0", "0", "2"}});
  CHECK_THROWS_AS(validate(sys), DegenerateRealization);
  CHECK_THROWS_AS(mass_matrix(sys), DegenerateRealization);
}

TEST_CASE("density forms") {
  const auto vd = bundled("vertical_disk");
  CHECK(forms_equal(density_form(vd), KForm(4, 1), vd.domain));

  // the Lie derivatives of the vertical disk
  const Realization r = realize(vd);
  CHECK(forms_equal(lie_derivative(r.duals[0], vd.constraints[0]),
                    one(vd, {"0", "0", "0", "-(R^2/I)*cos(phi)*sin(phi)"}), vd.domain));
  CHECK(forms_equal(lie_derivative(r.duals[1], vd.constraints[0]), one(vd, {"0", "0", "0", "(R^2/I)*cos(phi)^2"}),
                    vd.domain));

  const auto fd = bundled("falling_disk");
  CHECK(forms_equal(density_form(fd),
                    one(fd, {"0", "0", "-(2*m*R^2*sin(2*theta))/(2*J + m*R^2 - m*R^2*cos(2*theta))", "0", "0"}),
                    fd.domain));

  const auto s = bundled("chaplygin_sleigh");
  CHECK(forms_equal(density_form(s), one(s, {"m*a/(m*a^2 + I)*cos(theta)", "m*a/(m*a^2 + I)*sin(theta)", "0"}),
                    s.domain));

  const auto mob = bundled("mobius");
  const Realization rm = realize(mob);
  CHECK(forms_equal(density_form(mob), one(mob, {"sin(u)*cos(u)/(1 + sin(u)^2)", "0", "0"}), mob.domain));
  CHECK(forms_equal(lie_derivative(rm.duals[0], mob.constraints[0]), one(mob, {"sin(u)*cos(u)", "0", "0"}), mob.domain));

  const auto osc = bundled("sleigh_oscillator");
  CHECK(forms_equal(
      density_form(osc),
      one(osc, {"m*r/(I + m*r^2)*cos(theta)", "m*r/(I + m*r^2)*sin(theta)", "0",
                "2*I*m^2*r/((I + m*r^2)*(I*(m + M) + M*m*r^2))"}),
      osc.domain));
}

TEST_CASE("single constraint density form is L_W eta / eta(W)") {
  const auto h = bundled("heisenberg");
  const Realization r = realize(h);
  const Expr etaw = pairing(h.constraints[0], r.duals[0]);
  CHECK(is_zero(etaw - px(h, "1 + x^2 + y^2"), h.domain));
  CHECK(forms_equal(density_form(h), (1.0 / etaw) * lie_derivative(r.duals[0], h.constraints[0]), h.domain));
  CHECK(forms_equal(density_form(h), KForm(3, 1), h.domain));
}

TEST_CASE("torsion trace") {
  const auto flat3 = euclidean(3, {{"0", "0", "1"}});
  CHECK(torsion_trace(flat3).terms().empty());

  const auto h = bundled("heisenberg");
  const KForm expected = -d(KForm::scalar(3, ln(px(h, "1 + x^2 + y^2"))));
  CHECK(forms_equal(torsion_trace(h), expected, h.domain));

  for (const char* name : {"vertical_disk", "falling_disk", "rolling_ball", "heisenberg", "roller_racer",
                           "chaplygin_sphere", "sleigh_oscillator", "mobius", "chaplygin_sleigh"}) {
    CAPTURE(name);
    const auto sys = bundled(name);
    const Realization r = realize(sys);
    const KForm lhs = density_form(sys, r);
    const KForm rhs = torsion_trace(sys, r) + d(KForm::scalar(sys.dimension(), ln(r.mass.determinant)));
    CHECK(forms_equal(lhs, rhs, sys.domain, 1e-8));
  }
}

TEST_CASE("holonomic systems: density form is d ln det m") {
  const auto sys = euclidean(4, {{"0", "0", "1", "0"}, {"0", "0", "0", "1"}});
  CHECK(frobenius_test(sys).holonomic);
  const Realization r = realize(sys);
  CHECK(forms_equal(density_form(sys, r), d(KForm::scalar(4, ln(r.mass.determinant))), sys.domain));
}

TEST_CASE("Frobenius test") {
  CHECK(frobenius_test(euclidean(3, {{"0", "0", "1"}})).holonomic);
  CHECK(frobenius_test(euclidean(3, {{"1", "q0", "0"}})).holonomic);

  const auto h = bundled("heisenberg");
  const FrobeniusResult rh = frobenius_test(h);
  CHECK_FALSE(rh.holonomic);
  REQUIRE(rh.witness);
  CHECK(rh.witness->constraint == 0);
  CHECK(rh.witness->magnitude > 1e-3);

  // the witness agrees with a direct bracket
  const auto frame = adapted_frame(h);
  const Expr direct = pairing(h.constraints[0], bracket(frame[0], frame[1]));
  CHECK_FALSE(is_zero(direct, h.domain));

  CHECK_FALSE(frobenius_test(bundled("vertical_disk")).holonomic);
  CHECK_FALSE(frobenius_test(bundled("chaplygin_sleigh")).holonomic);
}

TEST_CASE("pointwise divergence") {
  const auto vd = bundled("vertical_disk");
  // rolling with heading phi: xdot = R cos(phi) thetadot, ydot = R sin(phi) thetadot
  const double R = 0.6, phi = 0.7;
  const std::vector<double> q{0.1, 0.2, 0.3, phi};
  const std::vector<double> v{R * std::cos(phi) * 1.3, R * std::sin(phi) * 1.3, 1.3, -0.4};
  CHECK(divergence(vd, q, v) == doctest::Approx(0.0).scale(1.0));

  const auto s = bundled("chaplygin_sleigh");
  const double m = 1.1, I = 0.7, a = 0.5;
  const std::vector<double> qs{0.0, 0.0, 0.0}, vs{1.0, 0.0, 0.37};
  CHECK(divergence(s, qs, vs) == doctest::Approx(-kDivergenceFactor * m * a / (I + m * a * a)).epsilon(1e-12));

  const std::vector<double> bad{0.0, 1.0, 0.0};
  CHECK_THROWS_AS(divergence(s, qs, bad), ConstraintViolation);
}

TEST_CASE("realization invariance of the density form on D") {
  for (const char* name : {"chaplygin_sleigh", "falling_disk", "roller_racer"}) {
    CAPTURE(name);
    const auto sys = bundled(name);
    const Expr h = px(sys, "2 + sin(theta)");
    const auto scaled = rescale_constraint(sys, 0, h);
    const KForm diff = density_form(scaled) - density_form(sys) - d(KForm::scalar(sys.dimension(), ln(h)));
    for (const VectorField& e : adapted_frame(sys)) {
      CHECK(is_zero(pairing(diff, e), sys.domain, 64, 1e-8));
    }
  }
}

TEST_CASE("mass matrix is a symmetric Gram matrix") {
  const auto sys = bundled("roller_racer");
  const Realization r = realize(sys);
  CHECK(is_zero(pairing(sys.constraints[0], r.duals[1]) - pairing(sys.constraints[1], r.duals[0]), sys.domain));
  CHECK(is_zero(inner(sys.metric, r.duals[0], r.duals[1]) - r.mass.upper(0, 1), sys.domain));
}

TEST_CASE("symbolic inverse") {
  const auto fd = bundled("falling_disk");
  const SymbolicInverse inv = invert(fd.metric, true);
  const Domain& dom = fd.domain;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      Expr s(0.0);
      for (int k = 0; k < 5; ++k) s += fd.metric(i, k) * inv.inverse(k, j);
      CHECK(is_zero(s - (i == j ? 1.0 : 0.0), dom, 64, 1e-9));
    }
  ExprMatrix big(11, 11);
  CHECK_THROWS_AS(invert(big), DimensionError);
}

TEST_CASE("loader errors carry paths") {
  nlohmann::json doc = nlohmann::json::parse(R"({
    "coordinates": ["x", "y", "z"],
    "metric": [["1","0","0"],["0","1","0"],["0","0","1"]],
    "constraints": [["y", "-x", "-1"]],
    "domain": {"x": [-1, 1], "y": [-1, 1], "z": [-1, 1]}
  })");
  CHECK_NOTHROW(system_from_json(doc));

  auto expect_path = [](const nlohmann::json& d, const std::string& path) {
    try {
      system_from_json(d);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(e.path() == path);
    }
  };
  auto d1 = doc;
  d1["metric"][1] = {"0", "1"};
  expect_path(d1, "/metric/1");
  auto d2 = doc;
  d2["constraints"][0][1] = "-w";
  expect_path(d2, "/constraints/0/1");
  auto d3 = doc;
  d3["nonlinear_constraints"] = {"xdot^2 + ydot^2 - 1"};
  expect_path(d3, "/nonlinear_constraints");
  auto d4 = doc;
  d4["domain"]["z"] = {1, -1};
  expect_path(d4, "/domain/z");
  auto d5 = doc;
  d5.erase("metric");
  expect_path(d5, "/metric");
  auto d6 = doc;
  d6["metric"][0][1] = "x";
  CHECK_THROWS_AS(validate(system_from_json(d6)), ValidationError);
  CHECK_THROWS_AS(system_from_json(doc, {{"nope", 1.0}}), ValidationError);
}

TEST_CASE("parameter overrides") {
  const auto s = load_system("systems/chaplygin_sleigh.json", {{"a", 0.0}});
  CHECK(forms_equal(density_form(s), KForm(3, 1), s.domain));
}
