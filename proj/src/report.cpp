#include "nhvol/report.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "nhvol/error.hpp"
#include "nhvol/frame.hpp"
#include "nhvol/parser.hpp"

namespace nhvol {

namespace {

using nlohmann::json;

constexpr std::size_t kExpressionLimit = 400;

json expression_or_null(const Expr& e) {
  std::string s = to_string(e);
  if (s.size() > kExpressionLimit) return nullptr;
  return s;
}

std::string brief(const Expr& e) {
  std::string s = to_string(e);
  if (s.size() > 72) return "<" + std::to_string(node_count(e)) + " nodes>";
  return s;
}

std::string num(double x) {
  std::ostringstream out;
  out << std::setprecision(6) << x;
  return out.str();
}

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json tool() { return {{"name", "nhvol"}, {"version", kVersion}}; }

json system_json(const NonholonomicSystem& sys) {
  json params = json::object();
  for (std::size_t i = 0; i < sys.parameters.size(); ++i) params[sys.parameters[i]] = sys.domain.params[i];
  return {{"name", sys.name},
          {"coordinates", sys.coordinates},
          {"dimension", sys.dimension()},
          {"constraints", sys.constraint_count()},
          {"parameters", params}};
}

json state_json(const ReducedState& z) { return {{"q", vec(z.q)}, {"v", vec(z.v)}}; }

struct OracleRun {
  VolumeAudit audit;
  ReducedState initial;
  Trajectory trajectory;
};

OracleRun run_oracle(const NonholonomicSystem& sys, const Realization& r, const KForm& theta, std::uint64_t seed,
                     const OracleOptions& options, std::function<double(std::span<const double>)> log_density) {
  const CompiledSystem cs(sys, theta);
  const auto frame = adapted_frame(sys, r);
  const ReducedChart chart(cs, frame);
  const MuDensity mu = mu_density(sys, r, frame);
  OracleRun out;
  out.initial = options.initial ? *options.initial : default_initial_state(cs, seed);
  out.trajectory = integrate(cs, out.initial, options.duration, options.step);
  VolumeAuditOptions vo;
  vo.samples = options.states;
  vo.step = options.fd_step;
  vo.tol = options.tol;
  vo.log_density = std::move(log_density);
  out.audit = volume_rate_audit(cs, chart, mu, out.trajectory, vo);
  return out;
}

json oracle_json(const OracleRun& run, const OracleOptions& options, const std::string& density) {
  const VolumeAudit& a = run.audit;
  return {{"density", density},
          {"initial", state_json(run.initial)},
          {"duration", options.duration},
          {"step", options.step},
          {"fd_step", options.fd_step},
          {"tol", options.tol},
          {"samples", a.samples.size()},
          {"skipped", a.skipped},
          {"max_rate", a.max_rate},
          {"preserving", a.preserving},
          {"c_mean", a.c_count > 0 ? json(a.c_mean) : json(nullptr)},
          {"c_std", a.c_count > 0 ? json(a.c_std) : json(nullptr)},
          {"c_count", a.c_count}};
}

std::string oracle_text(const OracleRun& run, const std::string& density) {
  std::ostringstream out;
  out << "oracle    rho = " << density << ": max rate " << num(run.audit.max_rate) << " over "
      << run.audit.samples.size() << " states";
  if (run.audit.skipped > 0) out << " (" << run.audit.skipped << " skipped)";
  out << (run.audit.preserving ? ", preserving" : ", not preserving");
  if (run.audit.c_count > 0) out << "; c = " << num(run.audit.c_mean) << " +- " << num(run.audit.c_std);
  out << "\n";
  return out.str();
}

}  // namespace

ReducedState default_initial_state(const CompiledSystem& sys, std::uint64_t seed) {
  const int n = sys.dimension();
  const std::vector<double> q0 = reference_point(sys.system().domain);
  ReducedState z{Eigen::Map<const Eigen::VectorXd>(q0.data(), n), Eigen::VectorXd(n)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int i = 0; i < n; ++i) z.v(i) = normal(rng);
  z.v = sys.project(z.q, z.v);
  const double norm = std::sqrt(z.v.dot(sys.evaluate({z.q.data(), static_cast<std::size_t>(n)}).g * z.v));
  if (!(norm > 0.0) || !std::isfinite(norm)) throw PreconditionError("cannot build an initial velocity on D");
  z.v *= 0.5 / norm;
  return z;
}

ReducedState parse_initial_state(const std::string& text, int dimension) {
  auto numbers = [&](const std::string& part) {
    std::vector<double> out;
    std::stringstream in(part);
    for (std::string item; std::getline(in, item, ',');) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(item, &used);
      } catch (const std::exception&) {
        throw ValidationError("--init", "'" + item + "' is not a number");
      }
      if (item.find_first_not_of(" \t", used) != std::string::npos) {
        throw ValidationError("--init", "'" + item + "' is not a number");
      }
      out.push_back(x);
    }
    if (static_cast<int>(out.size()) != dimension) {
      throw ValidationError("--init", "expected " + std::to_string(dimension) + " values, got " +
                            std::to_string(out.size()));
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), dimension).eval();
  };
  const std::size_t semi = text.find(';');
  if (semi == std::string::npos) return ReducedState{numbers(text), Eigen::VectorXd::Zero(dimension)};
  return ReducedState{numbers(text.substr(0, semi)), numbers(text.substr(semi + 1))};
}

Report audit(const NonholonomicSystem& sys, const AuditOptions& options) {
  validate(sys);
  const Realization r = realize(sys);
  const KForm theta = density_form(sys, r);
  const ZeroTestOptions zt{options.samples, 1e-9, options.seed};
  const std::vector<double> ref = reference_point(sys.domain);

  Report rep;
  json& j = rep.json;
  std::ostringstream text;
  j["schema"] = "nhvol.audit/1";
  j["tool"] = tool();
  j["system"] = system_json(sys);

  const AnsatzBasis basis = options.basis ? parse_basis(*options.basis, sys) : default_basis(sys);
  json basis_json = json::array();
  for (const Expr& b : basis.functions) basis_json.push_back(to_string(b));
  j["settings"] = {{"seed", options.seed},
                   {"samples", options.samples},
                   {"tol", options.tol},
                   {"zero_tol", zt.tol},
                   {"basis", basis_json},
                   {"oracle",
                    {{"states", options.oracle.states},
                     {"duration", options.oracle.duration},
                     {"step", options.oracle.step},
                     {"fd_step", options.oracle.fd_step},
                     {"tol", options.oracle.tol}}}};

  text << "system    " << sys.name << " (n = " << sys.dimension() << ", m = " << sys.constraint_count() << ")\n";
  json components = json::array();
  bool theta_zero = true;
  text << "theta_C  ";
  for (int i = 0; i < sys.dimension(); ++i) {
    const Expr& c = theta.component(i);
    const bool zero = zero_test(c, sys.domain, zt).zero;
    theta_zero = theta_zero && zero;
    components.push_back({{"coordinate", sys.coordinates[static_cast<std::size_t>(i)]},
                          {"zero", zero},
                          {"at_reference", zero ? 0.0 : evaluate(c, sys.at(ref))},
                          {"expression", zero ? json("0") : expression_or_null(c)}});
    text << (i ? "; d" : " d") << sys.coordinates[static_cast<std::size_t>(i)] << ": "
         << (zero ? "0" : node_count(c) > 24 ? num(std::abs(evaluate(c, sys.at(ref))) < 1e-12 ? 0.0 : evaluate(c, sys.at(ref))) + " at reference" : to_string(c));
  }
  text << "\n";
  j["theta"] = {{"zero", theta_zero}, {"reference_point", ref}, {"components", components}};

  const bool closed = closedness(theta, sys.domain, ZeroTestOptions{options.samples, options.tol, options.seed});
  j["closed"] = closed;
  text << "closed    " << (closed ? "yes" : "no") << "\n";

  const MeasureVerdict v = exactify(sys, r, theta, basis, ExactifyOptions{options.samples, options.tol, options.seed, true});
  j["status"] = to_string(v.status);
  j["exists"] = v.exists();
  json multipliers = json::array();
  for (const Expr& k : v.multipliers) multipliers.push_back(expression_or_null(k));
  j["multipliers"] = multipliers;
  j["fit"] = {{"unknowns", v.fit.unknowns},   {"samples", v.fit.samples},     {"equations", v.fit.equations},
              {"rank", v.fit.rank},           {"nullspace", v.fit.nullspace}, {"residual", v.fit.residual}};
  text << "status    " << to_string(v.status) << "\n";
  for (std::size_t a = 0; a < v.multipliers.size(); ++a) text << "k_" << a + 1 << "       " << brief(v.multipliers[a]) << "\n";

  if (v.witness) {
    j["witness"] = {{"point", v.witness->point}, {"reason", v.witness->reason}, {"magnitude", v.witness->magnitude}};
    text << "witness   " << v.witness->reason << " at (";
    for (std::size_t i = 0; i < v.witness->point.size(); ++i) text << (i ? ", " : "") << num(v.witness->point[i]);
    text << ")\n";
  } else {
    j["witness"] = nullptr;
  }

  std::function<double(std::span<const double>)> log_density;
  if (v.exists() && v.potential) {
    const Potential& p = *v.potential;
    auto field = std::make_shared<PotentialField>(v.closed, sys.domain, p.base);
    log_density = [field](std::span<const double> q) { return (*field)(q); };
    json axes = json::array();
    for (int a : p.axes) axes.push_back(sys.coordinates[static_cast<std::size_t>(a)]);
    json samples = json::array();
    Sampler sampler(sys.domain, options.seed + 5);
    for (int s = 0; s < 8; ++s) {
      const auto q = sampler.next();
      if (!q) break;
      try {
        samples.push_back({{"q", *q}, {"rho", std::exp((*field)(*q))}});
      } catch (const RoutingError&) {
      }
    }
    j["density"] = {{"form", "rho = exp(f), f(base) = 0"},
                    {"base", p.base},
                    {"axes", axes},
                    {"log_density", p.expression ? expression_or_null(*p.expression) : json(nullptr)},
                    {"closed_form", p.expression.has_value()},
                    {"samples", samples},
                    {"grid_points", p.values.size()},
                    {"unreachable", p.unreachable},
                    {"path_discrepancy", p.path_discrepancy},
                    {"derivative_residual", p.derivative_residual}};
    text << "density   rho = exp(f)";
    if (p.axes.empty()) {
      text << ", constant";
    } else {
      text << " over";
      for (int a : p.axes) text << " " << sys.coordinates[static_cast<std::size_t>(a)];
      if (p.expression) text << ", f = " << brief(*p.expression);
    }
    text << "; path discrepancy " << num(p.path_discrepancy) << ", df residual " << num(p.derivative_residual) << "\n";
  } else {
    j["density"] = nullptr;
  }

  const std::string label = v.exists() ? "reconstructed" : "1";
  const OracleRun run = run_oracle(sys, r, theta, options.seed, options.oracle, log_density);
  j["oracle"] = oracle_json(run, options.oracle, label);
  text << oracle_text(run, label);

  const bool agrees = run.audit.samples.empty() || run.audit.preserving == v.exists();
  j["oracle"]["agrees"] = agrees;
  rep.exit_code = v.exists() && (run.audit.samples.empty() || run.audit.preserving) ? kExitExists : kExitRefuted;
  j["exit_code"] = rep.exit_code;
  text << "verdict   " << (rep.exit_code == kExitExists ? "invariant volume exists" : "no configuration density found");
  if (!agrees) text << " (oracle disagrees)";
  text << "\n";
  rep.text = text.str();
  return rep;
}

Report verify(const NonholonomicSystem& sys, const std::optional<std::string>& density, std::uint64_t seed,
              const OracleOptions& options) {
  validate(sys);
  const Realization r = realize(sys);
  const KForm theta = density_form(sys, r);
  std::function<double(std::span<const double>)> log_density;
  if (density) {
    const Expr rho_expr = parse(*density, sys.coordinates, sys.parameters);
    const Tape tape({rho_expr});
    log_density = [tape, rho_expr, &sys](std::span<const double> q) {
      const double rho = tape.evaluate_all(sys.at(q))[0];
      if (!(rho > 0.0)) throw DomainError("density is not positive", to_string(rho_expr));
      return std::log(rho);
    };
  }
  const std::string label = density ? *density : "1";
  const OracleRun run = run_oracle(sys, r, theta, seed, options, log_density);
  Report rep;
  rep.json = {{"schema", "nhvol.verify/1"}, {"tool", tool()}, {"system", system_json(sys)}, {"seed", seed}};
  rep.json["oracle"] = oracle_json(run, options, label);
  rep.exit_code = run.audit.preserving ? kExitExists : kExitRefuted;
  rep.json["exit_code"] = rep.exit_code;
  rep.text = "system    " + sys.name + "\n" + oracle_text(run, label);
  return rep;
}

Report eps_audit(const LieAlgebraSystem& sys, int samples, std::uint64_t seed) {
  validate(sys);
  const int n = sys.dimension();
  const Eigen::VectorXd tr = trace_ad(sys.constants);
  const Eigen::VectorXd theta = eps_theta(sys);
  const Membership mem = membership(theta, sys.constraints);

  Report rep;
  json& j = rep.json;
  std::ostringstream text;
  j["schema"] = "nhvol.eps/1";
  j["tool"] = tool();
  j["system"] = {{"name", sys.name}, {"dimension", n}, {"constraints", sys.constraint_count()}};
  j["settings"] = {{"seed", seed}, {"samples", samples}};
  j["trace_ad"] = vec(tr);
  j["unimodular"] = tr.norm() <= kZeroCovector;
  j["theta"] = vec(theta);
  j["membership"] = {{"member", mem.member}, {"residual", mem.residual}, {"coefficients", vec(mem.coefficients)}};

  auto row = [&](const Eigen::VectorXd& v) {
    std::string s = "(";
    for (int i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v(i));
    return s + ")";
  };
  text << "system    " << sys.name << " (n = " << n << ", m = " << sys.constraint_count() << ")\n";
  text << "tr ad     " << row(tr) << "\n";
  text << "theta     " << row(theta) << "\n";
  text << "member    " << (mem.member ? "yes" : "no") << " (residual " << num(mem.residual) << ")\n";

  try {
    const KozlovResult k = kozlov_test(sys);
    j["kozlov"] = {{"holds", k.holds}, {"eigenvalue", k.eigenvalue}, {"residual", k.residual}};
    j["kozlov_agrees"] = k.holds == mem.member;
    text << "kozlov    " << (k.holds ? "holds" : "fails") << " (a = " << num(k.eigenvalue) << ")\n";
  } catch (const NotApplicable&) {
    j["kozlov"] = nullptr;
    j["kozlov_agrees"] = nullptr;
    text << "kozlov    not applicable (degenerate Killing form)\n";
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Eigen::LLT<Eigen::MatrixXd> inertia(sys.inertia);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p(i) = normal(rng);
    p = project_momentum(sys, p);
    const double predicted = theta.dot(inertia.solve(p));
    const double fd = eps_fd_divergence(sys, p);
    worst = std::max(worst, std::abs(fd - predicted) / std::max(1.0, std::abs(predicted)));
  }
  j["oracle"] = {{"samples", samples}, {"max_error", worst}, {"agrees", worst < 1e-6}};
  text << "oracle    div = theta(I^-1 p) to " << num(worst) << " over " << samples << " momenta\n";

  rep.exit_code = mem.member ? kExitExists : kExitRefuted;
  j["exists"] = mem.member;
  j["exit_code"] = rep.exit_code;
  text << "verdict   " << (mem.member ? "invariant volume exists" : "no invariant volume") << "\n";
  rep.text = text.str();
  return rep;
}

Simulation simulate(const NonholonomicSystem& sys, const SimulateOptions& options) {
  validate(sys);
  const CompiledSystem cs(sys);
  const ReducedState init = options.initial ? *options.initial : default_initial_state(cs, options.seed);
  Simulation out;
  out.trajectory = integrate(cs, init, options.duration, options.step, options.t0);
  const Trajectory& t = out.trajectory;
  json& j = out.summary.json;
  j = {{"schema", "nhvol.simulate/1"},
       {"tool", tool()},
       {"system", system_json(sys)},
       {"initial", state_json(t.states.front())},
       {"t0", options.t0},
       {"t_end", t.time.back()},
       {"step", options.step},
       {"steps", t.time.size() - 1},
       {"energy", t.energy.front()},
       {"energy_drift", t.energy_drift()},
       {"max_residual", t.max_residual()}};
  out.summary.exit_code = kExitExists;
  j["exit_code"] = out.summary.exit_code;
  std::ostringstream text;
  text << "system    " << sys.name << "\n"
       << "steps     " << t.time.size() - 1 << " of " << options.step << " from t = " << options.t0 << " to "
       << t.time.back() << "\n"
       << "energy    " << num(t.energy.front()) << ", relative drift " << num(t.energy_drift()) << "\n"
       << "residual  max " << num(t.max_residual()) << "\n";
  out.summary.text = text.str();
  return out;
}

json rounded(const json& doc, double quantum) {
  if (doc.is_object()) {
    json out = json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = rounded(it.value(), quantum);
    return out;
  }
  if (doc.is_array()) {
    json out = json::array();
    for (const json& x : doc) out.push_back(rounded(x, quantum));
    return out;
  }
  if (doc.is_number_float()) {
    const double x = doc.get<double>();
    if (!std::isfinite(x)) return nullptr;
    const double r = std::round(x / quantum) * quantum;
    return r == 0.0 ? 0.0 : r;
  }
  return doc;
}

}  // namespace nhvol
