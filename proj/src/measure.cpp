#include "nhvol/measure.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "nhvol/error.hpp"
#include "nhvol/frame.hpp"
#include "nhvol/parser.hpp"

namespace nhvol {

namespace {

constexpr int kGaussNodes = 32;
constexpr double kMaxSegment = 1.0;

struct GaussRule {
  std::array<double, kGaussNodes> nodes{};
  std::array<double, kGaussNodes> weights{};
};

// Golub-Welsch: eigen-decomposition of the Legendre Jacobi matrix.
const GaussRule& gauss_rule() {
  static const GaussRule rule = [] {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(kGaussNodes, kGaussNodes);
    for (int k = 1; k < kGaussNodes; ++k) {
      const double b = k / std::sqrt(4.0 * k * k - 1.0);
      j(k, k - 1) = b;
      j(k - 1, k) = b;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    GaussRule r;
    for (int k = 0; k < kGaussNodes; ++k) {
      r.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
      const double v = es.eigenvectors()(0, k);
      r.weights[static_cast<std::size_t>(k)] = 2.0 * v * v;
    }
    return r;
  }();
  return rule;
}

std::vector<std::pair<int, int>> index_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i)
    for (int l = i + 1; l < n; ++l) out.emplace_back(i, l);
  return out;
}

bool depends_on_any(const Expr& e, int n) {
  for (int i = 0; i < n; ++i)
    if (depends_on(e, i)) return true;
  return false;
}

void factors(const Expr& e, int n, std::vector<Expr>& out) {
  switch (e.op()) {
    case Op::Mul:
      factors(e.lhs(), n, out);
      factors(e.rhs(), n, out);
      return;
    case Op::Div:
      factors(e.lhs(), n, out);
      factors(e.rhs(), n, out);
      return;
    case Op::Neg:
    case Op::Sqrt:
    case Op::Pow:
      factors(e.lhs(), n, out);
      return;
    default:
      if (depends_on_any(e, n)) out.push_back(e);
  }
}

void denominators(const Expr& e, int n, std::vector<Expr>& out) {
  switch (e.op()) {
    case Op::Div:
      factors(e.rhs(), n, out);
      denominators(e.lhs(), n, out);
      denominators(e.rhs(), n, out);
      return;
    case Op::Pow:
      if (e.value() < 0) factors(e.lhs(), n, out);
      denominators(e.lhs(), n, out);
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
      denominators(e.lhs(), n, out);
      denominators(e.rhs(), n, out);
      return;
    case Op::Neg:
      denominators(e.lhs(), n, out);
      return;
    default:
      return;
  }
}

std::vector<Expr> form_coefficients(const KForm& a, std::span<const std::pair<int, int>> pairs) {
  std::vector<Expr> out;
  out.reserve(pairs.size());
  for (const auto& [i, l] : pairs) out.push_back(a[index_set({i, l})]);
  return out;
}

// Least-squares fit of ln-pattern f = c0 + sum c_k ln h_k to f at seeded samples.
std::optional<Expr> fit_pattern(const KForm& a, const Domain& domain, const PotentialField& field,
                                const std::vector<Expr>& candidates, std::uint64_t seed) {
  const int n = a.dimension();
  std::vector<std::vector<double>> points;
  std::vector<double> f;
  const int wanted = std::max(64, 4 * static_cast<int>(candidates.size() + 1));
  Sampler sampler(domain, seed);
  for (int attempt = 0; static_cast<int>(points.size()) < wanted && attempt < 4 * wanted; ++attempt) {
    auto q = sampler.next();
    if (!q) break;
    try {
      f.push_back(field(*q));
    } catch (const RoutingError&) {
      continue;
    }
    points.push_back(*q);
  }

  std::vector<Expr> kept;
  std::vector<std::vector<double>> logs;
  for (const Expr& h : candidates) {
    const Tape t(h);
    std::vector<double> v;
    bool ok = true;
    for (const auto& q : points) {
      try {
        v.push_back(t.evaluate(Point{q, domain.params}));
      } catch (const DomainError&) {
        ok = false;
        break;
      }
      if (!std::isfinite(v.back()) || v.back() == 0.0) ok = false;
    }
    if (!ok || v.empty()) continue;
    const bool positive = v.front() > 0;
    if (!std::all_of(v.begin(), v.end(), [&](double x) { return (x > 0) == positive; })) continue;
    for (double& x : v) x = std::log(std::abs(x));
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*hi - *lo < 1e-12) continue;
    kept.push_back(positive ? h : -h);
    logs.push_back(std::move(v));
  }
  const int rows = static_cast<int>(f.size());
  const int cols = static_cast<int>(kept.size()) + 1;
  if (kept.empty() || rows < cols + 2) return std::nullopt;

  Eigen::MatrixXd m(rows, cols);
  Eigen::VectorXd rhs(rows);
  for (int r = 0; r < rows; ++r) {
    m(r, 0) = 1.0;
    for (int c = 1; c < cols; ++c) m(r, c) = logs[static_cast<std::size_t>(c - 1)][static_cast<std::size_t>(r)];
    rhs(r) = f[static_cast<std::size_t>(r)];
  }
  const Eigen::VectorXd x = m.completeOrthogonalDecomposition().solve(rhs);
  const double spread = (rhs.array() - rhs.mean()).matrix().norm();
  if ((m * x - rhs).norm() > 1e-8 * std::max(1e-300, spread)) return std::nullopt;

  const std::vector<double>& base = field.base();
  auto build = [&](bool snap) {
    Expr out(0.0);
    double offset = 0.0;
    for (int c = 1; c < cols; ++c) {
      double coeff = x(c);
      if (snap && std::abs(2.0 * coeff - std::round(2.0 * coeff)) < 1e-7) coeff = std::round(2.0 * coeff) / 2.0;
      if (coeff == 0.0 || std::abs(coeff) < 1e-12) continue;
      const Expr& h = kept[static_cast<std::size_t>(c - 1)];
      out += Expr(coeff) * ln(h);
      offset += coeff * std::log(evaluate(h, Point{base, domain.params}));
    }
    return out - Expr(offset);
  };
  for (bool snap : {true, false}) {
    const Expr candidate = build(snap);
    const KForm diff = d(KForm::scalar(n, candidate)) - a;
    if (zero_test(diff.coefficients(), domain, ZeroTestOptions{64, 1e-8, kDefaultSeed + 7}).zero) return candidate;
  }
  return std::nullopt;
}

int grid_resolution(std::size_t axes) {
  static constexpr std::array<int, 5> table{65, 25, 11, 7, 5};
  return table[std::min<std::size_t>(axes, table.size()) - 1];
}

}  // namespace

AnsatzBasis default_basis(const NonholonomicSystem& sys) {
  AnsatzBasis b;
  b.functions.emplace_back(1.0);
  for (int i = 0; i < sys.dimension(); ++i) {
    const Expr q = Expr::coordinate(i, sys.coordinates[static_cast<std::size_t>(i)]);
    if (!sys.angular[static_cast<std::size_t>(i)]) b.functions.push_back(q);
    b.functions.push_back(sin(q));
    b.functions.push_back(cos(q));
  }
  return b;
}

AnsatzBasis parse_basis(const std::string& text, const NonholonomicSystem& sys) {
  AnsatzBasis b;
  int depth = 0;
  std::string item;
  auto flush = [&] {
    const auto first = item.find_first_not_of(" \t");
    if (first != std::string::npos) b.functions.push_back(parse(item, sys.coordinates, sys.parameters));
    item.clear();
  };
  for (char ch : text) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == ',' && depth == 0) {
      flush();
    } else {
      item += ch;
    }
  }
  flush();
  return b;
}

bool closedness(const KForm& a, const Domain& domain, const ZeroTestOptions& options) {
  if (a.degree() != 1) throw DegreeError("closedness expects a 1-form");
  const std::vector<Expr> coeffs = d(a).coefficients();
  const ZeroTestResult r = zero_test(coeffs, domain, options);
  if (r.accepted == 0) throw UndecidableError("every sample was excluded by the domain");
  return r.zero;
}

PotentialField::PotentialField(const KForm& a, const Domain& domain, std::vector<double> base)
    : n_(a.dimension()), domain_(domain), base_(std::move(base)) {
  if (a.degree() != 1) throw DegreeError("potential expects a 1-form");
  if (static_cast<int>(base_.size()) != n_) throw DimensionError("base point has the wrong dimension");
  std::vector<Expr> comps;
  for (int i = 0; i < n_; ++i) {
    comps.push_back(a.component(i));
    if (!is_zero(comps.back(), domain)) axes_.push_back(i);
  }
  components_ = Tape(comps);
  if (!domain.guards.empty()) guards_ = Tape(domain.guards);
}

bool PotentialField::admissible(std::span<const double> q, std::vector<double>* guard_values) const {
  for (int i = 0; i < n_; ++i) {
    const Interval& iv = domain_.box[static_cast<std::size_t>(i)];
    if (q[static_cast<std::size_t>(i)] < iv.lo || q[static_cast<std::size_t>(i)] > iv.hi) return false;
  }
  if (domain_.guards.empty()) return true;
  std::vector<double> g(domain_.guards.size());
  try {
    guards_.evaluate(Point{q, domain_.params}, g);
  } catch (const DomainError&) {
    return false;
  }
  if (!std::all_of(g.begin(), g.end(), [&](double x) { return std::abs(x) >= domain_.guard_margin; })) return false;
  if (guard_values) {
    if (!guard_values->empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        if ((g[k] > 0) != ((*guard_values)[k] > 0)) return false;
      }
    }
    *guard_values = g;
  }
  return true;
}

std::optional<double> PotentialField::along(std::span<const double> x, std::span<const int> order) const {
  std::vector<double> p = base_;
  for (int i = 0; i < n_; ++i) {
    if (std::find(axes_.begin(), axes_.end(), i) == axes_.end()) p[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
  }
  std::vector<double> signs;
  if (!admissible(p, &signs)) return std::nullopt;
  const GaussRule& rule = gauss_rule();
  std::vector<double> values(static_cast<std::size_t>(n_));
  double total = 0.0;
  for (int i : order) {
    const auto si = static_cast<std::size_t>(i);
    const double from = p[si];
    const double len = x[si] - from;
    if (len == 0.0) continue;
    const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(len) / kMaxSegment)));
    const double h = len / pieces;
    for (int piece = 0; piece < pieces; ++piece) {
      for (int k = 0; k < kGaussNodes; ++k) {
        p[si] = from + h * (piece + 0.5 * (rule.nodes[static_cast<std::size_t>(k)] + 1.0));
        if (!admissible(p, &signs)) return std::nullopt;
        try {
          components_.evaluate(Point{p, domain_.params}, values);
        } catch (const DomainError&) {
          return std::nullopt;
        }
        total += 0.5 * h * rule.weights[static_cast<std::size_t>(k)] * values[si];
      }
    }
    p[si] = x[si];
    if (!admissible(p, &signs)) return std::nullopt;
  }
  return total;
}

double PotentialField::operator()(std::span<const double> x) const {
  std::vector<int> order = axes_;
  if (auto f = along(x, order)) return *f;
  std::reverse(order.begin(), order.end());
  if (auto f = along(x, order)) return *f;
  if (axes_.size() <= 6) {
    order = axes_;
    while (std::next_permutation(order.begin(), order.end())) {
      if (auto f = along(x, order)) return *f;
    }
  }
  std::string where;
  for (double v : x) where += (where.empty() ? "" : ", ") + std::to_string(v);
  throw RoutingError("no admissible staircase path from the base point to (" + where + ")");
}

double PotentialField::discrepancy(std::span<const double> x) const {
  std::vector<int> order = axes_;
  const auto f1 = along(x, order);
  std::reverse(order.begin(), order.end());
  const auto f2 = along(x, order);
  if (!f1 || !f2) return 0.0;
  return std::abs(*f1 - *f2);
}

Potential potential(const KForm& a, const Domain& domain, const PotentialOptions& options) {
  if (!closedness(a, domain)) throw PreconditionError("potential requires a closed 1-form");
  const int n = a.dimension();
  Potential out;
  out.base = options.base.empty() ? reference_point(domain) : options.base;
  const PotentialField field(a, domain, out.base);
  out.axes = field.axes();
  if (out.axes.empty()) {
    out.values = {0.0};
    out.expression = Expr(0.0);
    return out;
  }

  const int res = grid_resolution(out.axes.size());
  for (int ax : out.axes) {
    const Interval& iv = domain.box[static_cast<std::size_t>(ax)];
    std::vector<double> nodes;
    for (int k = 0; k < res; ++k) nodes.push_back(iv.lo + (iv.hi - iv.lo) * (k + 0.5) / res);
    out.nodes.push_back(std::move(nodes));
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < out.axes.size(); ++i) total *= static_cast<std::size_t>(res);
  out.values.assign(total, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> q = out.base;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int ax = static_cast<int>(out.axes.size()) - 1; ax >= 0; --ax) {
      const auto sa = static_cast<std::size_t>(ax);
      q[static_cast<std::size_t>(out.axes[sa])] = out.nodes[sa][rem % static_cast<std::size_t>(res)];
      rem /= static_cast<std::size_t>(res);
    }
    if (!domain.admits(q)) {
      ++out.unreachable;
      continue;
    }
    try {
      out.values[flat] = field(q);
      out.path_discrepancy = std::max(out.path_discrepancy, field.discrepancy(q));
    } catch (const RoutingError&) {
      ++out.unreachable;
    }
  }

  // audit df = a by central differences at samples
  const Tape comps([&] {
    std::vector<Expr> c;
    for (int i = 0; i < n; ++i) c.push_back(a.component(i));
    return c;
  }());
  Sampler sampler(domain, options.seed);
  std::vector<double> values(static_cast<std::size_t>(n));
  constexpr double h = 1e-5;
  for (int s = 0; s < options.audit_samples; ++s) {
    auto x = sampler.next();
    if (!x) break;
    try {
      comps.evaluate(Point{*x, domain.params}, values);
    } catch (const DomainError&) {
      continue;
    }
    for (int ax : out.axes) {
      std::vector<double> lo = *x, hi = *x;
      lo[static_cast<std::size_t>(ax)] -= h;
      hi[static_cast<std::size_t>(ax)] += h;
      if (!domain.admits(lo) || !domain.admits(hi)) continue;
      try {
        const double fd = (field(hi) - field(lo)) / (2.0 * h);
        const double ai = values[static_cast<std::size_t>(ax)];
        out.derivative_residual = std::max(out.derivative_residual, std::abs(fd - ai) / std::max(1.0, std::abs(ai)));
      } catch (const RoutingError&) {
      }
    }
  }

  if (!options.candidates.empty()) out.expression = fit_pattern(a, domain, field, options.candidates, options.seed + 3);
  return out;
}

std::string to_string(MeasureStatus status) {
  switch (status) {
    case MeasureStatus::ExactNoMultiplier: return "EXACT_NO_MULTIPLIER";
    case MeasureStatus::ExactWithMultiplier: return "EXACT_WITH_MULTIPLIER";
    case MeasureStatus::InconsistentOnAnsatz: return "INCONSISTENT_ON_ANSATZ";
    case MeasureStatus::NotClosedNoAnsatz: return "NOT_CLOSED_NO_ANSATZ";
  }
  return "UNKNOWN";
}

std::vector<Expr> potential_candidates(const KForm& a, const Realization& r) {
  const int n = a.dimension();
  std::vector<Expr> raw;
  if (depends_on_any(r.mass.determinant, n)) raw.push_back(r.mass.determinant);
  factors(r.mass.determinant, n, raw);
  for (const Expr& c : a.coefficients()) denominators(c, n, raw);
  std::vector<Expr> out;
  std::vector<std::string> seen;
  for (const Expr& e : raw) {
    const std::string key = to_string(e);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    out.push_back(e);
    if (out.size() == 8) break;
  }
  return out;
}

std::optional<NonexistenceWitness> pointwise_obstruction(const NonholonomicSystem& sys, const KForm& theta,
                                                         const ExactifyOptions& options) {
  if (sys.constraint_count() != 1) return std::nullopt;
  const int n = sys.dimension();
  const KForm& eta = sys.constraints[0];
  const auto pairs = index_pairs(n);
  const int p = static_cast<int>(pairs.size());
  std::vector<Expr> roots;
  for (int i = 0; i < n; ++i) roots.push_back(eta.component(i));
  for (const Expr& e : form_coefficients(d(eta), pairs)) roots.push_back(e);
  for (const Expr& e : form_coefficients(d(theta), pairs)) roots.push_back(e);
  const Tape tape(roots);
  std::vector<double> v(roots.size());

  struct Local {
    bool consistent;
    double residual;
    Eigen::VectorXd solution;
    std::vector<bool> determined;
  };
  auto solve_at = [&](std::span<const double> q) -> std::optional<Local> {
    try {
      tape.evaluate(sys.at(q), v);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, n + 1);
    Eigen::VectorXd b(p);
    for (int r = 0; r < p; ++r) {
      const auto [i, l] = pairs[static_cast<std::size_t>(r)];
      a(r, 0) = v[static_cast<std::size_t>(n + r)];
      a(r, 1 + i) = v[static_cast<std::size_t>(l)];
      a(r, 1 + l) = -v[static_cast<std::size_t>(i)];
      b(r) = -v[static_cast<std::size_t>(n + p + r)];
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    const double cut = 1e-10 * std::max(1.0, smax);
    int rank = 0;
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) rank += svd.singularValues()(k) > cut;
    Local out;
    out.solution = Eigen::VectorXd::Zero(n + 1);
    for (int k = 0; k < rank; ++k) {
      out.solution += svd.matrixV().col(k) * (svd.matrixU().col(k).dot(b) / svd.singularValues()(k));
    }
    out.residual = (a * out.solution - b).norm() / std::max({1.0, b.norm(), smax});
    out.consistent = out.residual < 1e-8;
    out.determined.assign(static_cast<std::size_t>(n + 1), true);
    for (int u = 0; u <= n; ++u) {
      double leak = 0.0;
      for (int k = rank; k <= n; ++k) leak += svd.matrixV()(u, k) * svd.matrixV()(u, k);
      out.determined[static_cast<std::size_t>(u)] = std::sqrt(leak) < 1e-8;
    }
    return out;
  };

  Sampler sampler(sys.domain, options.seed);
  constexpr double h = 1e-5;
  for (int s = 0; s < 16; ++s) {
    auto q = sampler.next();
    if (!q) break;
    const auto here = solve_at(*q);
    if (!here) continue;
    if (!here->consistent) {
      return NonexistenceWitness{*q, "pointwise equations for the multiplier and its gradient are inconsistent",
                                 here->residual};
    }
    if (!here->determined[0]) continue;
    for (int i = 0; i < n; ++i) {
      if (!here->determined[static_cast<std::size_t>(1 + i)]) continue;
      std::vector<double> lo = *q, hi = *q;
      lo[static_cast<std::size_t>(i)] -= h;
      hi[static_cast<std::size_t>(i)] += h;
      if (!sys.domain.admits(lo) || !sys.domain.admits(hi)) continue;
      const auto l = solve_at(lo), u = solve_at(hi);
      if (!l || !u || !l->consistent || !u->consistent || !l->determined[0] || !u->determined[0]) continue;
      const double fd = (u->solution(0) - l->solution(0)) / (2.0 * h);
      const double pinned = here->solution(1 + i);
      const double gap = std::abs(fd - pinned) / std::max(1.0, std::abs(pinned));
      if (gap > 1e-4) {
        return NonexistenceWitness{*q,
                                   "the multiplier is determined pointwise but its derivative along " +
                                       sys.coordinates[static_cast<std::size_t>(i)] +
                                       " contradicts the derivative the equations require",
                                   gap};
      }
    }
  }
  return std::nullopt;
}

MeasureVerdict exactify(const NonholonomicSystem& sys, const Realization& r, const KForm& theta,
                        const AnsatzBasis& basis, const ExactifyOptions& options) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  MeasureVerdict v;
  v.theta = theta;
  v.seed = options.seed;
  const ZeroTestOptions zt{64, 1e-9, options.seed};

  auto reconstruct = [&](const KForm& closed) {
    if (!options.reconstruct) return;
    PotentialOptions po;
    po.seed = options.seed;
    po.candidates = potential_candidates(closed, r);
    v.potential = potential(closed, sys.domain, po);
  };

  if (closedness(theta, sys.domain, zt)) {
    v.status = MeasureStatus::ExactNoMultiplier;
    v.closed = theta;
    reconstruct(theta);
    return v;
  }
  if (basis.functions.empty()) {
    v.status = MeasureStatus::NotClosedNoAnsatz;
    v.witness = pointwise_obstruction(sys, theta, options);
    return v;
  }

  const int nb = static_cast<int>(basis.functions.size());
  const int unknowns = m * nb;
  const auto pairs = index_pairs(n);
  const int p = static_cast<int>(pairs.size());
  std::vector<Expr> roots;
  for (int a = 0; a < m; ++a)
    for (int j = 0; j < nb; ++j) {
      const KForm col = d(basis.functions[static_cast<std::size_t>(j)] * sys.constraints[static_cast<std::size_t>(a)]);
      for (const Expr& e : form_coefficients(col, pairs)) roots.push_back(e);
    }
  for (const Expr& e : form_coefficients(d(theta), pairs)) roots.push_back(e);
  const Tape tape(roots);

  const int samples = std::max(options.min_samples, 4 * unknowns);
  Eigen::MatrixXd a(samples * p, unknowns);
  Eigen::VectorXd b(samples * p);
  std::vector<double> values(roots.size());
  Sampler sampler(sys.domain, options.seed);
  int used = 0;
  for (int attempt = 0; used < samples && attempt < 50 * samples; ++attempt) {
    auto q = sampler.next();
    if (!q) break;
    try {
      tape.evaluate(sys.at(*q), values);
    } catch (const DomainError&) {
      continue;
    }
    for (int r2 = 0; r2 < p; ++r2) {
      const int row = used * p + r2;
      for (int u = 0; u < unknowns; ++u) a(row, u) = values[static_cast<std::size_t>(u * p + r2)];
      b(row) = -values[static_cast<std::size_t>(unknowns * p + r2)];
    }
    ++used;
  }
  if (used == 0) throw UndecidableError("every sample was excluded by the domain");
  a.conservativeResize(used * p, Eigen::NoChange);
  b.conservativeResize(used * p);

  Eigen::VectorXd scale(unknowns);
  for (int u = 0; u < unknowns; ++u) scale(u) = a.col(u).norm();
  const double largest = unknowns > 0 ? scale.maxCoeff() : 0.0;
  for (int u = 0; u < unknowns; ++u) {
    if (scale(u) <= 1e-12 * std::max(1.0, largest)) {
      scale(u) = 0.0;
      a.col(u).setZero();
    } else {
      a.col(u) /= scale(u);
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  cod.setThreshold(1e-10);
  cod.compute(a);
  Eigen::VectorXd c = cod.solve(b);
  v.fit.unknowns = unknowns;
  v.fit.samples = used;
  v.fit.equations = static_cast<int>(a.rows());
  v.fit.rank = static_cast<int>(cod.rank());
  v.fit.nullspace = unknowns - v.fit.rank;
  v.fit.residual = (a * c - b).norm() / std::max(1e-300, b.norm());
  for (int u = 0; u < unknowns; ++u) c(u) = scale(u) > 0 ? c(u) / scale(u) : 0.0;

  if (v.fit.residual < options.tol) {
    const double cmax = c.cwiseAbs().maxCoeff();
    KForm closed = theta;
    std::vector<Expr> ks;
    for (int al = 0; al < m; ++al) {
      Expr k(0.0);
      for (int j = 0; j < nb; ++j) {
        const double cj = c(al * nb + j);
        if (std::abs(cj) <= 1e-12 * std::max(1.0, cmax)) continue;
        k += Expr(cj) * basis.functions[static_cast<std::size_t>(j)];
      }
      closed = closed + k * sys.constraints[static_cast<std::size_t>(al)];
      ks.push_back(k);
    }
    if (closedness(closed, sys.domain, ZeroTestOptions{64, 1e-7, options.seed + 1})) {
      v.status = MeasureStatus::ExactWithMultiplier;
      v.multipliers = ks;
      v.closed = closed;
      reconstruct(closed);
      return v;
    }
  }
  v.status = MeasureStatus::InconsistentOnAnsatz;
  v.witness = pointwise_obstruction(sys, theta, options);
  return v;
}

MeasureVerdict exactify(const NonholonomicSystem& sys, const AnsatzBasis& basis, const ExactifyOptions& options) {
  const Realization r = realize(sys);
  return exactify(sys, r, density_form(sys, r), basis, options);
}

Expr holonomic_density(const NonholonomicSystem& sys) {
  for (int a = 0; a < sys.constraint_count(); ++a) {
    if (!closedness(sys.constraints[static_cast<std::size_t>(a)], sys.domain)) {
      throw PreconditionError("constraint " + std::to_string(a + 1) + " is not closed");
    }
  }
  if (!frobenius_test(sys).holonomic) throw PreconditionError("the constraint distribution is not integrable");
  return mass_matrix(sys).determinant;
}

}  // namespace nhvol
