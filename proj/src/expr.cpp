#include "nhvol/expr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nhvol/error.hpp"

namespace nhvol {

namespace {

NodePtr make_node(Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr, double value = 0.0) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  n->value = value;
  return n;
}

bool is_half_integer(double x) {
  return std::isfinite(x) && std::abs(x) < 1e9 && std::floor(2.0 * x) == 2.0 * x;
}

double apply_unary(Op op, double a) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Tan: return std::tan(a);
    case Op::Exp: return std::exp(a);
    case Op::Ln: return std::log(a);
    case Op::Sqrt: return std::sqrt(a);
    case Op::Atan: return std::atan(a);
    case Op::Atanh: return std::atanh(a);
    default: return a;
  }
}

Expr unary(Op op, const Expr& a) {
  // Fold constant arguments; %.17g printing keeps the folded value lossless.
  if (a.is_constant()) {
    const double v = apply_unary(op, a.value());
    if (std::isfinite(v)) return Expr(v);
  }
  return Expr(make_node(op, a.node()));
}

}  // namespace

Expr::Expr() : node_(make_node(Op::Const)) {}

Expr::Expr(double constant) : node_(make_node(Op::Const, nullptr, nullptr, constant)) {}

Expr::Expr(NodePtr node) : node_(node ? std::move(node) : make_node(Op::Const)) {}

Expr Expr::coordinate(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Coord;
  n->index = index;
  n->name = std::move(name);
  return Expr(NodePtr(std::move(n)));
}

Expr Expr::parameter(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Param;
  n->index = index;
  n->name = std::move(name);
  return Expr(NodePtr(std::move(n)));
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  if (a.is_constant() && b.is_constant()) return Expr(a.value() + b.value());
  if (b.op() == Op::Neg) return a - b.lhs();
  return Expr(make_node(Op::Add, a.node(), b.node()));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  if (a.is_constant() && b.is_constant()) return Expr(a.value() - b.value());
  if (a.id() == b.id()) return Expr(0.0);
  if (b.op() == Op::Neg) return a + b.lhs();
  return Expr(make_node(Op::Sub, a.node(), b.node()));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  if (a.is_constant() && b.is_constant()) return Expr(a.value() * b.value());
  if (a.op() == Op::Neg && b.op() == Op::Neg) return a.lhs() * b.lhs();
  if (a.op() == Op::Neg) return -(a.lhs() * b);
  if (b.op() == Op::Neg) return -(a * b.lhs());
  return Expr(make_node(Op::Mul, a.node(), b.node()));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0) && !b.is_constant(0.0)) return Expr(0.0);
  if (b.is_constant(1.0)) return a;
  if (b.is_constant(-1.0)) return -a;
  if (a.is_constant() && b.is_constant() && b.value() != 0.0) {
    const double q = a.value() / b.value();
    if (q * b.value() == a.value()) return Expr(q);
  }
  if (a.op() == Op::Neg) return -(a.lhs() / b);
  if (b.op() == Op::Neg) return -(a / b.lhs());
  return Expr(make_node(Op::Div, a.node(), b.node()));
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.value());
  if (a.op() == Op::Neg) return a.lhs();
  if (a.op() == Op::Sub) return Expr(make_node(Op::Sub, a.node()->rhs, a.node()->lhs));
  return Expr(make_node(Op::Neg, a.node()));
}

Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }

Expr sin(const Expr& a) { return unary(Op::Sin, a); }
Expr cos(const Expr& a) { return unary(Op::Cos, a); }
Expr tan(const Expr& a) { return unary(Op::Tan, a); }
Expr exp(const Expr& a) { return unary(Op::Exp, a); }
Expr ln(const Expr& a) {
  if (a.is_constant() && !(a.value() > 0.0)) return Expr(make_node(Op::Ln, a.node()));
  return unary(Op::Ln, a);
}
Expr sqrt(const Expr& a) { return unary(Op::Sqrt, a); }
Expr arctan(const Expr& a) { return unary(Op::Atan, a); }
Expr arctanh(const Expr& a) { return unary(Op::Atanh, a); }

Expr pow(const Expr& base, double exponent) {
  if (!is_half_integer(exponent)) {
    throw DomainError("exponent must be an integer or half-integer literal (use exp(b*ln(a)))",
                      std::to_string(exponent));
  }
  if (exponent == 0.0) return Expr(1.0);
  if (exponent == 1.0) return base;
  if (base.is_constant(0.0) && exponent > 0) return Expr(0.0);
  if (base.is_constant(1.0)) return Expr(1.0);
  if (base.is_constant() && exponent == std::floor(exponent) && exponent > 0 && exponent <= 4) {
    return Expr(std::pow(base.value(), exponent));
  }
  if (base.op() == Op::Pow) {
    const double e = base.value() * exponent;
    if (is_half_integer(e) && base.value() == std::floor(base.value()) &&
        exponent == std::floor(exponent)) {
      return pow(base.lhs(), e);
    }
  }
  return Expr(make_node(Op::Pow, base.node(), nullptr, exponent));
}

namespace {

class Differentiator {
 public:
  explicit Differentiator(int coordinate) : coordinate_(coordinate) {}

  Expr operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expr r = compute(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Expr compute(const Expr& e) {
    switch (e.op()) {
      case Op::Const:
      case Op::Param: return Expr(0.0);
      case Op::Coord: return Expr(e.index() == coordinate_ ? 1.0 : 0.0);
      case Op::Neg: return -(*this)(e.lhs());
      case Op::Add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::Sub: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::Mul: {
        const Expr da = (*this)(e.lhs());
        const Expr db = (*this)(e.rhs());
        return da * e.rhs() + e.lhs() * db;
      }
      case Op::Div: {
        const Expr da = (*this)(e.lhs());
        const Expr db = (*this)(e.rhs());
        if (db.is_constant(0.0)) return da / e.rhs();
        return da / e.rhs() - e.lhs() * db / pow(e.rhs(), 2);
      }
      case Op::Pow: {
        const Expr da = (*this)(e.lhs());
        if (da.is_constant(0.0)) return Expr(0.0);
        return Expr(e.value()) * pow(e.lhs(), e.value() - 1.0) * da;
      }
      default: break;
    }
    const Expr a = e.lhs();
    const Expr da = (*this)(a);
    if (da.is_constant(0.0)) return Expr(0.0);
    switch (e.op()) {
      case Op::Sin: return cos(a) * da;
      case Op::Cos: return -(sin(a) * da);
      case Op::Tan: return da / pow(cos(a), 2);
      case Op::Exp: return e * da;
      case Op::Ln: return da / a;
      case Op::Sqrt: return da / (Expr(2.0) * e);
      case Op::Atan: return da / (Expr(1.0) + pow(a, 2));
      case Op::Atanh: return da / (Expr(1.0) - pow(a, 2));
      default: break;
    }
    return Expr(0.0);
  }

  int coordinate_;
  std::unordered_map<const Node*, Expr> memo_;
};

Expr rebuild(const Expr& e, const Expr& a, const Expr& b) {
  switch (e.op()) {
    case Op::Neg: return -a;
    case Op::Sin: return sin(a);
    case Op::Cos: return cos(a);
    case Op::Tan: return tan(a);
    case Op::Exp: return exp(a);
    case Op::Ln: return ln(a);
    case Op::Sqrt: return sqrt(a);
    case Op::Atan: return arctan(a);
    case Op::Atanh: return arctanh(a);
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Pow: return pow(a, e.value());
    default: return e;
  }
}

}  // namespace

Expr differentiate(const Expr& e, int coordinate) { return Differentiator(coordinate)(e); }

Expr substitute(const Expr& e, std::span<const Expr> replacements) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
    Expr r;
    switch (x.op()) {
      case Op::Const:
      case Op::Param: r = x; break;
      case Op::Coord:
        if (x.index() < 0 || static_cast<std::size_t>(x.index()) >= replacements.size()) {
          throw DimensionError("substitution has no replacement for coordinate '" + x.name() + "'");
        }
        r = replacements[static_cast<std::size_t>(x.index())];
        break;
      default: {
        const Expr a = go(x.lhs());
        const Expr b = x.node()->rhs ? go(x.rhs()) : Expr();
        r = rebuild(x, a, b);
      }
    }
    memo.emplace(x.id(), r);
    return r;
  };
  return go(e);
}

namespace {

void collect(const Node* n, std::unordered_set<const Node*>& seen) {
  if (!n || !seen.insert(n).second) return;
  collect(n->lhs.get(), seen);
  collect(n->rhs.get(), seen);
}

}  // namespace

std::size_t node_count(const Expr& e) {
  std::unordered_set<const Node*> seen;
  collect(e.id(), seen);
  return seen.size();
}

bool depends_on(const Expr& e, int coordinate) {
  std::unordered_set<const Node*> seen;
  collect(e.id(), seen);
  return std::any_of(seen.begin(), seen.end(), [&](const Node* n) {
    return n->op == Op::Coord && n->index == coordinate;
  });
}

// ---------------------------------------------------------------- printing

namespace {

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Const: return e.value() < 0 ? 3 : 5;
    default: return 5;
  }
}

std::string number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tan: return "tan";
    case Op::Exp: return "exp";
    case Op::Ln: return "ln";
    case Op::Sqrt: return "sqrt";
    case Op::Atan: return "arctan";
    case Op::Atanh: return "arctanh";
    default: return "?";
  }
}

void print(const Expr& e, std::ostream& os);

void print_child(const Expr& child, int parent_prec, bool right, std::ostream& os) {
  const int p = precedence(child);
  const bool parens = p < parent_prec || (right && p == parent_prec);
  if (parens) os << '(';
  print(child, os);
  if (parens) os << ')';
}

void print(const Expr& e, std::ostream& os) {
  switch (e.op()) {
    case Op::Const: os << number(e.value()); return;
    case Op::Coord:
    case Op::Param: os << e.name(); return;
    case Op::Neg:
      os << '-';
      print_child(e.lhs(), 4, false, os);
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(e);
      print_child(e.lhs(), p, false, os);
      os << (e.op() == Op::Add ? " + " : e.op() == Op::Sub ? " - " : e.op() == Op::Mul ? "*" : "/");
      print_child(e.rhs(), p, true, os);
      return;
    }
    case Op::Pow:
      print_child(e.lhs(), 5, false, os);
      os << '^';
      if (e.value() < 0 || e.value() != std::floor(e.value())) {
        os << '(' << number(e.value()) << ')';
      } else {
        os << number(e.value());
      }
      return;
    default:
      os << function_name(e.op()) << '(';
      print(e.lhs(), os);
      os << ')';
      return;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::ostringstream os;
  print(e, os);
  return os.str();
}

// ---------------------------------------------------------------- tape

namespace {

struct InstrKey {
  Op op;
  std::uint64_t value_bits;
  int index;
  int a;
  int b;
  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const noexcept {
    std::size_t h = std::hash<std::uint64_t>{}(k.value_bits);
    auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
    mix(static_cast<std::size_t>(k.op));
    mix(static_cast<std::size_t>(k.index + 7));
    mix(static_cast<std::size_t>(k.a + 11));
    mix(static_cast<std::size_t>(k.b + 13));
    return h;
  }
};

}  // namespace

Tape::Tape(const Expr& root) : Tape(std::span<const Expr>(&root, 1)) {}

Tape::Tape(std::span<const Expr> roots) {
  std::unordered_map<const Node*, int> by_node;
  std::unordered_map<InstrKey, int, InstrKeyHash> by_key;
  // Iterative post-order so deep chains do not exhaust the stack.
  auto emit = [&](const NodePtr& root) -> int {
    std::vector<std::pair<const NodePtr*, bool>> stack{{&root, false}};
    while (!stack.empty()) {
      auto [np, expanded] = stack.back();
      const Node* n = np->get();
      if (by_node.count(n)) {
        stack.pop_back();
        continue;
      }
      if (!expanded) {
        stack.back().second = true;
        if (n->rhs && !by_node.count(n->rhs.get())) stack.push_back({&n->rhs, false});
        if (n->lhs && !by_node.count(n->lhs.get())) stack.push_back({&n->lhs, false});
        continue;
      }
      stack.pop_back();
      const int a = n->lhs ? by_node.at(n->lhs.get()) : -1;
      const int b = n->rhs ? by_node.at(n->rhs.get()) : -1;
      InstrKey key{n->op, std::bit_cast<std::uint64_t>(n->value), n->index, a, b};
      if (n->op == Op::Add || n->op == Op::Mul) {
        if (key.a > key.b) std::swap(key.a, key.b);
      }
      auto [it, inserted] = by_key.emplace(key, static_cast<int>(program_.size()));
      if (inserted) {
        program_.push_back({n->op, n->value, n->index, key.a, key.b});
        origin_.push_back(*np);
      }
      by_node.emplace(n, it->second);
    }
    return by_node.at(root.get());
  };
  roots_.reserve(roots.size());
  for (const Expr& r : roots) roots_.push_back(emit(r.node()));
}

void Tape::evaluate(const Point& at, std::span<double> out) const {
  std::vector<double> v(program_.size());
  auto fail = [&](std::size_t i, const char* what) {
    throw DomainError(what, to_string(Expr(origin_[i])));
  };
  for (std::size_t i = 0; i < program_.size(); ++i) {
    const Instr& in = program_[i];
    const double a = in.a >= 0 ? v[static_cast<std::size_t>(in.a)] : 0.0;
    const double b = in.b >= 0 ? v[static_cast<std::size_t>(in.b)] : 0.0;
    double r = 0.0;
    switch (in.op) {
      case Op::Const: r = in.value; break;
      case Op::Coord:
        if (static_cast<std::size_t>(in.index) >= at.coords.size()) fail(i, "unbound coordinate");
        r = at.coords[static_cast<std::size_t>(in.index)];
        break;
      case Op::Param:
        if (static_cast<std::size_t>(in.index) >= at.params.size()) fail(i, "unbound parameter");
        r = at.params[static_cast<std::size_t>(in.index)];
        break;
      case Op::Neg: r = -a; break;
      case Op::Sin: r = std::sin(a); break;
      case Op::Cos: r = std::cos(a); break;
      case Op::Tan: r = std::tan(a); break;
      case Op::Exp: r = std::exp(a); break;
      case Op::Ln:
        if (!(a > 0.0)) fail(i, "logarithm of a nonpositive value");
        r = std::log(a);
        break;
      case Op::Sqrt:
        if (a < 0.0) fail(i, "square root of a negative value");
        r = std::sqrt(a);
        break;
      case Op::Atan: r = std::atan(a); break;
      case Op::Atanh:
        if (!(std::abs(a) < 1.0)) fail(i, "arctanh outside (-1, 1)");
        r = std::atanh(a);
        break;
      case Op::Add: r = a + b; break;
      case Op::Sub: r = a - b; break;
      case Op::Mul: r = a * b; break;
      case Op::Div:
        if (b == 0.0) fail(i, "division by zero");
        r = a / b;
        break;
      case Op::Pow: {
        const double e = in.value;
        if (e < 0 && a == 0.0) fail(i, "division by zero");
        if (e != std::floor(e) && a < 0.0) fail(i, "fractional power of a negative value");
        if (e == 2.0) {
          r = a * a;
        } else if (e == std::floor(e) && std::abs(e) <= 64) {
          r = std::pow(a, static_cast<int>(e));
        } else {
          r = std::pow(a, e);
        }
        break;
      }
    }
    if (!std::isfinite(r)) fail(i, "non-finite value");
    v[i] = r;
  }
  for (std::size_t k = 0; k < roots_.size() && k < out.size(); ++k) {
    out[k] = v[static_cast<std::size_t>(roots_[k])];
  }
}

double Tape::evaluate(const Point& at) const {
  double r = 0.0;
  evaluate(at, std::span<double>(&r, 1));
  return r;
}

std::vector<double> Tape::evaluate_all(const Point& at) const {
  std::vector<double> out(roots_.size());
  evaluate(at, out);
  return out;
}

double evaluate(const Expr& e, const Point& at) { return Tape(e).evaluate(at); }

// ---------------------------------------------------------------- domain & sampling

std::vector<double> Domain::center() const {
  std::vector<double> c(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) c[i] = 0.5 * (box[i].lo + box[i].hi);
  return c;
}

bool Domain::admits(std::span<const double> q) const {
  for (std::size_t i = 0; i < box.size() && i < q.size(); ++i) {
    if (q[i] < box[i].lo || q[i] > box[i].hi) return false;
  }
  if (guards.empty()) return true;
  try {
    const Tape t(guards);
    std::vector<double> g(guards.size());
    t.evaluate(Point{q, params}, g);
    return std::all_of(g.begin(), g.end(), [&](double x) { return std::abs(x) >= guard_margin; });
  } catch (const DomainError&) {
    return false;
  }
}

Sampler::Sampler(const Domain& domain, std::uint64_t seed)
    : domain_(&domain), guards_(domain.guards), rng_(seed) {}

std::optional<std::vector<double>> Sampler::next(int max_attempts) {
  std::vector<double> q(domain_->dimension());
  std::vector<double> g(domain_->guards.size());
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const Interval iv = domain_->box[i];
      q[i] = std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng_);
    }
    if (g.empty()) return q;
    try {
      guards_.evaluate(Point{q, domain_->params}, g);
      if (std::all_of(g.begin(), g.end(),
                      [&](double x) { return std::abs(x) >= domain_->guard_margin; })) {
        return q;
      }
    } catch (const DomainError&) {
    }
    ++rejected_;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- zero test

namespace {

void additive_terms(const Expr& e, std::vector<Expr>& out) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      additive_terms(e.lhs(), out);
      additive_terms(e.rhs(), out);
      return;
    case Op::Neg: additive_terms(e.lhs(), out); return;
    default: out.push_back(e);
  }
}

}  // namespace

ZeroTestResult zero_test(std::span<const Expr> es, const Domain& domain,
                         const ZeroTestOptions& options) {
  ZeroTestResult result;
  result.seed = options.seed;
  // Roots: each expression followed by its top-level additive terms.
  std::vector<Expr> roots;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [first term, end) per expression
  for (const Expr& e : es) {
    if (e.is_constant(0.0)) continue;
    roots.push_back(e);
    const std::size_t first = roots.size();
    std::vector<Expr> terms;
    additive_terms(e, terms);
    if (terms.size() > 1) roots.insert(roots.end(), terms.begin(), terms.end());
    spans.emplace_back(first, roots.size());
  }
  if (roots.empty()) {
    result.zero = true;
    result.accepted = options.samples;
    return result;
  }
  const Tape tape(roots);
  std::vector<double> values(roots.size());
  Sampler sampler(domain, options.seed);
  const int max_draws = options.samples * 50;
  int draws = 0;
  while (result.accepted < options.samples && draws < max_draws) {
    ++draws;
    auto q = sampler.next();
    if (!q) break;
    try {
      tape.evaluate(Point{*q, domain.params}, values);
    } catch (const DomainError&) {
      ++result.rejected;
      continue;
    }
    ++result.accepted;
    std::size_t root = 0;
    for (const auto& [first, end] : spans) {
      double scale = 1.0;
      for (std::size_t t = first; t < end; ++t) scale = std::max(scale, std::abs(values[t]));
      const double normalized = std::abs(values[root]) / scale;
      if (normalized > result.max_normalized) {
        result.max_normalized = normalized;
        result.worst_point = *q;
      }
      root = end;
    }
  }
  result.rejected += sampler.rejected();
  if (result.accepted == 0) {
    throw UndecidableError("zero test: every sample was rejected by the domain guards");
  }
  result.zero = result.max_normalized <= options.tol;
  return result;
}

ZeroTestResult zero_test(const Expr& e, const Domain& domain, const ZeroTestOptions& options) {
  return zero_test(std::span<const Expr>(&e, 1), domain, options);
}

bool is_zero(const Expr& e, const Domain& domain, int n_samples, double tol, std::uint64_t seed) {
  if (n_samples < 32) throw PreconditionError("is_zero requires at least 32 samples");
  return zero_test(e, domain, ZeroTestOptions{n_samples, tol, seed}).zero;
}

}  // namespace nhvol
