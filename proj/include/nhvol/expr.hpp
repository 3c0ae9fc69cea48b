#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nhvol {

enum class Op : std::uint8_t {
  Const,
  Coord,
  Param,
  Neg,
  Sin,
  Cos,
  Tan,
  Exp,
  Ln,
  Sqrt,
  Atan,
  Atanh,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Immutable expression node. Children are shared, so an expression is a DAG.
struct Node {
  Op op = Op::Const;
  double value = 0.0;  // constant value, or the exponent of Pow
  int index = -1;      // coordinate / parameter slot
  std::string name;    // coordinate / parameter name, for printing
  NodePtr lhs;
  NodePtr rhs;
};

/// Symbolic scalar field over a chart's coordinates and a parameter table.
///
/// Construction goes through simplifying builders (constant folding, x*0, x*1,
/// x+0, double negation); nothing else is canonicalized. Equality of two
/// expressions is decided numerically, see zero_test().
class Expr {
 public:
  Expr();
  Expr(double constant);  // NOLINT(google-explicit-constructor)
  explicit Expr(NodePtr node);

  static Expr coordinate(int index, std::string name);
  static Expr parameter(int index, std::string name);

  Op op() const noexcept { return node_->op; }
  double value() const noexcept { return node_->value; }
  int index() const noexcept { return node_->index; }
  const std::string& name() const noexcept { return node_->name; }
  Expr lhs() const { return Expr(node_->lhs); }
  Expr rhs() const { return Expr(node_->rhs); }
  const NodePtr& node() const noexcept { return node_; }
  const Node* id() const noexcept { return node_.get(); }

  bool is_constant() const noexcept { return op() == Op::Const; }
  bool is_constant(double c) const noexcept { return is_constant() && value() == c; }

 private:
  NodePtr node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr& operator+=(Expr& a, const Expr& b);
Expr& operator-=(Expr& a, const Expr& b);
Expr& operator*=(Expr& a, const Expr& b);

Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr tan(const Expr& a);
Expr exp(const Expr& a);
Expr ln(const Expr& a);
Expr sqrt(const Expr& a);
Expr arctan(const Expr& a);
Expr arctanh(const Expr& a);
/// Exponent must be an integer or a half-integer.
Expr pow(const Expr& base, double exponent);

/// Partial derivative with respect to coordinate slot `coordinate`.
Expr differentiate(const Expr& e, int coordinate);

/// Replace every coordinate slot i by replacements[i]; parameters are kept.
Expr substitute(const Expr& e, std::span<const Expr> replacements);

/// Number of distinct nodes reachable from e.
std::size_t node_count(const Expr& e);

/// True if coordinate slot `coordinate` occurs in e.
bool depends_on(const Expr& e, int coordinate);

/// DSL text that parses back to an evaluation-equivalent expression.
std::string to_string(const Expr& e);

/// A point of evaluation: coordinate values and parameter values.
struct Point {
  std::span<const double> coords;
  std::span<const double> params;
};

/// Flattened, common-subexpression-eliminated evaluation program for a batch of
/// expressions. Cheap to evaluate repeatedly; immutable and thread-safe.
class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const Expr> roots);
  explicit Tape(const Expr& root);

  std::size_t size() const noexcept { return program_.size(); }
  std::size_t outputs() const noexcept { return roots_.size(); }

  /// Throws DomainError naming the offending subexpression.
  void evaluate(const Point& at, std::span<double> out) const;
  double evaluate(const Point& at) const;
  std::vector<double> evaluate_all(const Point& at) const;

 private:
  struct Instr {
    Op op;
    double value;
    int index;
    int a;
    int b;
  };
  std::vector<Instr> program_;
  std::vector<NodePtr> origin_;
  std::vector<int> roots_;
};

double evaluate(const Expr& e, const Point& at);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling region of a chart: a coordinate box, excluded hypersurfaces
/// (points with |guard| below the margin are rejected) and the parameter values
/// bound during evaluation.
struct Domain {
  std::vector<Interval> box;
  std::vector<Expr> guards;
  std::vector<double> params;
  double guard_margin = 1e-4;

  std::size_t dimension() const noexcept { return box.size(); }
  std::vector<double> center() const;
  bool admits(std::span<const double> q) const;
};

/// Deterministic uniform sampler of admissible domain points.
class Sampler {
 public:
  Sampler(const Domain& domain, std::uint64_t seed);

  /// Next admissible point, or nullopt after `max_attempts` consecutive rejections.
  std::optional<std::vector<double>> next(int max_attempts = 1000);
  int rejected() const noexcept { return rejected_; }

 private:
  const Domain* domain_;
  Tape guards_;
  std::mt19937_64 rng_;
  int rejected_ = 0;
};

inline constexpr std::uint64_t kDefaultSeed = 20240611ULL;

struct ZeroTestOptions {
  int samples = 64;
  double tol = 1e-9;
  std::uint64_t seed = kDefaultSeed;
};

struct ZeroTestResult {
  bool zero = false;
  double max_normalized = 0.0;  // max |e| / max(1, largest additive term)
  int accepted = 0;
  int rejected = 0;
  std::uint64_t seed = 0;
  std::vector<double> worst_point;
};

/// Randomized zero test of every expression in `es` on a shared sample set.
/// Samples where evaluation raises a domain error count as rejected.
ZeroTestResult zero_test(std::span<const Expr> es, const Domain& domain,
                         const ZeroTestOptions& options = {});
ZeroTestResult zero_test(const Expr& e, const Domain& domain, const ZeroTestOptions& options = {});

bool is_zero(const Expr& e, const Domain& domain, int n_samples = 64, double tol = 1e-9,
             std::uint64_t seed = kDefaultSeed);

}  // namespace nhvol
