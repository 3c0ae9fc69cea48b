#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "nhvol/expr.hpp"

namespace nhvol {

/// Strictly increasing index tuple i1 < ... < ik, stored as a bit set.
using IndexSet = std::uint32_t;

inline constexpr int kMaxChartDimension = 32;

IndexSet index_set(std::initializer_list<int> indices);
std::vector<int> indices_of(IndexSet s);

/// Differential k-form on a single chart, stored on strictly increasing index
/// tuples: coeffs[{i1<...<ik}] multiplies dq^i1 ^ ... ^ dq^ik.
class KForm {
 public:
  KForm(int dimension, int degree);

  static KForm scalar(int dimension, const Expr& f);
  /// Sum_i components[i] dq^i.
  static KForm one_form(std::span<const Expr> components);
  /// The basis 1-form dq^i.
  static KForm basis(int dimension, int i);

  int dimension() const noexcept { return dimension_; }
  int degree() const noexcept { return degree_; }
  const std::map<IndexSet, Expr>& terms() const noexcept { return terms_; }

  /// Coefficient on an increasing tuple (zero if absent).
  Expr operator[](IndexSet s) const;
  /// Coefficient for an arbitrary index order; sign-normalized.
  Expr coefficient(std::span<const int> indices) const;
  /// Component i of a 1-form, or the value of a 0-form.
  Expr component(int i) const;
  Expr value() const;

  /// Adds c to the coefficient of the increasing tuple s.
  void add(IndexSet s, const Expr& c);

  std::vector<Expr> coefficients() const;

 private:
  int dimension_;
  int degree_;
  std::map<IndexSet, Expr> terms_;
};

KForm operator+(const KForm& a, const KForm& b);
KForm operator-(const KForm& a, const KForm& b);
KForm operator-(const KForm& a);
KForm operator*(const Expr& f, const KForm& a);

/// Vector field with one Expr component per chart coordinate.
class VectorField {
 public:
  explicit VectorField(int dimension);
  explicit VectorField(std::vector<Expr> components);

  static VectorField basis(int dimension, int i);

  int dimension() const noexcept { return static_cast<int>(components_.size()); }
  const Expr& operator[](int i) const { return components_[static_cast<std::size_t>(i)]; }
  Expr& operator[](int i) { return components_[static_cast<std::size_t>(i)]; }
  const std::vector<Expr>& components() const noexcept { return components_; }

 private:
  std::vector<Expr> components_;
};

VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator-(const VectorField& a, const VectorField& b);
VectorField operator*(const Expr& f, const VectorField& a);

/// a ^ b. Throws DegreeError if the result degree exceeds the dimension.
KForm wedge(const KForm& a, const KForm& b);

/// Exterior derivative.
KForm d(const KForm& a);

/// Interior product i_X a. Throws DegreeError on 0-forms.
KForm contract(const VectorField& x, const KForm& a);

/// L_X a = d(i_X a) + i_X(d a).
KForm lie_derivative(const VectorField& x, const KForm& a);

/// Directional derivative X(f) of a scalar.
Expr apply(const VectorField& x, const Expr& f);

/// Jacobi-Lie bracket [X, Y].
VectorField bracket(const VectorField& x, const VectorField& y);

/// Coordinate map into the form's chart: source coordinate i equals
/// components[i], an Expr over a target chart of dimension target_dimension.
struct ChartMap {
  int target_dimension = 0;
  std::vector<Expr> components;
};

/// Pullback of a along the map. Throws DimensionError on mismatch.
KForm pullback(const ChartMap& map, const KForm& a);

/// Evaluate a 1-form on a vector field.
Expr pairing(const KForm& one_form, const VectorField& x);

}  // namespace nhvol
