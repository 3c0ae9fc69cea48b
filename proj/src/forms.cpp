#include "nhvol/forms.hpp"

#include <algorithm>
#include <bit>
#include <optional>

#include "nhvol/error.hpp"

namespace nhvol {

namespace {

int popcount(IndexSet s) { return std::popcount(s); }

IndexSet below(int i) { return i >= 32 ? ~IndexSet{0} : (IndexSet{1} << i) - 1; }

// Sign of dq^A ^ dq^B relative to dq^(A u B), both increasing and disjoint.
int wedge_sign(IndexSet a, IndexSet b) {
  int inversions = 0;
  for (IndexSet rest = b; rest; rest &= rest - 1) {
    const int j = std::countr_zero(rest);
    inversions += popcount(a & ~below(j + 1));
  }
  return (inversions & 1) ? -1 : 1;
}

void require_same_dimension(int a, int b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": chart dimensions differ (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

IndexSet index_set(std::initializer_list<int> indices) {
  IndexSet s = 0;
  for (int i : indices) s |= IndexSet{1} << i;
  return s;
}

std::vector<int> indices_of(IndexSet s) {
  std::vector<int> out;
  for (; s; s &= s - 1) out.push_back(std::countr_zero(s));
  return out;
}

KForm::KForm(int dimension, int degree) : dimension_(dimension), degree_(degree) {
  if (dimension < 0 || dimension > kMaxChartDimension) {
    throw DimensionError("chart dimension out of range: " + std::to_string(dimension));
  }
  if (degree < 0 || degree > dimension) {
    throw DegreeError("form degree " + std::to_string(degree) + " exceeds chart dimension " +
                      std::to_string(dimension));
  }
}

KForm KForm::scalar(int dimension, const Expr& f) {
  KForm k(dimension, 0);
  k.add(0, f);
  return k;
}

KForm KForm::one_form(std::span<const Expr> components) {
  KForm k(static_cast<int>(components.size()), 1);
  for (std::size_t i = 0; i < components.size(); ++i) k.add(IndexSet{1} << i, components[i]);
  return k;
}

KForm KForm::basis(int dimension, int i) {
  KForm k(dimension, 1);
  k.add(IndexSet{1} << i, Expr(1.0));
  return k;
}

Expr KForm::operator[](IndexSet s) const {
  auto it = terms_.find(s);
  return it == terms_.end() ? Expr(0.0) : it->second;
}

Expr KForm::coefficient(std::span<const int> indices) const {
  std::vector<int> idx(indices.begin(), indices.end());
  int sign = 1;
  // Insertion sort counting transpositions.
  for (std::size_t i = 1; i < idx.size(); ++i) {
    for (std::size_t j = i; j > 0 && idx[j - 1] > idx[j]; --j) {
      std::swap(idx[j - 1], idx[j]);
      sign = -sign;
    }
  }
  IndexSet s = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i > 0 && idx[i] == idx[i - 1]) return Expr(0.0);
    s |= IndexSet{1} << idx[i];
  }
  const Expr c = (*this)[s];
  return sign < 0 ? -c : c;
}

Expr KForm::component(int i) const {
  if (degree_ != 1) throw DegreeError("component() requires a 1-form");
  return (*this)[IndexSet{1} << i];
}

Expr KForm::value() const {
  if (degree_ != 0) throw DegreeError("value() requires a 0-form");
  return (*this)[0];
}

void KForm::add(IndexSet s, const Expr& c) {
  if (popcount(s) != degree_) throw DegreeError("term degree does not match form degree");
  if (degree_ > 0 && (s & ~below(dimension_))) throw DimensionError("index outside chart");
  if (c.is_constant(0.0)) return;
  auto [it, inserted] = terms_.emplace(s, c);
  if (!inserted) {
    it->second = it->second + c;
    if (it->second.is_constant(0.0)) terms_.erase(it);
  }
}

std::vector<Expr> KForm::coefficients() const {
  std::vector<Expr> out;
  out.reserve(terms_.size());
  for (const auto& [s, c] : terms_) out.push_back(c);
  return out;
}

KForm operator+(const KForm& a, const KForm& b) {
  require_same_dimension(a.dimension(), b.dimension(), "sum");
  if (a.degree() != b.degree()) throw DegreeError("sum of forms of different degree");
  KForm r = a;
  for (const auto& [s, c] : b.terms()) r.add(s, c);
  return r;
}

KForm operator-(const KForm& a) {
  KForm r(a.dimension(), a.degree());
  for (const auto& [s, c] : a.terms()) r.add(s, -c);
  return r;
}

KForm operator-(const KForm& a, const KForm& b) { return a + (-b); }

KForm operator*(const Expr& f, const KForm& a) {
  KForm r(a.dimension(), a.degree());
  for (const auto& [s, c] : a.terms()) r.add(s, f * c);
  return r;
}

VectorField::VectorField(int dimension) : components_(static_cast<std::size_t>(dimension)) {}

VectorField::VectorField(std::vector<Expr> components) : components_(std::move(components)) {}

VectorField VectorField::basis(int dimension, int i) {
  VectorField v(dimension);
  v[i] = Expr(1.0);
  return v;
}

VectorField operator+(const VectorField& a, const VectorField& b) {
  require_same_dimension(a.dimension(), b.dimension(), "vector sum");
  VectorField r(a.dimension());
  for (int i = 0; i < a.dimension(); ++i) r[i] = a[i] + b[i];
  return r;
}

VectorField operator-(const VectorField& a, const VectorField& b) {
  require_same_dimension(a.dimension(), b.dimension(), "vector difference");
  VectorField r(a.dimension());
  for (int i = 0; i < a.dimension(); ++i) r[i] = a[i] - b[i];
  return r;
}

VectorField operator*(const Expr& f, const VectorField& a) {
  VectorField r(a.dimension());
  for (int i = 0; i < a.dimension(); ++i) r[i] = f * a[i];
  return r;
}

KForm wedge(const KForm& a, const KForm& b) {
  require_same_dimension(a.dimension(), b.dimension(), "wedge");
  if (a.degree() + b.degree() > a.dimension()) {
    throw DegreeError("wedge degree overflow: " + std::to_string(a.degree()) + " + " +
                      std::to_string(b.degree()) + " > " + std::to_string(a.dimension()));
  }
  KForm r(a.dimension(), a.degree() + b.degree());
  for (const auto& [sa, ca] : a.terms()) {
    for (const auto& [sb, cb] : b.terms()) {
      if (sa & sb) continue;
      const Expr c = ca * cb;
      r.add(sa | sb, wedge_sign(sa, sb) < 0 ? -c : c);
    }
  }
  return r;
}

KForm d(const KForm& a) {
  if (a.degree() >= a.dimension()) {
    throw DegreeError("exterior derivative of a top-degree form");
  }
  KForm r(a.dimension(), a.degree() + 1);
  for (const auto& [s, c] : a.terms()) {
    for (int j = 0; j < a.dimension(); ++j) {
      if (s & (IndexSet{1} << j)) continue;
      const Expr dc = differentiate(c, j);
      if (dc.is_constant(0.0)) continue;
      const bool odd = popcount(s & below(j)) & 1;
      r.add(s | (IndexSet{1} << j), odd ? -dc : dc);
    }
  }
  return r;
}

KForm contract(const VectorField& x, const KForm& a) {
  require_same_dimension(x.dimension(), a.dimension(), "contraction");
  if (a.degree() == 0) throw DegreeError("cannot contract a vector field with a 0-form");
  KForm r(a.dimension(), a.degree() - 1);
  for (const auto& [s, c] : a.terms()) {
    for (IndexSet rest = s; rest; rest &= rest - 1) {
      const int i = std::countr_zero(rest);
      if (x[i].is_constant(0.0)) continue;
      const bool odd = popcount(s & below(i)) & 1;
      const Expr t = x[i] * c;
      r.add(s & ~(IndexSet{1} << i), odd ? -t : t);
    }
  }
  return r;
}

KForm lie_derivative(const VectorField& x, const KForm& a) {
  require_same_dimension(x.dimension(), a.dimension(), "Lie derivative");
  if (a.degree() == 0) return KForm::scalar(a.dimension(), apply(x, a.value()));
  KForm r = d(contract(x, a));
  if (a.degree() < a.dimension()) r = r + contract(x, d(a));
  return r;
}

Expr apply(const VectorField& x, const Expr& f) {
  Expr r(0.0);
  for (int i = 0; i < x.dimension(); ++i) {
    if (x[i].is_constant(0.0)) continue;
    r += x[i] * differentiate(f, i);
  }
  return r;
}

VectorField bracket(const VectorField& x, const VectorField& y) {
  require_same_dimension(x.dimension(), y.dimension(), "bracket");
  VectorField r(x.dimension());
  for (int i = 0; i < x.dimension(); ++i) r[i] = apply(x, y[i]) - apply(y, x[i]);
  return r;
}

KForm pullback(const ChartMap& map, const KForm& a) {
  if (static_cast<int>(map.components.size()) != a.dimension()) {
    throw DimensionError("pullback: map has " + std::to_string(map.components.size()) +
                         " components, form lives on a " + std::to_string(a.dimension()) +
                         "-dimensional chart");
  }
  if (a.degree() > map.target_dimension) {
    throw DimensionError("pullback: degree exceeds target chart dimension");
  }
  const int n = map.target_dimension;
  std::vector<std::optional<KForm>> pulled(map.components.size());
  auto dphi = [&](int i) -> const KForm& {
    auto& slot = pulled[static_cast<std::size_t>(i)];
    if (!slot) {
      std::vector<Expr> comps(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) comps[static_cast<std::size_t>(j)] = differentiate(map.components[static_cast<std::size_t>(i)], j);
      slot = KForm::one_form(comps);
    }
    return *slot;
  };
  KForm r(n, a.degree());
  for (const auto& [s, c] : a.terms()) {
    KForm term = KForm::scalar(n, substitute(c, map.components));
    for (int i : indices_of(s)) {
      term = wedge(term, dphi(i));
      if (term.terms().empty()) break;
    }
    if (term.degree() == r.degree()) r = r + term;
  }
  return r;
}

Expr pairing(const KForm& one_form, const VectorField& x) {
  if (one_form.degree() != 1) throw DegreeError("pairing requires a 1-form");
  require_same_dimension(one_form.dimension(), x.dimension(), "pairing");
  Expr r(0.0);
  for (const auto& [s, c] : one_form.terms()) r += c * x[std::countr_zero(s)];
  return r;
}

}  // namespace nhvol
