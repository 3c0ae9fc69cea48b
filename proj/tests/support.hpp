#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "nhvol/expr.hpp"
#include "nhvol/forms.hpp"
#include "nhvol/parser.hpp"

namespace testing {

using namespace nhvol;

inline Domain box(int n, double lo = -1.0, double hi = 1.0) {
  Domain d;
  d.box.assign(static_cast<std::size_t>(n), Interval{lo, hi});
  return d;
}

inline std::vector<Expr> coords(int n) {
  std::vector<Expr> out;
  for (int i = 0; i < n; ++i) out.push_back(Expr::coordinate(i, "x" + std::to_string(i)));
  return out;
}

/// Random smooth expression in n coordinates; finite on [-1, 1]^n.
class RandomExpr {
 public:
  RandomExpr(int n, std::uint64_t seed) : n_(n), rng_(seed) {}

  Expr operator()(int depth = 4) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 9);
    switch (pick(rng_)) {
      case 0: return Expr(std::uniform_real_distribution<double>(-2.0, 2.0)(rng_));
      case 1: {
        const int i = std::uniform_int_distribution<int>(0, n_ - 1)(rng_);
        return Expr::coordinate(i, "x" + std::to_string(i));
      }
      case 2: return (*this)(depth - 1) + (*this)(depth - 1);
      case 3: return (*this)(depth - 1) - (*this)(depth - 1);
      case 4: return (*this)(depth - 1) * (*this)(depth - 1);
      case 5: return (*this)(depth - 1) / (2.5 + nhvol::sin((*this)(depth - 1)));
      case 6: return nhvol::sin((*this)(depth - 1));
      case 7: return nhvol::cos((*this)(depth - 1));
      case 8: return nhvol::exp(nhvol::sin((*this)(depth - 1)));
      default: return nhvol::sqrt(1.5 + nhvol::cos((*this)(depth - 1)));
    }
  }

  KForm form(int degree, int depth = 3) {
    KForm k(n_, degree);
    std::vector<int> idx(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int t = 0; t < 3; ++t) {
      std::shuffle(idx.begin(), idx.end(), rng_);
      IndexSet s = 0;
      for (int i = 0; i < degree; ++i) s |= IndexSet{1} << idx[static_cast<std::size_t>(i)];
      k.add(s, (*this)(depth));
    }
    return k;
  }

  VectorField field(int depth = 3) {
    VectorField v(n_);
    for (int i = 0; i < n_; ++i) v[i] = (*this)(depth);
    return v;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  int n_;
  std::mt19937_64 rng_;
};

/// Max normalized difference of two forms over a domain.
inline bool forms_equal(const KForm& a, const KForm& b, const Domain& dom, double tol = 1e-9) {
  const KForm diff = a - b;
  const auto coeffs = diff.coefficients();
  if (coeffs.empty()) return true;
  return zero_test(coeffs, dom, ZeroTestOptions{64, tol, kDefaultSeed}).zero;
}

inline bool fields_equal(const VectorField& a, const VectorField& b, const Domain& dom, double tol = 1e-9) {
  std::vector<Expr> diff;
  for (int i = 0; i < a.dimension(); ++i) diff.push_back(a[i] - b[i]);
  return zero_test(diff, dom, ZeroTestOptions{64, tol, kDefaultSeed}).zero;
}

}  // namespace testing
