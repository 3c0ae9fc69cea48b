#include "nhvol/frame.hpp"

#include <cmath>

#include "nhvol/error.hpp"

namespace nhvol {

std::vector<double> reference_point(const Domain& domain) {
  std::vector<double> c = domain.center();
  if (domain.admits(c)) return c;
  Sampler sampler(domain, kDefaultSeed);
  auto q = sampler.next();
  if (!q) throw UndecidableError("no admissible point in the domain");
  return *q;
}

namespace {

Eigen::VectorXd values(const VectorField& x, const Point& at) {
  const std::vector<double> v = Tape(x.components()).evaluate_all(at);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<VectorField> adapted_frame(const NonholonomicSystem& sys, const Realization& r) {
  const int n = sys.dimension();
  const int m = sys.constraint_count();
  const int k = n - m;
  const std::vector<double> ref = reference_point(sys.domain);
  const Point at = sys.at(ref);
  const Eigen::MatrixXd g = sys.metric.evaluate(at);

  // R_i = d/dq^i - W^a m_ab eta^b_i : the g-orthogonal projection onto D.
  std::vector<VectorField> projected;
  for (int i = 0; i < n; ++i) {
    VectorField v = VectorField::basis(n, i);
    for (int a = 0; a < m; ++a) {
      Expr c(0.0);
      for (int b = 0; b < m; ++b) {
        c += r.mass.lower(a, b) * sys.constraints[static_cast<std::size_t>(b)].component(i);
      }
      if (!c.is_constant(0.0)) v = v - c * r.duals[static_cast<std::size_t>(a)];
    }
    projected.push_back(std::move(v));
  }

  std::vector<VectorField> frame;
  std::vector<KForm> flats;
  std::vector<Expr> norms;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double best_norm = 0.0;
    std::optional<VectorField> best_field;
    for (int i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      VectorField c = projected[static_cast<std::size_t>(i)];
      // g(R_i, E_l) = g(d/dq^i, E_l) because E_l is orthogonal to every W^a.
      for (std::size_t l = 0; l < frame.size(); ++l) {
        const Expr coef = flats[l].component(i) / norms[l];
        c = c - coef * frame[l];
      }
      const Eigen::VectorXd cv = values(c, at);
      const double norm = std::sqrt(std::max(0.0, cv.dot(g * cv)));
      if (norm > best_norm) {
        best = i;
        best_norm = norm;
        best_field = std::move(c);
      }
    }
    if (best < 0 || best_norm < 1e-12) {
      throw DegenerateRealization("adapted frame: residuals vanish at the reference point");
    }
    used[static_cast<std::size_t>(best)] = true;
    VectorField e = Expr(1.0 / best_norm) * *best_field;
    KForm f = flat(sys, e);
    norms.push_back(pairing(f, e));
    flats.push_back(std::move(f));
    frame.push_back(std::move(e));
  }

  std::vector<Expr> entries;
  for (const VectorField& e : frame)
    entries.insert(entries.end(), e.components().begin(), e.components().end());
  const Tape tape(entries);
  const Tape metric_tape(sys.metric.entries());
  Sampler sampler(sys.domain, kDefaultSeed);
  std::vector<double> ev(entries.size());
  std::vector<double> gv(static_cast<std::size_t>(n * n));
  for (int s = 0; s < 64; ++s) {
    auto q = sampler.next();
    if (!q) break;
    try {
      tape.evaluate(sys.at(*q), ev);
      metric_tape.evaluate(sys.at(*q), gv);
    } catch (const DomainError&) {
      continue;
    }
    const Eigen::Map<const Eigen::MatrixXd> e(ev.data(), n, k);
    const Eigen::Map<const Eigen::MatrixXd> gq(gv.data(), n, n);
    const Eigen::MatrixXd gram = e.transpose() * gq * e;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const auto& lam = es.eigenvalues();
    if (!(lam(0) > 1e-12 * std::max(1.0, lam(k - 1)))) {
      throw DegenerateRealization("adapted frame: rank collapse at a domain sample");
    }
  }
  return frame;
}

std::vector<VectorField> adapted_frame(const NonholonomicSystem& sys) {
  return adapted_frame(sys, realize(sys));
}

}  // namespace nhvol
