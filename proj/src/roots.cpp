#include "mopid/roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mopid {

namespace {

// Dense coefficient form c[0] + c[1] x + ... used throughout this file.
std::vector<double> dense_coeffs(const Polynomial& p, VarId v) {
  std::vector<double> c(static_cast<std::size_t>(p.degree_in(v)) + 1, 0.0);
  for (const auto& [m, k] : p.terms()) {
    if (m.factors.size() > 1 || (m.factors.size() == 1 && m.factors[0].first != v))
      throw AlgebraError("roots_in_interval: polynomial is not univariate in the given variable: " +
                         p.to_string());
    c[static_cast<std::size_t>(m.degree())] += k;
  }
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  return c;
}

double horner(const std::vector<double>& c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

std::vector<double> derivative(const std::vector<double>& c) {
  if (c.size() <= 1) return {0.0};
  std::vector<double> d(c.size() - 1);
  for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = c[i] * static_cast<double>(i);
  return d;
}

// Largest magnitude any root can have: Cauchy's bound.
double cauchy_bound(const std::vector<double>& c) {
  double an = c.back(), m = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) m = std::max(m, std::fabs(c[i] / an));
  return 1.0 + m;
}

// One bracketed root of a function with opposite signs at a and b.
double bisect_newton(const std::vector<double>& c, const std::vector<double>& dc, double a, double b) {
  double fa = horner(c, a);
  if (fa == 0.0) return a;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    double fm = horner(c, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
    // Newton polish once the bracket is tight.
    if (std::fabs(b - a) < 1e-6 * (1.0 + std::fabs(mid))) {
      double x = 0.5 * (a + b);
      for (int n = 0; n < 8; ++n) {
        double fx = horner(c, x), dfx = horner(dc, x);
        if (dfx == 0.0) break;
        double nx = x - fx / dfx;
        if (!(nx > a && nx < b)) break;
        if (nx == x) break;
        x = nx;
      }
      return x;
    }
  }
  return 0.5 * (a + b);
}

void roots_rec(const std::vector<double>& c, double lo, double hi, std::vector<double>& out) {
  std::size_t deg = c.size() - 1;
  if (deg == 0) return;  // nonzero constant: no roots
  if (deg == 1) {
    double r = -c[0] / c[1];
    if (r >= lo && r < hi) out.push_back(r);
    return;
  }
  std::vector<double> dc = derivative(c);
  std::vector<double> crit;
  roots_rec(dc, lo, hi, crit);

  // Monotone segments between consecutive critical points.
  std::vector<double> pts;
  pts.push_back(lo);
  for (double x : crit)
    if (x > pts.back()) pts.push_back(x);
  if (hi > pts.back()) pts.push_back(hi);

  double scale = 0.0;
  for (double x : pts) scale = std::max(scale, std::fabs(horner(c, x)));
  double ztol = kRootResidualTol * (1.0 + scale);

  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double a = pts[i], b = pts[i + 1];
    double fa = horner(c, a), fb = horner(c, b);
    if (std::fabs(fa) <= ztol && (out.empty() || out.back() < a)) {
      // Segment endpoint is itself a root (covers tangential roots at
      // critical points and exact endpoint hits).
      out.push_back(a);
      continue;
    }
    if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
      double r = bisect_newton(c, dc, a, b);
      if (r >= lo && r < hi && (out.empty() || r > out.back())) out.push_back(r);
    }
  }
  // The right endpoint can be a tangential root too, but hi is excluded by
  // the half-open convention; interior critical points were all checked.
}

}  // namespace

RootList roots_in_interval(const Polynomial& p, VarId v, double lo, double hi) {
  RootList rl;
  if (p.is_zero()) {
    rl.everywhere_zero = true;
    return rl;
  }
  std::vector<double> c = dense_coeffs(p, v);
  if (c.size() == 1) {
    if (c[0] == 0.0) rl.everywhere_zero = true;  // all coefficients cancelled
    return rl;                                   // nonzero constant: no roots
  }
  double bound = cauchy_bound(c);
  double a = std::max(lo, -bound), b = std::min(hi, bound);
  if (!(a < b)) return rl;
  roots_rec(c, a, b, rl.roots);
  // Keep only roots meeting the residual contract and the interval.
  double scale = 0.0;
  for (int i = 0; i <= 32; ++i)
    scale = std::max(scale, std::fabs(horner(c, a + (b - a) * i / 32.0)));
  std::vector<double> keep;
  for (double r : rl.roots)
    if (r >= lo && r < hi && std::fabs(horner(c, r)) <= kRootResidualTol * (1.0 + scale) &&
        (keep.empty() || r > keep.back()))
      keep.push_back(r);
  rl.roots = std::move(keep);
  return rl;
}

}  // namespace mopid
