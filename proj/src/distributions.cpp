#include "mopid/distributions.hpp"

#include <cmath>

namespace mopid {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

// k-th derivative of the standard normal density via the Hermite recurrence:
// phi^(k)(z) = (-1)^k He_k(z) phi(z).
double phi_deriv(int k, double z) {
  double phi = kInvSqrt2Pi * std::exp(-0.5 * z * z);
  double h0 = 1.0, h1 = z;
  if (k == 0) return phi;
  for (int i = 1; i < k; ++i) {
    double h2 = z * h1 - i * h0;
    h0 = h1;
    h1 = h2;
  }
  double sign = (k % 2) ? -1.0 : 1.0;
  return sign * h1 * phi;
}

// Reflect a univariate MOP through the origin.
MOP reflect(const MOP& m, VarId v) {
  std::vector<Piece> out;
  for (const Piece& p : m.pieces()) {
    Piece q;
    q.region.bounds = {{-p.region.bounds[0].hi, -p.region.bounds[0].lo}};
    q.anchor = {-p.anchor[0]};
    q.poly = p.poly.reflected(v);
    out.push_back(std::move(q));
  }
  return mop_from_pieces(m.scope(), std::move(out), false);
}
}  // namespace

MOP taylor_mop(const DerivFn& f, VarId v, const std::vector<Interval>& intervals,
               const std::vector<double>& centers, int degree) {
  if (intervals.size() != centers.size())
    throw AlgebraError("taylor_mop: one center per interval required");
  if (degree < 0) throw AlgebraError("taylor_mop: negative degree");
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (!intervals[i].finite())
      throw AlgebraError("taylor_mop: intervals must be finite");
    if (!(intervals[i].contains(centers[i])))
      throw AlgebraError("taylor_mop: center outside its interval");
    Polynomial p;
    double kfact = 1.0;
    for (int k = 0; k <= degree; ++k) {
      if (k > 0) kfact *= k;
      Monomial m;
      if (k > 0) m.factors.push_back({v, k});
      p.add_term(m, f(k, centers[i]) / kfact);
    }
    pieces.push_back(Piece{Region{{intervals[i]}}, {centers[i]}, std::move(p)});
  }
  return mop_from_pieces({v}, std::move(pieces), false);
}

MOP std_normal_mop_custom(VarId v, double halfwidth, int pieces, int degree) {
  if (!(halfwidth > 0.0) || pieces < 1 || degree < 0)
    throw AlgebraError("std_normal_mop_custom: bad parameters");
  std::vector<Interval> iv;
  std::vector<double> centers;
  for (int i = 0; i < pieces; ++i) {
    double lo = -halfwidth + 2.0 * halfwidth * i / pieces;
    double hi = -halfwidth + 2.0 * halfwidth * (i + 1) / pieces;
    iv.push_back({lo, hi});
    centers.push_back(0.5 * (lo + hi));
  }
  MOP raw = taylor_mop(phi_deriv, v, iv, centers, degree);
  MOP sym = scale(add(raw, reflect(raw, v)), 0.5);
  return normalize(sym, v);
}

MOP std_normal_mop(VarId v) { return std_normal_mop_custom(v, 3.0, 6, 3); }

MOP normal_mop_custom(VarId v, double mu, double sigma2, double halfwidth, int pieces,
                      int degree) {
  if (!(sigma2 > 0.0)) throw AlgebraError("normal_mop: variance must be positive");
  double sigma = std::sqrt(sigma2);
  MOP base = std_normal_mop_custom(v, halfwidth, pieces, degree);
  std::vector<Piece> out;
  for (const Piece& p : base.pieces()) {
    Piece q;
    q.region.bounds = {{mu + sigma * p.region.bounds[0].lo, mu + sigma * p.region.bounds[0].hi}};
    q.anchor = {mu + sigma * p.anchor[0]};
    Polynomial np;
    for (const auto& [m, c] : p.poly.terms())
      np.add_term(m, c / std::pow(sigma, m.exponent_of(v) + 1));
    q.poly = std::move(np);
    out.push_back(std::move(q));
  }
  return mop_from_pieces(base.scope(), std::move(out), false);
}

MOP normal_mop(VarId v, double mu, double sigma2) {
  return normal_mop_custom(v, mu, sigma2, 3.0, 6, 3);
}

MOP lognormal_value_mop(VarId v, Interval interval, const std::vector<double>& centers,
                        int degree) {
  if (!interval.finite()) throw AlgebraError("lognormal_value_mop: interval must be bounded");
  if (centers.empty()) throw AlgebraError("lognormal_value_mop: at least one center");
  std::vector<Interval> iv;
  std::size_t n = centers.size();
  for (std::size_t i = 0; i < n; ++i) {
    double lo = interval.lo + (interval.hi - interval.lo) * static_cast<double>(i) / n;
    double hi = interval.lo + (interval.hi - interval.lo) * static_cast<double>(i + 1) / n;
    iv.push_back({lo, hi});
  }
  return taylor_mop(make_curve("exp", {}), v, iv, centers, degree);
}

DerivFn make_curve(const std::string& name, const std::vector<double>& params) {
  auto need = [&](std::size_t n) {
    if (params.size() != n)
      throw AlgebraError("curve '" + name + "' expects " + std::to_string(n) + " parameters");
  };
  if (name == "exp") {
    need(0);
    return [](int, double x) { return std::exp(x); };
  }
  if (name == "affine-exp") {
    need(2);
    double a = params[0], b = params[1];
    return [a, b](int k, double x) { return k == 0 ? a + b * std::exp(x) : b * std::exp(x); };
  }
  if (name == "log-demand") {
    need(2);
    double alpha = params[0], beta = params[1];
    if (!(alpha > 0.0) || beta == 0.0) throw AlgebraError("log-demand: need alpha > 0, beta != 0");
    return [alpha, beta](int k, double x) {
      if (x <= 0.0) throw AlgebraError("log-demand: evaluated at nonpositive price");
      if (k == 0) return (std::log(alpha) - std::log(x)) / beta;
      // d^k/dx^k of -ln(x)/beta = (-1)^k (k-1)! / (beta x^k)
      double fk = ((k % 2) ? -1.0 : 1.0) / (beta * std::pow(x, k));
      for (int i = 1; i < k; ++i) fk *= i;
      return fk;
    };
  }
  if (name == "saturating-cost") {
    need(4);
    double k0 = params[0], k1 = params[1], k2 = params[2], k3 = params[3];
    if (k3 == 0.0) throw AlgebraError("saturating-cost: k3 must be nonzero");
    return [k0, k1, k2, k3](int k, double x) {
      double e = std::exp(-x / k3);
      if (k == 0) return k0 + k1 * x + k2 * (1.0 - e);
      if (k == 1) return k1 + (k2 / k3) * e;
      // d^k/dx^k of -k2 e^(-x/k3) = -k2 (-1/k3)^k e^(-x/k3)
      return -k2 * std::pow(-1.0 / k3, k) * e;
    };
  }
  throw AlgebraError("unknown curve '" + name + "'");
}

MOP density_mop(VarId v, const DensitySpec& spec) {
  if (spec.halfwidth < 3.0)
    throw AlgebraError("density spec: truncation must cover at least 3 standard deviations");
  if (spec.pieces < 2) throw AlgebraError("density spec: at least 2 pieces");
  if (spec.degree < 2) throw AlgebraError("density spec: degree at least 2");
  switch (spec.family) {
    case DensitySpec::Family::StandardNormal:
      return std_normal_mop_custom(v, spec.halfwidth, spec.pieces, spec.degree);
    case DensitySpec::Family::Normal:
    case DensitySpec::Family::LogNormal:
      // lognormal variables hold their log-value; the MOP is the normal one.
      return normal_mop_custom(v, spec.mu, spec.sigma2, spec.halfwidth, spec.pieces,
                               spec.degree);
  }
  throw AlgebraError("density spec: unknown family");
}

}  // namespace mopid
