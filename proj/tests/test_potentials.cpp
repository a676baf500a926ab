#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mopid/potentials.hpp"

using namespace mopid;

namespace {
const VarId A = 0, B = 1, D = 5, E = 6;                       // discrete
const VarId X = 10, Y = 11, W = 12, S = 13, Z = 14, P = 15;   // continuous
const double kInf = std::numeric_limits<double>::infinity();

Polynomial upoly(VarId v, std::initializer_list<double> cs) {
  Polynomial p;
  int k = 0;
  for (double c : cs) {
    Monomial m;
    if (k > 0) m.factors.push_back({v, k});
    p.add_term(m, c);
    ++k;
  }
  return p;
}

// One-piece univariate MOP with value polynomial given in plain coordinates.
MOP box1(VarId v, double lo, double hi, std::initializer_list<double> cs) {
  std::vector<Piece> ps;
  ps.push_back(Piece{Region{{{lo, hi}}}, {0.0}, upoly(v, cs)});
  return mop_from_pieces({v}, std::move(ps), false);
}

// One-piece two-variable MOP (v1 < v2) in plain coordinates.
MOP box2(VarId v1, VarId v2, Interval i1, Interval i2, Polynomial poly) {
  std::vector<Piece> ps;
  ps.push_back(Piece{Region{{i1, i2}}, {0.0, 0.0}, std::move(poly)});
  return mop_from_pieces({v1, v2}, std::move(ps), false);
}

// One piece covering all of R^n in the given (sorted) scope.
MOP unbounded(std::vector<VarId> scope, Polynomial poly) {
  Region r;
  r.bounds.assign(scope.size(), Interval{-kInf, kInf});
  std::vector<Piece> ps;
  ps.push_back(Piece{r, std::vector<double>(scope.size(), 0.0), std::move(poly)});
  return mop_from_pieces(std::move(scope), std::move(ps), false);
}

Potential scalar_table(PotKind k, std::vector<DiscreteAxis> axes, std::vector<double> vals) {
  Potential p(k, std::move(axes), {});
  REQUIRE(vals.size() == p.num_configs());
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (vals[i] != 0.0) p.entry(i) = Entry{CAddend{MOP::scalar(vals[i]), {}}};
  return p;
}

Potential density_pot(std::vector<VarId> cvars, MOP m) {
  Potential p(PotKind::Continuous, {}, std::move(cvars));
  p.entry(0) = Entry{CAddend{std::move(m), {}}};
  return p;
}

Potential utility_pot(std::vector<VarId> cvars, MOP m) {
  Potential p(PotKind::Utility, {}, std::move(cvars));
  p.entry(0) = Entry{CAddend{std::move(m), {}}};
  return p;
}

// Standard pieces used across cases: a Beta(2,2)-shaped density on [0,1).
MOP beta22(VarId v) { return box1(v, 0.0, 1.0, {0.0, 6.0, -6.0}); }

bool mop_equal(const MOP& a, const MOP& b) { return subtract(a, b).is_zero(); }

bool entry_equal(const Entry& a, const Entry& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mop_equal(a[i].density, b[i].density)) return false;
    if (a[i].diracs.size() != b[i].diracs.size()) return false;
    for (std::size_t j = 0; j < a[i].diracs.size(); ++j) {
      const DiracTerm& x = a[i].diracs[j];
      const DiracTerm& y = b[i].diracs[j];
      if (x.target != y.target || x.bound != y.bound) return false;
      if (std::abs(x.weight - y.weight) > 1e-12) return false;
      if (!mop_equal(x.g, y.g)) return false;
    }
  }
  return true;
}

bool structurally_equal(const Potential& a, const Potential& b) {
  if (a.kind() != b.kind()) return false;
  if (!(a.axes() == b.axes())) return false;
  if (a.cont_vars() != b.cont_vars()) return false;
  if (a.num_configs() != b.num_configs()) return false;
  for (std::size_t i = 0; i < a.num_configs(); ++i)
    if (!entry_equal(a.entry(i), b.entry(i))) return false;
  return true;
}

bool mixed_equal(const MixedPotential& a, const MixedPotential& b) {
  return structurally_equal(a.discrete, b.discrete) &&
         structurally_equal(a.continuous, b.continuous) &&
         structurally_equal(a.utility, b.utility);
}

struct ValidationGuard {
  ValidationGuard() { set_mop_validation(true); }
  ~ValidationGuard() { set_mop_validation(false); }
};
}  // namespace

// --- tables, combination, discrete marginalization ---------------------------------

TEST_CASE("table shape guards") {
  CHECK_THROWS_AS(Potential(PotKind::Discrete, {{A, 2}, {A, 3}}, {}), AlgebraError);
  CHECK_THROWS_AS(Potential(PotKind::Discrete, {{A, 0}}, {}), AlgebraError);
  CHECK_THROWS_AS(Potential(PotKind::Continuous, {{A, 2}}, {A}), AlgebraError);
  CHECK_THROWS_AS(Potential(PotKind::Continuous, {}, {X, X}), AlgebraError);
  CHECK_THROWS_AS(combine_mul(scalar_table(PotKind::Discrete, {{A, 2}}, {1, 1}),
                              scalar_table(PotKind::Discrete, {{A, 3}}, {1, 1, 1})),
                  AlgebraError);
}

TEST_CASE("identities of the three kinds") {
  CHECK(Potential::identity(PotKind::Discrete).is_identity());
  CHECK(Potential::identity(PotKind::Continuous).is_identity());
  CHECK(Potential::identity(PotKind::Utility).is_identity());
  CHECK(Potential::identity(PotKind::Utility).eval({}, {}) == 0.0);
  CHECK(Potential::identity(PotKind::Discrete).eval({}, {}) == 1.0);
  CHECK(!scalar_table(PotKind::Discrete, {{A, 2}}, {1, 1}).is_identity());
  CHECK(scalar_table(PotKind::Discrete, {{A, 2}}, {1, 1}).is_vacuous_ones());
}

TEST_CASE("discrete tables combine and marginalize like weighted sums") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential pba(PotKind::Discrete, {{A, 2}, {B, 2}}, {});
  pba.entry(pba.index_of({{A, 0}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.9), {}}};
  pba.entry(pba.index_of({{A, 0}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.1), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.2), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.8), {}}};

  Potential joint = combine_mul(pa, pba);
  CHECK(joint.eval({{A, 0}, {B, 0}}, {}) == doctest::Approx(0.27));
  CHECK(joint.eval({{A, 0}, {B, 1}}, {}) == doctest::Approx(0.03));
  CHECK(joint.eval({{A, 1}, {B, 0}}, {}) == doctest::Approx(0.14));
  CHECK(joint.eval({{A, 1}, {B, 1}}, {}) == doctest::Approx(0.56));

  Potential pb = marginalize_var(joint, A);
  CHECK(pb.eval({{B, 0}}, {}) == doctest::Approx(0.41));
  CHECK(pb.eval({{B, 1}}, {}) == doctest::Approx(0.59));
  CHECK(marginalize_var(pb, B).eval({}, {}) == doctest::Approx(1.0));

  // conditioning: divide by the marginal, columns renormalize
  Potential cond = divide(joint, pb);
  CHECK(cond.eval({{A, 0}, {B, 0}}, {}) == doctest::Approx(0.27 / 0.41));
  CHECK(cond.eval({{A, 1}, {B, 1}}, {}) == doctest::Approx(0.56 / 0.59));
  CHECK(marginalize_var(cond, A).is_vacuous_ones());

  // dividing by a scalar total renormalizes a weight table
  Potential wts = scalar_table(PotKind::Discrete, {{A, 2}}, {0.1, 0.3});
  Potential norm = divide(wts, marginalize_var(wts, A));
  CHECK(norm.eval({{A, 0}}, {}) == doctest::Approx(0.25));
  CHECK(norm.eval({{A, 1}}, {}) == doctest::Approx(0.75));

  CHECK_THROWS_AS(marginalize_var(pa, B), AlgebraError);
}

TEST_CASE("utilities combine additively over the union of their tables") {
  ValidationGuard g;
  Potential u1 = scalar_table(PotKind::Utility, {{A, 2}}, {1, 2});
  Potential u2 = scalar_table(PotKind::Utility, {{B, 2}}, {10, 20});
  Potential s = combine_utility(u1, u2);
  CHECK(s.eval({{A, 0}, {B, 0}}, {}) == doctest::Approx(11));
  CHECK(s.eval({{A, 0}, {B, 1}}, {}) == doctest::Approx(21));
  CHECK(s.eval({{A, 1}, {B, 0}}, {}) == doctest::Approx(12));
  CHECK(s.eval({{A, 1}, {B, 1}}, {}) == doctest::Approx(22));

  CHECK_THROWS_AS(combine_mul(u1, u2), AlgebraError);
  CHECK_THROWS_AS(combine_utility(u1, scalar_table(PotKind::Discrete, {{B, 2}}, {1, 1})),
                  AlgebraError);

  // probability x utility weights the utility
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential w = combine_mul(pa, scalar_table(PotKind::Utility, {{A, 2}}, {10, 20}));
  CHECK(w.kind() == PotKind::Utility);
  CHECK(w.eval({{A, 0}}, {}) == doctest::Approx(3.0));
  CHECK(w.eval({{A, 1}}, {}) == doctest::Approx(14.0));
  CHECK(marginalize_var(w, A).eval({}, {}) == doctest::Approx(17.0));

  // a discrete x continuous product has no kind: the factors stay in their slots
  Potential fx = density_pot({X}, beta22(X));
  CHECK_THROWS_AS(combine_mul(pa, fx), AlgebraError);
}

TEST_CASE("identities are exact units") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  CHECK(structurally_equal(combine_mul(pa, Potential::identity(PotKind::Discrete)), pa));
  CHECK(structurally_equal(combine_mul(Potential::identity(PotKind::Discrete), pa), pa));

  Potential fx = density_pot({X}, beta22(X));
  CHECK(structurally_equal(combine_mul(fx, Potential::identity(PotKind::Continuous)), fx));
  CHECK(structurally_equal(combine_mul(Potential::identity(PotKind::Continuous), fx), fx));

  // a utility carrying a point mass keeps it through the unit law
  Potential ud(PotKind::Utility, {}, {X, S});
  ud.entry(0) = Entry{
      CAddend{box1(X, 0.0, 1.0, {0.0, 1.0}),
              {DiracTerm{S, 1.0, unbounded({X}, Polynomial::var(X)), false}}}};
  CHECK(structurally_equal(combine_utility(ud, Potential::identity(PotKind::Utility)), ud));
  CHECK(structurally_equal(combine_utility(Potential::identity(PotKind::Utility), ud), ud));

  MixedPotential m{pa, fx, ud};
  CHECK(mixed_equal(combine_mixed(m, MixedPotential{}), m));
  CHECK(mixed_equal(combine_mixed(MixedPotential{}, m), m));
}

TEST_CASE("mixed combination fills each slot independently") {
  ValidationGuard g;
  MixedPotential m1, m2, m3;
  m1.discrete = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  m2.continuous = density_pot({X}, beta22(X));
  m3.utility = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 1.0}));
  MixedPotential r = combine_mixed(combine_mixed(m1, m2), m3);
  CHECK(structurally_equal(r.discrete, m1.discrete));
  CHECK(structurally_equal(r.continuous, m2.continuous));
  CHECK(structurally_equal(r.utility, m3.utility));
}

TEST_CASE("combination is commutative and associative on samples") {
  ValidationGuard g;
  Potential F = density_pot({X}, box1(X, 0.0, 1.0, {1.0, 1.0}));
  Potential G = density_pot(
      {X, Y}, box2(X, Y, {0.0, 1.0}, {0.0, 1.0},
                   Polynomial::constant(1.0) + Polynomial::var(X) * Polynomial::var(Y)));
  Potential H = density_pot({Y}, box1(Y, 0.0, 1.0, {0.0, 2.0}));
  Potential ab = combine_mul(F, G), ba = combine_mul(G, F);
  Potential l = combine_mul(combine_mul(F, G), H), r = combine_mul(F, combine_mul(G, H));
  for (double x : {0.2, 0.7}) {
    for (double y : {0.3, 0.9}) {
      ContinuousPoint pt{{X, x}, {Y, y}};
      double fgh = (1 + x) * (1 + x * y) * (2 * y);
      CHECK(ab.eval({}, pt) == doctest::Approx(ba.eval({}, pt)));
      CHECK(ab.eval({}, pt) == doctest::Approx((1 + x) * (1 + x * y)));
      CHECK(l.eval({}, pt) == doctest::Approx(fgh));
      CHECK(r.eval({}, pt) == doctest::Approx(fgh));
    }
  }

  Potential ua = scalar_table(PotKind::Utility, {{A, 2}}, {1, 2});
  Potential ub = scalar_table(PotKind::Utility, {{B, 2}}, {10, 20});
  Potential uc = scalar_table(PotKind::Utility, {{A, 2}}, {100, 200});
  Potential ul = combine_utility(combine_utility(ua, ub), uc);
  Potential ur = combine_utility(ua, combine_utility(ub, uc));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      CHECK(ul.eval({{A, a}, {B, b}}, {}) == doctest::Approx(ur.eval({{A, a}, {B, b}}, {})));
      CHECK(combine_utility(ua, ub).eval({{A, a}, {B, b}}, {}) ==
            doctest::Approx(combine_utility(ub, ua).eval({{A, a}, {B, b}}, {})));
    }
}

// --- continuous marginalization and point masses ------------------------------------

TEST_CASE("integrating a density against a utility takes its expectation") {
  ValidationGuard g;
  Potential f = density_pot({X}, beta22(X));
  Potential u = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 1.0}));
  Potential w = combine_mul(f, u);
  CHECK(w.kind() == PotKind::Utility);
  CHECK(marginalize_var(w, X).eval({}, {}) == doctest::Approx(0.5));
  // total mass of the density itself
  CHECK(marginalize_var(f, X).eval({}, {}) == doctest::Approx(1.0));
}

TEST_CASE("a point mass at a constant evaluates the co-factor there") {
  ValidationGuard g;
  Potential p(PotKind::Continuous, {}, {Y});
  p.entry(0) = Entry{CAddend{box1(Y, 0.0, 4.0, {0.0, 0.0, 1.0}),
                             {DiracTerm{Y, 1.0, MOP::scalar(2.0), false}}}};
  CHECK(marginalize_var(p, Y).eval({}, {}) == doctest::Approx(4.0));

  // a bare mass integrates to its weight
  Potential q(PotKind::Continuous, {}, {Y});
  q.entry(0) = Entry{CAddend{MOP::scalar(1.0), {DiracTerm{Y, 0.25, MOP::scalar(3.0), false}}}};
  CHECK(marginalize_var(q, Y).eval({}, {}) == doctest::Approx(0.25));
}

TEST_CASE("sifting substitutes a single-variable relation eagerly") {
  ValidationGuard g;
  // X ~ U[0,2), Y = X^2 deterministically, utility u(Y) = y
  Potential p(PotKind::Continuous, {}, {X, Y});
  p.entry(0) = Entry{CAddend{box1(X, 0.0, 2.0, {0.5}),
                             {DiracTerm{Y, 1.0, unbounded({X}, upoly(X, {0, 0, 1})), false}}}};
  Potential u = utility_pot({Y}, unbounded({Y}, upoly(Y, {0, 1})));
  Potential w = combine_mul(p.retag(PotKind::Continuous), u);
  Potential wy = marginalize_var(w, Y);
  // the relation lands in the co-factor: E[X^2] for U[0,2) is 4/3
  CHECK(wy.cont_vars() == std::vector<VarId>{X});
  CHECK(marginalize_var(wy, X).eval({}, {}) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("sifting substitutes a multivariate relation into an unbounded co-factor") {
  ValidationGuard g;
  Polynomial xw = Polynomial::var(X) + Polynomial::var(W);
  Potential p(PotKind::Continuous, {}, {X, W, Y});
  p.entry(0) = Entry{CAddend{unbounded({Y}, upoly(Y, {0, 0, 1})),
                             {DiracTerm{Y, 2.0, unbounded({X, W}, xw), false}}}};
  Potential r = marginalize_var(p, Y);
  REQUIRE(r.entry(0).size() == 1);
  CHECK(r.entry(0)[0].diracs.empty());
  CHECK(mop_equal(r.entry(0)[0].density, unbounded({X, W}, (xw * xw).scaled(2.0))));
}

TEST_CASE("a deferred point-mass binding resolves to the exact convolution") {
  ValidationGuard g;
  // X ~ U[0,1), W ~ U[0,1), S = X + W: the density of S is the triangle on [0,2)
  Potential p(PotKind::Continuous, {}, {X, W, S});
  MOP fxfw = multiply(box1(X, 0.0, 1.0, {1.0}), box1(W, 0.0, 1.0, {1.0}));
  MOP gxw = unbounded({X, W}, Polynomial::var(X) + Polynomial::var(W));
  p.entry(0) = Entry{CAddend{fxfw, {DiracTerm{S, 1.0, gxw, false}}}};

  Potential px = marginalize_var(p, X);
  CHECK(px.cont_vars() == std::vector<VarId>{W, S});
  REQUIRE(px.entry(0).size() == 1);
  REQUIRE(px.entry(0)[0].diracs.size() == 1);
  CHECK(px.entry(0)[0].diracs[0].bound);
  CHECK(px.entry(0)[0].diracs[0].target == X);

  Potential ps = marginalize_var(px, W);
  CHECK(ps.cont_vars() == std::vector<VarId>{S});
  REQUIRE(ps.entry(0).size() == 1);
  CHECK(ps.entry(0)[0].diracs.empty());
  CHECK(ps.eval({}, {{S, 0.5}}) == doctest::Approx(0.5));
  CHECK(ps.eval({}, {{S, 1.25}}) == doctest::Approx(0.75));
  CHECK(ps.eval({}, {{S, 1.5}}) == doctest::Approx(0.5));
  CHECK(ps.eval({}, {{S, -0.5}}) == 0.0);
  CHECK(ps.eval({}, {{S, 2.5}}) == 0.0);
  CHECK(marginalize_var(ps, S).eval({}, {}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("relations are inverted when the eliminated variable is not their target") {
  ValidationGuard g;
  // density x^2 on [0,1), relation Z = 2X + W; integrating X then W leaves 1/3
  Potential p(PotKind::Continuous, {}, {X, W, Z});
  Polynomial rel = upoly(X, {0, 2}) + Polynomial::var(W);
  p.entry(0) = Entry{CAddend{box1(X, 0.0, 1.0, {0, 0, 1}),
                             {DiracTerm{Z, 1.0, unbounded({X, W}, rel), false}}}};
  Potential p1 = marginalize_var(p, X);
  REQUIRE(p1.entry(0).size() == 1);
  REQUIRE(p1.entry(0)[0].diracs.size() == 1);
  CHECK(p1.entry(0)[0].diracs[0].target == X);
  CHECK(p1.entry(0)[0].diracs[0].bound);
  CHECK(p1.entry(0)[0].diracs[0].weight == doctest::Approx(0.5));  // 1/|slope|

  Potential p2 = marginalize_var(p1, W);
  CHECK(p2.cont_vars() == std::vector<VarId>{Z});
  for (double z : {-5.0, 0.0, 7.0})
    CHECK(p2.eval({}, {{Z, z}}) == doctest::Approx(1.0 / 3.0));

  // a nonlinear occurrence cannot be inverted
  Potential bad(PotKind::Continuous, {}, {X, W, Z});
  Polynomial nl = upoly(X, {0, 0, 1}) + Polynomial::var(W);
  bad.entry(0) = Entry{CAddend{box1(X, 0.0, 1.0, {1.0}),
                               {DiracTerm{Z, 1.0, unbounded({X, W}, nl), false}}}};
  CHECK_THROWS_AS(marginalize_var(bad, X), AlgebraError);
}

TEST_CASE("an integral no factor depends on is flagged as divergent") {
  ValidationGuard g;
  Potential p(PotKind::Continuous, {}, {X, Y});
  p.entry(0) = Entry{CAddend{box1(Y, 0.0, 1.0, {1.0}), {}}};
  CHECK_THROWS_AS(marginalize_var(p, X), AlgebraError);
}

TEST_CASE("two live masses on one target cannot be multiplied") {
  ValidationGuard g;
  Potential p1(PotKind::Continuous, {}, {X, S});
  p1.entry(0) = Entry{CAddend{box1(X, 0.0, 1.0, {1.0}),
                              {DiracTerm{S, 1.0, unbounded({X}, Polynomial::var(X)), false}}}};
  Potential p2(PotKind::Continuous, {}, {Y, S});
  p2.entry(0) = Entry{CAddend{box1(Y, 0.0, 1.0, {1.0}),
                              {DiracTerm{S, 1.0, unbounded({Y}, Polynomial::var(Y)), false}}}};
  CHECK_THROWS_AS(combine_mul(p1, p2), AlgebraError);
  CHECK_THROWS_AS(p1.eval({}, {{X, 0.5}, {S, 0.5}}), AlgebraError);
}

// --- division -----------------------------------------------------------------------

TEST_CASE("dividing a product by a factor returns the other factor") {
  ValidationGuard g;
  Potential dp = density_pot({X}, box1(X, 0.0, 1.0, {1.0, 1.0}));
  MOP qm = box1(X, 0.0, 1.0, {2.0, 0.0, 1.0});
  Potential prod = combine_mul(density_pot({X}, qm), dp);
  Potential back = divide(prod, dp);
  REQUIRE(back.entry(0).size() == 1);
  CHECK(mop_equal(back.entry(0)[0].density, qm));

  // point masses on the dividend ride through
  Potential wm(PotKind::Continuous, {}, {X, S});
  wm.entry(0) = Entry{CAddend{multiply(qm, box1(X, 0.0, 1.0, {1.0, 1.0})),
                              {DiracTerm{S, 1.0, unbounded({X}, Polynomial::var(X)), false}}}};
  Potential b2 = divide(wm, dp);
  REQUIRE(b2.entry(0).size() == 1);
  REQUIRE(b2.entry(0)[0].diracs.size() == 1);
  CHECK(mop_equal(b2.entry(0)[0].density, qm));

  // inexact quotients are refused, not approximated
  Potential bad = density_pot({X}, box1(X, 0.0, 1.0, {1.0, 0.0, 1.0}));
  CHECK_THROWS_AS(divide(bad, dp), DivisionNotClosed);
  // divisors carrying a point mass are refused
  CHECK_THROWS_AS(divide(dp, wm), DivisionNotClosed);
}

// --- mixed chance marginalization ----------------------------------------------------

TEST_CASE("eliminating a latent class leaves the mixture in the continuous slot") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential fya(PotKind::Continuous, {{A, 2}}, {Y});
  fya.entry(0) = Entry{CAddend{beta22(Y), {}}};
  fya.entry(1) = Entry{CAddend{beta22(Y), {}}};
  Potential u = scalar_table(PotKind::Utility, {{A, 2}}, {10, 20});
  ChanceClasses cls;
  cls.discrete = {A};
  cls.continuous = {Y};

  MixedPotential mu{pa, fya, u};
  MixedPotential out = marginalize_mixed_chance(mu, A, cls, false);
  CHECK(out.discrete.is_identity());
  CHECK(out.continuous.eval({}, {{Y, 0.5}}) == doctest::Approx(1.5));  // the mixture density
  CHECK(out.utility.eval({}, {{Y, 0.25}}) == doctest::Approx(17.0));   // E[u | Y=y]

  MixedPotential sc = marginalize_mixed_chance(mu, A, cls, true);
  CHECK(sc.discrete.is_identity());
  CHECK(sc.continuous.is_identity());
  CHECK(sc.utility.eval({}, {{Y, 0.5}}) == doctest::Approx(17.0 * 1.5));

  // finishing the elimination gives the same expectation on both routes
  MixedPotential out2 = marginalize_mixed_chance(out, Y, cls, false);
  CHECK(out2.utility.eval({}, {}) == doctest::Approx(17.0));
  CHECK(out2.discrete.eval({}, {}) == doctest::Approx(1.0));
  MixedPotential sc2 = marginalize_mixed_chance(sc, Y, cls, true);
  CHECK(sc2.utility.eval({}, {}) == doctest::Approx(17.0));

  // without a utility in reach the marginal just moves slots
  MixedPotential nm{pa, fya, Potential::identity(PotKind::Utility)};
  MixedPotential nout = marginalize_mixed_chance(nm, A, cls, false);
  CHECK(nout.discrete.is_identity());
  CHECK(nout.utility.is_identity());
  CHECK(nout.continuous.eval({}, {{Y, 0.5}}) == doctest::Approx(1.5));
}

TEST_CASE("eliminating a weighted class against scalar evidence conditions exactly") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential lam = scalar_table(PotKind::Continuous, {{A, 2}}, {0.5, 0.25});
  Potential u = scalar_table(PotKind::Utility, {{A, 2}}, {10, 20});
  ChanceClasses cls;
  cls.discrete = {A};

  MixedPotential mu{pa, lam, u};
  MixedPotential out = marginalize_mixed_chance(mu, A, cls, false);
  // joint weights are {0.15, 0.175}: total 0.325, conditional expectation 200/13
  CHECK(out.discrete.eval({}, {}) == doctest::Approx(0.325));
  CHECK(out.continuous.is_identity());
  CHECK(out.utility.eval({}, {}) == doctest::Approx(200.0 / 13.0));
  CHECK(out.discrete.eval({}, {}) * out.utility.eval({}, {}) == doctest::Approx(5.0));
}

TEST_CASE("conditioning on a discrete parent divides by its marginal") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential pba(PotKind::Discrete, {{A, 2}, {B, 2}}, {});
  pba.entry(pba.index_of({{A, 0}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.9), {}}};
  pba.entry(pba.index_of({{A, 0}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.1), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.2), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.8), {}}};
  Potential joint = combine_mul(pa, pba);
  Potential ua = scalar_table(PotKind::Utility, {{A, 2}}, {10, 20});
  ChanceClasses cls;
  cls.discrete = {A, B};

  MixedPotential mu{joint, Potential::identity(PotKind::Continuous), ua};
  MixedPotential out = marginalize_mixed_chance(mu, A, cls, false);
  // the A-marginal P(B) stays in the discrete slot; the utility is E[u | B]
  CHECK(out.discrete.eval({{B, 0}}, {}) == doctest::Approx(0.41));
  CHECK(out.discrete.eval({{B, 1}}, {}) == doctest::Approx(0.59));
  CHECK(out.utility.eval({{B, 0}}, {}) == doctest::Approx(5.5 / 0.41));
  CHECK(out.utility.eval({{B, 1}}, {}) == doctest::Approx(11.5 / 0.59));

  MixedPotential fin = marginalize_mixed_chance(out, B, cls, false);
  CHECK(fin.utility.eval({}, {}) == doctest::Approx(17.0));
  CHECK(fin.continuous.eval({}, {}) == doctest::Approx(1.0));

  // the division-free route absorbs the joint into the utility instead
  MixedPotential sc = marginalize_mixed_chance(mu, A, cls, true);
  CHECK(sc.discrete.is_identity());
  CHECK(sc.utility.eval({{B, 0}}, {}) == doctest::Approx(5.5));
  CHECK(sc.utility.eval({{B, 1}}, {}) == doctest::Approx(11.5));
  MixedPotential sfin = marginalize_mixed_chance(sc, B, cls, true);
  CHECK(sfin.utility.eval({}, {}) == doctest::Approx(17.0));

  // a chance variable appearing nowhere, and one not classified, are errors
  CHECK_THROWS_AS(marginalize_mixed_chance(MixedPotential{}, A, cls, false), AlgebraError);
  ChanceClasses none;
  CHECK_THROWS_AS(marginalize_mixed_chance(mu, A, none, false), AlgebraError);
}

TEST_CASE("conditioning a continuous joint divides out the exact marginal") {
  ValidationGuard g;
  // joint 6x(1-x) * 2y on [0,1)^2; X-marginal is 2y; conditional is Beta(2,2) in x
  Polynomial jp = upoly(X, {0, 6, -6}) * upoly(Y, {0, 2});
  Potential fxy = density_pot({X, Y}, box2(X, Y, {0.0, 1.0}, {0.0, 1.0}, jp));
  Potential ux = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 1.0}));
  ChanceClasses cls;
  cls.continuous = {X, Y};

  MixedPotential mu{Potential::identity(PotKind::Discrete), fxy, ux};
  MixedPotential out = marginalize_mixed_chance(mu, X, cls, false);
  CHECK(out.continuous.eval({}, {{Y, 0.25}}) == doctest::Approx(0.5));  // 2y
  CHECK(out.utility.eval({}, {{Y, 0.25}}) == doctest::Approx(0.5));     // E[X]
  MixedPotential fin = marginalize_mixed_chance(out, Y, cls, false);
  CHECK(fin.utility.eval({}, {}) == doctest::Approx(0.5));
  CHECK(fin.discrete.eval({}, {}) == doctest::Approx(1.0));
}

TEST_CASE("a marginal the algebra cannot divide suggests the shortcut, which works") {
  ValidationGuard g;
  // joint (1 + xy) on [0,1)^2: the X-marginal 1 + y/2 does not divide it exactly
  Polynomial jp = Polynomial::constant(1.0) + Polynomial::var(X) * Polynomial::var(Y);
  Potential fxy = density_pot({X, Y}, box2(X, Y, {0.0, 1.0}, {0.0, 1.0}, jp));
  Potential ux = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 1.0}));
  ChanceClasses cls;
  cls.continuous = {X, Y};
  MixedPotential mu{Potential::identity(PotKind::Discrete), fxy, ux};

  try {
    marginalize_mixed_chance(mu, X, cls, false);
    FAIL("expected DivisionNotClosed");
  } catch (const DivisionNotClosed& e) {
    CHECK(std::string(e.what()).find("shortcut") != std::string::npos);
  }

  MixedPotential sc = marginalize_mixed_chance(mu, X, cls, true);
  CHECK(sc.utility.eval({}, {{Y, 0.6}}) == doctest::Approx(0.5 + 0.2));  // 1/2 + y/3
  MixedPotential fin = marginalize_mixed_chance(sc, Y, cls, true);
  CHECK(fin.utility.eval({}, {}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("two chance variables outside the utility commute exactly") {
  ValidationGuard g;
  Polynomial jp = Polynomial::var(X) + Polynomial::var(Y);
  Potential fxy = density_pot({X, Y}, box2(X, Y, {0.0, 1.0}, {0.0, 1.0}, jp));
  Potential uw = utility_pot({W}, box1(W, 0.0, 2.0, {0.0, 0.0, 1.0}));
  ChanceClasses cls;
  cls.continuous = {X, Y, W};
  MixedPotential mu{Potential::identity(PotKind::Discrete), fxy, uw};

  MixedPotential xy = marginalize_mixed_chance(
      marginalize_mixed_chance(mu, X, cls, false), Y, cls, false);
  MixedPotential yx = marginalize_mixed_chance(
      marginalize_mixed_chance(mu, Y, cls, false), X, cls, false);
  CHECK(mixed_equal(xy, yx));
  CHECK(structurally_equal(xy.utility, uw));
  CHECK(xy.discrete.eval({}, {}) == doctest::Approx(1.0));
}

TEST_CASE("probability mass is conserved through mixed eliminations") {
  ValidationGuard g;
  Potential pa = scalar_table(PotKind::Discrete, {{A, 2}}, {0.3, 0.7});
  Potential pba(PotKind::Discrete, {{A, 2}, {B, 2}}, {});
  pba.entry(pba.index_of({{A, 0}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.9), {}}};
  pba.entry(pba.index_of({{A, 0}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.1), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 0}})) = Entry{CAddend{MOP::scalar(0.2), {}}};
  pba.entry(pba.index_of({{A, 1}, {B, 1}})) = Entry{CAddend{MOP::scalar(0.8), {}}};
  Potential joint = combine_mul(pa, pba);
  Potential fx = density_pot({X}, beta22(X));
  ChanceClasses cls;
  cls.discrete = {A, B};
  cls.continuous = {X};

  auto total = [](const MixedPotential& m) {
    return m.discrete.eval({}, {}) * m.continuous.eval({}, {});
  };
  MixedPotential r1{joint, fx, Potential::identity(PotKind::Utility)};
  for (VarId v : {A, B, X}) r1 = marginalize_mixed_chance(r1, v, cls, false);
  CHECK(total(r1) == doctest::Approx(1.0).epsilon(1e-6));

  MixedPotential r2{joint, fx, Potential::identity(PotKind::Utility)};
  for (VarId v : {X, A, B}) r2 = marginalize_mixed_chance(r2, v, cls, false);
  CHECK(total(r2) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("a variable only the utility mentions is integrated in place") {
  ValidationGuard g;
  MixedPotential mu;
  mu.utility = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 0.0, 1.0}));
  ChanceClasses cls;
  cls.continuous = {X};
  MixedPotential out = marginalize_mixed_chance(mu, X, cls, false);
  CHECK(out.utility.eval({}, {}) == doctest::Approx(1.0 / 3.0));
  CHECK(out.discrete.is_identity());
  CHECK(out.continuous.is_identity());
}

TEST_CASE("the expectation of a deterministic sum matches its convolution") {
  ValidationGuard g;
  // X ~ U[0,1), W ~ U[0,1), S = X + W, u(S) = s: E[u] = 1 on both routes
  MOP fxfw = multiply(box1(X, 0.0, 1.0, {1.0}), box1(W, 0.0, 1.0, {1.0}));
  MOP gxw = unbounded({X, W}, Polynomial::var(X) + Polynomial::var(W));
  ChanceClasses cls;
  cls.continuous = {X, W, S};
  for (bool sc : {false, true}) {
    Potential joint(PotKind::Continuous, {}, {X, W, S});
    joint.entry(0) = Entry{CAddend{fxfw, {DiracTerm{S, 1.0, gxw, false}}}};
    MixedPotential mu{Potential::identity(PotKind::Discrete), joint,
                      utility_pot({S}, box1(S, 0.0, 2.0, {0.0, 1.0}))};
    for (VarId v : {X, W, S}) mu = marginalize_mixed_chance(mu, v, cls, sc);
    CHECK(mu.utility.eval({}, {}) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mu.discrete.eval({}, {}) == doctest::Approx(1.0));
  }
}

TEST_CASE("a deferred binding may ride the utility slot through the shortcut") {
  ValidationGuard g;
  // same model, utility on X instead: E[X^2] = 1/3; the X-elimination defers
  // its mass into the utility, which W later resolves
  MOP fxfw = multiply(box1(X, 0.0, 1.0, {1.0}), box1(W, 0.0, 1.0, {1.0}));
  MOP gxw = unbounded({X, W}, Polynomial::var(X) + Polynomial::var(W));
  Potential joint(PotKind::Continuous, {}, {X, W, S});
  joint.entry(0) = Entry{CAddend{fxfw, {DiracTerm{S, 1.0, gxw, false}}}};
  Potential ux = utility_pot({X}, box1(X, 0.0, 1.0, {0.0, 0.0, 1.0}));
  ChanceClasses cls;
  cls.continuous = {X, W, S};
  MixedPotential mu{Potential::identity(PotKind::Discrete), joint, ux};

  // the general form would divide by a marginal that carries the mass
  try {
    marginalize_mixed_chance(mu, X, cls, false);
    FAIL("expected DivisionNotClosed");
  } catch (const DivisionNotClosed& e) {
    CHECK(std::string(e.what()).find("shortcut") != std::string::npos);
  }

  MixedPotential r = marginalize_mixed_chance(mu, X, cls, true);
  for (VarId v : {W, S}) r = marginalize_mixed_chance(r, v, cls, true);
  CHECK(r.utility.eval({}, {}) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

// --- decision marginalization ---------------------------------------------------------

TEST_CASE("a discrete decision picks the best state and records it") {
  ValidationGuard g;
  std::vector<PolicyCase> pol;
  Potential u = scalar_table(PotKind::Utility, {{D, 2}}, {3, 9});
  Potential r = marginalize_decision(u, D, nullptr, std::nullopt, &pol);
  CHECK(r.eval({}, {}) == doctest::Approx(9.0));
  REQUIRE(pol.size() == 1);
  CHECK(pol[0].config.empty());
  CHECK(pol[0].state == 1);
  CHECK(!pol[0].piecewise);
  CHECK(!pol[0].continuous);

  // ties pick the first state
  std::vector<PolicyCase> p2;
  marginalize_decision(scalar_table(PotKind::Utility, {{D, 2}}, {7, 7}), D, nullptr,
                       std::nullopt, &p2);
  CHECK(p2[0].state == 0);
}

TEST_CASE("probability parts weight a decision before it is maximized") {
  ValidationGuard g;
  MixedPotential mu;
  mu.discrete = scalar_table(PotKind::Discrete, {{D, 2}}, {0.5, 1.0});
  mu.utility = scalar_table(PotKind::Utility, {{D, 2}}, {16, 7});
  std::vector<PolicyCase> pol;
  MixedPotential out = marginalize_mixed_decision(mu, D, nullptr, std::nullopt, &pol);
  CHECK(out.discrete.is_identity());  // consumed by the fold
  CHECK(out.utility.eval({}, {}) == doctest::Approx(8.0));
  REQUIRE(pol.size() == 1);
  CHECK(pol[0].state == 0);

  // with no utility in reach the fold is vacuous: zero value, first state
  MixedPotential blind;
  blind.discrete = scalar_table(PotKind::Discrete, {{D, 2}}, {0.5, 1.0});
  std::vector<PolicyCase> bp;
  MixedPotential bo = marginalize_mixed_decision(blind, D, nullptr, std::nullopt, &bp);
  CHECK(bo.utility.is_identity());
  CHECK(bo.discrete.is_identity());
  REQUIRE(bp.size() == 1);
  CHECK(bp[0].state == 0);

  // a decision absent from every slot is an error
  CHECK_THROWS_AS(marginalize_mixed_decision(MixedPotential{}, D, nullptr, std::nullopt, nullptr),
                  AlgebraError);

  // a slot not containing the decision passes through untouched
  MixedPotential keep;
  keep.continuous = density_pot({Y}, beta22(Y));
  keep.utility = scalar_table(PotKind::Utility, {{D, 2}}, {1, 2});
  MixedPotential ko = marginalize_mixed_decision(keep, D, nullptr, std::nullopt, nullptr);
  CHECK(structurally_equal(ko.continuous, keep.continuous));
  CHECK(ko.utility.eval({}, {}) == doctest::Approx(2.0));
}

TEST_CASE("a decision switching on an observed value yields threshold policies") {
  ValidationGuard g;
  Potential u(PotKind::Utility, {{D, 3}}, {Y});
  u.entry(0) = Entry{CAddend{box1(Y, 0.0, 4.0, {1.0}), {}}};
  u.entry(1) = Entry{CAddend{box1(Y, 0.0, 4.0, {0.0, 1.0}), {}}};
  u.entry(2) = Entry{CAddend{box1(Y, 0.0, 4.0, {4.0, -1.0}), {}}};
  std::vector<PolicyCase> pol;
  Potential r = marginalize_decision(u, D, nullptr, std::nullopt, &pol);
  CHECK(r.cont_vars() == std::vector<VarId>{Y});
  CHECK(r.eval({}, {{Y, 0.5}}) == doctest::Approx(3.5));
  CHECK(r.eval({}, {{Y, 3.0}}) == doctest::Approx(3.0));
  REQUIRE(pol.size() == 1);
  CHECK(pol[0].piecewise);
  CHECK(pol[0].observed == Y);
  REQUIRE(pol[0].breaks.size() == 1);
  CHECK(pol[0].breaks[0] == doctest::Approx(2.0));
  CHECK(pol[0].states == std::vector<int>{2, 1});
  CHECK(pol[0].lo == doctest::Approx(0.0));
  CHECK(pol[0].hi == doctest::Approx(4.0));
}

TEST_CASE("feasibility constraints restrict the choice per predecessor") {
  ValidationGuard g;
  Potential u = scalar_table(PotKind::Utility, {{D, 2}}, {5, 3});
  DecisionConstraint c{{{E, 2}}, {{0, 1}, {1}}};
  std::vector<PolicyCase> pol;
  Potential r = marginalize_decision(u, D, &c, std::nullopt, &pol);
  REQUIRE(r.axes().size() == 1);  // the result acquires the predecessor axis
  CHECK(r.axes()[0].var == E);
  CHECK(r.eval({{E, 0}}, {}) == doctest::Approx(5.0));
  CHECK(r.eval({{E, 1}}, {}) == doctest::Approx(3.0));
  REQUIRE(pol.size() == 2);
  CHECK(pol[0].config == DiscreteAssign{{E, 0}});
  CHECK(pol[0].state == 0);
  CHECK(pol[1].config == DiscreteAssign{{E, 1}});
  CHECK(pol[1].state == 1);

  DecisionConstraint empty{{{E, 2}}, {{0, 1}, {}}};
  CHECK_THROWS_AS(marginalize_decision(u, D, &empty, std::nullopt, nullptr), AlgebraError);
  DecisionConstraint oob{{{E, 2}}, {{0, 1}, {5}}};
  CHECK_THROWS_AS(marginalize_decision(u, D, &oob, std::nullopt, nullptr), AlgebraError);

  // ties pick the first state in the allowed order
  Potential tie = scalar_table(PotKind::Utility, {{D, 2}}, {7, 7});
  DecisionConstraint swapped{{{E, 1}}, {{1, 0}}};
  std::vector<PolicyCase> p2;
  marginalize_decision(tie, D, &swapped, std::nullopt, &p2);
  CHECK(p2[0].state == 1);
}

TEST_CASE("a continuous decision maximizes its utility curve") {
  ValidationGuard g;
  MixedPotential mu;
  mu.utility = utility_pot({P}, box1(P, 0.0, 10.0, {-4.0, 6.0, -1.0}));
  std::vector<PolicyCase> pol;
  MixedPotential out =
      marginalize_mixed_decision(mu, P, nullptr, Interval{0.0, 10.0}, &pol);
  CHECK(out.utility.eval({}, {}) == doctest::Approx(5.0));
  REQUIRE(pol.size() == 1);
  CHECK(pol[0].continuous);
  CHECK(pol[0].value == doctest::Approx(3.0));

  // entangled with another variable: that one must be eliminated first
  Potential bad(PotKind::Utility, {}, {P, Y});
  bad.entry(0) = Entry{CAddend{
      box2(Y, P, {0.0, 1.0}, {0.0, 1.0}, Polynomial::var(P) * Polynomial::var(Y)), {}}};
  CHECK_THROWS_AS(marginalize_decision(bad, P, nullptr, Interval{0.0, 1.0}, nullptr),
                  AlgebraError);

  // a flat utility needs an explicit domain; the leftmost point is chosen
  Potential flat(PotKind::Utility, {}, {P});
  flat.entry(0) = Entry{CAddend{MOP::scalar(2.0), {}}};
  CHECK_THROWS_AS(marginalize_decision(flat, P, nullptr, std::nullopt, nullptr), AlgebraError);
  std::vector<PolicyCase> p2;
  Potential r2 = marginalize_decision(flat, P, nullptr, Interval{1.0, 4.0}, &p2);
  CHECK(r2.eval({}, {}) == doctest::Approx(2.0));
  CHECK(p2[0].value == doctest::Approx(1.0));

  // constraints apply to discrete decisions only
  DecisionConstraint c{{{E, 2}}, {{0}, {1}}};
  CHECK_THROWS_AS(
      marginalize_decision(mu.utility, P, &c, Interval{0.0, 10.0}, nullptr), AlgebraError);
}

TEST_CASE("probability parts containing a decision fold before maximizing") {
  ValidationGuard g;
  Potential pd = scalar_table(PotKind::Discrete, {{D, 2}}, {0.5, 1.0});
  Potential cd(PotKind::Continuous, {{D, 2}}, {Y});
  cd.entry(0) = Entry{CAddend{box1(Y, 0.0, 1.0, {2.0}), {}}};
  cd.entry(1) = Entry{CAddend{box1(Y, 0.0, 1.0, {0.0, 2.0}), {}}};
  Potential u = utility_pot({Y}, box1(Y, 0.0, 1.0, {0.0, 1.0}));
  MixedPotential mu{pd, cd, u};

  std::vector<PolicyCase> pol;
  MixedPotential out = marginalize_mixed_decision(mu, D, nullptr, std::nullopt, &pol);
  CHECK(out.discrete.is_identity());
  CHECK(out.continuous.is_identity());
  CHECK(out.utility.eval({}, {{Y, 0.25}}) == doctest::Approx(0.25));   // y wins low
  CHECK(out.utility.eval({}, {{Y, 0.75}}) == doctest::Approx(1.125));  // 2y^2 wins high
  REQUIRE(pol.size() == 1);
  CHECK(pol[0].piecewise);
  CHECK(pol[0].observed == Y);
  REQUIRE(pol[0].breaks.size() == 1);
  CHECK(pol[0].breaks[0] == doctest::Approx(0.5));
  CHECK(pol[0].states == std::vector<int>{0, 1});
}
