#ifndef MOPID_ROOTS_HPP
#define MOPID_ROOTS_HPP

#include "mopid/polynomial.hpp"

namespace mopid {

// Real roots of a univariate polynomial restricted to [lo, hi), strictly
// increasing.  `everywhere_zero` flags the identically-zero polynomial;
// callers treat that as "no crossing".
struct RootList {
  std::vector<double> roots;
  bool everywhere_zero = false;
};

inline constexpr double kRootResidualTol = 1e-10;

// Finds all real roots of p (which must reference at most the single
// variable v) inside [lo, hi).  Method: the roots of p' partition the
// interval into monotone segments; sign changes are bracketed by bisection
// and polished by Newton's method.  Tangential (even-multiplicity) roots are
// picked up at the critical points themselves.  Infinite endpoints are
// clipped to the Cauchy root bound.  Each returned root r satisfies
// |p(r)| <= 1e-10 * (1 + max|p| on the interval).
RootList roots_in_interval(const Polynomial& p, VarId v, double lo, double hi);

}  // namespace mopid

#endif  // MOPID_ROOTS_HPP
