#ifndef MOPID_MOP_HPP
#define MOPID_MOP_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mopid/polynomial.hpp"

namespace mopid {

// Thrown when a pointwise quotient has no representation in the piecewise
// polynomial algebra (the algebra is not closed under division).
class DivisionNotClosed : public AlgebraError {
 public:
  explicit DivisionNotClosed(const std::string& what) : AlgebraError(what) {}
};

// Half-open interval [lo, hi); lo = -inf / hi = +inf are permitted.
struct Interval {
  double lo;
  double hi;
  bool finite() const;
  bool contains(double x) const { return x >= lo && x < hi; }
  bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

// Axis-aligned box over the owning MOP's scope: one interval per scope
// variable, in scope order.
struct Region {
  std::vector<Interval> bounds;
};

// One piece of a MOP.  The polynomial is expressed in offsets from `anchor`
// (one anchor coordinate per scope variable): the value at a point x is
// poly(x - anchor).  Anchoring pieces near their region keeps coefficient
// magnitudes small when regions sit far from the origin.
struct Piece {
  Region region;
  std::vector<double> anchor;
  Polynomial poly;
};

// Mixture of polynomials: piecewise polynomial over disjoint boxes, zero
// outside all pieces.  A scope-empty MOP with one piece is a plain number;
// zero pieces is the zero function.
class MOP {
 public:
  MOP() = default;
  static MOP zero() { return MOP(); }
  static MOP scalar(double c);
  // Single piece over the given scope/region with anchor at region midpoints
  // (0 on infinite axes).
  static MOP piecewise_one(const std::vector<VarId>& scope, const Region& region);

  const std::vector<VarId>& scope() const { return scope_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  bool is_zero() const { return pieces_.empty(); }
  bool is_scalar() const { return scope_.empty(); }
  double scalar_value() const;  // requires is_scalar()

  bool in_scope(VarId v) const;
  int index_of(VarId v) const;  // -1 if absent

  double eval(const std::vector<std::pair<VarId, double>>& point) const;

  // Construction helper: append a piece (region in scope order).  Zero
  // polynomials are skipped; degenerate regions are skipped.
  void append_piece(const Region& region, const std::vector<double>& anchor, const Polynomial& poly);

  // Throws AlgebraError describing the first violated invariant, if any.
  void validate() const;

  std::string describe() const;

  friend MOP mop_from_pieces(std::vector<VarId> scope, std::vector<Piece> pieces, bool refine);

 private:
  std::vector<VarId> scope_;   // ascending
  std::vector<Piece> pieces_;  // pairwise disjoint regions
};

// --- construction --------------------------------------------------------

// Builds a MOP from (possibly overlapping) pieces.  With refine = true the
// pieces are summed on their common grid refinement; with refine = false the
// caller guarantees disjointness.
MOP mop_from_pieces(std::vector<VarId> scope, std::vector<Piece> pieces, bool refine);

// --- algebra --------------------------------------------------------------

MOP add(const MOP& a, const MOP& b);
MOP subtract(const MOP& a, const MOP& b);
MOP multiply(const MOP& a, const MOP& b);
MOP scale(const MOP& a, double c);

// Exact integral over v; every piece must have finite v-bounds.
MOP integrate_out(const MOP& m, VarId v);

// Piecewise partial derivative.
MOP differentiate(const MOP& m, VarId v);

// Composition: result(y) = m(y, v = g(y)) on the support of g, 0 elsewhere.
// Supported: (a) every piece of m is unbounded in v (pure composition with
// any g), or (b) g has at most one scope variable (piece boundaries located
// by root isolation).  Anything else would need non-rectangular regions and
// raises AlgebraError.
MOP substitute(const MOP& m, VarId v, const MOP& g);

// Resolves a deferred point-mass binding v = g(x, y) in closed form while
// integrating x out:
//   result(y, rest) = integral over x of m(v := g(x, y), x, rest) dx.
// Both v and x leave the scope; the carrier y (g's other variable, if any)
// enters it.  Requirements: g is one affine piece with unbounded support,
// references x, and has at most one scope variable besides x.  The result is
// piecewise in the carrier, with breakpoints where the integration limits
// (piece bounds of m in x vs. the window induced by m's bounds in v)
// exchange roles.
MOP integrate_affine_binding(const MOP& m, VarId v, VarId x, const MOP& g);

// Pointwise quotient num / den.  Supported: scalar divisors, piecewise
// constant divisors (num is dropped outside den's support: 0/0 := 0; the
// caller guarantees num vanishes there), and divisors dividing num exactly in
// the polynomial algebra on every intersection cell.  Anything else throws
// DivisionNotClosed.
MOP divide_mop(const MOP& num, const MOP& den);

// Restrict v to [lo, hi): drops/clips pieces outside.
MOP restrict_var(const MOP& m, VarId v, double lo, double hi);

// Fix v = x: the result loses v from its scope.
MOP pin(const MOP& m, VarId v, double x);

// Rename a scope variable (the new id must not already be in scope).
MOP rename_var(const MOP& m, VarId from, VarId to);

// max over tagged alternatives on a shared 1-variable scope, with the
// winning tag per interval.  Ties go to the earlier-listed alternative.
struct PiecewisePolicy {
  std::vector<double> breaks;  // interior breakpoints, strictly increasing
  std::vector<int> winners;    // size = breaks.size() + 1, tags per interval
  double lo = 0.0, hi = 0.0;   // overall domain covered
};
std::pair<MOP, PiecewisePolicy> pointwise_max(const std::vector<MOP>& alts);

// Global maximum of a univariate MOP, optionally restricted to a domain.
// Returns (max value, leftmost argmax).
std::pair<double, double> maximize_1d(const MOP& m, std::optional<Interval> domain = std::nullopt);

// Scale a univariate MOP so it integrates to exactly 1.
MOP normalize(const MOP& m, VarId v);

// --- test hooks -----------------------------------------------------------

// When enabled (tests), every operation validates its result.
void set_mop_validation(bool enabled);
bool mop_validation_enabled();

// Numeric quadrature of a univariate MOP restricted to [lo, hi]
// (Gauss-Legendre per piece) - used by tests as an independent check.
double quadrature_1d(const MOP& m, VarId v, double lo, double hi);

}  // namespace mopid

#endif  // MOPID_MOP_HPP
