#ifndef MOPID_POTENTIALS_HPP
#define MOPID_POTENTIALS_HPP

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mopid/mop.hpp"

namespace mopid {

enum class PotKind { Discrete, Continuous, Utility };

// One discrete axis of a table: variable id and its number of states.
struct DiscreteAxis {
  VarId var;
  int states;
  bool operator==(const DiscreteAxis& o) const { return var == o.var && states == o.states; }
};

// A weighted point mass  weight * delta(target - g)  riding on an addend; g is
// a MOP in other continuous variables.  While `bound` is false the mass is a
// live factor: marginalizing its target substitutes g into the co-factors
// (sifting).  `bound` is set when that substitution cannot be expressed on
// rectangular pieces (g multivariate, target bounded in the co-factor): the
// target's integral is then recorded as already taken, and the substitution is
// resolved in closed form when one of g's variables is integrated out.
struct DiracTerm {
  VarId target = -1;
  double weight = 1.0;
  MOP g;
  bool bound = false;
};

// A product of one polynomial factor and zero or more point masses.
struct CAddend {
  MOP density;  // scalar 1 for a pure point mass
  std::vector<DiracTerm> diracs;
};

// A table entry: a sum of addends.  The empty sum is the zero function (and
// the utility identity).
using Entry = std::vector<CAddend>;

using DiscreteAssign = std::vector<std::pair<VarId, int>>;
using ContinuousPoint = std::vector<std::pair<VarId, double>>;

// A potential: a table over the configurations of its discrete axes whose
// entries are sums of (piecewise polynomial x point masses) over the
// continuous variables.  Kind tags how the potential combines and what its
// values mean; the representation is shared.
class Potential {
 public:
  Potential(PotKind kind, std::vector<DiscreteAxis> axes, std::vector<VarId> cont_vars);
  static Potential identity(PotKind kind);

  PotKind kind() const { return kind_; }
  const std::vector<DiscreteAxis>& axes() const { return axes_; }
  const std::vector<VarId>& cont_vars() const { return cvars_; }
  std::vector<VarId> domain() const;  // axis vars + continuous vars, ascending
  bool in_domain(VarId v) const;
  std::size_t num_configs() const { return table_.size(); }

  Entry& entry(std::size_t idx) { return table_.at(idx); }
  const Entry& entry(std::size_t idx) const { return table_.at(idx); }

  // Index of the configuration selecting assign[var] on every axis.
  std::size_t index_of(const DiscreteAssign& assign) const;
  // State per axis (axis order) of a flat index.
  std::vector<int> config_of(std::size_t idx) const;

  // Same table, different kind tag (mixed marginalization moves marginals
  // between slots).
  Potential retag(PotKind kind) const;

  // True when every entry is the dirac-free constant 1.
  bool is_vacuous_ones() const;
  // True when this is the identity element of its kind.
  bool is_identity() const;

  // Pointwise value at a joint assignment; entries reached must be free of
  // point masses.
  double eval(const DiscreteAssign& assign, const ContinuousPoint& point) const;

  std::string describe() const;

 private:
  PotKind kind_;
  std::vector<DiscreteAxis> axes_;  // ascending by var
  std::vector<VarId> cvars_;       // ascending
  std::vector<Entry> table_;       // mixed-radix over axes_
};

// --- combination ------------------------------------------------------------

// Pointwise product.  Allowed: discrete x discrete, continuous x continuous,
// and probability x utility (result utility).  Discrete x continuous is
// rejected: those factors live in separate slots of a MixedPotential until a
// mixed marginalization fixes the kind of their product.  Utility x utility is
// rejected (utilities combine additively; see combine_utility).
Potential combine_mul(const Potential& a, const Potential& b);

// Pointwise sum over the union domain (utility combination).
Potential combine_utility(const Potential& a, const Potential& b);

// Pointwise product with the result kind imposed by the caller; used by the
// mixed-marginalization cases, which dictate the slot a product lands in.
Potential combine_as(const Potential& a, const Potential& b, PotKind kind);

// --- marginalization of a chance variable ------------------------------------

// Removes chance variable X: sums a discrete axis or integrates a continuous
// variable out.  Point masses targeting X sift their relation into the
// co-factors; when the sift has no rectangular representation and the relation
// is affine it is deferred (DiracTerm::bound) and resolved in closed form when
// one of the relation's variables is integrated.  Point masses whose relation
// contains X as a non-target are rewritten by inverting the relation in X
// first (with the 1/|slope| factor folded in).  Decision variables are removed
// with marginalize_decision instead.
Potential marginalize_var(const Potential& p, VarId X);

// --- division -----------------------------------------------------------------

// Pointwise quotient a / m, where m is a marginal of a (its axes are a subset
// of a's).  Supported: all-ones divisors, piecewise-constant divisor entries
// (0/0 := 0 outside the divisor's support), and entries dividing exactly in
// the polynomial algebra piece by piece.  Divisor entries carrying point
// masses, and inexact quotients, throw DivisionNotClosed.  Point masses on the
// dividend ride through untouched.  The result keeps a's kind; callers retag
// when a case table dictates otherwise.
Potential divide(const Potential& a, const Potential& m);

// --- mixed potentials ----------------------------------------------------------

// Triple of potentials combined and marginalized componentwise.  Defaults are
// the identities: constant 1 for the probability slots, 0 for the utility.
struct MixedPotential {
  Potential discrete = Potential::identity(PotKind::Discrete);
  Potential continuous = Potential::identity(PotKind::Continuous);
  Potential utility = Potential::identity(PotKind::Utility);
};

MixedPotential combine_mixed(const MixedPotential& a, const MixedPotential& b);

// Feasibility constraint for a discrete decision: for every configuration of
// the predecessor axes, the allowed state indices in declared order.
struct DecisionConstraint {
  std::vector<DiscreteAxis> predecessors;
  std::vector<std::vector<int>> allowed;  // table over `predecessors`
};

// The optimal choice recorded for one configuration of the co-observed
// discrete variables when a decision is eliminated.
struct PolicyCase {
  DiscreteAssign config;        // configuration of the remaining discrete axes
  bool continuous = false;      // continuous decision: `value` is the argmax
  double value = 0.0;
  bool piecewise = false;       // discrete choice switching on an observed
  VarId observed = -1;          //   continuous variable
  std::vector<double> breaks;   // interior thresholds, increasing
  std::vector<int> states;      // winning state per span (piecewise case)...
  int state = -1;               // ...or the single winning state
  double lo = 0.0, hi = 0.0;    // span of `observed` the cases cover
};

// Removes decision X from a utility potential by maximization.  For a
// discrete X, `constraint` (optional) restricts the choice per predecessor
// configuration — the result then acquires the predecessor axes.  For a
// continuous X, `domain` bounds the optimization; every entry must depend on X
// alone.  Ties pick the first allowed state / leftmost argmax.  The chosen
// policy is appended to *policy (one case per remaining configuration) when it
// is non-null.
Potential marginalize_decision(const Potential& v, VarId X, const DecisionConstraint* constraint,
                               const std::optional<Interval>& domain,
                               std::vector<PolicyCase>* policy);

// Removes decision X from the triple.  Probability parts containing X fold
// into the utility first, then marginalize_decision maximizes; X must appear
// in at least one of the three parts.
MixedPotential marginalize_mixed_decision(const MixedPotential& mu, VarId X,
                                          const DecisionConstraint* constraint,
                                          const std::optional<Interval>& domain,
                                          std::vector<PolicyCase>* policy);

// Chance-variable classification consulted by the mixed dispatch (which slot a
// marginal lands in depends on whether the remaining companions are discrete
// or continuous chance variables).
struct ChanceClasses {
  std::set<VarId> discrete;
  std::set<VarId> continuous;
};

// Removes chance variable X from the triple.  The general forms divide the
// probability part containing X by its X-marginal (conditioning) before
// weighting the utility; with allow_shortcut the division-free forms are used
// instead, which is sound when at most one utility factor exists in the whole
// model or the divisor is vacuous.
MixedPotential marginalize_mixed_chance(const MixedPotential& mu, VarId X,
                                        const ChanceClasses& classes, bool allow_shortcut);

}  // namespace mopid

#endif  // MOPID_POTENTIALS_HPP
