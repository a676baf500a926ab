#ifndef MOPID_DISTRIBUTIONS_HPP
#define MOPID_DISTRIBUTIONS_HPP

#include <functional>
#include <string>
#include <vector>

#include "mopid/mop.hpp"

namespace mopid {

// A smooth function presented through its derivatives: f(k, x) returns the
// k-th derivative at x (k = 0 is the value itself).
using DerivFn = std::function<double(int k, double x)>;

// Piecewise Taylor approximation: on each interval, the degree-d expansion
// of f around the matching center; zero outside the listed intervals.  The
// centers double as the piece anchors, so coefficients are the raw Taylor
// coefficients f^(k)(c)/k!.
MOP taylor_mop(const DerivFn& f, VarId v, const std::vector<Interval>& intervals,
               const std::vector<double>& centers, int degree);

// Standard normal density approximation: `pieces` equal slices of
// [-halfwidth, halfwidth), degree-d Taylor at slice midpoints, symmetrized
// (averaged with its own reflection, so odd moments cancel exactly) and then
// scaled to unit mass.
MOP std_normal_mop_custom(VarId v, double halfwidth, int pieces, int degree);

// The classic 6-piece degree-3 build on [-3, 3).
MOP std_normal_mop(VarId v);

// N(mu, sigma2) by affine change of variables on the standard build: piece
// bounds map through x = mu + sigma z and coefficients pick up 1/sigma^(k+1).
MOP normal_mop(VarId v, double mu, double sigma2);
MOP normal_mop_custom(VarId v, double mu, double sigma2, double halfwidth, int pieces,
                      int degree);

// Piecewise Taylor approximation of exp on [interval.lo, interval.hi), one
// equal-width slice per listed center.  Building block for utilities of a
// log-scale variable (payoffs need e^l on a bounded log-price range).
MOP lognormal_value_mop(VarId v, Interval interval, const std::vector<double>& centers,
                        int degree);

// Named curve registry for model files.  Families:
//   exp                          e^x
//   affine-exp(a, b)             a + b e^x
//   log-demand(alpha, beta)      (ln alpha - ln x) / beta
//   saturating-cost(k0,k1,k2,k3) k0 + k1 x + k2 (1 - e^(-x/k3))
// Throws AlgebraError for unknown names or wrong parameter counts.
DerivFn make_curve(const std::string& name, const std::vector<double>& params);

// A declared closed-form density, expanded to a MOP at load time and kept
// for exact sampling.  `lognormal` is handled through its normal logarithm:
// the owning variable holds the log-value and reports are transformed by
// exp, so the expanded MOP below is the normal one in every family.
struct DensitySpec {
  enum class Family { StandardNormal, Normal, LogNormal };
  Family family = Family::StandardNormal;
  double mu = 0.0;
  double sigma2 = 1.0;
  double halfwidth = 3.0;  // truncation, in standard deviations
  int pieces = 6;
  int degree = 3;
};

// Validates the spec (halfwidth >= 3, pieces >= 2, degree >= 2) and builds
// the MOP approximation.
MOP density_mop(VarId v, const DensitySpec& spec);

}  // namespace mopid

#endif  // MOPID_DISTRIBUTIONS_HPP
