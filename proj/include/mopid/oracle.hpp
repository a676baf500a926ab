#ifndef MOPID_ORACLE_HPP
#define MOPID_ORACLE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mopid/solver.hpp"

namespace mopid {

// Independent validators for the exact solver: forward Monte-Carlo strategy
// evaluation and exhaustive grid search over candidate rules.  The sampling
// semantics treat the declared model as ground truth: closed-form densities
// are drawn exactly (untruncated normals), categorical tables are drawn from
// their rows, piecewise-polynomial densities by inverse CDF, and
// deterministic relations and utilities evaluate their declared forms.

struct OracleEstimate {
  double mean = 0.0;
  double stderr_value = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  int workers = 1;  // worker count the estimate was computed with
};

// Forward-samples the chance process in causal order, applies the strategy's
// decision rules, and averages total utility.  The sample stream is split
// into fixed-size chunks whose substreams derive from (seed, chunk index) and
// whose partial sums are reduced in chunk order, so the estimate is
// bit-identical for any worker count.  Throws AlgebraError when a rule is
// missing, covers no sampled configuration, or depends on variables that are
// not determined before the decision.
OracleEstimate mc_evaluate(const InfluenceDiagram& id, const std::vector<DecisionRule>& strategy,
                           std::size_t n, std::uint64_t seed);

// Single-threaded reference implementation; returns the same bits.
OracleEstimate mc_evaluate_serial(const InfluenceDiagram& id,
                                  const std::vector<DecisionRule>& strategy, std::size_t n,
                                  std::uint64_t seed);

// A finite menu of candidate rules for one decision.
struct DecisionGrid {
  std::string decision;
  std::vector<DecisionRule> candidates;
};

struct GridSearchResult {
  std::vector<std::size_t> best_choice;  // per grid, the winning candidate index
  OracleEstimate best;
  std::size_t points_evaluated = 0;

  // The winning strategy assembled from the grids.
  std::vector<DecisionRule> best_rules(const std::vector<DecisionGrid>& grids) const;
};

// Exhaustively evaluates every combination of candidate rules (one per grid;
// the grids must cover every decision exactly once) with mc_evaluate, using
// the same seed for every point (common random numbers), and returns the
// combination with the best mean.  Ties keep the earlier combination.
GridSearchResult grid_search(const InfluenceDiagram& id, const std::vector<DecisionGrid>& grids,
                             std::size_t samples_per_point, std::uint64_t seed);

// A one-case rule fixing a continuous decision to a constant value.
DecisionRule constant_rule(const InfluenceDiagram& id, const std::string& decision, double value);

}  // namespace mopid

#endif  // MOPID_ORACLE_HPP
