#ifndef MOPID_SOLVER_HPP
#define MOPID_SOLVER_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mopid/model.hpp"

namespace mopid {

// The rule chosen for one decision: one case per configuration of the
// discrete variables the choice may depend on (constraint predecessors and
// co-observed discrete variables).  See PolicyCase for the per-configuration
// forms (fixed state, threshold rule over an observed continuous variable, or
// a continuous optimum).
struct DecisionRule {
  VarId var = -1;
  std::string name;
  bool continuous = false;
  std::vector<PolicyCase> cases;
};

// Sizes of the triple produced by one elimination step, for diagnostics.
struct StepDiag {
  std::string var;
  std::vector<std::string> fused;     // labels of the pool items combined
  std::size_t discrete_configs = 0;   // table cells across the result slots
  std::size_t continuous_pieces = 0;  // polynomial pieces in the probability parts
  std::size_t utility_pieces = 0;     // polynomial pieces in the utility part
  double wall_ms = 0.0;               // time spent on the step
};

// A curve captured at a decision's elimination step, for plotting.  For a
// continuous decision this is the fused expected utility as a function of the
// decision variable (one curve).  For a discrete decision observed through a
// continuous variable it is one expected-utility curve per allowed
// alternative, taken at the discrete configuration offering the most
// alternatives (ties resolved toward the first configuration).
struct PlotData {
  std::string decision;
  std::string x_var;               // the horizontal axis variable
  VarId x_id = -1;
  bool x_log = false;              // axis variable lives on a log scale
  Interval range{0.0, 0.0};
  std::vector<std::string> labels;  // one per curve; empty for a single curve
  std::vector<MOP> curves;
};

struct SolveOptions {
  std::optional<std::vector<std::string>> order;  // full or partial; default plan otherwise
  bool allow_shortcut = true;  // division-free marginalization forms
  bool capture_plots = false;
};

struct SolveResult {
  double root_value = 0.0;
  std::vector<DecisionRule> rules;  // in elimination order (last decision first)
  std::vector<StepDiag> steps;
  std::vector<PlotData> plots;

  const DecisionRule* rule_for(const std::string& name) const;
};

// Folds the diagram along an elimination plan: potentials fuse when they share
// the variable being removed, chance variables are summed or integrated out,
// decisions are maximized under their feasibility constraints, and the chosen
// policies are recorded.  The root value is the maximum expected utility.
SolveResult solve(const InfluenceDiagram& id, const SolveOptions& opts = {});

// Expected utility of the diagram under a fixed strategy (one rule per
// decision): each decision is replaced by its rule — a point mass for a
// continuous optimum, a one-hot table for a fixed state, an indicator over the
// observed variable for a threshold rule — and everything is marginalized as
// chance.  Exact up to the declared polynomial approximations; no sampling.
double evaluate_strategy(const InfluenceDiagram& id, const std::vector<DecisionRule>& rules,
                         bool allow_shortcut = true);

}  // namespace mopid

#endif  // MOPID_SOLVER_HPP
