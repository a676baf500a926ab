// Folds an influence diagram along an elimination plan.  The pool starts with
// one mixed potential per declared conditional and per utility; each step
// fuses the items the plan assigned to it, removes the step's variable
// (maximization for decisions, summation/integration for chance), and returns
// the result to the pool under the plan's label.  After the last step every
// surviving item is scalar and their product is the maximum expected utility.

#include "mopid/solver.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mopid {

namespace {

struct PoolItem {
  std::string label;
  MixedPotential pot;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool mixed_contains(const MixedPotential& p, VarId v) {
  return p.discrete.in_domain(v) || p.continuous.in_domain(v) || p.utility.in_domain(v);
}

bool mixed_scalar(const MixedPotential& p) {
  return p.discrete.domain().empty() && p.continuous.domain().empty() &&
         p.utility.domain().empty();
}

std::size_t pieces_in(const Potential& p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.num_configs(); ++i)
    for (const CAddend& a : p.entry(i)) n += a.density.pieces().size();
  return n;
}

// One item per chance conditional ("p(X)" / "p(X|A,B)") and per utility,
// labelled exactly as plan_elimination labels its pool.
std::vector<PoolItem> initial_pool(const InfluenceDiagram& id) {
  std::vector<PoolItem> pool;
  for (const Variable& v : id.variables) {
    if (!kind_is_chance(v.kind)) continue;
    const PotentialDecl* d = id.decl_for(v.id);
    const Potential* p = id.potential_for(v.id);
    if (!d || !p) continue;
    PoolItem it;
    it.label =
        d->given.empty() ? "p(" + v.name + ")" : "p(" + v.name + "|" + join(d->given, ",") + ")";
    switch (p->kind()) {
      case PotKind::Discrete: it.pot.discrete = *p; break;
      case PotKind::Continuous: it.pot.continuous = *p; break;
      case PotKind::Utility: it.pot.utility = *p; break;
    }
    pool.push_back(std::move(it));
  }
  for (std::size_t i = 0; i < id.utility_decls.size(); ++i) {
    PoolItem it;
    it.label = id.utility_decls[i].name;
    it.pot.utility = id.utility_potentials.at(i);
    pool.push_back(std::move(it));
  }
  return pool;
}

// Removes the labelled items from the pool and combines them (in pool order).
MixedPotential fuse_labels(std::vector<PoolItem>& pool, const std::vector<std::string>& labels,
                           const std::string& step_name) {
  std::set<std::string> want(labels.begin(), labels.end());
  MixedPotential fused;
  std::vector<PoolItem> rest;
  std::size_t taken = 0;
  for (PoolItem& it : pool) {
    if (want.count(it.label)) {
      fused = combine_mixed(fused, it.pot);
      ++taken;
    } else {
      rest.push_back(std::move(it));
    }
  }
  if (taken != want.size())
    throw AlgebraError("internal: elimination step for '" + step_name +
                       "' references potentials missing from the pool");
  pool = std::move(rest);
  return fused;
}

// Combines whatever survived the plan; all of it must be variable-free.
double scalar_root(const std::vector<PoolItem>& leftovers) {
  MixedPotential total;
  for (const PoolItem& it : leftovers) total = combine_mixed(total, it.pot);
  if (!mixed_scalar(total))
    throw AlgebraError("internal: variables remain after the elimination plan");
  return total.discrete.eval({}, {}) * total.continuous.eval({}, {}) *
         total.utility.eval({}, {});
}

// Sums an entry's addends into a single curve; fails if a point mass is still
// attached (nothing plottable then).
bool entry_total(const Entry& e, MOP* out) {
  MOP acc = MOP::zero();
  for (const CAddend& a : e) {
    if (!a.diracs.empty()) return false;
    acc = add(acc, a.density);
  }
  *out = std::move(acc);
  return true;
}

// Captures the expected-utility curves at a decision's step, just before
// maximization.  The probability parts fold into the utility so the curves
// are on the expected-utility scale.  Continuous decision: the single fused
// curve over the decision variable.  Discrete decision: one curve per allowed
// alternative over the single continuous variable in scope, taken at the
// discrete configuration with the most alternatives (ties toward the first).
void capture_plot(const InfluenceDiagram& id, const Variable& dec, const MixedPotential& fused,
                  std::vector<PlotData>& plots) {
  Potential eff =
      combine_as(fused.discrete, combine_as(fused.continuous, fused.utility, PotKind::Utility),
                 PotKind::Utility);

  if (dec.kind == VarKind::DecisionContinuous) {
    if (!eff.axes().empty()) return;
    if (eff.cont_vars() != std::vector<VarId>{dec.id}) return;
    MOP curve;
    if (!entry_total(eff.entry(0), &curve)) return;
    PlotData pd;
    pd.decision = dec.name;
    pd.x_var = dec.name;
    pd.x_id = dec.id;
    pd.x_log = dec.log_scale;
    pd.range = dec.domain;
    pd.curves.push_back(std::move(curve));
    plots.push_back(std::move(pd));
    return;
  }

  if (eff.cont_vars().size() != 1) return;
  const VarId sid = eff.cont_vars()[0];
  const Variable& sv = id.var(sid);
  bool has_dec_axis = false;
  for (const DiscreteAxis& ax : eff.axes()) has_dec_axis = has_dec_axis || ax.var == dec.id;
  if (!has_dec_axis) return;

  const DecisionConstraint* cons = nullptr;
  auto cit = id.constraints.find(dec.id);
  if (cit != id.constraints.end()) cons = &cit->second;

  // context = the other discrete axes, plus constraint predecessors not among
  // them (their configuration decides which alternatives are allowed)
  std::vector<DiscreteAxis> ctx;
  for (const DiscreteAxis& ax : eff.axes())
    if (ax.var != dec.id) ctx.push_back(ax);
  if (cons)
    for (const DiscreteAxis& ax : cons->predecessors) {
      bool seen = false;
      for (const DiscreteAxis& c : ctx) seen = seen || c.var == ax.var;
      if (!seen) ctx.push_back(ax);
    }
  std::size_t total = 1;
  for (const DiscreteAxis& ax : ctx) total *= static_cast<std::size_t>(ax.states);

  auto allowed_for = [&](const DiscreteAssign& a) -> std::vector<int> {
    if (!cons) {
      std::vector<int> all(dec.states.size());
      for (std::size_t s = 0; s < all.size(); ++s) all[s] = static_cast<int>(s);
      return all;
    }
    std::size_t idx = 0;
    for (const DiscreteAxis& ax : cons->predecessors) {
      int st = 0;
      for (const auto& [v, s] : a)
        if (v == ax.var) st = s;
      idx = idx * static_cast<std::size_t>(ax.states) + static_cast<std::size_t>(st);
    }
    return cons->allowed.at(idx);
  };

  DiscreteAssign best;
  std::vector<int> best_allowed;
  for (std::size_t i = 0; i < total; ++i) {
    DiscreteAssign a;
    std::size_t rem = i;
    for (std::size_t k = ctx.size(); k-- > 0;) {
      a.emplace_back(ctx[k].var, static_cast<int>(rem % static_cast<std::size_t>(ctx[k].states)));
      rem /= static_cast<std::size_t>(ctx[k].states);
    }
    std::reverse(a.begin(), a.end());
    std::vector<int> al = allowed_for(a);
    if (al.size() > best_allowed.size()) {
      best = std::move(a);
      best_allowed = std::move(al);
    }
  }
  if (best_allowed.empty()) return;

  PlotData pd;
  pd.decision = dec.name;
  pd.x_var = sv.name;
  pd.x_id = sid;
  pd.x_log = sv.log_scale;
  pd.range = sv.domain;
  for (int s : best_allowed) {
    DiscreteAssign a = best;
    a.emplace_back(dec.id, s);
    MOP curve;
    if (!entry_total(eff.entry(eff.index_of(a)), &curve)) return;
    pd.labels.push_back(dec.states.at(static_cast<std::size_t>(s)));
    pd.curves.push_back(std::move(curve));
  }
  plots.push_back(std::move(pd));
}

// Clips threshold rules to the observed variable's declared domain and
// resolves exact-tie spans toward the neighbouring winner, so reported
// policies carry only decisive thresholds.  (Maximization breaks ties toward
// the first allowed state, which can open a span of its own where the
// alternatives coincide — typically where every payoff is identically zero.)
// A rule left with a single span collapses to a fixed choice.
void tidy_policy(const InfluenceDiagram& id, const Potential& eff, const Variable& dec,
                 std::vector<PolicyCase>& cases) {
  for (PolicyCase& pc : cases) {
    if (!pc.piecewise) continue;
    const Variable& ov = id.var(pc.observed);
    const double lo = std::max(pc.lo, ov.domain.lo);
    const double hi = std::min(pc.hi, ov.domain.hi);
    if (!(hi > lo)) continue;

    struct Span {
      double a, b;
      int s;
    };
    std::vector<Span> raw;
    for (std::size_t k = 0; k < pc.states.size(); ++k) {
      const double a = std::max(k == 0 ? pc.lo : pc.breaks[k - 1], lo);
      const double b = std::min(k + 1 == pc.states.size() ? pc.hi : pc.breaks[k], hi);
      if (b > a) raw.push_back(Span{a, b, pc.states[k]});
    }
    if (raw.empty()) continue;

    // drop slivers of negligible width (piece-boundary rounding dust); a
    // dropped sliver donates its width to the neighbouring span
    const double eps = 1e-9 * (hi - lo);
    std::vector<Span> spans;
    const double carry_lo = raw.front().a;
    for (const Span& sp : raw) {
      if (sp.b - sp.a <= eps) {
        if (!spans.empty()) spans.back().b = sp.b;
        continue;
      }
      Span s = sp;
      if (spans.empty()) s.a = carry_lo;
      spans.push_back(s);
    }
    if (spans.empty()) continue;

    // the expected-utility curve of one alternative for this configuration
    auto curve = [&](int state, MOP* out) {
      DiscreteAssign a = pc.config;
      a.emplace_back(dec.id, state);
      return entry_total(eff.entry(eff.index_of(a)), out);
    };
    auto tied_on = [&](const Span& sp, int other) {
      MOP cu, cw;
      if (!curve(sp.s, &cu) || !curve(other, &cw)) return false;
      MOP diff = subtract(cu, cw);
      return multiply(diff, MOP::piecewise_one({pc.observed}, Region{{Interval{sp.a, sp.b}}}))
          .is_zero();
    };
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].s != spans[i - 1].s && tied_on(spans[i], spans[i - 1].s))
        spans[i].s = spans[i - 1].s;
    for (std::size_t i = spans.size() - 1; i-- > 0;)
      if (spans[i].s != spans[i + 1].s && tied_on(spans[i], spans[i + 1].s))
        spans[i].s = spans[i + 1].s;
    std::vector<Span> merged;
    for (const Span& sp : spans) {
      if (!merged.empty() && merged.back().s == sp.s && merged.back().b == sp.a)
        merged.back().b = sp.b;
      else
        merged.push_back(sp);
    }

    // a threshold rule is total: where no alternative carries utility any
    // allowed choice is optimal, so the edge winners extend to the domain
    pc.lo = ov.domain.lo;
    pc.hi = ov.domain.hi;
    if (merged.size() == 1) {
      pc.piecewise = false;
      pc.state = merged[0].s;
      pc.breaks.clear();
      pc.states.clear();
    } else {
      pc.breaks.clear();
      pc.states.clear();
      for (std::size_t i = 0; i < merged.size(); ++i) {
        if (i) pc.breaks.push_back(merged[i].a);
        pc.states.push_back(merged[i].s);
      }
    }
  }
}

// Turns one decision rule into a conditional over {decision} given the case
// configuration variables: a unit point mass at the chosen value for a
// continuous decision, a one-hot row for a fixed state, and indicator
// functions over the observed variable's whole domain for a threshold rule.
// Configurations no case covers stay zero.
Potential rule_potential(const InfluenceDiagram& id, const DecisionRule& rule, VarId vid) {
  const Variable& v = id.var(vid);
  if (rule.cases.empty())
    throw AlgebraError("strategy rule for '" + v.name + "' has no cases");

  std::vector<DiscreteAxis> axes;
  for (const auto& [cv, st] : rule.cases.front().config) {
    (void)st;
    const Variable& c = id.var(cv);
    if (!kind_is_discrete(c.kind))
      throw AlgebraError("strategy rule for '" + v.name +
                         "' conditions on a non-discrete variable '" + c.name + "'");
    axes.push_back(DiscreteAxis{cv, static_cast<int>(c.states.size())});
  }
  const bool continuous = v.kind == VarKind::DecisionContinuous;
  std::set<VarId> cvars;
  if (continuous) {
    cvars.insert(vid);
  } else {
    axes.push_back(DiscreteAxis{vid, static_cast<int>(v.states.size())});
    for (const PolicyCase& pc : rule.cases)
      if (pc.piecewise) cvars.insert(pc.observed);
  }

  Potential p(PotKind::Continuous, std::move(axes), std::vector<VarId>(cvars.begin(), cvars.end()));
  for (const PolicyCase& pc : rule.cases) {
    if (continuous) {
      DiracTerm t;
      t.target = vid;
      t.weight = 1.0;
      t.g = MOP::scalar(pc.value);
      p.entry(p.index_of(pc.config)) = Entry{CAddend{MOP::scalar(1.0), {t}}};
    } else if (!pc.piecewise) {
      if (pc.state < 0 || pc.state >= static_cast<int>(v.states.size()))
        throw AlgebraError("strategy rule for '" + v.name + "' picks an unknown state");
      DiscreteAssign a = pc.config;
      a.emplace_back(vid, pc.state);
      p.entry(p.index_of(a)) = Entry{CAddend{MOP::scalar(1.0), {}}};
    } else {
      const Variable& ov = id.var(pc.observed);
      if (kind_is_discrete(ov.kind))
        throw AlgebraError("strategy rule for '" + v.name +
                           "' switches on a discrete variable '" + ov.name + "'");
      if (pc.states.size() != pc.breaks.size() + 1)
        throw AlgebraError("strategy rule for '" + v.name +
                           "' has mismatched thresholds and winners");
      // spans clipped to the observed variable's declared domain; the first
      // and last winners extend to its edges
      const double lo = ov.domain.lo;
      const double hi = ov.domain.hi;
      std::map<int, MOP> indicator;
      for (std::size_t k = 0; k < pc.states.size(); ++k) {
        const double a = k == 0 ? lo : std::max(lo, pc.breaks[k - 1]);
        const double b = k + 1 == pc.states.size() ? hi : std::min(hi, pc.breaks[k]);
        if (!(b > a)) continue;
        MOP span = MOP::piecewise_one({pc.observed}, Region{{Interval{a, b}}});
        auto it = indicator.find(pc.states[k]);
        if (it == indicator.end())
          indicator.emplace(pc.states[k], std::move(span));
        else
          it->second = add(it->second, span);
      }
      for (auto& [s, ind] : indicator) {
        if (s < 0 || s >= static_cast<int>(v.states.size()))
          throw AlgebraError("strategy rule for '" + v.name + "' picks an unknown state");
        DiscreteAssign a = pc.config;
        a.emplace_back(vid, s);
        p.entry(p.index_of(a)) = Entry{CAddend{std::move(ind), {}}};
      }
    }
  }
  return p;
}

}  // namespace

const DecisionRule* SolveResult::rule_for(const std::string& name) const {
  for (const DecisionRule& r : rules)
    if (r.name == name) return &r;
  return nullptr;
}

SolveResult solve(const InfluenceDiagram& id, const SolveOptions& opts) {
  const std::vector<std::string>* requested = opts.order ? &*opts.order : nullptr;
  EliminationPlan plan = plan_elimination(id, requested);
  const ChanceClasses classes = id.chance_classes();
  std::vector<PoolItem> pool = initial_pool(id);

  SolveResult res;
  for (std::size_t k = 0; k < plan.steps.size(); ++k) {
    const PlanStep& st = plan.steps[k];
    const Variable& v = id.var(st.var);
    const auto step_start = std::chrono::steady_clock::now();
    MixedPotential fused = fuse_labels(pool, st.fused, st.name);

    MixedPotential next;
    if (kind_is_decision(v.kind)) {
      if (opts.capture_plots) capture_plot(id, v, fused, res.plots);
      const DecisionConstraint* cons = nullptr;
      auto cit = id.constraints.find(v.id);
      if (cit != id.constraints.end()) cons = &cit->second;
      std::optional<Interval> dom;
      if (v.kind == VarKind::DecisionContinuous) dom = v.domain;
      DecisionRule rule;
      rule.var = v.id;
      rule.name = v.name;
      rule.continuous = v.kind == VarKind::DecisionContinuous;
      next = marginalize_mixed_decision(fused, v.id, cons, dom, &rule.cases);
      if (v.kind == VarKind::DecisionDiscrete) {
        Potential eff = combine_as(fused.discrete,
                                   combine_as(fused.continuous, fused.utility, PotKind::Utility),
                                   PotKind::Utility);
        tidy_policy(id, eff, v, rule.cases);
      }
      res.rules.push_back(std::move(rule));
    } else {
      next = marginalize_mixed_chance(fused, v.id, classes, opts.allow_shortcut);
    }

    StepDiag diag;
    diag.var = st.name;
    diag.fused = st.fused;
    diag.discrete_configs =
        next.discrete.num_configs() + next.continuous.num_configs() + next.utility.num_configs();
    diag.continuous_pieces = pieces_in(next.discrete) + pieces_in(next.continuous);
    diag.utility_pieces = pieces_in(next.utility);
    diag.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - step_start)
            .count();
    res.steps.push_back(std::move(diag));

    pool.push_back(PoolItem{"r" + std::to_string(k + 1), std::move(next)});
  }
  res.root_value = scalar_root(pool);
  return res;
}

double evaluate_strategy(const InfluenceDiagram& id, const std::vector<DecisionRule>& rules,
                         bool allow_shortcut) {
  std::map<VarId, const DecisionRule*> by_var;
  for (const DecisionRule& r : rules) {
    VarId vid = r.var >= 0 ? r.var : id.id_of(r.name);
    if (vid < 0 || !kind_is_decision(id.var(vid).kind))
      throw AlgebraError("strategy rule '" + r.name + "' does not name a decision");
    if (!by_var.emplace(vid, &r).second)
      throw AlgebraError("duplicate strategy rule for '" + id.var(vid).name + "'");
  }
  for (const Variable& v : id.variables)
    if (kind_is_decision(v.kind) && !by_var.count(v.id))
      throw AlgebraError("strategy is missing a rule for decision '" + v.name + "'");

  // with every decision replaced by a conditional, the whole fold is chance
  // marginalization; decisions join the class matching their value type
  ChanceClasses classes = id.chance_classes();
  for (const Variable& v : id.variables) {
    if (v.kind == VarKind::DecisionDiscrete) classes.discrete.insert(v.id);
    if (v.kind == VarKind::DecisionContinuous) classes.continuous.insert(v.id);
  }

  std::vector<PoolItem> pool = initial_pool(id);
  for (const auto& [vid, r] : by_var) {
    PoolItem it;
    it.label = "rule(" + id.var(vid).name + ")";
    it.pot.continuous = rule_potential(id, *r, vid);
    pool.push_back(std::move(it));
  }

  EliminationPlan plan = plan_elimination(id);
  for (std::size_t k = 0; k < plan.steps.size(); ++k) {
    const VarId x = plan.steps[k].var;
    MixedPotential fused;
    std::vector<PoolItem> rest;
    bool any = false;
    for (PoolItem& it : pool) {
      if (mixed_contains(it.pot, x)) {
        fused = combine_mixed(fused, it.pot);
        any = true;
      } else {
        rest.push_back(std::move(it));
      }
    }
    pool = std::move(rest);
    if (!any) continue;
    pool.push_back(
        PoolItem{"e" + std::to_string(k + 1), marginalize_mixed_chance(fused, x, classes, allow_shortcut)});
  }
  return scalar_root(pool);
}

}  // namespace mopid
