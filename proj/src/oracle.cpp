// Forward Monte-Carlo evaluation of a fixed strategy, independent of the
// potential calculus: closed-form densities are drawn exactly, categorical
// tables by their rows, piecewise-polynomial densities by inverse CDF, and
// deterministic relations, decision rules, and utilities are evaluated
// pointwise on each sampled trajectory.  The stream is chunked so the
// reduction order (and therefore every output bit) is independent of how
// many workers ran the chunks.

#include "mopid/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mopid {

namespace {

constexpr std::size_t kChunk = 4096;

struct SplitMix64 {
  std::uint64_t s;
  explicit SplitMix64(std::uint64_t state) : s(state) {}
  std::uint64_t next() {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  // strictly inside (0,1): safe under log and as a CDF probe
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (chunk + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Inverse-CDF sampler for a one-variable piecewise-polynomial density.
struct MopSampler {
  struct PieceCdf {
    double a = 0.0, b = 0.0, anchor = 0.0;
    Polynomial anti;  // antiderivative, in the piece's offset coordinate
    double base = 0.0;  // antiderivative value at the lower edge
    double cum_before = 0.0;
    double mass = 0.0;
  };
  VarId var = -1;
  std::vector<PieceCdf> pieces;
  double total = 0.0;

  void build(const MOP& density, VarId v, const std::string& name) {
    var = v;
    if (density.scope() != std::vector<VarId>{v})
      throw AlgebraError("density of '" + name + "' must depend on that variable alone");
    std::vector<Piece> sorted = density.pieces();
    std::sort(sorted.begin(), sorted.end(), [](const Piece& x, const Piece& y) {
      return x.region.bounds[0].lo < y.region.bounds[0].lo;
    });
    for (const Piece& p : sorted) {
      PieceCdf pc;
      pc.a = p.region.bounds[0].lo;
      pc.b = p.region.bounds[0].hi;
      if (!(std::isfinite(pc.a) && std::isfinite(pc.b)))
        throw AlgebraError("density of '" + name + "' has unbounded pieces and cannot be sampled");
      pc.anchor = p.anchor[0];
      pc.anti = p.poly.antiderivative(v);
      pc.base = pc.anti.eval({{v, pc.a - pc.anchor}});
      pc.mass = pc.anti.eval({{v, pc.b - pc.anchor}}) - pc.base;
      if (pc.mass < 0.0) pc.mass = 0.0;
      pc.cum_before = total;
      total += pc.mass;
      pieces.push_back(std::move(pc));
    }
    if (!(total > 0.0)) throw AlgebraError("density of '" + name + "' has no mass to sample");
  }

  double draw(double u) const {
    const double target = u * total;
    std::size_t k = 0;
    while (k + 1 < pieces.size() && pieces[k + 1].cum_before <= target) ++k;
    const PieceCdf& pc = pieces[k];
    const double r = target - pc.cum_before;
    double lo = pc.a, hi = pc.b;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (pc.anti.eval({{var, mid - pc.anchor}}) - pc.base < r)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

struct Step {
  enum class Kind { Normal, Categorical, MopDraw, Equation, Decision };
  Kind kind = Kind::Equation;
  VarId var = -1;
  std::string name;
  double mean = 0.0, sd = 0.0;                    // Normal
  std::vector<std::pair<VarId, int>> parents;     // Categorical: (var, states), table order
  std::vector<std::vector<double>> cum;           // Categorical: per parent config
  MopSampler mop;                                 // MopDraw
  const Potential* eq = nullptr;                  // Equation
  const DecisionRule* rule = nullptr;             // Decision
};

struct Plan {
  std::vector<Step> steps;
  std::vector<const Potential*> utilities;
};

// shared mutable per-worker sampling state: one slot per variable
struct State {
  DiscreteAssign dstate;
  ContinuousPoint cpoint;
  std::vector<int> dslot, cslot;

  explicit State(const InfluenceDiagram& id) {
    dslot.assign(id.variables.size(), -1);
    cslot.assign(id.variables.size(), -1);
    for (const Variable& v : id.variables) {
      if (kind_is_discrete(v.kind)) {
        dslot[static_cast<std::size_t>(v.id)] = static_cast<int>(dstate.size());
        dstate.emplace_back(v.id, 0);
      } else {
        cslot[static_cast<std::size_t>(v.id)] = static_cast<int>(cpoint.size());
        cpoint.emplace_back(v.id, 0.0);
      }
    }
  }
  int& dref(VarId v) { return dstate[static_cast<std::size_t>(dslot[static_cast<std::size_t>(v)])].second; }
  double& cref(VarId v) { return cpoint[static_cast<std::size_t>(cslot[static_cast<std::size_t>(v)])].second; }
};

Plan compile(const InfluenceDiagram& id, const std::vector<DecisionRule>& strategy) {
  const std::size_t n = id.variables.size();

  std::map<VarId, const DecisionRule*> by_var;
  for (const DecisionRule& r : strategy) {
    const VarId vid = r.var >= 0 ? r.var : id.id_of(r.name);
    if (vid < 0 || !kind_is_decision(id.var(vid).kind))
      throw AlgebraError("strategy rule '" + r.name + "' does not name a decision");
    if (!by_var.emplace(vid, &r).second)
      throw AlgebraError("duplicate strategy rule for '" + id.var(vid).name + "'");
  }
  for (const Variable& v : id.variables)
    if (kind_is_decision(v.kind) && !by_var.count(v.id))
      throw AlgebraError("strategy is missing a rule for decision '" + v.name + "'");

  // causal order: a chance variable follows its parents, a decision follows
  // everything its rule inspects
  std::vector<std::set<VarId>> deps(n);
  for (const Variable& v : id.variables) {
    auto& d = deps[static_cast<std::size_t>(v.id)];
    if (kind_is_chance(v.kind)) {
      for (VarId p : id.parents(v.id)) d.insert(p);
    } else {
      for (const PolicyCase& pc : by_var.at(v.id)->cases) {
        for (const auto& [cv, cs] : pc.config) {
          (void)cs;
          d.insert(cv);
        }
        if (pc.piecewise) d.insert(pc.observed);
      }
      auto it = id.constraints.find(v.id);
      if (it != id.constraints.end())
        for (const DiscreteAxis& ax : it->second.predecessors) d.insert(ax.var);
    }
    d.erase(v.id);
  }
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<VarId>> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (VarId p : deps[i]) {
      out[static_cast<std::size_t>(p)].push_back(static_cast<VarId>(i));
      ++indegree[i];
    }
  std::set<VarId> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.insert(static_cast<VarId>(i));
  std::vector<VarId> order;
  while (!ready.empty()) {
    const VarId v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (VarId w : out[static_cast<std::size_t>(v)])
      if (--indegree[static_cast<std::size_t>(w)] == 0) ready.insert(w);
  }
  if (order.size() != n)
    throw AlgebraError("the strategy's rules depend on variables that are not determined first");

  Plan plan;
  for (VarId v : order) {
    const Variable& var = id.var(v);
    Step st;
    st.var = v;
    st.name = var.name;
    if (kind_is_decision(var.kind)) {
      st.kind = Step::Kind::Decision;
      st.rule = by_var.at(v);
      plan.steps.push_back(std::move(st));
      continue;
    }
    const TrueConditional tc = true_conditional(id, v);
    const Potential* pot = id.potential_for(v);
    if (!pot) throw AlgebraError("no distribution declared for '" + var.name + "'");
    switch (tc.kind) {
      case TrueConditional::Kind::NormalDensity:
        st.kind = Step::Kind::Normal;
        st.mean = tc.mean;
        st.sd = std::sqrt(tc.variance);
        break;
      case TrueConditional::Kind::DiscreteTable: {
        st.kind = Step::Kind::Categorical;
        int vstates = 0;
        for (const DiscreteAxis& ax : pot->axes()) {
          if (ax.var == v)
            vstates = ax.states;
          else
            st.parents.emplace_back(ax.var, ax.states);
        }
        std::size_t nconfigs = 1;
        for (const auto& [pv, ps] : st.parents) {
          (void)pv;
          nconfigs *= static_cast<std::size_t>(ps);
        }
        st.cum.resize(nconfigs);
        for (std::size_t cfg = 0; cfg < nconfigs; ++cfg) {
          DiscreteAssign assign;
          std::size_t rem = cfg;
          for (std::size_t k = st.parents.size(); k-- > 0;) {
            assign.emplace_back(st.parents[k].first,
                                static_cast<int>(rem % static_cast<std::size_t>(st.parents[k].second)));
            rem /= static_cast<std::size_t>(st.parents[k].second);
          }
          double acc = 0.0;
          for (int s = 0; s < vstates; ++s) {
            assign.emplace_back(v, s);
            acc += pot->eval(assign, {});
            assign.pop_back();
            st.cum[cfg].push_back(acc);
          }
        }
        break;
      }
      case TrueConditional::Kind::MopDensity: {
        st.kind = Step::Kind::MopDraw;
        const Entry& e = pot->entry(0);
        if (!pot->axes().empty() || e.size() != 1 || !e.front().diracs.empty())
          throw AlgebraError("density of '" + var.name + "' is not in a samplable form");
        st.mop.build(e.front().density, v, var.name);
        break;
      }
      case TrueConditional::Kind::Deterministic: {
        st.kind = Step::Kind::Equation;
        st.eq = pot;
        for (std::size_t i = 0; i < pot->num_configs(); ++i) {
          const Entry& e = pot->entry(i);
          if (e.size() != 1 || e.front().diracs.size() != 1 ||
              e.front().diracs.front().target != v)
            throw AlgebraError("relation for '" + var.name + "' is not in a samplable form");
        }
        break;
      }
    }
    plan.steps.push_back(std::move(st));
  }
  for (const Potential& u : id.utility_potentials) plan.utilities.push_back(&u);
  return plan;
}

std::size_t parent_config(const Step& st, State& state) {
  std::size_t idx = 0;
  for (const auto& [pv, ps] : st.parents)
    idx = idx * static_cast<std::size_t>(ps) + static_cast<std::size_t>(state.dref(pv));
  return idx;
}

void apply_rule(const Step& st, State& state) {
  const DecisionRule& r = *st.rule;
  const PolicyCase* match = nullptr;
  for (const PolicyCase& pc : r.cases) {
    bool ok = true;
    for (const auto& [cv, cs] : pc.config) ok = ok && state.dref(cv) == cs;
    if (ok) {
      match = &pc;
      break;
    }
  }
  if (!match)
    throw AlgebraError("strategy rule for '" + r.name +
                       "' has no case for a sampled configuration");
  if (r.continuous || match->continuous) {
    state.cref(st.var) = match->value;
  } else if (!match->piecewise) {
    state.dref(st.var) = match->state;
  } else {
    const double x = state.cref(match->observed);
    std::size_t k = 0;
    while (k < match->breaks.size() && x >= match->breaks[k]) ++k;
    state.dref(st.var) = match->states[k];
  }
}

double run_sample(const Plan& plan, State& state, SplitMix64& rng) {
  for (const Step& st : plan.steps) {
    switch (st.kind) {
      case Step::Kind::Normal:
        state.cref(st.var) = st.mean + st.sd * rng.normal();
        break;
      case Step::Kind::Categorical: {
        const std::vector<double>& cum = st.cum[parent_config(st, state)];
        const double u = rng.uniform() * (cum.empty() ? 1.0 : cum.back());
        std::size_t k = 0;
        while (k + 1 < cum.size() && u >= cum[k]) ++k;
        state.dref(st.var) = static_cast<int>(k);
        break;
      }
      case Step::Kind::MopDraw:
        state.cref(st.var) = st.mop.draw(rng.uniform());
        break;
      case Step::Kind::Equation: {
        const Entry& e = st.eq->entry(st.eq->index_of(state.dstate));
        state.cref(st.var) = e.front().diracs.front().g.eval(state.cpoint);
        break;
      }
      case Step::Kind::Decision:
        apply_rule(st, state);
        break;
    }
  }
  double total = 0.0;
  for (const Potential* u : plan.utilities) total += u->eval(state.dstate, state.cpoint);
  return total;
}

OracleEstimate mc_impl(const InfluenceDiagram& id, const std::vector<DecisionRule>& strategy,
                       std::size_t n, std::uint64_t seed, bool parallel) {
  if (n == 0) throw AlgebraError("sample count must be positive");
  const Plan plan = compile(id, strategy);
  const std::size_t nchunks = (n + kChunk - 1) / kChunk;
  // running-moment accumulators per chunk: exact zero spread for a constant
  // stream and no catastrophic cancellation for large means
  struct Moments {
    double count = 0.0, mean = 0.0, m2 = 0.0;
  };
  std::vector<Moments> parts(nchunks);

  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mutex;
  auto run_chunk = [&](std::size_t c) {
    if (failed.load(std::memory_order_relaxed)) return;
    try {
      State state(id);
      SplitMix64 rng(chunk_seed(seed, c));
      const std::size_t begin = c * kChunk;
      const std::size_t len = std::min(kChunk, n - begin);
      Moments m;
      for (std::size_t i = 0; i < len; ++i) {
        const double u = run_sample(plan, state, rng);
        m.count += 1.0;
        const double d = u - m.mean;
        m.mean += d / m.count;
        m.m2 += d * (u - m.mean);
      }
      parts[c] = m;
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(error_mutex);
      failed.store(true);
      if (error.empty()) error = e.what();
    }
  };

  int workers = 1;
  if (parallel) {
#ifdef _OPENMP
    workers = omp_get_max_threads();
#pragma omp parallel for schedule(dynamic)
    for (long long c = 0; c < static_cast<long long>(nchunks); ++c)
      run_chunk(static_cast<std::size_t>(c));
#else
    for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
#endif
  } else {
    for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
  }
  if (failed.load()) throw AlgebraError(error);

  // chunk-ordered reduction: identical bits for any worker count
  Moments total;
  for (std::size_t c = 0; c < nchunks; ++c) {
    const Moments& m = parts[c];
    if (m.count == 0.0) continue;
    const double combined = total.count + m.count;
    const double delta = m.mean - total.mean;
    total.mean += delta * (m.count / combined);
    total.m2 += m.m2 + delta * delta * (total.count * m.count / combined);
    total.count = combined;
  }
  OracleEstimate est;
  est.mean = total.mean;
  if (n > 1) {
    double var = total.m2 / static_cast<double>(n - 1);
    if (var < 0.0) var = 0.0;
    est.stderr_value = std::sqrt(var / static_cast<double>(n));
  }
  est.samples = n;
  est.seed = seed;
  est.workers = workers;
  return est;
}

}  // namespace

OracleEstimate mc_evaluate(const InfluenceDiagram& id, const std::vector<DecisionRule>& strategy,
                           std::size_t n, std::uint64_t seed) {
  return mc_impl(id, strategy, n, seed, true);
}

OracleEstimate mc_evaluate_serial(const InfluenceDiagram& id,
                                  const std::vector<DecisionRule>& strategy, std::size_t n,
                                  std::uint64_t seed) {
  return mc_impl(id, strategy, n, seed, false);
}

std::vector<DecisionRule> GridSearchResult::best_rules(const std::vector<DecisionGrid>& grids) const {
  std::vector<DecisionRule> rules;
  for (std::size_t i = 0; i < grids.size() && i < best_choice.size(); ++i) {
    DecisionRule r = grids[i].candidates.at(best_choice[i]);
    if (r.name.empty()) r.name = grids[i].decision;
    rules.push_back(std::move(r));
  }
  return rules;
}

GridSearchResult grid_search(const InfluenceDiagram& id, const std::vector<DecisionGrid>& grids,
                             std::size_t samples_per_point, std::uint64_t seed) {
  if (grids.empty()) throw AlgebraError("grid search needs at least one decision grid");
  std::set<std::string> seen;
  for (const DecisionGrid& g : grids) {
    const VarId vid = id.id_of(g.decision);
    if (vid < 0 || !kind_is_decision(id.var(vid).kind))
      throw AlgebraError("grid decision '" + g.decision + "' is not a decision of the diagram");
    if (!seen.insert(g.decision).second)
      throw AlgebraError("duplicate grid for decision '" + g.decision + "'");
    if (g.candidates.empty())
      throw AlgebraError("grid for '" + g.decision + "' has no candidates");
  }
  for (const Variable& v : id.variables)
    if (kind_is_decision(v.kind) && !seen.count(v.name))
      throw AlgebraError("grid search is missing a grid for decision '" + v.name + "'");

  GridSearchResult res;
  std::vector<std::size_t> choice(grids.size(), 0);
  bool first = true;
  while (true) {
    std::vector<DecisionRule> rules;
    for (std::size_t i = 0; i < grids.size(); ++i) {
      DecisionRule r = grids[i].candidates[choice[i]];
      if (r.name.empty()) r.name = grids[i].decision;
      rules.push_back(std::move(r));
    }
    const OracleEstimate est = mc_evaluate(id, rules, samples_per_point, seed);
    ++res.points_evaluated;
    if (first || est.mean > res.best.mean) {
      res.best = est;
      res.best_choice = choice;
      first = false;
    }
    std::size_t k = grids.size();
    bool rolled = true;
    while (k-- > 0) {
      if (++choice[k] < grids[k].candidates.size()) {
        rolled = false;
        break;
      }
      choice[k] = 0;
    }
    if (rolled) break;
  }
  return res;
}

DecisionRule constant_rule(const InfluenceDiagram& id, const std::string& decision, double value) {
  const VarId vid = id.id_of(decision);
  if (vid < 0 || id.var(vid).kind != VarKind::DecisionContinuous)
    throw AlgebraError("'" + decision + "' is not a continuous decision");
  DecisionRule r;
  r.var = vid;
  r.name = decision;
  r.continuous = true;
  PolicyCase pc;
  pc.continuous = true;
  pc.value = value;
  r.cases = {pc};
  return r;
}

}  // namespace mopid
