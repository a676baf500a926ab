#include "mopid/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mopid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<VarId> sorted_union(const std::vector<VarId>& a, const std::vector<VarId>& b) {
  std::vector<VarId> r;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

std::vector<DiscreteAxis> merge_axes(const std::vector<DiscreteAxis>& a,
                                     const std::vector<DiscreteAxis>& b) {
  std::vector<DiscreteAxis> r;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].var < b[j].var)) {
      r.push_back(a[i++]);
    } else if (i == a.size() || b[j].var < a[i].var) {
      r.push_back(b[j++]);
    } else {
      if (a[i].states != b[j].states)
        throw AlgebraError("discrete variable id " + std::to_string(a[i].var) +
                           " has conflicting state counts " + std::to_string(a[i].states) +
                           " vs " + std::to_string(b[j].states));
      r.push_back(a[i++]);
      ++j;
    }
  }
  return r;
}

// Flat index into `source`'s table from a configuration laid out over
// `result`'s axes (source axes must all appear in result).
struct AxisProjector {
  std::vector<std::size_t> pos;     // result position of each source axis
  std::vector<std::size_t> stride;  // source strides

  std::size_t operator()(const std::vector<int>& cfg) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < pos.size(); ++k)
      idx += static_cast<std::size_t>(cfg[pos[k]]) * stride[k];
    return idx;
  }
};

AxisProjector make_projector(const std::vector<DiscreteAxis>& result,
                             const std::vector<DiscreteAxis>& source) {
  AxisProjector p;
  p.pos.resize(source.size());
  p.stride.resize(source.size());
  std::size_t s = 1;
  for (std::size_t k = source.size(); k-- > 0;) {
    p.stride[k] = s;
    s *= static_cast<std::size_t>(source[k].states);
  }
  for (std::size_t k = 0; k < source.size(); ++k) {
    auto it = std::find_if(result.begin(), result.end(),
                           [&](const DiscreteAxis& ax) { return ax.var == source[k].var; });
    if (it == result.end())
      throw AlgebraError("axis for variable id " + std::to_string(source[k].var) +
                         " is not part of the enclosing table");
    p.pos[k] = static_cast<std::size_t>(it - result.begin());
  }
  return p;
}

Entry entry_mul(const Entry& a, const Entry& b) {
  Entry out;
  for (const CAddend& x : a) {
    for (const CAddend& y : b) {
      CAddend c;
      c.density = multiply(x.density, y.density);
      if (c.density.is_zero()) continue;
      c.diracs = x.diracs;
      c.diracs.insert(c.diracs.end(), y.diracs.begin(), y.diracs.end());
      for (std::size_t i = 0; i < c.diracs.size(); ++i)
        for (std::size_t j = i + 1; j < c.diracs.size(); ++j)
          if (!c.diracs[i].bound && !c.diracs[j].bound &&
              c.diracs[i].target == c.diracs[j].target)
            throw AlgebraError("product carries two point masses on variable id " +
                               std::to_string(c.diracs[i].target));
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Sum of entries, with all point-mass-free addends merged into one density.
Entry entry_add(const Entry& a, const Entry& b) {
  MOP flat = MOP::zero();
  Entry out;
  auto take = [&](const CAddend& c) {
    if (c.density.is_zero()) return;
    if (c.diracs.empty())
      flat = add(flat, c.density);
    else
      out.push_back(c);
  };
  for (const CAddend& c : a) take(c);
  for (const CAddend& c : b) take(c);
  if (!flat.is_zero()) out.insert(out.begin(), CAddend{std::move(flat), {}});
  return out;
}

Entry normalized_entry(Entry e) { return entry_add(e, Entry{}); }

// Collapses an entry to a plain MOP; any remaining point mass is an error in
// the given operation.
MOP entry_to_mop(const Entry& e, const char* op) {
  MOP m = MOP::zero();
  for (const CAddend& c : e) {
    if (!c.diracs.empty())
      throw AlgebraError(std::string(op) +
                         ": entry still carries a point mass; eliminate the variables of its "
                         "relation first");
    m = add(m, c.density);
  }
  return m;
}

bool all_pieces_unbounded_in(const MOP& m, VarId v) {
  int idx = m.index_of(v);
  if (idx < 0) return true;
  for (const Piece& p : m.pieces()) {
    const Interval& iv = p.region.bounds[static_cast<std::size_t>(idx)];
    if (std::isfinite(iv.lo) || std::isfinite(iv.hi)) return false;
  }
  return true;
}

bool is_affine_unbounded_relation(const MOP& g) {
  if (g.pieces().size() != 1) return false;
  const Piece& p = g.pieces().front();
  for (const Interval& iv : p.region.bounds)
    if (std::isfinite(iv.lo) || std::isfinite(iv.hi)) return false;
  return p.poly.degree() <= 1;
}

// delta(target - g) can be substituted eagerly when the substitute() operation
// supports it: g has at most one variable, or the co-factor's pieces are
// unbounded in the target.
bool eager_sift_ok(const MOP& density, VarId target, const MOP& g) {
  return g.scope().size() <= 1 || all_pieces_unbounded_in(density, target);
}

// Inverts a live relation delta(z - g(..., X, ...)) in X:
//   delta(z - c*X - h(y)) = (1/|c|) delta(X - (z - h(y))/c).
// Requires the X-coefficient to be a constant; returns the rewritten term.
DiracTerm invert_relation_in(const DiracTerm& d, VarId X) {
  const MOP& g = d.g;
  if (g.pieces().size() != 1)
    throw AlgebraError("eliminating variable id " + std::to_string(X) +
                       " inside a piecewise point-mass relation is unsupported; reorder the "
                       "elimination plan");
  const Piece& pc = g.pieces().front();
  for (const Interval& iv : pc.region.bounds)
    if (std::isfinite(iv.lo) || std::isfinite(iv.hi))
      throw AlgebraError("eliminating variable id " + std::to_string(X) +
                         " inside a bounded point-mass relation is unsupported; reorder the "
                         "elimination plan");

  // Value-space polynomial (anchors folded away).
  Polynomial val = pc.poly;
  for (std::size_t i = 0; i < g.scope().size(); ++i)
    if (pc.anchor[i] != 0.0 && val.references(g.scope()[i]))
      val = val.shift(g.scope()[i], -pc.anchor[i]);

  double c = 0.0;
  Polynomial h;
  for (const auto& [mono, coef] : val.terms()) {
    int ex = mono.exponent_of(X);
    if (ex == 0) {
      h.add_term(mono, coef);
    } else if (ex == 1 && mono.factors.size() == 1) {
      c += coef;
    } else {
      throw AlgebraError("variable id " + std::to_string(X) +
                         " enters a point-mass relation nonlinearly; its inverse is not "
                         "polynomial — reorder the elimination plan");
    }
  }
  if (c == 0.0)
    throw AlgebraError("internal: point-mass relation does not reference variable id " +
                       std::to_string(X));

  Polynomial inv = (Polynomial::var(d.target) - h).scaled(1.0 / c);
  std::vector<VarId> scope;
  for (VarId v : g.scope())
    if (v != X) scope.push_back(v);
  scope.push_back(d.target);
  std::sort(scope.begin(), scope.end());
  Region region;
  region.bounds.assign(scope.size(), Interval{-kInf, kInf});
  std::vector<Piece> piece{Piece{region, std::vector<double>(scope.size(), 0.0), inv}};

  DiracTerm out;
  out.target = X;
  out.weight = d.weight / std::abs(c);
  out.g = mop_from_pieces(std::move(scope), std::move(piece), false);
  out.bound = false;
  return out;
}

// Integrates X out of one addend; returns the transformed addend (which may
// have a zero density => the addend vanished).
CAddend integrate_addend(CAddend a, VarId X) {
  // (1) a live point mass on X: sifting.
  for (std::size_t i = 0; i < a.diracs.size(); ++i) {
    if (a.diracs[i].bound || a.diracs[i].target != X) continue;
    DiracTerm d = a.diracs[i];
    a.diracs.erase(a.diracs.begin() + static_cast<std::ptrdiff_t>(i));
    // Rewrite sibling relations that mention X.
    for (DiracTerm& o : a.diracs) {
      if (!o.g.in_scope(X)) continue;
      if (o.bound)
        throw AlgebraError("point-mass relations are coupled through a deferred binding; "
                           "reorder the elimination plan");
      o.g = substitute(o.g, X, d.g);
    }
    if (!a.density.in_scope(X)) {
      // Nothing else depends on X: the mass integrates to its weight.
      a.density = scale(a.density, d.weight);
      return a;
    }
    if (eager_sift_ok(a.density, X, d.g)) {
      a.density = scale(substitute(a.density, X, d.g), d.weight);
      return a;
    }
    if (is_affine_unbounded_relation(d.g)) {
      // Defer: record the integral as taken; resolved in closed form when one
      // of the relation's variables is integrated out.
      d.bound = true;
      a.diracs.push_back(std::move(d));
      return a;
    }
    // Unsupported shape: let substitute() raise its descriptive error.
    a.density = scale(substitute(a.density, X, d.g), d.weight);
    return a;
  }
  // (2) a deferred binding whose relation mentions X: closed-form resolution.
  for (std::size_t i = 0; i < a.diracs.size(); ++i) {
    if (!a.diracs[i].bound || !a.diracs[i].g.in_scope(X)) continue;
    const DiracTerm d = a.diracs[i];
    for (std::size_t j = 0; j < a.diracs.size(); ++j)
      if (j != i && (a.diracs[j].g.in_scope(X) || a.diracs[j].target == X))
        throw AlgebraError("two point-mass relations share variable id " + std::to_string(X) +
                           "; reorder the elimination plan");
    if (!a.density.in_scope(d.target))
      throw AlgebraError("internal: deferred binding target id " + std::to_string(d.target) +
                         " is absent from its co-factor");
    a.density = scale(integrate_affine_binding(a.density, d.target, X, d.g), d.weight);
    a.diracs.erase(a.diracs.begin() + static_cast<std::ptrdiff_t>(i));
    return a;
  }
  // (3) a live mass whose relation mentions X as a non-target: invert in X,
  // then sift (case 1).
  for (std::size_t i = 0; i < a.diracs.size(); ++i) {
    if (a.diracs[i].bound || !a.diracs[i].g.in_scope(X)) continue;
    a.diracs[i] = invert_relation_in(a.diracs[i], X);
    return integrate_addend(std::move(a), X);
  }
  // (4) plain integral.
  if (a.density.in_scope(X)) {
    a.density = integrate_out(a.density, X);
    return a;
  }
  throw AlgebraError("integral over variable id " + std::to_string(X) +
                     " diverges: no factor of the entry depends on it");
}

Potential zero_utility_over(const std::vector<DiscreteAxis>& axes) {
  return Potential(PotKind::Utility, axes, {});
}

const char* kind_name(PotKind k) {
  switch (k) {
    case PotKind::Discrete: return "discrete";
    case PotKind::Continuous: return "continuous";
    default: return "utility";
  }
}

}  // namespace

// --- Potential ----------------------------------------------------------------

Potential::Potential(PotKind kind, std::vector<DiscreteAxis> axes, std::vector<VarId> cont_vars)
    : kind_(kind), axes_(std::move(axes)), cvars_(std::move(cont_vars)) {
  std::sort(axes_.begin(), axes_.end(),
            [](const DiscreteAxis& a, const DiscreteAxis& b) { return a.var < b.var; });
  std::sort(cvars_.begin(), cvars_.end());
  for (std::size_t i = 0; i + 1 < axes_.size(); ++i)
    if (axes_[i].var == axes_[i + 1].var)
      throw AlgebraError("duplicate axis for variable id " + std::to_string(axes_[i].var));
  for (std::size_t i = 0; i + 1 < cvars_.size(); ++i)
    if (cvars_[i] == cvars_[i + 1])
      throw AlgebraError("duplicate continuous variable id " + std::to_string(cvars_[i]));
  for (const DiscreteAxis& ax : axes_) {
    if (ax.states <= 0)
      throw AlgebraError("axis for variable id " + std::to_string(ax.var) +
                         " needs at least one state");
    if (std::binary_search(cvars_.begin(), cvars_.end(), ax.var))
      throw AlgebraError("variable id " + std::to_string(ax.var) +
                         " cannot be both discrete and continuous");
  }
  std::size_t n = 1;
  for (const DiscreteAxis& ax : axes_) n *= static_cast<std::size_t>(ax.states);
  table_.assign(n, Entry{});
}

Potential Potential::identity(PotKind kind) {
  Potential p(kind, {}, {});
  if (kind != PotKind::Utility) p.table_[0] = Entry{CAddend{MOP::scalar(1.0), {}}};
  return p;
}

std::vector<VarId> Potential::domain() const {
  std::vector<VarId> d;
  d.reserve(axes_.size() + cvars_.size());
  for (const DiscreteAxis& ax : axes_) d.push_back(ax.var);
  d.insert(d.end(), cvars_.begin(), cvars_.end());
  std::sort(d.begin(), d.end());
  return d;
}

bool Potential::in_domain(VarId v) const {
  if (std::binary_search(cvars_.begin(), cvars_.end(), v)) return true;
  for (const DiscreteAxis& ax : axes_)
    if (ax.var == v) return true;
  return false;
}

std::size_t Potential::index_of(const DiscreteAssign& assign) const {
  std::size_t idx = 0;
  for (const DiscreteAxis& ax : axes_) {
    int state = -1;
    for (const auto& [v, s] : assign)
      if (v == ax.var) state = s;
    if (state < 0 || state >= ax.states)
      throw AlgebraError("assignment misses axis of variable id " + std::to_string(ax.var) +
                         " or is out of range");
    idx = idx * static_cast<std::size_t>(ax.states) + static_cast<std::size_t>(state);
  }
  return idx;
}

std::vector<int> Potential::config_of(std::size_t idx) const {
  std::vector<int> cfg(axes_.size(), 0);
  for (std::size_t k = axes_.size(); k-- > 0;) {
    cfg[k] = static_cast<int>(idx % static_cast<std::size_t>(axes_[k].states));
    idx /= static_cast<std::size_t>(axes_[k].states);
  }
  return cfg;
}

Potential Potential::retag(PotKind kind) const {
  Potential p = *this;
  p.kind_ = kind;
  return p;
}

bool Potential::is_vacuous_ones() const {
  for (const Entry& e : table_) {
    if (e.size() != 1) return false;
    if (!e.front().diracs.empty()) return false;
    const MOP& m = e.front().density;
    if (!m.is_scalar() || std::abs(m.scalar_value() - 1.0) > 1e-12) return false;
  }
  return true;
}

bool Potential::is_identity() const {
  if (!axes_.empty() || !cvars_.empty()) return false;
  if (kind_ == PotKind::Utility) {
    for (const CAddend& c : table_.front())
      if (!c.density.is_zero() || !c.diracs.empty()) return false;
    return true;
  }
  return is_vacuous_ones();
}

double Potential::eval(const DiscreteAssign& assign, const ContinuousPoint& point) const {
  const Entry& e = table_.at(index_of(assign));
  double v = 0.0;
  for (const CAddend& c : e) {
    if (!c.diracs.empty())
      throw AlgebraError("eval: entry carries a point mass and has no pointwise value");
    v += c.density.eval(point);
  }
  return v;
}

std::string Potential::describe() const {
  std::ostringstream os;
  os << kind_name(kind_) << "-potential axes[";
  for (std::size_t i = 0; i < axes_.size(); ++i)
    os << (i ? "," : "") << axes_[i].var << ":" << axes_[i].states;
  os << "] cont[";
  for (std::size_t i = 0; i < cvars_.size(); ++i) os << (i ? "," : "") << cvars_[i];
  os << "] entries=" << table_.size();
  return os.str();
}

// --- combination ----------------------------------------------------------------

namespace {

Potential combine_impl(const Potential& a, const Potential& b, PotKind kind, bool additive) {
  Potential r(kind, merge_axes(a.axes(), b.axes()), sorted_union(a.cont_vars(), b.cont_vars()));
  AxisProjector pa = make_projector(r.axes(), a.axes());
  AxisProjector pb = make_projector(r.axes(), b.axes());
  for (std::size_t idx = 0; idx < r.num_configs(); ++idx) {
    std::vector<int> cfg = r.config_of(idx);
    const Entry& ea = a.entry(pa(cfg));
    const Entry& eb = b.entry(pb(cfg));
    r.entry(idx) = additive ? entry_add(ea, eb) : entry_mul(ea, eb);
  }
  return r;
}

}  // namespace

Potential combine_mul(const Potential& a, const Potential& b) {
  if (a.kind() == PotKind::Utility && b.kind() == PotKind::Utility)
    throw AlgebraError("utilities combine additively; use combine_utility");
  PotKind k;
  if (a.kind() == PotKind::Utility || b.kind() == PotKind::Utility)
    k = PotKind::Utility;
  else if (a.kind() == b.kind())
    k = a.kind();
  else
    throw AlgebraError(
        "a discrete x continuous product has no kind of its own; keep the factors in "
        "separate slots of a mixed potential");
  return combine_impl(a, b, k, false);
}

Potential combine_utility(const Potential& a, const Potential& b) {
  if (a.kind() != PotKind::Utility || b.kind() != PotKind::Utility)
    throw AlgebraError("combine_utility needs two utility potentials");
  return combine_impl(a, b, PotKind::Utility, true);
}

Potential combine_as(const Potential& a, const Potential& b, PotKind kind) {
  return combine_impl(a, b, kind, false);
}

// --- marginalization --------------------------------------------------------------

Potential marginalize_var(const Potential& p, VarId X) {
  // Discrete axis: sum it out.
  const auto& axes = p.axes();
  auto axit = std::find_if(axes.begin(), axes.end(),
                           [&](const DiscreteAxis& ax) { return ax.var == X; });
  if (axit != axes.end()) {
    std::vector<DiscreteAxis> raxes;
    for (const DiscreteAxis& ax : axes)
      if (ax.var != X) raxes.push_back(ax);
    Potential r(p.kind(), raxes, p.cont_vars());
    AxisProjector proj = make_projector(axes, raxes);  // result axes are a subset
    for (std::size_t idx = 0; idx < p.num_configs(); ++idx) {
      std::vector<int> cfg = p.config_of(idx);
      std::size_t ridx = proj(cfg);
      r.entry(ridx) = entry_add(r.entry(ridx), p.entry(idx));
    }
    return r;
  }

  // Continuous variable: integrate it out.
  if (!std::binary_search(p.cont_vars().begin(), p.cont_vars().end(), X))
    throw AlgebraError("variable id " + std::to_string(X) + " is not in the domain of " +
                       p.describe());
  std::vector<VarId> rc;
  for (VarId v : p.cont_vars())
    if (v != X) rc.push_back(v);
  Potential r(p.kind(), p.axes(), rc);
  for (std::size_t idx = 0; idx < p.num_configs(); ++idx) {
    Entry out;
    for (const CAddend& c : p.entry(idx)) {
      CAddend t = integrate_addend(c, X);
      if (!t.density.is_zero()) out.push_back(std::move(t));
    }
    r.entry(idx) = normalized_entry(std::move(out));
  }
  return r;
}

// --- division ---------------------------------------------------------------------

Potential divide(const Potential& a, const Potential& m) {
  Potential r(a.kind(), a.axes(), a.cont_vars());
  AxisProjector pm = make_projector(a.axes(), m.axes());
  for (std::size_t idx = 0; idx < a.num_configs(); ++idx) {
    std::vector<int> cfg = a.config_of(idx);
    const Entry& de = m.entry(pm(cfg));
    MOP den = MOP::zero();
    for (const CAddend& c : de) {
      if (!c.diracs.empty())
        throw DivisionNotClosed("divisor entry carries a point mass");
      den = add(den, c.density);
    }
    Entry out;
    for (const CAddend& c : a.entry(idx)) {
      CAddend q;
      q.density = divide_mop(c.density, den);
      if (q.density.is_zero()) continue;
      q.diracs = c.diracs;
      out.push_back(std::move(q));
    }
    r.entry(idx) = std::move(out);
  }
  return r;
}

// --- mixed potentials ----------------------------------------------------------------

MixedPotential combine_mixed(const MixedPotential& a, const MixedPotential& b) {
  MixedPotential r;
  r.discrete = combine_mul(a.discrete, b.discrete);
  r.continuous = combine_mul(a.continuous, b.continuous);
  r.utility = combine_utility(a.utility, b.utility);
  return r;
}

namespace {

// Maximization over a discrete axis X of a utility table, honoring an
// optional feasibility constraint (whose predecessor axes the result
// acquires).  Records one PolicyCase per result configuration.
Potential maximize_discrete(const Potential& vin, VarId X, const DecisionConstraint* constraint,
                            std::vector<PolicyCase>* policy) {
  Potential v = vin;
  if (constraint) {
    for (const auto& al : constraint->allowed)
      if (al.empty())
        throw AlgebraError("decision constraint leaves no allowed state for variable id " +
                           std::to_string(X));
    v = combine_utility(v, zero_utility_over(constraint->predecessors));
  }
  const auto& vax = v.axes();
  auto it = std::find_if(vax.begin(), vax.end(),
                         [&](const DiscreteAxis& ax) { return ax.var == X; });
  if (it == vax.end())
    throw AlgebraError("internal: decision axis missing from the folded utility");
  const std::size_t xpos = static_cast<std::size_t>(it - vax.begin());
  const int nx = it->states;

  std::vector<std::size_t> vstride(vax.size());
  std::size_t s = 1;
  for (std::size_t k = vax.size(); k-- > 0;) {
    vstride[k] = s;
    s *= static_cast<std::size_t>(vax[k].states);
  }

  std::vector<DiscreteAxis> raxes;
  for (const DiscreteAxis& ax : vax)
    if (ax.var != X) raxes.push_back(ax);
  Potential r(PotKind::Utility, raxes, v.cont_vars());

  AxisProjector pred_proj;
  if (constraint) pred_proj = make_projector(raxes, constraint->predecessors);

  std::vector<int> all_states(static_cast<std::size_t>(nx));
  for (int i = 0; i < nx; ++i) all_states[static_cast<std::size_t>(i)] = i;

  for (std::size_t ridx = 0; ridx < r.num_configs(); ++ridx) {
    std::vector<int> rcfg = r.config_of(ridx);
    const std::vector<int>& allowed =
        constraint ? constraint->allowed.at(pred_proj(rcfg)) : all_states;

    std::size_t base = 0;
    for (std::size_t k = 0, rk = 0; k < vax.size(); ++k) {
      if (k == xpos) continue;
      base += static_cast<std::size_t>(rcfg[rk++]) * vstride[k];
    }
    std::vector<MOP> alts;
    alts.reserve(allowed.size());
    for (int st : allowed) {
      if (st < 0 || st >= nx)
        throw AlgebraError("decision constraint allows out-of-range state " +
                           std::to_string(st));
      alts.push_back(entry_to_mop(
          v.entry(base + static_cast<std::size_t>(st) * vstride[xpos]), "decision removal"));
    }
    auto [best, pol] = pointwise_max(alts);
    if (!best.is_zero()) r.entry(ridx) = Entry{CAddend{best, {}}};

    if (policy) {
      PolicyCase pc;
      for (std::size_t k = 0; k < raxes.size(); ++k)
        pc.config.emplace_back(raxes[k].var, rcfg[k]);
      if (pol.breaks.empty()) {
        pc.state = allowed.at(static_cast<std::size_t>(pol.winners.at(0)));
      } else {
        pc.piecewise = true;
        for (const MOP& a : alts)
          if (!a.is_zero() && !a.is_scalar()) {
            pc.observed = a.scope().front();
            break;
          }
        pc.breaks = pol.breaks;
        for (int w : pol.winners) pc.states.push_back(allowed.at(static_cast<std::size_t>(w)));
        pc.lo = pol.lo;
        pc.hi = pol.hi;
      }
      policy->push_back(std::move(pc));
    }
  }
  return r;
}

// Maximization over a continuous decision X (a continuous variable of the
// utility).  Every entry must depend on X alone.
Potential maximize_continuous(const Potential& v, VarId X, const std::optional<Interval>& domain,
                              std::vector<PolicyCase>* policy) {
  std::vector<VarId> rc;
  for (VarId c : v.cont_vars())
    if (c != X) rc.push_back(c);
  Potential r(PotKind::Utility, v.axes(), rc);
  for (std::size_t idx = 0; idx < v.num_configs(); ++idx) {
    MOP m = entry_to_mop(v.entry(idx), "decision removal");
    for (VarId sv : m.scope())
      if (sv != X)
        throw AlgebraError("continuous decision id " + std::to_string(X) +
                           " is still entangled with variable id " + std::to_string(sv) +
                           "; eliminate that variable first");
    double val = 0.0, arg = 0.0;
    if (m.is_zero() || m.is_scalar()) {
      if (!domain)
        throw AlgebraError("continuous decision id " + std::to_string(X) +
                           " needs an explicit domain: the utility does not pin one down");
      val = m.is_zero() ? 0.0 : m.scalar_value();
      arg = domain->lo;
    } else {
      std::tie(val, arg) = maximize_1d(m, domain);
    }
    if (val != 0.0) r.entry(idx) = Entry{CAddend{MOP::scalar(val), {}}};
    if (policy) {
      PolicyCase pc;
      std::vector<int> cfg = v.config_of(idx);
      for (std::size_t k = 0; k < v.axes().size(); ++k)
        pc.config.emplace_back(v.axes()[k].var, cfg[k]);
      pc.continuous = true;
      pc.value = arg;
      policy->push_back(std::move(pc));
    }
  }
  return r;
}

}  // namespace

Potential marginalize_decision(const Potential& v, VarId X, const DecisionConstraint* constraint,
                               const std::optional<Interval>& domain,
                               std::vector<PolicyCase>* policy) {
  if (!v.in_domain(X))
    throw AlgebraError("decision variable id " + std::to_string(X) +
                       " is not in the domain of " + v.describe());
  const bool x_discrete = std::any_of(v.axes().begin(), v.axes().end(),
                                      [&](const DiscreteAxis& ax) { return ax.var == X; });
  if (!x_discrete && constraint)
    throw AlgebraError("feasibility constraints apply to discrete decisions only");
  return x_discrete ? maximize_discrete(v, X, constraint, policy)
                    : maximize_continuous(v, X, domain, policy);
}

MixedPotential marginalize_mixed_decision(const MixedPotential& mu, VarId X,
                                          const DecisionConstraint* constraint,
                                          const std::optional<Interval>& domain,
                                          std::vector<PolicyCase>* policy) {
  const bool in_r = mu.discrete.in_domain(X);
  const bool in_s = mu.continuous.in_domain(X);
  if (!in_r && !in_s && !mu.utility.in_domain(X))
    throw AlgebraError("decision variable id " + std::to_string(X) +
                       " is absent from the potential; nothing to optimize");

  Potential v = mu.utility;
  if (in_r) v = combine_as(mu.discrete, v, PotKind::Utility);
  if (in_s) v = combine_as(mu.continuous, v, PotKind::Utility);

  MixedPotential out;
  out.discrete = in_r ? Potential::identity(PotKind::Discrete) : mu.discrete;
  out.continuous = in_s ? Potential::identity(PotKind::Continuous) : mu.continuous;
  out.utility = marginalize_decision(v, X, constraint, domain, policy);
  return out;
}

MixedPotential marginalize_mixed_chance(const MixedPotential& mu, VarId X,
                                        const ChanceClasses& classes, bool allow_shortcut) {
  const bool in_r = mu.discrete.in_domain(X);
  const bool in_s = mu.continuous.in_domain(X);
  const bool in_t = mu.utility.in_domain(X);
  if (!in_r && !in_s && !in_t)
    throw AlgebraError("variable id " + std::to_string(X) + " is absent from the potential");

  PotKind kx;
  if (classes.discrete.count(X))
    kx = PotKind::Discrete;
  else if (classes.continuous.count(X))
    kx = PotKind::Continuous;
  else
    throw AlgebraError("variable id " + std::to_string(X) + " is not a chance variable");

  auto rest_in = [&](const std::vector<VarId>& dom, const std::set<VarId>& cls) {
    for (VarId v : dom)
      if (v != X && !cls.count(v)) return false;
    return true;
  };
  auto conditional = [&](const Potential& dividend, const Potential& marg, const char* where) {
    try {
      return divide(dividend, marg);
    } catch (const DivisionNotClosed& e) {
      throw DivisionNotClosed(
          std::string(e.what()) + " — while removing variable id " + std::to_string(X) +
          " (case: X in " + where +
          "). If the model has a single utility factor, or this divisor is vacuous, the "
          "division-free shortcut computes the same result; enable it.");
    }
  };

  MixedPotential out;

  if (in_r && in_s) {
    Potential prod = combine_as(mu.discrete, mu.continuous, kx);
    const bool disc_rest = rest_in(prod.domain(), classes.discrete);
    if (in_t) {
      if (allow_shortcut) {
        out.utility = marginalize_var(combine_as(prod, mu.utility, PotKind::Utility), X);
      } else {
        Potential marg = marginalize_var(prod, X);
        Potential q = conditional(prod, marg, "probability parts and utility");
        out.utility = marginalize_var(combine_as(q, mu.utility, PotKind::Utility), X);
        if (disc_rest)
          out.discrete = marg.retag(PotKind::Discrete);
        else
          out.continuous = marg.retag(PotKind::Continuous);
      }
    } else {
      Potential marg = marginalize_var(prod, X);
      out.utility = mu.utility;
      if (disc_rest)
        out.discrete = marg.retag(PotKind::Discrete);
      else
        out.continuous = marg.retag(PotKind::Continuous);
    }
    return out;
  }

  if (in_s) {
    const bool disc_rest = rest_in(mu.continuous.domain(), classes.discrete);
    if (in_t && allow_shortcut) {
      out.discrete = mu.discrete;
      out.utility =
          marginalize_var(combine_as(mu.continuous, mu.utility, PotKind::Utility), X);
      return out;
    }
    Potential marg = marginalize_var(mu.continuous, X);
    if (in_t) {
      Potential q = conditional(mu.continuous, marg, "continuous part and utility");
      out.utility = marginalize_var(combine_as(q, mu.utility, PotKind::Utility), X);
    } else {
      out.utility = mu.utility;
    }
    if (disc_rest) {
      out.discrete = combine_mul(mu.discrete, marg.retag(PotKind::Discrete));
    } else {
      out.discrete = mu.discrete;
      out.continuous = marg;
    }
    return out;
  }

  if (in_r) {
    const bool cont_rest = rest_in(mu.discrete.domain(), classes.continuous);
    if (in_t && allow_shortcut) {
      out.continuous = mu.continuous;
      out.utility = marginalize_var(combine_as(mu.discrete, mu.utility, PotKind::Utility), X);
      return out;
    }
    Potential marg = marginalize_var(mu.discrete, X);
    if (in_t) {
      Potential q = conditional(mu.discrete, marg, "discrete part and utility");
      out.utility = marginalize_var(combine_as(q, mu.utility, PotKind::Utility), X);
    } else {
      out.utility = mu.utility;
    }
    if (cont_rest) {
      out.continuous = combine_mul(marg.retag(PotKind::Continuous), mu.continuous);
    } else {
      out.discrete = marg;
      out.continuous = mu.continuous;
    }
    return out;
  }

  out.discrete = mu.discrete;
  out.continuous = mu.continuous;
  out.utility = marginalize_var(mu.utility, X);
  return out;
}

}  // namespace mopid
