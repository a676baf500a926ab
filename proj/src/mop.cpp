#include "mopid/mop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "mopid/roots.hpp"

namespace mopid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
std::atomic<bool> g_validate{false};

double midpoint_anchor(const Interval& iv) {
  if (std::isfinite(iv.lo) && std::isfinite(iv.hi)) return 0.5 * (iv.lo + iv.hi);
  if (std::isfinite(iv.lo)) return iv.lo;
  if (std::isfinite(iv.hi)) return iv.hi;
  return 0.0;
}

// Shift a polynomial from one anchor vector to another (variables aligned
// with `scope`).
Polynomial rebase(const Polynomial& p, const std::vector<VarId>& scope,
                  const std::vector<double>& from, const std::vector<double>& to) {
  Polynomial r = p;
  for (std::size_t i = 0; i < scope.size(); ++i) {
    double d = to[i] - from[i];
    if (d != 0.0 && r.references(scope[i])) r = r.shift(scope[i], d);
  }
  return r;
}

std::vector<VarId> scope_union(const std::vector<VarId>& a, const std::vector<VarId>& b) {
  std::vector<VarId> u;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  return u;
}

// Re-express a piece over a larger scope: missing axes get (-inf, inf) with
// anchor 0.
Piece widen_piece(const Piece& p, const std::vector<VarId>& from, const std::vector<VarId>& to) {
  Piece q;
  q.poly = p.poly;
  q.region.bounds.reserve(to.size());
  q.anchor.reserve(to.size());
  std::size_t j = 0;
  for (VarId v : to) {
    if (j < from.size() && from[j] == v) {
      q.region.bounds.push_back(p.region.bounds[j]);
      q.anchor.push_back(p.anchor[j]);
      ++j;
    } else {
      q.region.bounds.push_back({-kInf, kInf});
      q.anchor.push_back(0.0);
    }
  }
  return q;
}

bool intersect_region(const Region& a, const Region& b, Region& out) {
  out.bounds.resize(a.bounds.size());
  for (std::size_t i = 0; i < a.bounds.size(); ++i) {
    double lo = std::max(a.bounds[i].lo, b.bounds[i].lo);
    double hi = std::min(a.bounds[i].hi, b.bounds[i].hi);
    if (!(lo < hi)) return false;
    out.bounds[i] = {lo, hi};
  }
  return true;
}

std::vector<double> region_anchor(const Region& r) {
  std::vector<double> a(r.bounds.size());
  for (std::size_t i = 0; i < r.bounds.size(); ++i) a[i] = midpoint_anchor(r.bounds[i]);
  return a;
}

bool region_less(const Region& a, const Region& b) {
  for (std::size_t i = 0; i < a.bounds.size(); ++i) {
    if (a.bounds[i].lo != b.bounds[i].lo) return a.bounds[i].lo < b.bounds[i].lo;
    if (a.bounds[i].hi != b.bounds[i].hi) return a.bounds[i].hi < b.bounds[i].hi;
  }
  return false;
}
}  // namespace

bool Interval::finite() const { return std::isfinite(lo) && std::isfinite(hi); }

void set_mop_validation(bool enabled) { g_validate.store(enabled); }
bool mop_validation_enabled() { return g_validate.load(); }

MOP MOP::scalar(double c) {
  MOP m;
  if (c != 0.0) m.pieces_.push_back(Piece{Region{}, {}, Polynomial::constant(c)});
  return m;
}

MOP MOP::piecewise_one(const std::vector<VarId>& scope, const Region& region) {
  MOP m;
  m.scope_ = scope;
  m.pieces_.push_back(Piece{region, region_anchor(region), Polynomial::constant(1.0)});
  return m;
}

double MOP::scalar_value() const {
  if (!scope_.empty()) throw AlgebraError("MOP is not scope-empty: " + describe());
  if (pieces_.empty()) return 0.0;
  return pieces_.front().poly.constant_value();
}

bool MOP::in_scope(VarId v) const { return std::binary_search(scope_.begin(), scope_.end(), v); }

int MOP::index_of(VarId v) const {
  auto it = std::lower_bound(scope_.begin(), scope_.end(), v);
  if (it == scope_.end() || *it != v) return -1;
  return static_cast<int>(it - scope_.begin());
}

double MOP::eval(const std::vector<std::pair<VarId, double>>& point) const {
  auto value_of = [&](VarId v) -> double {
    for (const auto& [w, x] : point)
      if (w == v) return x;
    throw AlgebraError("MOP eval: no value supplied for variable id " + std::to_string(v));
  };
  for (const Piece& p : pieces_) {
    bool inside = true;
    for (std::size_t i = 0; i < scope_.size() && inside; ++i)
      inside = p.region.bounds[i].contains(value_of(scope_[i]));
    if (!inside) continue;
    std::vector<std::pair<VarId, double>> offs;
    offs.reserve(scope_.size());
    for (std::size_t i = 0; i < scope_.size(); ++i)
      offs.emplace_back(scope_[i], value_of(scope_[i]) - p.anchor[i]);
    return p.poly.eval(offs);
  }
  return 0.0;
}

void MOP::append_piece(const Region& region, const std::vector<double>& anchor, const Polynomial& poly) {
  if (poly.is_zero()) return;
  if (region.bounds.size() != scope_.size() || anchor.size() != scope_.size())
    throw AlgebraError("append_piece: region/anchor arity mismatch");
  for (const Interval& iv : region.bounds)
    if (!(iv.lo < iv.hi)) return;  // degenerate
  pieces_.push_back(Piece{region, anchor, poly});
}

void MOP::validate() const {
  for (std::size_t i = 1; i < scope_.size(); ++i)
    if (scope_[i - 1] >= scope_[i]) throw AlgebraError("MOP scope not strictly ascending");
  for (const Piece& p : pieces_) {
    if (p.region.bounds.size() != scope_.size() || p.anchor.size() != scope_.size())
      throw AlgebraError("MOP piece arity mismatch");
    for (std::size_t i = 0; i < scope_.size(); ++i) {
      if (!(p.region.bounds[i].lo < p.region.bounds[i].hi))
        throw AlgebraError("MOP piece has an empty interval");
      if (!std::isfinite(p.anchor[i])) throw AlgebraError("MOP piece anchor not finite");
    }
    if (p.poly.is_zero()) throw AlgebraError("MOP stores an unpruned zero piece");
    for (VarId v : p.poly.variables())
      if (!in_scope(v)) throw AlgebraError("MOP piece polynomial references out-of-scope variable");
    for (const auto& [m, c] : p.poly.terms())
      if (!std::isfinite(c)) throw AlgebraError("MOP piece has non-finite coefficient");
  }
  for (std::size_t i = 0; i < pieces_.size(); ++i)
    for (std::size_t j = i + 1; j < pieces_.size(); ++j) {
      bool overlap = true;
      for (std::size_t d = 0; d < scope_.size() && overlap; ++d) {
        const Interval& a = pieces_[i].region.bounds[d];
        const Interval& b = pieces_[j].region.bounds[d];
        overlap = a.lo < b.hi && b.lo < a.hi;
      }
      if (overlap && !scope_.empty())
        throw AlgebraError("MOP pieces overlap");
      if (overlap && scope_.empty())
        throw AlgebraError("scope-empty MOP with more than one piece");
    }
}

std::string MOP::describe() const {
  std::ostringstream os;
  os << "MOP(scope={";
  for (std::size_t i = 0; i < scope_.size(); ++i) os << (i ? "," : "") << scope_[i];
  os << "}, " << pieces_.size() << " pieces)";
  return os.str();
}

MOP mop_from_pieces(std::vector<VarId> scope, std::vector<Piece> pieces, bool refine) {
  MOP m;
  // Drop zero polynomials and degenerate regions up front.
  std::vector<Piece> kept;
  kept.reserve(pieces.size());
  for (Piece& p : pieces) {
    if (p.poly.is_zero()) continue;
    bool degenerate = false;
    for (const Interval& iv : p.region.bounds)
      if (!(iv.lo < iv.hi)) degenerate = true;
    if (!degenerate) kept.push_back(std::move(p));
  }
  if (kept.empty()) return m;

  if (refine && !scope.empty()) {
    const std::size_t dims = scope.size();
    std::vector<std::vector<double>> cuts(dims);
    for (const Piece& p : kept)
      for (std::size_t d = 0; d < dims; ++d) {
        cuts[d].push_back(p.region.bounds[d].lo);
        cuts[d].push_back(p.region.bounds[d].hi);
      }
    for (auto& c : cuts) {
      std::sort(c.begin(), c.end());
      c.erase(std::unique(c.begin(), c.end()), c.end());
    }
    auto cell_index = [](const std::vector<double>& c, double x) {
      return static_cast<std::size_t>(std::lower_bound(c.begin(), c.end(), x) - c.begin());
    };
    std::map<std::vector<std::size_t>, std::pair<Polynomial, Piece const*>> cells;
    std::size_t visits = 0;
    for (const Piece& p : kept) {
      std::vector<std::size_t> lo(dims), hi(dims), idx(dims);
      std::size_t count = 1;
      for (std::size_t d = 0; d < dims; ++d) {
        lo[d] = cell_index(cuts[d], p.region.bounds[d].lo);
        hi[d] = cell_index(cuts[d], p.region.bounds[d].hi);
        count *= hi[d] - lo[d];
      }
      visits += count;
      if (visits > 50'000'000) throw AlgebraError("MOP refinement exceeds piece budget");
      idx = lo;
      while (true) {
        auto& slot = cells[idx];
        if (slot.second == nullptr) {
          slot.second = &p;  // remember one contributor; anchor fixed below
        }
        // Rebase contribution to the cell's midpoint anchor.
        std::vector<double> cell_anchor(dims);
        for (std::size_t d = 0; d < dims; ++d)
          cell_anchor[d] = midpoint_anchor({cuts[d][idx[d]], cuts[d][idx[d] + 1]});
        slot.first = slot.first + rebase(p.poly, scope, p.anchor, cell_anchor);
        // odometer
        std::size_t d = 0;
        while (d < dims) {
          if (++idx[d] < hi[d]) break;
          idx[d] = lo[d];
          ++d;
        }
        if (d == dims) break;
      }
    }
    for (auto& [idx, slot] : cells) {
      if (slot.first.is_zero()) continue;
      Region r;
      std::vector<double> anchor(dims);
      r.bounds.resize(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        r.bounds[d] = {cuts[d][idx[d]], cuts[d][idx[d] + 1]};
        anchor[d] = midpoint_anchor(r.bounds[d]);
      }
      m.pieces_.push_back(Piece{r, anchor, slot.first});
    }
  } else if (refine && scope.empty()) {
    // Scope-empty pieces are plain numbers: sum them.
    double total = 0.0;
    for (const Piece& p : kept) total += p.poly.constant_value();
    if (total != 0.0) m.pieces_.push_back(Piece{Region{}, {}, Polynomial::constant(total)});
  } else {
    m.pieces_ = std::move(kept);
  }
  m.scope_ = std::move(scope);
  if (m.pieces_.empty()) m.scope_.clear();
  std::sort(m.pieces_.begin(), m.pieces_.end(),
            [](const Piece& a, const Piece& b) { return region_less(a.region, b.region); });
  if (g_validate.load()) m.validate();
  return m;
}

MOP add(const MOP& a, const MOP& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  std::vector<VarId> u = scope_union(a.scope(), b.scope());
  std::vector<Piece> pieces;
  pieces.reserve(a.pieces().size() + b.pieces().size());
  for (const Piece& p : a.pieces()) pieces.push_back(widen_piece(p, a.scope(), u));
  for (const Piece& p : b.pieces()) pieces.push_back(widen_piece(p, b.scope(), u));
  return mop_from_pieces(std::move(u), std::move(pieces), true);
}

MOP subtract(const MOP& a, const MOP& b) { return add(a, scale(b, -1.0)); }

MOP scale(const MOP& a, double c) {
  if (c == 0.0) return MOP::zero();
  std::vector<Piece> pieces = a.pieces();
  for (Piece& p : pieces) p.poly = p.poly.scaled(c);
  return mop_from_pieces(a.scope(), std::move(pieces), false);
}

MOP multiply(const MOP& a, const MOP& b) {
  if (a.is_zero() || b.is_zero()) return MOP::zero();
  std::vector<VarId> u = scope_union(a.scope(), b.scope());
  std::vector<Piece> pieces;
  for (const Piece& pa : a.pieces()) {
    Piece wa = widen_piece(pa, a.scope(), u);
    for (const Piece& pb : b.pieces()) {
      Piece wb = widen_piece(pb, b.scope(), u);
      Region r;
      if (!intersect_region(wa.region, wb.region, r)) continue;
      std::vector<double> anchor = region_anchor(r);
      Polynomial prod = rebase(wa.poly, u, wa.anchor, anchor) * rebase(wb.poly, u, wb.anchor, anchor);
      pieces.push_back(Piece{r, anchor, prod});
    }
  }
  return mop_from_pieces(std::move(u), std::move(pieces), false);
}

MOP divide_mop(const MOP& num, const MOP& den) {
  if (den.is_zero()) {
    if (num.is_zero()) return MOP::zero();
    throw DivisionNotClosed("division by the zero function");
  }
  if (den.is_scalar()) {
    double z = den.scalar_value();
    if (z == 0.0) throw DivisionNotClosed("division by the zero function");
    return scale(num, 1.0 / z);
  }
  if (num.is_zero()) return MOP::zero();

  bool den_const = true;
  for (const Piece& p : den.pieces())
    if (!p.poly.is_constant()) {
      den_const = false;
      break;
    }
  if (den_const) {
    // Reciprocal on den's support; the product drops num outside it (0/0 = 0).
    std::vector<Piece> rp;
    rp.reserve(den.pieces().size());
    for (const Piece& p : den.pieces())
      rp.push_back(Piece{p.region, p.anchor, Polynomial::constant(1.0 / p.poly.constant_value())});
    return multiply(num, mop_from_pieces(den.scope(), std::move(rp), false));
  }

  // Exact polynomial quotient on every intersection cell.
  std::vector<VarId> u = scope_union(num.scope(), den.scope());
  std::vector<Piece> pieces;
  for (const Piece& pn : num.pieces()) {
    Piece wn = widen_piece(pn, num.scope(), u);
    for (const Piece& pd : den.pieces()) {
      Piece wd = widen_piece(pd, den.scope(), u);
      Region r;
      if (!intersect_region(wn.region, wd.region, r)) continue;
      std::vector<double> anchor = region_anchor(r);
      Polynomial np = rebase(wn.poly, u, wn.anchor, anchor);
      Polynomial dp = rebase(wd.poly, u, wd.anchor, anchor);
      std::optional<Polynomial> q = exact_divide(np, dp);
      if (!q)
        throw DivisionNotClosed("piecewise quotient is not polynomial; the dividend " +
                                np.to_string() + " is not a multiple of " + dp.to_string());
      pieces.push_back(Piece{r, std::move(anchor), std::move(*q)});
    }
  }
  return mop_from_pieces(std::move(u), std::move(pieces), false);
}

MOP integrate_out(const MOP& m, VarId v) {
  int idx = m.index_of(v);
  if (idx < 0) throw AlgebraError("integrate_out: variable not in scope of " + m.describe());
  std::vector<VarId> ns = m.scope();
  ns.erase(ns.begin() + idx);
  std::vector<Piece> out;
  for (const Piece& p : m.pieces()) {
    const Interval& iv = p.region.bounds[static_cast<std::size_t>(idx)];
    if (!iv.finite())
      throw AlgebraError("integrate_out: piece unbounded in variable id " + std::to_string(v));
    Polynomial F = p.poly.antiderivative(v);
    double av = p.anchor[static_cast<std::size_t>(idx)];
    Polynomial val = F.pin(v, iv.hi - av) - F.pin(v, iv.lo - av);
    Piece q;
    q.poly = std::move(val);
    for (std::size_t d = 0; d < p.region.bounds.size(); ++d) {
      if (static_cast<int>(d) == idx) continue;
      q.region.bounds.push_back(p.region.bounds[d]);
      q.anchor.push_back(p.anchor[d]);
    }
    out.push_back(std::move(q));
  }
  return mop_from_pieces(std::move(ns), std::move(out), true);
}

MOP differentiate(const MOP& m, VarId v) {
  if (m.index_of(v) < 0) throw AlgebraError("differentiate: variable not in scope of " + m.describe());
  std::vector<Piece> out;
  for (const Piece& p : m.pieces()) out.push_back(Piece{p.region, p.anchor, p.poly.derivative(v)});
  return mop_from_pieces(m.scope(), std::move(out), false);
}

MOP restrict_var(const MOP& m, VarId v, double lo, double hi) {
  int idx = m.index_of(v);
  if (idx < 0) throw AlgebraError("restrict_var: variable not in scope");
  std::vector<Piece> out;
  for (Piece p : m.pieces()) {
    Interval& iv = p.region.bounds[static_cast<std::size_t>(idx)];
    iv.lo = std::max(iv.lo, lo);
    iv.hi = std::min(iv.hi, hi);
    if (iv.lo < iv.hi) out.push_back(std::move(p));
  }
  return mop_from_pieces(m.scope(), std::move(out), false);
}

MOP pin(const MOP& m, VarId v, double x) {
  int idx = m.index_of(v);
  if (idx < 0) throw AlgebraError("pin: variable not in scope");
  std::vector<VarId> ns = m.scope();
  ns.erase(ns.begin() + idx);
  std::vector<Piece> out;
  for (const Piece& p : m.pieces()) {
    if (!p.region.bounds[static_cast<std::size_t>(idx)].contains(x)) continue;
    Piece q;
    q.poly = p.poly.pin(v, x - p.anchor[static_cast<std::size_t>(idx)]);
    for (std::size_t d = 0; d < p.region.bounds.size(); ++d) {
      if (static_cast<int>(d) == idx) continue;
      q.region.bounds.push_back(p.region.bounds[d]);
      q.anchor.push_back(p.anchor[d]);
    }
    out.push_back(std::move(q));
  }
  return mop_from_pieces(std::move(ns), std::move(out), false);
}

MOP rename_var(const MOP& m, VarId from, VarId to) {
  int idx = m.index_of(from);
  if (idx < 0) throw AlgebraError("rename_var: variable not in scope");
  if (m.in_scope(to)) throw AlgebraError("rename_var: target id already in scope");
  std::vector<VarId> ns;
  for (VarId v : m.scope()) ns.push_back(v == from ? to : v);
  std::vector<std::size_t> order(ns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ns[a] < ns[b]; });
  std::vector<VarId> sorted_scope;
  for (std::size_t i : order) sorted_scope.push_back(ns[i]);
  std::vector<Piece> out;
  for (const Piece& p : m.pieces()) {
    Piece q;
    q.poly = p.poly.references(from) ? p.poly.substitute(from, Polynomial::var(to)) : p.poly;
    for (std::size_t i : order) {
      q.region.bounds.push_back(p.region.bounds[i]);
      q.anchor.push_back(p.anchor[i]);
    }
    out.push_back(std::move(q));
  }
  return mop_from_pieces(std::move(sorted_scope), std::move(out), false);
}

namespace {

// Composition of one m-piece (with v removed) against one value polynomial
// for v, over an explicit result region.  `gpoly` is expressed in offsets of
// `ganchor` over `gscope`; the result region/anchors are over `rscope`.
Piece compose_piece(const std::vector<VarId>& mscope, const Piece& mpiece, int vidx,
                    const std::vector<VarId>& gscope, const Polynomial& gpoly,
                    const std::vector<double>& ganchor, const std::vector<VarId>& rscope,
                    const Region& rregion) {
  Piece out;
  out.region = rregion;
  out.anchor = region_anchor(rregion);
  // Rebase the m polynomial (ignoring the v axis) onto the result anchors.
  Polynomial mp = mpiece.poly;
  for (std::size_t i = 0; i < mscope.size(); ++i) {
    if (static_cast<int>(i) == vidx) continue;
    auto it = std::lower_bound(rscope.begin(), rscope.end(), mscope[i]);
    std::size_t ri = static_cast<std::size_t>(it - rscope.begin());
    double d = out.anchor[ri] - mpiece.anchor[i];
    if (d != 0.0 && mp.references(mscope[i])) mp = mp.shift(mscope[i], d);
  }
  // Rebase g onto the result anchors.
  Polynomial gp = gpoly;
  for (std::size_t i = 0; i < gscope.size(); ++i) {
    auto it = std::lower_bound(rscope.begin(), rscope.end(), gscope[i]);
    std::size_t ri = static_cast<std::size_t>(it - rscope.begin());
    double d = out.anchor[ri] - ganchor[i];
    if (d != 0.0 && gp.references(gscope[i])) gp = gp.shift(gscope[i], d);
  }
  // m's v axis stands for (v_value - v_anchor).
  VarId v = mscope[static_cast<std::size_t>(vidx)];
  double av = mpiece.anchor[static_cast<std::size_t>(vidx)];
  Polynomial repl = gp - Polynomial::constant(av);
  out.poly = mp.references(v) ? mp.substitute(v, repl) : mp;
  return out;
}

}  // namespace

MOP substitute(const MOP& m, VarId v, const MOP& g) {
  int vidx = m.index_of(v);
  if (vidx < 0) throw AlgebraError("substitute: variable not in scope of " + m.describe());
  if (g.in_scope(v)) throw AlgebraError("substitute: scope conflict, replacement references the target");
  if (m.is_zero() || g.is_zero()) {
    // Composition is restricted to g's support; an all-zero g supports nothing
    // unless it is the scope-empty constant 0, which pins v := 0.
    if (g.is_zero() && g.is_scalar() && !m.is_zero()) return pin(m, v, 0.0);
    return MOP::zero();
  }

  std::vector<VarId> mrest = m.scope();
  mrest.erase(mrest.begin() + vidx);
  std::vector<VarId> rscope = scope_union(mrest, g.scope());

  bool all_unbounded = true;
  for (const Piece& p : m.pieces())
    if (p.region.bounds[static_cast<std::size_t>(vidx)].finite() ||
        std::isfinite(p.region.bounds[static_cast<std::size_t>(vidx)].lo) ||
        std::isfinite(p.region.bounds[static_cast<std::size_t>(vidx)].hi))
      all_unbounded = false;

  std::vector<Piece> out;

  auto result_region = [&](const Piece& mp, const Region* gregion, const std::vector<VarId>& gsc,
                           std::optional<Interval> clip, VarId clipvar, Region& r) -> bool {
    r.bounds.assign(rscope.size(), Interval{-kInf, kInf});
    for (std::size_t i = 0; i < m.scope().size(); ++i) {
      if (static_cast<int>(i) == vidx) continue;
      auto it = std::lower_bound(rscope.begin(), rscope.end(), m.scope()[i]);
      r.bounds[static_cast<std::size_t>(it - rscope.begin())] = mp.region.bounds[i];
    }
    if (gregion) {
      for (std::size_t i = 0; i < gsc.size(); ++i) {
        auto it = std::lower_bound(rscope.begin(), rscope.end(), gsc[i]);
        std::size_t ri = static_cast<std::size_t>(it - rscope.begin());
        r.bounds[ri].lo = std::max(r.bounds[ri].lo, gregion->bounds[i].lo);
        r.bounds[ri].hi = std::min(r.bounds[ri].hi, gregion->bounds[i].hi);
        if (!(r.bounds[ri].lo < r.bounds[ri].hi)) return false;
      }
    }
    if (clip) {
      auto it = std::lower_bound(rscope.begin(), rscope.end(), clipvar);
      std::size_t ri = static_cast<std::size_t>(it - rscope.begin());
      r.bounds[ri].lo = std::max(r.bounds[ri].lo, clip->lo);
      r.bounds[ri].hi = std::min(r.bounds[ri].hi, clip->hi);
      if (!(r.bounds[ri].lo < r.bounds[ri].hi)) return false;
    }
    return true;
  };

  if (all_unbounded) {
    // Pure composition with any g.
    for (const Piece& mp : m.pieces())
      for (const Piece& gp : g.pieces()) {
        Region r;
        if (!result_region(mp, &gp.region, g.scope(), std::nullopt, 0, r)) continue;
        out.push_back(compose_piece(m.scope(), mp, vidx, g.scope(), gp.poly, gp.anchor, rscope, r));
      }
    return mop_from_pieces(std::move(rscope), std::move(out), false);
  }

  if (g.scope().size() > 1)
    throw AlgebraError(
        "substitute: composition would need non-rectangular regions "
        "(replacement is multivariate and the target has finite piece bounds)");

  if (g.is_scalar()) {
    double c = g.scalar_value();
    return pin(m, v, c);
  }

  // Univariate g: locate where g crosses each v-boundary of m by root
  // isolation, then compose segment by segment.
  VarId y = g.scope().front();
  std::vector<double> boundaries;
  for (const Piece& mp : m.pieces()) {
    const Interval& iv = mp.region.bounds[static_cast<std::size_t>(vidx)];
    if (std::isfinite(iv.lo)) boundaries.push_back(iv.lo);
    if (std::isfinite(iv.hi)) boundaries.push_back(iv.hi);
  }
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());

  for (const Piece& gp : g.pieces()) {
    const Interval& yiv = gp.region.bounds[0];
    double ga = gp.anchor[0];
    std::vector<double> segs;
    segs.push_back(yiv.lo);
    for (double c : boundaries) {
      RootList rl = roots_in_interval(gp.poly - Polynomial::constant(c), y, yiv.lo - ga, yiv.hi - ga);
      for (double t : rl.roots) segs.push_back(ga + t);
    }
    segs.push_back(yiv.hi);
    std::sort(segs.begin(), segs.end());
    segs.erase(std::unique(segs.begin(), segs.end()), segs.end());

    for (std::size_t s = 0; s + 1 < segs.size(); ++s) {
      double s0 = segs[s], s1 = segs[s + 1];
      if (!(s0 < s1)) continue;
      double ym;
      if (std::isfinite(s0) && std::isfinite(s1))
        ym = 0.5 * (s0 + s1);
      else if (std::isfinite(s0))
        ym = s0 + 1.0;
      else if (std::isfinite(s1))
        ym = s1 - 1.0;
      else
        ym = 0.0;
      double gval = gp.poly.eval({{y, ym - ga}});
      for (const Piece& mp : m.pieces()) {
        if (!mp.region.bounds[static_cast<std::size_t>(vidx)].contains(gval)) continue;
        Region r;
        if (!result_region(mp, nullptr, {}, Interval{s0, s1}, y, r)) continue;
        out.push_back(compose_piece(m.scope(), mp, vidx, g.scope(), gp.poly, gp.anchor, rscope, r));
      }
    }
  }
  return mop_from_pieces(std::move(rscope), std::move(out), false);
}

MOP integrate_affine_binding(const MOP& m, VarId v, VarId x, const MOP& g) {
  if (v == x) throw AlgebraError("integrate_affine_binding: target and integration variable collide");
  if (g.pieces().size() != 1)
    throw AlgebraError("integrate_affine_binding: binding must be a single affine piece");
  const Piece& gp = g.pieces().front();
  for (const Interval& iv : gp.region.bounds)
    if (std::isfinite(iv.lo) || std::isfinite(iv.hi))
      throw AlgebraError("integrate_affine_binding: binding must have unbounded support");
  if (gp.poly.degree() > 1) throw AlgebraError("integrate_affine_binding: binding is not affine");
  if (g.in_scope(v) || g.in_scope(x) == false)
    throw AlgebraError("integrate_affine_binding: binding must reference the integration "
                       "variable and not the bound target");

  // Value-space coefficients of g: v = c0 + cx*x + cy*y.
  double c0 = 0.0, cx = 0.0, cy = 0.0;
  VarId y = -1;
  {
    Polynomial p = gp.poly;
    for (std::size_t i = 0; i < g.scope().size(); ++i)
      if (gp.anchor[i] != 0.0) p = p.shift(g.scope()[i], -gp.anchor[i]);
    for (const auto& [mono, coef] : p.terms()) {
      if (mono.factors.empty()) {
        c0 = coef;
      } else if (mono.factors.front().first == x) {
        cx = coef;
      } else {
        if (y != -1 && y != mono.factors.front().first)
          throw AlgebraError("integrate_affine_binding: more than one carrier variable");
        y = mono.factors.front().first;
        cy = coef;
      }
    }
  }
  if (cx == 0.0) throw AlgebraError("integrate_affine_binding: binding does not depend on the "
                                    "integration variable");
  const bool carrier = (y != -1 && cy != 0.0);

  const int midx_v = m.index_of(v);
  const int midx_x = m.index_of(x);
  std::vector<VarId> rest;
  for (VarId w : m.scope())
    if (w != v && w != x) rest.push_back(w);
  std::vector<VarId> rscope = rest;
  if (carrier && !std::binary_search(rscope.begin(), rscope.end(), y))
    rscope.insert(std::lower_bound(rscope.begin(), rscope.end(), y), y);

  std::vector<Piece> out;
  for (const Piece& P : m.pieces()) {
    const double av = midx_v >= 0 ? P.anchor[static_cast<std::size_t>(midx_v)] : 0.0;
    const double ax = midx_x >= 0 ? P.anchor[static_cast<std::size_t>(midx_x)] : 0.0;
    Interval viv = midx_v >= 0 ? P.region.bounds[static_cast<std::size_t>(midx_v)] : Interval{-kInf, kInf};
    Interval xiv = midx_x >= 0 ? P.region.bounds[static_cast<std::size_t>(midx_x)] : Interval{-kInf, kInf};

    int midx_y = carrier ? m.index_of(y) : -1;
    double ay = 0.0;
    Interval yiv{-kInf, kInf};
    if (carrier) {
      if (midx_y >= 0) {
        ay = P.anchor[static_cast<std::size_t>(midx_y)];
        yiv = P.region.bounds[static_cast<std::size_t>(midx_y)];
      } else {
        // Center the carrier offsets where the binding maps the piece.
        ay = (av - c0 - cx * ax) / cy;
      }
    }
    const double d0 = c0 + cx * ax + (carrier ? cy * ay : 0.0) - av;

    // Replace the v-offset by its affine image in the x/y offsets.
    Polynomial q = P.poly;
    if (q.references(v)) {
      Polynomial repl = Polynomial::constant(d0) + Polynomial::var(x).scaled(cx);
      if (carrier) repl = repl + Polynomial::var(y).scaled(cy);
      q = q.substitute(v, repl);
    }
    if (q.is_zero()) continue;
    Polynomial F = q.antiderivative(x);

    // Candidate integration limits in the x-offset, affine in the y-offset.
    struct Affine {
      double a, b;  // value = a + b * ty
      bool present;
    };
    Affine lo_c{xiv.lo - ax, 0.0, std::isfinite(xiv.lo)};
    Affine hi_c{xiv.hi - ax, 0.0, std::isfinite(xiv.hi)};
    Affine lo_v{0.0, 0.0, false}, hi_v{0.0, 0.0, false};
    {
      double A_a = (viv.lo - av - d0) / cx, B_a = (viv.hi - av - d0) / cx;
      double slope = carrier ? -cy / cx : 0.0;
      Affine A{A_a, slope, std::isfinite(viv.lo)};
      Affine B{B_a, slope, std::isfinite(viv.hi)};
      lo_v = cx > 0 ? A : B;
      hi_v = cx > 0 ? B : A;
    }

    // Carrier breakpoints: where an affine candidate crosses a constant one.
    const double tylo = yiv.lo - (carrier ? ay : 0.0);
    const double tyhi = yiv.hi - (carrier ? ay : 0.0);
    std::vector<double> tys = {tylo, tyhi};
    if (carrier) {
      auto cross = [&](const Affine& f, const Affine& g2) {
        if (!f.present || !g2.present) return;
        double db = f.b - g2.b;
        if (db == 0.0) return;
        double t = (g2.a - f.a) / db;
        if (t > tylo && t < tyhi) tys.push_back(t);
      };
      cross(lo_v, lo_c);
      cross(lo_v, hi_c);
      cross(hi_v, lo_c);
      cross(hi_v, hi_c);
    }
    std::sort(tys.begin(), tys.end());
    tys.erase(std::unique(tys.begin(), tys.end()), tys.end());

    for (std::size_t s = 0; s + 1 < tys.size(); ++s) {
      double t0 = tys[s], t1 = tys[s + 1];
      if (!(t0 < t1)) continue;
      double tm;
      if (std::isfinite(t0) && std::isfinite(t1))
        tm = 0.5 * (t0 + t1);
      else if (std::isfinite(t0))
        tm = t0 + 1.0;
      else if (std::isfinite(t1))
        tm = t1 - 1.0;
      else
        tm = 0.0;
      auto value_at = [&](const Affine& f) { return f.a + f.b * tm; };
      const Affine* lo_best = nullptr;
      if (lo_c.present) lo_best = &lo_c;
      if (lo_v.present && (!lo_best || value_at(lo_v) > value_at(*lo_best))) lo_best = &lo_v;
      const Affine* hi_best = nullptr;
      if (hi_c.present) hi_best = &hi_c;
      if (hi_v.present && (!hi_best || value_at(hi_v) < value_at(*hi_best))) hi_best = &hi_v;
      if (!lo_best || !hi_best)
        throw AlgebraError("integrate_affine_binding: unbounded integration range");
      if (!(value_at(*lo_best) < value_at(*hi_best))) continue;  // empty window

      auto expr = [&](const Affine& f) {
        Polynomial e = Polynomial::constant(f.a);
        if (f.b != 0.0) e = e + Polynomial::var(y).scaled(f.b);
        return e;
      };
      Polynomial seg = F.substitute(x, expr(*hi_best)) - F.substitute(x, expr(*lo_best));
      if (seg.is_zero()) continue;

      Piece Q;
      Q.region.bounds.reserve(rscope.size());
      Q.anchor.reserve(rscope.size());
      for (VarId w : rscope) {
        if (carrier && w == y) {
          Q.region.bounds.push_back({ay + t0, ay + t1});
          Q.anchor.push_back(ay);
        } else {
          int i = m.index_of(w);
          Q.region.bounds.push_back(P.region.bounds[static_cast<std::size_t>(i)]);
          Q.anchor.push_back(P.anchor[static_cast<std::size_t>(i)]);
        }
      }
      Q.poly = std::move(seg);
      out.push_back(std::move(Q));
    }
  }
  return mop_from_pieces(std::move(rscope), std::move(out), true);
}

std::pair<MOP, PiecewisePolicy> pointwise_max(const std::vector<MOP>& alts) {
  if (alts.empty()) throw AlgebraError("pointwise_max: no alternatives");
  // All non-zero alternatives must share one single-variable scope.
  VarId v = 0;
  bool have_v = false;
  for (const MOP& a : alts) {
    if (a.is_zero() || a.is_scalar()) continue;
    if (a.scope().size() != 1)
      throw AlgebraError("pointwise_max: supported only on a shared single-variable scope");
    if (!have_v) {
      v = a.scope().front();
      have_v = true;
    } else if (a.scope().front() != v) {
      throw AlgebraError("pointwise_max: alternatives over different variables");
    }
  }
  PiecewisePolicy policy;
  if (!have_v) {
    // All alternatives are plain numbers; pick the best, earliest tag wins ties.
    double best = -kInf;
    int tag = 0;
    for (std::size_t i = 0; i < alts.size(); ++i) {
      double val = alts[i].is_zero() ? 0.0 : alts[i].scalar_value();
      if (val > best) {
        best = val;
        tag = static_cast<int>(i);
      }
    }
    policy.winners = {tag};
    return {MOP::scalar(best), policy};
  }

  std::vector<double> cuts;
  for (const MOP& a : alts)
    for (const Piece& p : a.pieces()) {
      if (p.region.bounds.empty()) continue;  // scalar alternative
      if (std::isfinite(p.region.bounds[0].lo)) cuts.push_back(p.region.bounds[0].lo);
      if (std::isfinite(p.region.bounds[0].hi)) cuts.push_back(p.region.bounds[0].hi);
    }
  if (cuts.empty()) throw AlgebraError("pointwise_max: no finite pieces to compare");
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  policy.lo = cuts.front();
  policy.hi = cuts.back();

  // Active polynomial of one alternative at `mid`, rebased to `anchor`.
  auto active_poly = [&](const MOP& m, double mid, double anchor) -> Polynomial {
    if (m.is_scalar())
      return m.is_zero() ? Polynomial() : Polynomial::constant(m.scalar_value());
    for (const Piece& p : m.pieces())
      if (p.region.bounds[0].contains(mid)) return p.poly.shift(v, anchor - p.anchor[0]);
    return Polynomial();
  };

  // Refine every span with the crossing points of each pair of alternatives.
  std::vector<double> atoms;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    double a = cuts[s], b = cuts[s + 1];
    atoms.push_back(a);
    double mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < alts.size(); ++i)
      for (std::size_t j = i + 1; j < alts.size(); ++j) {
        Polynomial diff = active_poly(alts[i], mid, mid) - active_poly(alts[j], mid, mid);
        RootList rl = roots_in_interval(diff, v, a - mid, b - mid);
        for (double t : rl.roots) atoms.push_back(mid + t);
      }
  }
  atoms.push_back(cuts.back());
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());

  std::vector<Piece> out;
  std::vector<int> cellwin;
  std::vector<double> cellbreak;
  for (std::size_t s = 0; s + 1 < atoms.size(); ++s) {
    double a = atoms[s], b = atoms[s + 1];
    if (!(a < b)) continue;
    double mid = 0.5 * (a + b);
    double best = -kInf;
    int tag = -1;
    for (std::size_t i = 0; i < alts.size(); ++i) {
      double val = alts[i].eval({{v, mid}});
      if (val > best) {
        best = val;
        tag = static_cast<int>(i);
      }
    }
    cellbreak.push_back(a);
    cellwin.push_back(tag);
    // Winner's polynomial on this cell.
    Polynomial wp = active_poly(alts[static_cast<std::size_t>(tag)], mid, mid);
    if (!wp.is_zero()) {
      Piece q;
      q.region.bounds = {{a, b}};
      q.anchor = {mid};
      q.poly = std::move(wp);
      out.push_back(std::move(q));
    }
  }
  // Collapse adjacent cells with the same winner into policy intervals.
  for (std::size_t i = 0; i < cellwin.size(); ++i) {
    if (i == 0) {
      policy.winners.push_back(cellwin[i]);
    } else if (cellwin[i] != policy.winners.back()) {
      policy.breaks.push_back(cellbreak[i]);
      policy.winners.push_back(cellwin[i]);
    }
  }
  MOP r = mop_from_pieces({v}, std::move(out), false);
  return {r, policy};
}

std::pair<double, double> maximize_1d(const MOP& m, std::optional<Interval> domain) {
  if (m.scope().size() > 1)
    throw AlgebraError("maximize_1d: MOP is not univariate: " + m.describe());
  if (m.is_zero() && !domain) throw AlgebraError("maximize_1d: cannot maximize the nowhere-defined function");
  if (m.is_scalar()) {
    if (!domain) throw AlgebraError("maximize_1d: scope-empty MOP needs an explicit domain");
    return {m.scalar_value(), domain->lo};
  }
  VarId v = m.scope().front();
  MOP r = domain ? restrict_var(m, v, domain->lo, domain->hi) : m;
  if (r.is_zero()) {
    if (domain) return {0.0, domain->lo};
    throw AlgebraError("maximize_1d: empty restriction");
  }
  double best = -kInf, arg = 0.0;
  bool found = false;
  auto consider = [&](double x, double val) {
    if (!found || val > best) {
      best = val;
      arg = x;
      found = true;
    }
  };
  std::vector<const Piece*> order;
  for (const Piece& p : r.pieces()) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const Piece* a, const Piece* b) {
    return a->region.bounds[0].lo < b->region.bounds[0].lo;
  });
  for (const Piece* p : order) {
    const Interval& iv = p->region.bounds[0];
    if (!iv.finite())
      throw AlgebraError("maximize_1d: unbounded piece; pass an explicit domain");
    double a0 = p->anchor[0];
    std::vector<double> cand = {iv.lo, iv.hi};
    RootList rl = roots_in_interval(p->poly.derivative(v), v, iv.lo - a0, iv.hi - a0);
    for (double t : rl.roots) cand.push_back(a0 + t);
    std::sort(cand.begin(), cand.end());
    for (double x : cand) consider(x, p->poly.eval({{v, x - a0}}));
  }
  // The function is 0 between and outside pieces; if everything is negative
  // and the domain (or gaps) include uncovered points, 0 at the leftmost
  // uncovered point can be the max.  Only an explicit domain makes the
  // uncovered set well-defined for callers.
  if (domain) {
    double cover_lo = order.empty() ? domain->hi : order.front()->region.bounds[0].lo;
    if (domain->lo < cover_lo) consider(domain->lo, 0.0);
    // gaps / tail
    double reach = domain->lo;
    for (const Piece* p : order) {
      if (p->region.bounds[0].lo > reach && reach >= domain->lo && best < 0.0) consider(reach, 0.0);
      reach = std::max(reach, p->region.bounds[0].hi);
    }
    if (reach < domain->hi && best < 0.0) consider(reach, 0.0);
  }
  return {best, arg};
}

MOP normalize(const MOP& m, VarId v) {
  if (m.scope().size() != 1 || m.scope().front() != v)
    throw AlgebraError("normalize: MOP must be univariate in the given variable");
  MOP mass = integrate_out(m, v);
  double z = mass.scalar_value();
  if (!(z > 0.0)) throw AlgebraError("normalize: nonpositive mass");
  return scale(m, 1.0 / z);
}

double quadrature_1d(const MOP& m, VarId v, double lo, double hi) {
  if (m.is_scalar()) return m.scalar_value() * (hi - lo);
  if (m.scope().size() != 1 || m.scope().front() != v)
    throw AlgebraError("quadrature_1d: MOP must be univariate in the given variable");
  // 16-point Gauss-Legendre nodes/weights on [-1, 1].
  static const double X[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                              0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                              0.9445750230732326, 0.9894009349916499};
  static const double W[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                              0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                              0.0622535239386479, 0.0271524594117541};
  double total = 0.0;
  for (const Piece& p : m.pieces()) {
    double a = std::max(lo, p.region.bounds[0].lo);
    double b = std::min(hi, p.region.bounds[0].hi);
    if (!(a < b)) continue;
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (int i = 0; i < 8; ++i) {
      total += W[i] * h * p.poly.eval({{v, c + h * X[i] - p.anchor[0]}});
      total += W[i] * h * p.poly.eval({{v, c - h * X[i] - p.anchor[0]}});
    }
  }
  return total;
}

}  // namespace mopid
