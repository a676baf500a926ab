#include "mopid/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mopid {

Polynomial Polynomial::constant(double c) {
  Polynomial p;
  p.add_term(Monomial{}, c);
  return p;
}

Polynomial Polynomial::var(VarId v) {
  Polynomial p;
  p.add_term(Monomial{{{v, 1}}}, 1.0);
  return p;
}

bool Polynomial::is_constant() const {
  if (terms_.empty()) return true;
  return terms_.size() == 1 && terms_.begin()->first.factors.empty();
}

double Polynomial::constant_value() const {
  if (terms_.empty()) return 0.0;
  if (!is_constant()) throw AlgebraError("polynomial is not constant: " + to_string());
  return terms_.begin()->second;
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

int Polynomial::degree_in(VarId v) const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.exponent_of(v));
  return d;
}

std::vector<VarId> Polynomial::variables() const {
  std::vector<VarId> vs;
  for (const auto& [m, c] : terms_)
    for (const auto& [v, e] : m.factors)
      if (!std::binary_search(vs.begin(), vs.end(), v)) {
        vs.insert(std::upper_bound(vs.begin(), vs.end(), v), v);
      }
  return vs;
}

bool Polynomial::references(VarId v) const {
  for (const auto& [m, c] : terms_)
    if (m.exponent_of(v) > 0) return true;
  return false;
}

void Polynomial::add_term(const Monomial& m, double c) {
  if (c == 0.0) return;
  auto it = terms_.find(m);
  if (it == terms_.end()) {
    terms_.emplace(m, c);
  } else {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  Polynomial r = *this;
  for (const auto& [m, c] : o.terms_) r.add_term(m, c);
  return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const {
  Polynomial r = *this;
  for (const auto& [m, c] : o.terms_) r.add_term(m, -c);
  return r;
}

Polynomial Polynomial::operator-() const { return scaled(-1.0); }

Polynomial Polynomial::scaled(double c) const {
  Polynomial r;
  if (c == 0.0) return r;
  for (const auto& [m, k] : terms_) r.add_term(m, k * c);
  return r;
}

namespace {
Monomial mono_mul(const Monomial& a, const Monomial& b) {
  Monomial r;
  auto ia = a.factors.begin(), ib = b.factors.begin();
  while (ia != a.factors.end() || ib != b.factors.end()) {
    if (ib == b.factors.end() || (ia != a.factors.end() && ia->first < ib->first)) {
      r.factors.push_back(*ia++);
    } else if (ia == a.factors.end() || ib->first < ia->first) {
      r.factors.push_back(*ib++);
    } else {
      r.factors.emplace_back(ia->first, ia->second + ib->second);
      ++ia;
      ++ib;
    }
  }
  return r;
}
}  // namespace

Polynomial Polynomial::operator*(const Polynomial& o) const {
  Polynomial r;
  for (const auto& [ma, ca] : terms_)
    for (const auto& [mb, cb] : o.terms_) r.add_term(mono_mul(ma, mb), ca * cb);
  return r;
}

double Polynomial::eval(const std::vector<std::pair<VarId, double>>& point) const {
  auto value_of = [&](VarId v) -> double {
    for (const auto& [w, x] : point)
      if (w == v) return x;
    throw AlgebraError("eval: no value supplied for variable id " + std::to_string(v));
  };
  double total = 0.0;
  for (const auto& [m, c] : terms_) {
    double t = c;
    for (const auto& [v, e] : m.factors) {
      double x = value_of(v), p = 1.0;
      for (int i = 0; i < e; ++i) p *= x;
      t *= p;
    }
    total += t;
  }
  return total;
}

Polynomial Polynomial::substitute(VarId v, const Polynomial& g) const {
  if (g.references(v)) throw AlgebraError("substitute: replacement references the replaced variable");
  return substitute_unchecked(v, g);
}

// Single-pass replacement; correct even when g references v (used by the
// Taylor shift v := v + delta).
Polynomial Polynomial::substitute_unchecked(VarId v, const Polynomial& g) const {
  int maxe = degree_in(v);
  // Cache powers of g.
  std::vector<Polynomial> gpow(static_cast<std::size_t>(maxe) + 1);
  gpow[0] = Polynomial::constant(1.0);
  for (int e = 1; e <= maxe; ++e) gpow[e] = gpow[e - 1] * g;

  Polynomial r;
  for (const auto& [m, c] : terms_) {
    Monomial rest;
    int e = 0;
    for (const auto& [w, k] : m.factors) {
      if (w == v)
        e = k;
      else
        rest.factors.emplace_back(w, k);
    }
    if (e == 0) {
      r.add_term(m, c);
    } else {
      Polynomial part;
      part.add_term(rest, c);
      part = part * gpow[e];
      for (const auto& [mm, cc] : part.terms_) r.add_term(mm, cc);
    }
  }
  return r;
}

Polynomial Polynomial::pin(VarId v, double c) const { return substitute(v, Polynomial::constant(c)); }

Polynomial Polynomial::shift(VarId v, double delta) const {
  if (delta == 0.0) return *this;
  return substitute_unchecked(v, Polynomial::var(v) + Polynomial::constant(delta));
}

Polynomial Polynomial::reflected(VarId v) const {
  Polynomial r;
  for (const auto& [m, c] : terms_) r.add_term(m, m.exponent_of(v) % 2 ? -c : c);
  return r;
}

Polynomial Polynomial::derivative(VarId v) const {
  Polynomial r;
  for (const auto& [m, c] : terms_) {
    int e = m.exponent_of(v);
    if (e == 0) continue;
    Monomial d;
    for (const auto& [w, k] : m.factors) {
      if (w == v) {
        if (k > 1) d.factors.emplace_back(w, k - 1);
      } else {
        d.factors.emplace_back(w, k);
      }
    }
    r.add_term(d, c * e);
  }
  return r;
}

Polynomial Polynomial::antiderivative(VarId v) const {
  Polynomial r;
  for (const auto& [m, c] : terms_) {
    int e = m.exponent_of(v);
    Monomial d;
    bool placed = false;
    for (const auto& [w, k] : m.factors) {
      if (w == v) {
        d.factors.emplace_back(w, k + 1);
        placed = true;
      } else {
        if (!placed && w > v) {
          d.factors.emplace_back(v, 1);
          placed = true;
        }
        d.factors.emplace_back(w, k);
      }
    }
    if (!placed) d.factors.emplace_back(v, 1);
    std::sort(d.factors.begin(), d.factors.end());
    r.add_term(d, c / (e + 1));
  }
  return r;
}

std::optional<Polynomial> exact_divide(const Polynomial& p, const Polynomial& d) {
  if (d.is_zero()) return std::nullopt;
  if (p.is_zero()) return Polynomial();
  if (d.is_constant()) return p.scaled(1.0 / d.constant_value());

  // Long division needs a multiplication-compatible term order; the map order
  // on Monomial is not one, so work with graded-lex exponent vectors over the
  // combined variable list.
  std::vector<VarId> vars;
  for (VarId v : p.variables()) vars.push_back(v);
  for (VarId v : d.variables()) vars.push_back(v);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

  using Key = std::pair<int, std::vector<int>>;  // (total degree, exponents)
  auto key_of = [&](const Monomial& m) {
    Key k{m.degree(), std::vector<int>(vars.size(), 0)};
    for (std::size_t i = 0; i < vars.size(); ++i) k.second[i] = m.exponent_of(vars[i]);
    return k;
  };
  auto mono_of = [&](const std::vector<int>& e) {
    Monomial m;
    for (std::size_t i = 0; i < vars.size(); ++i)
      if (e[i] > 0) m.factors.emplace_back(vars[i], e[i]);
    return m;
  };

  std::map<Key, double> rem, div;
  double pnorm = 0.0, psum = 0.0;
  for (const auto& [m, c] : p.terms()) {
    rem[key_of(m)] = c;
    pnorm = std::max(pnorm, std::abs(c));
    psum += std::abs(c);
  }
  for (const auto& [m, c] : d.terms()) div[key_of(m)] = c;
  const Key lead_d = std::prev(div.end())->first;
  const double lead_dc = std::prev(div.end())->second;

  auto residual_ok = [&](const std::map<Key, double>& r) {
    double s = 0.0;
    for (const auto& [k, c] : r) s += std::abs(c);
    return s <= 1e-9 * std::max(1.0, psum);
  };

  Polynomial q;
  int guard = 0;
  while (!rem.empty()) {
    if (++guard > 200000) return std::nullopt;
    auto it = std::prev(rem.end());
    const Key kr = it->first;
    const double cr = it->second;
    if (std::abs(cr) <= 1e-12 * pnorm) {
      // Leading coefficient is float noise; everything below it is smaller in
      // the term order and judged by the residual test.
      if (residual_ok(rem)) return q;
      rem.erase(it);
      continue;
    }
    bool divisible = kr.first >= lead_d.first;
    std::vector<int> te(vars.size(), 0);
    for (std::size_t i = 0; i < vars.size() && divisible; ++i) {
      te[i] = kr.second[i] - lead_d.second[i];
      if (te[i] < 0) divisible = false;
    }
    if (!divisible) return residual_ok(rem) ? std::optional<Polynomial>(q) : std::nullopt;
    const double tc = cr / lead_dc;
    q.add_term(mono_of(te), tc);
    for (const auto& [kd, cd] : div) {
      Key nk{kd.first + kr.first - lead_d.first, kd.second};
      for (std::size_t i = 0; i < vars.size(); ++i) nk.second[i] += te[i];
      rem[nk] -= tc * cd;
    }
    rem.erase(kr);  // cancelled by construction; drop any round-off residue
  }
  return q;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, c] : terms_) {
    if (!first) os << " + ";
    first = false;
    os << c;
    for (const auto& [v, e] : m.factors) {
      os << "*x" << v;
      if (e > 1) os << "^" << e;
    }
  }
  return os.str();
}

}  // namespace mopid
