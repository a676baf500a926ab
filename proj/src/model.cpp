#include "mopid/model.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace mopid {

namespace {

// --------------------------------------------------------------------------
// small utilities
// --------------------------------------------------------------------------

std::string fmt17(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

bool valid_label(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.')
      return false;
  return true;
}

template <typename T>
std::string join(const std::vector<T>& parts, const std::string& sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) os << sep;
    os << parts[i];
  }
  return os.str();
}

// --------------------------------------------------------------------------
// diagnostics
// --------------------------------------------------------------------------

struct Errors {
  std::vector<Diagnostic>* out;

  void at(int line, int col, std::string msg) {
    out->push_back(Diagnostic{line, col, std::move(msg)});
  }
  void add(const YAML::Node& n, std::string msg) {
    int line = 0, col = 0;
    if (n.IsDefined() && n.Mark().line >= 0) {
      line = n.Mark().line + 1;
      col = n.Mark().column + 1;
    }
    at(line, col, std::move(msg));
  }
  bool any() const { return !out->empty(); }
};

// --------------------------------------------------------------------------
// YAML scalar accessors
// --------------------------------------------------------------------------

std::optional<std::string> as_str(const YAML::Node& n) {
  if (!n.IsDefined() || !n.IsScalar()) return std::nullopt;
  return n.Scalar();
}

std::optional<double> as_double(const YAML::Node& n) {
  if (!n.IsDefined() || !n.IsScalar()) return std::nullopt;
  const std::string& s = n.Scalar();
  if (s == "inf" || s == "+inf" || s == ".inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf" || s == "-.inf") return -std::numeric_limits<double>::infinity();
  try {
    return n.as<double>();
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<int> as_int(const YAML::Node& n) {
  if (!n.IsDefined() || !n.IsScalar()) return std::nullopt;
  try {
    return n.as<int>();
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<Interval> parse_interval(const YAML::Node& n, Errors& errs, const std::string& what) {
  if (!n.IsDefined() || !n.IsSequence() || n.size() != 2) {
    errs.add(n, what + " must be a two-element list [lo, hi]");
    return std::nullopt;
  }
  auto lo = as_double(n[0]), hi = as_double(n[1]);
  if (!lo || !hi) {
    errs.add(n, what + " bounds must be numbers");
    return std::nullopt;
  }
  if (!(*lo < *hi)) {
    errs.add(n, what + " must have lo < hi (got [" + fmt17(*lo) + ", " + fmt17(*hi) + "])");
    return std::nullopt;
  }
  return Interval{*lo, *hi};
}

// --------------------------------------------------------------------------
// polynomial expression parser
//
//   expr    := term  { ('+' | '-') term }
//   term    := unary { '*' unary }
//   unary   := ('-' | '+') unary | power
//   power   := primary [ '^' natural ]
//   primary := NUMBER | IDENT | '(' expr ')'
// --------------------------------------------------------------------------

class ExprParser {
 public:
  ExprParser(const std::string& text, std::function<std::optional<VarId>(const std::string&)> lookup)
      : s_(text), lookup_(std::move(lookup)) {}

  std::optional<Polynomial> run(std::string* err_out) {
    auto p = expr();
    skip_ws();
    if (p && pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    if (!err_.empty()) {
      *err_out = err_ + " (at offset " + std::to_string(err_pos_) + " of \"" + s_ + "\")";
      return std::nullopt;
    }
    return p;
  }

 private:
  const std::string& s_;
  std::function<std::optional<VarId>(const std::string&)> lookup_;
  std::size_t pos_ = 0;
  std::string err_;
  std::size_t err_pos_ = 0;

  void fail(const std::string& msg) {
    if (err_.empty()) {
      err_ = msg;
      err_pos_ = pos_;
    }
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  std::optional<Polynomial> expr() {
    auto acc = term();
    if (!acc) return std::nullopt;
    while (true) {
      char c = peek();
      if (c == '+' || c == '-') {
        ++pos_;
        auto rhs = term();
        if (!rhs) return std::nullopt;
        acc = (c == '+') ? (*acc + *rhs) : (*acc - *rhs);
      } else {
        return acc;
      }
    }
  }

  std::optional<Polynomial> term() {
    auto acc = unary();
    if (!acc) return std::nullopt;
    while (true) {
      char c = peek();
      if (c == '*') {
        ++pos_;
        auto rhs = unary();
        if (!rhs) return std::nullopt;
        acc = *acc * *rhs;
      } else if (c == '/') {
        fail("'/' is not part of the polynomial grammar");
        return std::nullopt;
      } else {
        return acc;
      }
    }
  }

  std::optional<Polynomial> unary() {
    char c = peek();
    if (c == '-') {
      ++pos_;
      auto p = unary();
      if (!p) return std::nullopt;
      return -*p;
    }
    if (c == '+') {
      ++pos_;
      return unary();
    }
    return power();
  }

  std::optional<Polynomial> power() {
    auto base = primary();
    if (!base) return std::nullopt;
    if (peek() == '^') {
      ++pos_;
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == start) {
        fail("'^' must be followed by a non-negative integer");
        return std::nullopt;
      }
      long e = std::strtol(s_.substr(start, pos_ - start).c_str(), nullptr, 10);
      if (e > 64) {
        fail("exponent too large");
        return std::nullopt;
      }
      Polynomial acc = Polynomial::constant(1.0);
      for (long i = 0; i < e; ++i) acc = acc * *base;
      return acc;
    }
    return base;
  }

  std::optional<Polynomial> primary() {
    skip_ws();
    if (pos_ >= s_.size()) {
      fail("unexpected end of expression");
      return std::nullopt;
    }
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      auto p = expr();
      if (!p) return std::nullopt;
      if (!eat(')')) {
        fail("missing ')'");
        return std::nullopt;
      }
      return p;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) {
        fail("bad number");
        return std::nullopt;
      }
      pos_ += static_cast<std::size_t>(end - begin);
      return Polynomial::constant(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      auto v = lookup_(name);
      if (!v) {
        pos_ = start;
        fail("unknown variable '" + name + "'");
        return std::nullopt;
      }
      return Polynomial::var(*v);
    }
    fail(std::string("unexpected '") + c + "'");
    return std::nullopt;
  }
};

std::optional<Polynomial> parse_poly_expr(
    const std::string& text, const std::function<std::optional<VarId>(const std::string&)>& lookup,
    std::string* err_out) {
  return ExprParser(text, lookup).run(err_out);
}

// --------------------------------------------------------------------------
// monomial keys: "1", "X", "X^2", "X^2 Y" (space- or '*'-separated factors)
// --------------------------------------------------------------------------

std::optional<std::vector<std::pair<std::string, int>>> split_monomial_key(const std::string& key,
                                                                           std::string* err) {
  std::vector<std::pair<std::string, int>> factors;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < key.size() &&
           (std::isspace(static_cast<unsigned char>(key[pos])) || key[pos] == '*'))
      ++pos;
  };
  skip();
  if (pos < key.size() && key[pos] == '1' && factors.empty()) {
    ++pos;
    skip();
    if (pos != key.size()) {
      *err = "the constant key must be exactly \"1\"";
      return std::nullopt;
    }
    return factors;
  }
  while (pos < key.size()) {
    if (!std::isalpha(static_cast<unsigned char>(key[pos])) && key[pos] != '_') {
      *err = "bad monomial key \"" + key + "\"";
      return std::nullopt;
    }
    std::size_t start = pos;
    while (pos < key.size() && (std::isalnum(static_cast<unsigned char>(key[pos])) || key[pos] == '_'))
      ++pos;
    std::string name = key.substr(start, pos - start);
    int exp = 1;
    if (pos < key.size() && key[pos] == '^') {
      ++pos;
      std::size_t ds = pos;
      while (pos < key.size() && std::isdigit(static_cast<unsigned char>(key[pos]))) ++pos;
      if (ds == pos) {
        *err = "'^' must be followed by an integer in \"" + key + "\"";
        return std::nullopt;
      }
      exp = std::atoi(key.substr(ds, pos - ds).c_str());
      if (exp < 1 || exp > 64) {
        *err = "exponent out of range in \"" + key + "\"";
        return std::nullopt;
      }
    }
    bool merged = false;
    for (auto& [n, e] : factors)
      if (n == name) {
        e += exp;
        merged = true;
        break;
      }
    if (!merged) factors.emplace_back(name, exp);
    skip();
  }
  if (factors.empty()) {
    *err = "empty monomial key";
    return std::nullopt;
  }
  return factors;
}

std::string canonical_monomial_key(const std::string& key) {
  std::string err;
  auto factors = split_monomial_key(key, &err);
  if (!factors) return key;  // canonicalization never fires on unvalidated input
  if (factors->empty()) return "1";
  std::sort(factors->begin(), factors->end());
  std::vector<std::string> parts;
  for (const auto& [n, e] : *factors)
    parts.push_back(e == 1 ? n : n + "^" + std::to_string(e));
  return join(parts, " ");
}

}  // namespace

// --------------------------------------------------------------------------
// kind helpers / Variable / Diagnostic
// --------------------------------------------------------------------------

bool kind_is_chance(VarKind k) {
  return k == VarKind::ChanceDiscrete || k == VarKind::ChanceContinuous ||
         k == VarKind::ChanceDeterministic;
}
bool kind_is_decision(VarKind k) {
  return k == VarKind::DecisionDiscrete || k == VarKind::DecisionContinuous;
}
bool kind_is_discrete(VarKind k) {
  return k == VarKind::ChanceDiscrete || k == VarKind::DecisionDiscrete;
}

const char* kind_name(VarKind k) {
  switch (k) {
    case VarKind::ChanceDiscrete: return "chance-discrete";
    case VarKind::ChanceContinuous: return "chance-continuous";
    case VarKind::ChanceDeterministic: return "chance-deterministic";
    case VarKind::DecisionDiscrete: return "decision-discrete";
    case VarKind::DecisionContinuous: return "decision-continuous";
  }
  return "?";
}

std::optional<VarKind> kind_from_name(const std::string& s) {
  for (VarKind k : {VarKind::ChanceDiscrete, VarKind::ChanceContinuous,
                    VarKind::ChanceDeterministic, VarKind::DecisionDiscrete,
                    VarKind::DecisionContinuous})
    if (s == kind_name(k)) return k;
  return std::nullopt;
}

int Variable::state_index(const std::string& label) const {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] == label) return static_cast<int>(i);
  return -1;
}

std::string Diagnostic::render() const {
  if (line <= 0) return message;
  return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
}

// --------------------------------------------------------------------------
// InfluenceDiagram lookups
// --------------------------------------------------------------------------

const Variable* InfluenceDiagram::find(const std::string& n) const {
  for (const Variable& v : variables)
    if (v.name == n) return &v;
  return nullptr;
}

VarId InfluenceDiagram::id_of(const std::string& n) const {
  const Variable* v = find(n);
  return v ? v->id : -1;
}

std::vector<VarId> InfluenceDiagram::information_ids() const {
  std::vector<VarId> ids;
  for (const std::string& n : information) ids.push_back(id_of(n));
  return ids;
}

std::optional<int> InfluenceDiagram::info_position(VarId v) const {
  for (std::size_t i = 0; i < information.size(); ++i)
    if (id_of(information[i]) == v) return static_cast<int>(i);
  return std::nullopt;
}

const PotentialDecl* InfluenceDiagram::decl_for(VarId v) const {
  const std::string& n = var(v).name;
  for (const PotentialDecl& d : potential_decls)
    if (d.variable == n) return &d;
  return nullptr;
}

const Potential* InfluenceDiagram::potential_for(VarId v) const {
  const std::string& n = var(v).name;
  for (std::size_t i = 0; i < potential_decls.size(); ++i)
    if (potential_decls[i].variable == n) return &chance_potentials.at(i);
  return nullptr;
}

std::vector<VarId> InfluenceDiagram::parents(VarId v) const {
  std::vector<VarId> out;
  const PotentialDecl* d = decl_for(v);
  if (!d) return out;
  for (const std::string& g : d->given) out.push_back(id_of(g));
  return out;
}

ChanceClasses InfluenceDiagram::chance_classes() const {
  ChanceClasses c;
  for (const Variable& v : variables) {
    if (v.kind == VarKind::ChanceDiscrete) c.discrete.insert(v.id);
    if (v.kind == VarKind::ChanceContinuous || v.kind == VarKind::ChanceDeterministic)
      c.continuous.insert(v.id);
  }
  return c;
}

// --------------------------------------------------------------------------
// parsing: stage 1 (syntactic extraction)
// --------------------------------------------------------------------------

namespace {

struct ParseCtx {
  InfluenceDiagram id;
  // source locations for second-stage messages, aligned with the decl lists
  std::vector<YAML::Node> var_nodes;
  std::vector<YAML::Node> pot_nodes;
  std::vector<YAML::Node> util_nodes;
  YAML::Node info_node;
  std::vector<bool> scale_explicit;  // per variable: `scale:` appeared in the file
};

void check_known_keys(const YAML::Node& map, const std::set<std::string>& known, Errors& errs,
                      const std::string& where) {
  for (const auto& kv : map) {
    auto k = as_str(kv.first);
    if (!k || !known.count(*k))
      errs.add(kv.first, where + ": unknown key '" + (k ? *k : std::string("?")) + "'");
  }
}

// Payload keys a body map may carry (exactly one).
const std::set<std::string> kPayloadKeys = {"density", "dirac", "mop", "probs", "value"};

std::optional<MopDecl> parse_mop_form(const YAML::Node& n, Errors& errs);

std::optional<CurveDecl> parse_curve(const YAML::Node& n, Errors& errs) {
  if (!n.IsMap()) {
    errs.add(n, "'curve' must be a mapping");
    return std::nullopt;
  }
  check_known_keys(n, {"family", "params", "of", "intervals", "centers", "degree"}, errs, "curve");
  CurveDecl c;
  auto fam = as_str(n["family"]);
  if (!fam) {
    errs.add(n, "curve needs a 'family' name");
    return std::nullopt;
  }
  c.family = *fam;
  if (n["params"]) {
    if (!n["params"].IsSequence()) {
      errs.add(n["params"], "curve 'params' must be a list of numbers");
      return std::nullopt;
    }
    for (const auto& p : n["params"]) {
      auto d = as_double(p);
      if (!d) {
        errs.add(p, "curve parameter must be a number");
        return std::nullopt;
      }
      c.params.push_back(*d);
    }
  }
  auto of = as_str(n["of"]);
  if (!of) {
    errs.add(n, "curve needs 'of': the argument variable");
    return std::nullopt;
  }
  c.of = *of;
  if (!n["intervals"] || !n["intervals"].IsSequence() || n["intervals"].size() == 0) {
    errs.add(n, "curve needs a non-empty 'intervals' list");
    return std::nullopt;
  }
  for (const auto& iv : n["intervals"]) {
    auto i = parse_interval(iv, errs, "curve interval");
    if (!i) return std::nullopt;
    if (!i->finite()) {
      errs.add(iv, "curve intervals must be finite");
      return std::nullopt;
    }
    c.intervals.push_back(*i);
  }
  if (!n["centers"] || !n["centers"].IsSequence() || n["centers"].size() != c.intervals.size()) {
    errs.add(n, "curve needs 'centers', one per interval");
    return std::nullopt;
  }
  for (const auto& cv : n["centers"]) {
    auto d = as_double(cv);
    if (!d || std::isinf(*d)) {
      errs.add(cv, "curve centers must be finite numbers");
      return std::nullopt;
    }
    c.centers.push_back(*d);
  }
  auto deg = n["degree"] ? as_int(n["degree"]) : std::optional<int>(3);
  if (!deg || *deg < 0 || *deg > 12) {
    errs.add(n["degree"], "curve degree must be an integer in [0, 12]");
    return std::nullopt;
  }
  c.degree = *deg;
  for (std::size_t i = 1; i < c.intervals.size(); ++i)
    if (c.intervals[i].lo < c.intervals[i - 1].hi) {
      errs.add(n["intervals"], "curve intervals must be ascending and non-overlapping");
      return std::nullopt;
    }
  return c;
}

std::optional<std::vector<std::pair<std::string, Interval>>> parse_bounds_map(
    const YAML::Node& n, Errors& errs, const std::string& what) {
  std::vector<std::pair<std::string, Interval>> out;
  if (!n.IsMap()) {
    errs.add(n, what + " must be a mapping of variable -> [lo, hi]");
    return std::nullopt;
  }
  for (const auto& kv : n) {
    auto name = as_str(kv.first);
    if (!name || !valid_identifier(*name)) {
      errs.add(kv.first, what + ": bad variable name");
      return std::nullopt;
    }
    if (!kv.second.IsSequence() || kv.second.size() != 2) {
      errs.add(kv.second, what + " for '" + *name + "' must be [lo, hi]");
      return std::nullopt;
    }
    auto lo = as_double(kv.second[0]), hi = as_double(kv.second[1]);
    if (!lo || !hi || !(*lo < *hi)) {
      errs.add(kv.second, what + " for '" + *name + "' must have numeric lo < hi");
      return std::nullopt;
    }
    for (const auto& [m, _] : out)
      if (m == *name) {
        errs.add(kv.first, what + ": variable '" + *name + "' listed twice");
        return std::nullopt;
      }
    out.emplace_back(*name, Interval{*lo, *hi});
  }
  return out;
}

std::optional<MopDecl> parse_mop_form(const YAML::Node& n, Errors& errs) {
  if (!n.IsMap()) {
    errs.add(n, "a piecewise-polynomial payload must be a mapping with one of: "
                "zero, constant, expr, curve, pieces");
    return std::nullopt;
  }
  check_known_keys(n, {"zero", "constant", "expr", "on", "curve", "pieces"}, errs, "mop");
  MopDecl m;
  int forms = 0;
  if (n["zero"]) ++forms;
  if (n["constant"]) ++forms;
  if (n["expr"]) ++forms;
  if (n["curve"]) ++forms;
  if (n["pieces"]) ++forms;
  if (forms != 1) {
    errs.add(n, "exactly one of zero/constant/expr/curve/pieces must be given");
    return std::nullopt;
  }
  if (n["zero"]) {
    m.form = MopDecl::Form::Zero;
    return m;
  }
  if (n["constant"]) {
    auto c = as_double(n["constant"]);
    if (!c || std::isinf(*c)) {
      errs.add(n["constant"], "'constant' must be a finite number");
      return std::nullopt;
    }
    m.form = MopDecl::Form::Constant;
    m.constant = *c;
    return m;
  }
  if (n["expr"]) {
    auto e = as_str(n["expr"]);
    if (!e || e->empty()) {
      errs.add(n["expr"], "'expr' must be a non-empty string");
      return std::nullopt;
    }
    m.form = MopDecl::Form::Expr;
    m.expr = *e;
    if (n["on"]) {
      auto b = parse_bounds_map(n["on"], errs, "'on'");
      if (!b) return std::nullopt;
      m.expr_intervals = std::move(*b);
    }
    return m;
  }
  if (n["curve"]) {
    auto c = parse_curve(n["curve"], errs);
    if (!c) return std::nullopt;
    m.form = MopDecl::Form::Curve;
    m.curve = std::move(*c);
    return m;
  }
  // pieces
  if (!n["pieces"].IsSequence() || n["pieces"].size() == 0) {
    errs.add(n["pieces"], "'pieces' must be a non-empty list");
    return std::nullopt;
  }
  m.form = MopDecl::Form::Pieces;
  for (const auto& pn : n["pieces"]) {
    if (!pn.IsMap()) {
      errs.add(pn, "each piece must be a mapping");
      return std::nullopt;
    }
    check_known_keys(pn, {"on", "anchor", "coeffs"}, errs, "piece");
    PieceDecl piece;
    if (pn["on"]) {
      auto b = parse_bounds_map(pn["on"], errs, "piece 'on'");
      if (!b) return std::nullopt;
      piece.intervals = std::move(*b);
    }
    if (pn["anchor"]) {
      if (!pn["anchor"].IsMap()) {
        errs.add(pn["anchor"], "piece 'anchor' must be a mapping of variable -> number");
        return std::nullopt;
      }
      for (const auto& kv : pn["anchor"]) {
        auto name = as_str(kv.first);
        auto v = as_double(kv.second);
        if (!name || !v || std::isinf(*v)) {
          errs.add(kv.second, "piece anchors must map variable names to finite numbers");
          return std::nullopt;
        }
        piece.anchors.emplace_back(*name, *v);
      }
    }
    if (!pn["coeffs"] || !pn["coeffs"].IsMap() || pn["coeffs"].size() == 0) {
      errs.add(pn, "each piece needs a non-empty 'coeffs' mapping");
      return std::nullopt;
    }
    for (const auto& kv : pn["coeffs"]) {
      auto key = as_str(kv.first);
      auto v = as_double(kv.second);
      if (!key || !v || std::isinf(*v)) {
        errs.add(kv.second, "piece coefficients must map monomial keys to finite numbers");
        return std::nullopt;
      }
      piece.coeffs.emplace_back(*key, *v);
    }
    m.pieces.push_back(std::move(piece));
  }
  return m;
}

std::optional<BodyDecl> parse_body(const YAML::Node& map, Errors& errs) {
  BodyDecl b;
  int payloads = 0;
  for (const std::string& k : kPayloadKeys)
    if (map[k]) ++payloads;
  if (payloads != 1) {
    errs.add(map, "exactly one payload is required (one of: density, dirac, mop, probs, value)");
    return std::nullopt;
  }
  if (map["density"]) {
    const YAML::Node& d = map["density"];
    if (!d.IsMap()) {
      errs.add(d, "'density' must be a mapping");
      return std::nullopt;
    }
    check_known_keys(d, {"family", "mean", "variance", "halfwidth", "pieces", "degree"}, errs,
                     "density");
    DensityDecl dd;
    auto fam = as_str(d["family"]);
    if (!fam || (*fam != "standard-normal" && *fam != "normal" && *fam != "lognormal")) {
      errs.add(d, "density 'family' must be one of: standard-normal, normal, lognormal");
      return std::nullopt;
    }
    dd.family = *fam;
    if (*fam == "standard-normal") {
      if (d["mean"] || d["variance"]) {
        errs.add(d, "standard-normal densities take no mean/variance");
        return std::nullopt;
      }
      dd.mean = 0.0;
      dd.variance = 1.0;
    } else {
      auto mean = as_double(d["mean"]);
      auto var = as_double(d["variance"]);
      if (!mean || std::isinf(*mean) || !var || !(*var > 0.0) || std::isinf(*var)) {
        errs.add(d, "density needs finite 'mean' and positive 'variance'");
        return std::nullopt;
      }
      dd.mean = *mean;
      dd.variance = *var;
    }
    auto hw = as_double(d["halfwidth"]);
    if (!d["halfwidth"]) {
      errs.add(d, "densities with infinite support must declare a truncation 'halfwidth' "
                  "(in standard deviations) explicitly");
      return std::nullopt;
    }
    if (!hw || !(*hw > 0.0) || std::isinf(*hw)) {
      errs.add(d["halfwidth"], "'halfwidth' must be a positive number");
      return std::nullopt;
    }
    dd.halfwidth = *hw;
    auto pieces = d["pieces"] ? as_int(d["pieces"]) : std::optional<int>(6);
    auto degree = d["degree"] ? as_int(d["degree"]) : std::optional<int>(3);
    if (!pieces || !degree) {
      errs.add(d, "density 'pieces'/'degree' must be integers");
      return std::nullopt;
    }
    dd.pieces = *pieces;
    dd.degree = *degree;
    b.payload = BodyDecl::Payload::Density;
    b.density = std::move(dd);
    return b;
  }
  if (map["dirac"]) {
    const YAML::Node& d = map["dirac"];
    std::vector<YAML::Node> items;
    if (d.IsMap())
      items.push_back(d);
    else if (d.IsSequence())
      for (const auto& it : d) items.push_back(it);
    if (items.empty()) {
      errs.add(d, "'dirac' must be a mapping or a non-empty list of mappings");
      return std::nullopt;
    }
    for (const YAML::Node& it : items) {
      if (!it.IsMap()) {
        errs.add(it, "each dirac term must be a mapping with 'weight' and 'g'");
        return std::nullopt;
      }
      check_known_keys(it, {"weight", "g"}, errs, "dirac");
      DiracDecl dd;
      if (it["weight"]) {
        auto w = as_double(it["weight"]);
        if (!w || !(*w > 0.0) || std::isinf(*w)) {
          errs.add(it["weight"], "dirac 'weight' must be a positive number");
          return std::nullopt;
        }
        dd.weight = *w;
      }
      if (!it["g"]) {
        errs.add(it, "each dirac term needs 'g': the constrained value");
        return std::nullopt;
      }
      auto g = parse_mop_form(it["g"], errs);
      if (!g) return std::nullopt;
      dd.g = std::move(*g);
      b.diracs.push_back(std::move(dd));
    }
    b.payload = BodyDecl::Payload::Dirac;
    return b;
  }
  if (map["mop"]) {
    auto m = parse_mop_form(map["mop"], errs);
    if (!m) return std::nullopt;
    b.payload = BodyDecl::Payload::Mop;
    b.mop = std::move(*m);
    return b;
  }
  if (map["probs"]) {
    const YAML::Node& p = map["probs"];
    if (!p.IsSequence() || p.size() == 0) {
      errs.add(p, "'probs' must be a non-empty list of numbers");
      return std::nullopt;
    }
    for (const auto& it : p) {
      auto v = as_double(it);
      if (!v || std::isinf(*v)) {
        errs.add(it, "'probs' entries must be finite numbers");
        return std::nullopt;
      }
      b.probs.push_back(*v);
    }
    b.payload = BodyDecl::Payload::Probs;
    return b;
  }
  // value
  auto v = as_double(map["value"]);
  if (!v || std::isinf(*v)) {
    errs.add(map["value"], "'value' must be a finite number");
    return std::nullopt;
  }
  b.payload = BodyDecl::Payload::Value;
  b.value = *v;
  return b;
}

// Parses the body of a potentials/utilities item: either a direct payload or
// a `cases:`/`table:` list of rows with `when` labels.
std::optional<std::vector<CaseDecl>> parse_cases(const YAML::Node& map, Errors& errs) {
  const YAML::Node rows = map["cases"] ? map["cases"] : map["table"];
  bool direct = false;
  for (const std::string& k : kPayloadKeys)
    if (map[k]) direct = true;
  if (rows.IsDefined() && direct) {
    errs.add(map, "give either a direct payload or a cases/table list, not both");
    return std::nullopt;
  }
  std::vector<CaseDecl> cases;
  if (rows.IsDefined()) {
    if (!rows.IsSequence() || rows.size() == 0) {
      errs.add(rows, "'cases'/'table' must be a non-empty list of rows");
      return std::nullopt;
    }
    for (const auto& row : rows) {
      if (!row.IsMap()) {
        errs.add(row, "each row must be a mapping");
        return std::nullopt;
      }
      std::set<std::string> known = kPayloadKeys;
      known.insert("when");
      check_known_keys(row, known, errs, "row");
      CaseDecl c;
      if (row["when"]) {
        if (!row["when"].IsSequence()) {
          errs.add(row["when"], "'when' must be a list of state labels");
          return std::nullopt;
        }
        for (const auto& w : row["when"]) {
          auto s = as_str(w);
          if (!s || !valid_label(*s)) {
            errs.add(w, "'when' entries must be state labels");
            return std::nullopt;
          }
          c.when.push_back(*s);
        }
      }
      auto body = parse_body(row, errs);
      if (!body) return std::nullopt;
      c.body = std::move(*body);
      cases.push_back(std::move(c));
    }
  } else {
    if (!direct) {
      errs.add(map, "missing payload: one of density, dirac, mop, probs, value, or a cases/table "
                    "list");
      return std::nullopt;
    }
    CaseDecl c;
    auto body = parse_body(map, errs);
    if (!body) return std::nullopt;
    c.body = std::move(*body);
    cases.push_back(std::move(c));
  }
  return cases;
}

void parse_variables(const YAML::Node& n, ParseCtx& ctx, Errors& errs) {
  if (!n.IsDefined() || !n.IsSequence() || n.size() == 0) {
    errs.add(n, "'variables' must be a non-empty list");
    return;
  }
  for (const auto& vn : n) {
    if (!vn.IsMap()) {
      errs.add(vn, "each variable must be a mapping");
      continue;
    }
    check_known_keys(vn, {"name", "kind", "states", "domain", "scale", "constraint"}, errs,
                     "variable");
    Variable v;
    bool scale_explicit = false;
    auto name = as_str(vn["name"]);
    if (!name || !valid_identifier(*name)) {
      errs.add(vn, "variable needs a 'name' (letters, digits, underscores; starting with a "
                   "letter)");
      continue;
    }
    v.name = *name;
    auto kindstr = as_str(vn["kind"]);
    auto kind = kindstr ? kind_from_name(*kindstr) : std::nullopt;
    if (!kind) {
      errs.add(vn, "variable '" + v.name +
                       "' needs a 'kind': chance-discrete, chance-continuous, "
                       "chance-deterministic, decision-discrete, or decision-continuous");
      continue;
    }
    v.kind = *kind;
    if (kind_is_discrete(v.kind)) {
      if (vn["domain"]) errs.add(vn["domain"], "discrete variable '" + v.name + "' takes 'states', not 'domain'");
      if (!vn["states"] || !vn["states"].IsSequence() || vn["states"].size() == 0) {
        errs.add(vn, "discrete variable '" + v.name + "' needs a non-empty 'states' list");
        continue;
      }
      for (const auto& sn : vn["states"]) {
        auto s = as_str(sn);
        if (!s || !valid_label(*s)) {
          errs.add(sn, "state labels must be non-empty (letters, digits, '_', '-', '.')");
          continue;
        }
        if (v.state_index(*s) >= 0)
          errs.add(sn, "variable '" + v.name + "' repeats state '" + *s + "'");
        else
          v.states.push_back(*s);
      }
    } else {
      if (vn["states"]) errs.add(vn["states"], "continuous variable '" + v.name + "' takes 'domain', not 'states'");
      if (!vn["domain"]) {
        errs.add(vn, "continuous variable '" + v.name + "' needs a 'domain': [lo, hi]");
        continue;
      }
      auto dom = parse_interval(vn["domain"], errs, "domain of '" + v.name + "'");
      if (!dom) continue;
      if (!dom->finite()) {
        errs.add(vn["domain"], "domain of '" + v.name + "' must be finite (declare the truncated "
                               "range explicitly)");
        continue;
      }
      v.domain = *dom;
    }
    if (vn["scale"]) {
      auto s = as_str(vn["scale"]);
      if (!s || (*s != "linear" && *s != "log"))
        errs.add(vn["scale"], "'scale' must be 'linear' or 'log'");
      else if (kind_is_discrete(v.kind))
        errs.add(vn["scale"], "'scale' applies to continuous variables only");
      else {
        v.log_scale = (*s == "log");
        scale_explicit = true;
      }
    }
    if (vn["constraint"]) {
      if (v.kind != VarKind::DecisionDiscrete) {
        errs.add(vn["constraint"], "only discrete decisions take a 'constraint' table");
      } else {
        const YAML::Node& cn = vn["constraint"];
        if (!cn.IsMap()) {
          errs.add(cn, "'constraint' must be a mapping with 'predecessors' and 'rows'");
        } else {
          check_known_keys(cn, {"predecessors", "rows"}, errs, "constraint");
          ConstraintDecl cd;
          bool ok = true;
          if (!cn["predecessors"] || !cn["predecessors"].IsSequence() ||
              cn["predecessors"].size() == 0) {
            errs.add(cn, "constraint needs a non-empty 'predecessors' list");
            ok = false;
          } else {
            for (const auto& pn : cn["predecessors"]) {
              auto p = as_str(pn);
              if (!p || !valid_identifier(*p)) {
                errs.add(pn, "constraint predecessors must be variable names");
                ok = false;
              } else
                cd.predecessors.push_back(*p);
            }
          }
          if (!cn["rows"] || !cn["rows"].IsSequence() || cn["rows"].size() == 0) {
            errs.add(cn, "constraint needs a non-empty 'rows' list");
            ok = false;
          } else {
            for (const auto& rn : cn["rows"]) {
              if (!rn.IsMap()) {
                errs.add(rn, "each constraint row must be a mapping");
                ok = false;
                continue;
              }
              check_known_keys(rn, {"when", "allow"}, errs, "constraint row");
              ConstraintDecl::Row row;
              if (rn["when"] && rn["when"].IsSequence())
                for (const auto& w : rn["when"]) {
                  auto s = as_str(w);
                  if (s) row.when.push_back(*s);
                }
              if (!rn["allow"] || !rn["allow"].IsSequence() || rn["allow"].size() == 0) {
                errs.add(rn, "each constraint row needs a non-empty 'allow' list");
                ok = false;
                continue;
              }
              for (const auto& a : rn["allow"]) {
                auto s = as_str(a);
                if (s) row.allow.push_back(*s);
              }
              cd.rows.push_back(std::move(row));
            }
          }
          if (ok) v.constraint = std::move(cd);
        }
      }
    }
    ctx.id.variables.push_back(std::move(v));
    ctx.var_nodes.push_back(vn);
    ctx.scale_explicit.push_back(scale_explicit);
  }
  // ids and duplicate names
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ctx.id.variables.size(); ++i) {
    ctx.id.variables[i].id = static_cast<VarId>(i);
    const std::string& nm = ctx.id.variables[i].name;
    if (!seen.insert(nm).second) errs.add(ctx.var_nodes[i], "duplicate variable name '" + nm + "'");
  }
}

void parse_potentials(const YAML::Node& n, ParseCtx& ctx, Errors& errs) {
  if (!n.IsDefined()) return;  // validated later: every chance variable needs one
  if (!n.IsSequence()) {
    errs.add(n, "'potentials' must be a list");
    return;
  }
  for (const auto& pn : n) {
    if (!pn.IsMap()) {
      errs.add(pn, "each potential must be a mapping");
      continue;
    }
    std::set<std::string> known = kPayloadKeys;
    known.insert({"variable", "given", "cases", "table"});
    check_known_keys(pn, known, errs, "potential");
    PotentialDecl d;
    auto var = as_str(pn["variable"]);
    if (!var) {
      errs.add(pn, "each potential needs 'variable': the chance variable it describes");
      continue;
    }
    d.variable = *var;
    if (pn["given"]) {
      if (!pn["given"].IsSequence()) {
        errs.add(pn["given"], "'given' must be a list of parent names");
        continue;
      }
      for (const auto& g : pn["given"]) {
        auto s = as_str(g);
        if (!s || !valid_identifier(*s)) {
          errs.add(g, "'given' entries must be variable names");
          continue;
        }
        d.given.push_back(*s);
      }
    }
    auto cases = parse_cases(pn, errs);
    if (!cases) continue;
    d.cases = std::move(*cases);
    ctx.id.potential_decls.push_back(std::move(d));
    ctx.pot_nodes.push_back(pn);
  }
}

void parse_utilities(const YAML::Node& n, ParseCtx& ctx, Errors& errs) {
  if (!n.IsDefined()) return;
  if (!n.IsSequence()) {
    errs.add(n, "'utilities' must be a list");
    return;
  }
  for (const auto& un : n) {
    if (!un.IsMap()) {
      errs.add(un, "each utility must be a mapping");
      continue;
    }
    std::set<std::string> known = kPayloadKeys;
    known.insert({"name", "domain", "cases", "table"});
    check_known_keys(un, known, errs, "utility");
    UtilityDecl d;
    auto name = as_str(un["name"]);
    if (!name || !valid_identifier(*name)) {
      errs.add(un, "each utility needs a 'name'");
      continue;
    }
    d.name = *name;
    if (!un["domain"] || !un["domain"].IsSequence() || un["domain"].size() == 0) {
      errs.add(un, "utility '" + d.name + "' needs a non-empty 'domain' list");
      continue;
    }
    for (const auto& g : un["domain"]) {
      auto s = as_str(g);
      if (!s || !valid_identifier(*s)) {
        errs.add(g, "'domain' entries must be variable names");
        continue;
      }
      d.domain.push_back(*s);
    }
    auto cases = parse_cases(un, errs);
    if (!cases) continue;
    d.cases = std::move(*cases);
    ctx.id.utility_decls.push_back(std::move(d));
    ctx.util_nodes.push_back(un);
  }
}

void parse_information(const YAML::Node& n, ParseCtx& ctx, Errors& errs) {
  ctx.info_node = n;
  if (!n.IsDefined() || !n.IsSequence()) {
    errs.add(n, "'information' must be a list of variable names (decisions interleaved with the "
                "chance variables observed before them)");
    return;
  }
  for (const auto& in : n) {
    auto s = as_str(in);
    if (!s || !valid_identifier(*s)) {
      errs.add(in, "'information' entries must be variable names");
      continue;
    }
    ctx.id.information.push_back(*s);
  }
}

// --------------------------------------------------------------------------
// stage 2: semantic validation and potential building
// --------------------------------------------------------------------------

// Mixed-radix iteration over a discrete-variable context (declared order).
struct ContextIter {
  std::vector<const Variable*> vars;
  std::size_t configs() const {
    std::size_t n = 1;
    for (const Variable* v : vars) n *= v->states.size();
    return n;
  }
  std::vector<int> config_of(std::size_t idx) const {
    std::vector<int> cfg(vars.size(), 0);
    for (std::size_t k = vars.size(); k-- > 0;) {
      cfg[k] = static_cast<int>(idx % vars[k]->states.size());
      idx /= vars[k]->states.size();
    }
    return cfg;
  }
  std::optional<std::size_t> index_of_labels(const std::vector<std::string>& labels) const {
    if (labels.size() != vars.size()) return std::nullopt;
    std::size_t idx = 0;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      int s = vars[k]->state_index(labels[k]);
      if (s < 0) return std::nullopt;
      idx = idx * vars[k]->states.size() + static_cast<std::size_t>(s);
    }
    return idx;
  }
  std::string describe(std::size_t idx) const {
    std::vector<int> cfg = config_of(idx);
    std::vector<std::string> parts;
    for (std::size_t k = 0; k < vars.size(); ++k)
      parts.push_back(vars[k]->name + "=" + vars[k]->states[static_cast<std::size_t>(cfg[k])]);
    return parts.empty() ? std::string("(unconditional)") : join(parts, ", ");
  }
};

class Builder {
 public:
  Builder(ParseCtx& ctx, Errors& errs) : ctx_(ctx), id_(ctx.id), errs_(errs) {}

  void run() {
    index_potentials();
    check_information();
    for (std::size_t i = 0; i < id_.potential_decls.size(); ++i) build_potential(i);
    for (std::size_t i = 0; i < id_.utility_decls.size(); ++i) build_utility(i);
    if (errs_.any()) return;
    check_decisions_have_utility();
    build_constraints();
    check_acyclic();
  }

 private:
  ParseCtx& ctx_;
  InfluenceDiagram& id_;
  Errors& errs_;
  std::map<std::string, std::size_t> pot_of_;  // variable name -> decl index

  const Variable* need_var(const std::string& name, const YAML::Node& at, const char* role) {
    const Variable* v = id_.find(name);
    if (!v) errs_.add(at, std::string(role) + " references unknown variable '" + name + "'");
    return v;
  }

  void index_potentials() {
    for (std::size_t i = 0; i < id_.potential_decls.size(); ++i) {
      const PotentialDecl& d = id_.potential_decls[i];
      const Variable* v = need_var(d.variable, ctx_.pot_nodes[i], "potential");
      if (!v) continue;
      if (!kind_is_chance(v->kind)) {
        errs_.add(ctx_.pot_nodes[i], "'" + d.variable + "' is a " + kind_name(v->kind) +
                                         "; only chance variables carry potentials");
        continue;
      }
      if (!pot_of_.emplace(d.variable, i).second)
        errs_.add(ctx_.pot_nodes[i], "duplicate potential for '" + d.variable + "'");
    }
    for (const Variable& v : id_.variables)
      if (kind_is_chance(v.kind) && !pot_of_.count(v.name))
        errs_.at(0, 0, "missing potential for chance variable '" + v.name + "'");
  }

  void check_information() {
    std::set<std::string> seen;
    std::optional<std::size_t> last_decision;
    for (std::size_t i = 0; i < id_.information.size(); ++i) {
      const std::string& n = id_.information[i];
      const Variable* v = need_var(n, ctx_.info_node, "information sequence");
      if (!v) continue;
      if (!seen.insert(n).second)
        errs_.add(ctx_.info_node, "information sequence lists '" + n + "' twice");
      if (kind_is_decision(v->kind)) last_decision = i;
    }
    for (const Variable& v : id_.variables) {
      if (!kind_is_decision(v.kind)) continue;
      bool found = false;
      for (const std::string& n : id_.information) found = found || n == v.name;
      if (!found)
        errs_.add(ctx_.info_node, "decision '" + v.name + "' is missing from the information "
                                  "sequence");
    }
    // every observed chance variable must precede some decision
    for (std::size_t i = 0; i < id_.information.size(); ++i) {
      const Variable* v = id_.find(id_.information[i]);
      if (!v || !kind_is_chance(v->kind)) continue;
      if (!last_decision || i > *last_decision)
        errs_.add(ctx_.info_node, "'" + v->name + "' appears in the information sequence after "
                                  "the last decision; it is never observed before a choice");
    }
  }

  // ---- piecewise-polynomial building ------------------------------------

  // Name lookup restricted to an allowed set of continuous variables.
  std::function<std::optional<VarId>(const std::string&)> scope_lookup(
      const std::vector<const Variable*>& allowed, std::string* bad) {
    return [this, allowed, bad](const std::string& name) -> std::optional<VarId> {
      for (const Variable* v : allowed)
        if (v->name == name) return v->id;
      if (bad && bad->empty()) {
        const Variable* v = id_.find(name);
        if (!v)
          *bad = "unknown variable '" + name + "'";
        else if (kind_is_discrete(v->kind))
          *bad = "'" + name + "' is discrete and cannot appear inside a polynomial";
        else
          *bad = "'" + name + "' is outside the declared domain";
      }
      return std::nullopt;
    };
  }

  std::optional<MOP> build_mop(const MopDecl& m, const std::vector<const Variable*>& allowed,
                               const YAML::Node& at, const std::string& what) {
    std::string bad;
    auto lookup = scope_lookup(allowed, &bad);
    switch (m.form) {
      case MopDecl::Form::Zero:
        return MOP::zero();
      case MopDecl::Form::Constant:
        return MOP::scalar(m.constant);
      case MopDecl::Form::Expr: {
        std::string perr;
        auto poly = parse_poly_expr(m.expr, lookup, &perr);
        if (!poly) {
          errs_.add(at, what + ": " + (bad.empty() ? perr : bad + "; " + perr));
          return std::nullopt;
        }
        std::vector<VarId> scope = poly->variables();
        for (const auto& [name, _] : m.expr_intervals) {
          auto v = lookup(name);
          if (!v) {
            errs_.add(at, what + " bounds: " + bad);
            return std::nullopt;
          }
          if (!std::binary_search(scope.begin(), scope.end(), *v)) {
            scope.push_back(*v);
            std::sort(scope.begin(), scope.end());
          }
        }
        Region region;
        std::vector<double> anchor(scope.size(), 0.0);
        for (VarId v : scope) {
          Interval iv{-std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
          for (const auto& [name, bounds] : m.expr_intervals)
            if (lookup(name) == v) iv = bounds;
          region.bounds.push_back(iv);
        }
        try {
          return mop_from_pieces(scope, {Piece{region, anchor, *poly}}, false);
        } catch (const AlgebraError& e) {
          errs_.add(at, what + ": " + e.what());
          return std::nullopt;
        }
      }
      case MopDecl::Form::Curve: {
        const CurveDecl& c = *m.curve;
        auto v = lookup(c.of);
        if (!v) {
          errs_.add(at, what + " curve argument: " + bad);
          return std::nullopt;
        }
        try {
          DerivFn f = make_curve(c.family, c.params);
          return taylor_mop(f, *v, c.intervals, c.centers, c.degree);
        } catch (const AlgebraError& e) {
          errs_.add(at, what + ": " + e.what());
          return std::nullopt;
        }
      }
      case MopDecl::Form::Pieces: {
        // scope = all variables referenced anywhere in the pieces
        std::set<VarId> scope_set;
        auto resolve = [&](const std::string& name) -> std::optional<VarId> {
          auto v = lookup(name);
          if (!v) errs_.add(at, what + ": " + bad);
          return v;
        };
        for (const PieceDecl& p : m.pieces) {
          for (const auto& [name, _] : p.intervals) {
            auto v = resolve(name);
            if (!v) return std::nullopt;
            scope_set.insert(*v);
          }
          for (const auto& [name, _] : p.anchors) {
            auto v = resolve(name);
            if (!v) return std::nullopt;
            scope_set.insert(*v);
          }
          for (const auto& [key, _] : p.coeffs) {
            std::string kerr;
            auto factors = split_monomial_key(key, &kerr);
            if (!factors) {
              errs_.add(at, what + ": " + kerr);
              return std::nullopt;
            }
            for (const auto& [name, _e] : *factors) {
              auto v = resolve(name);
              if (!v) return std::nullopt;
              scope_set.insert(*v);
            }
          }
        }
        std::vector<VarId> scope(scope_set.begin(), scope_set.end());
        std::vector<Piece> pieces;
        for (const PieceDecl& p : m.pieces) {
          Region region;
          std::vector<double> anchor;
          for (VarId v : scope) {
            Interval iv{-std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity()};
            double a = 0.0;
            for (const auto& [name, bounds] : p.intervals)
              if (lookup(name) == v) iv = bounds;
            for (const auto& [name, c] : p.anchors)
              if (lookup(name) == v) a = c;
            region.bounds.push_back(iv);
            anchor.push_back(a);
          }
          Polynomial poly;
          for (const auto& [key, coeff] : p.coeffs) {
            std::string kerr;
            auto factors = split_monomial_key(key, &kerr);
            Monomial mono;
            for (const auto& [name, e] : *factors) mono.factors.emplace_back(*lookup(name), e);
            std::sort(mono.factors.begin(), mono.factors.end());
            poly.add_term(mono, coeff + poly.coefficient(mono));
          }
          pieces.push_back(Piece{std::move(region), std::move(anchor), std::move(poly)});
        }
        try {
          MOP built = mop_from_pieces(scope, std::move(pieces), false);
          built.validate();
          return built;
        } catch (const AlgebraError& e) {
          errs_.add(at, what + ": " + e.what());
          return std::nullopt;
        }
      }
    }
    return std::nullopt;
  }

  // ---- case-table scaffolding --------------------------------------------

  // Validates the rows of a decl against a discrete context; returns the case
  // index for each context configuration.
  std::optional<std::vector<const CaseDecl*>> match_cases(const std::vector<CaseDecl>& cases,
                                                          const ContextIter& ctxv,
                                                          const YAML::Node& at,
                                                          const std::string& what) {
    std::vector<const CaseDecl*> by_config(ctxv.configs(), nullptr);
    if (ctxv.vars.empty()) {
      if (cases.size() != 1 || !cases[0].when.empty()) {
        errs_.add(at, what + " has no discrete parents, so it takes a single payload without "
                          "'when' labels");
        return std::nullopt;
      }
      by_config[0] = &cases[0];
      return by_config;
    }
    for (const CaseDecl& c : cases) {
      auto idx = ctxv.index_of_labels(c.when);
      if (!idx) {
        errs_.add(at, what + ": row 'when: [" + join(c.when, ", ") + "]' does not match the "
                          "discrete parents (expected one label per parent, in declared order)");
        return std::nullopt;
      }
      if (by_config[*idx]) {
        errs_.add(at, what + ": duplicate row for " + ctxv.describe(*idx));
        return std::nullopt;
      }
      by_config[*idx] = &c;
    }
    for (std::size_t i = 0; i < by_config.size(); ++i)
      if (!by_config[i]) {
        errs_.add(at, what + ": no row for " + ctxv.describe(i));
        return std::nullopt;
      }
    return by_config;
  }

  // ---- chance potentials ---------------------------------------------------

  void build_potential(std::size_t i) {
    const PotentialDecl& d = id_.potential_decls[i];
    const YAML::Node& at = ctx_.pot_nodes[i];
    id_.chance_potentials.push_back(Potential::identity(PotKind::Continuous));  // placeholder
    const Variable* X = id_.find(d.variable);
    if (!X || !kind_is_chance(X->kind) || pot_of_[d.variable] != i) return;

    // parents
    std::vector<const Variable*> parents;
    std::set<std::string> seen;
    for (const std::string& g : d.given) {
      const Variable* p = need_var(g, at, ("potential for '" + d.variable + "'").c_str());
      if (!p) return;
      if (p->name == X->name) {
        errs_.add(at, "potential for '" + d.variable + "' lists the variable as its own parent");
        return;
      }
      if (!seen.insert(g).second) {
        errs_.add(at, "potential for '" + d.variable + "' repeats parent '" + g + "'");
        return;
      }
      parents.push_back(p);
    }

    ContextIter ctxv;  // discrete parents, declared order
    std::vector<const Variable*> cont_parents;
    for (const Variable* p : parents)
      (kind_is_discrete(p->kind) ? ctxv.vars : cont_parents).push_back(p);

    auto rows = match_cases(d.cases, ctxv, at, "potential for '" + d.variable + "'");
    if (!rows) return;

    // payload kinds must agree across rows and fit the variable kind
    BodyDecl::Payload payload = d.cases.front().body.payload;
    for (const CaseDecl& c : d.cases)
      if (c.body.payload != payload) {
        errs_.add(at, "potential for '" + d.variable + "': all rows must use the same payload "
                      "form");
        return;
      }

    const std::string what = "potential for '" + d.variable + "'";
    if (X->kind == VarKind::ChanceDiscrete) {
      if (payload != BodyDecl::Payload::Probs) {
        errs_.add(at, what + ": a discrete chance variable takes 'probs' rows");
        return;
      }
      if (!cont_parents.empty()) {
        errs_.add(at, what + ": discrete chance variables take discrete parents only");
        return;
      }
    } else if (X->kind == VarKind::ChanceDeterministic) {
      if (payload != BodyDecl::Payload::Dirac) {
        errs_.add(at, what + ": deterministic variables carry point-mass ('dirac') conditionals "
                      "only");
        return;
      }
    } else {  // ChanceContinuous
      if (payload == BodyDecl::Payload::Dirac) {
        errs_.add(at, what + ": point-mass conditionals are reserved for chance-deterministic "
                      "variables");
        return;
      }
      if (payload != BodyDecl::Payload::Density && payload != BodyDecl::Payload::Mop) {
        errs_.add(at, what + ": a continuous chance variable takes a 'density' or 'mop' payload");
        return;
      }
    }
    if (payload == BodyDecl::Payload::Density) {
      if (!parents.empty()) {
        errs_.add(at, what + ": closed-form densities are marginals and take no parents; model "
                      "dependence through a deterministic relation instead");
        return;
      }
      const std::string& fam = d.cases.front().body.density->family;
      if (fam == "lognormal") {
        Variable& xv = id_.variables[static_cast<std::size_t>(X->id)];
        if (ctx_.scale_explicit[static_cast<std::size_t>(X->id)] && !xv.log_scale) {
          errs_.add(at, what + ": a lognormal family stores the log-value, which conflicts with "
                        "'scale: linear'");
          return;
        }
        xv.log_scale = true;
      }
    }
    // a continuous decision may appear in a deterministic relation but not in
    // a density's domain
    if (payload == BodyDecl::Payload::Density || payload == BodyDecl::Payload::Mop) {
      for (const Variable* p : cont_parents)
        if (p->kind == VarKind::DecisionContinuous) {
          errs_.add(at, what + ": a continuous decision ('" + p->name + "') may not appear in a "
                        "density's domain");
          return;
        }
    }

    // table shell
    std::vector<DiscreteAxis> axes;
    for (const Variable* p : ctxv.vars)
      axes.push_back(DiscreteAxis{p->id, static_cast<int>(p->states.size())});
    if (X->kind == VarKind::ChanceDiscrete)
      axes.push_back(DiscreteAxis{X->id, static_cast<int>(X->states.size())});
    std::sort(axes.begin(), axes.end(),
              [](const DiscreteAxis& a, const DiscreteAxis& b) { return a.var < b.var; });
    std::vector<VarId> cvars;
    if (X->kind != VarKind::ChanceDiscrete) cvars.push_back(X->id);
    for (const Variable* p : cont_parents) cvars.push_back(p->id);
    std::sort(cvars.begin(), cvars.end());

    PotKind pk = X->kind == VarKind::ChanceDiscrete ? PotKind::Discrete : PotKind::Continuous;
    Potential pot(pk, axes, cvars);

    // continuous variables a body may reference
    std::vector<const Variable*> body_scope = cont_parents;
    if (X->kind != VarKind::ChanceDiscrete) body_scope.push_back(X);

    std::set<VarId> referenced;
    for (std::size_t cfg = 0; cfg < rows->size(); ++cfg) {
      const BodyDecl& body = (*rows)[cfg]->body;
      DiscreteAssign assign;
      std::vector<int> states = ctxv.config_of(cfg);
      for (std::size_t k = 0; k < ctxv.vars.size(); ++k)
        assign.emplace_back(ctxv.vars[k]->id, states[k]);

      switch (body.payload) {
        case BodyDecl::Payload::Probs: {
          if (body.probs.size() != X->states.size()) {
            errs_.add(at, what + ": 'probs' rows need one probability per state of '" +
                              X->name + "' (" + std::to_string(X->states.size()) + ")");
            return;
          }
          double sum = 0.0;
          for (double p : body.probs) {
            if (p < 0.0) {
              errs_.add(at, what + ": probabilities must be non-negative");
              return;
            }
            sum += p;
          }
          if (std::abs(sum - 1.0) > 1e-6) {
            errs_.add(at, what + ": probabilities for " + ctxv.describe(cfg) + " sum to " +
                              fmt17(sum) + ", not 1");
            return;
          }
          for (std::size_t s = 0; s < body.probs.size(); ++s) {
            if (body.probs[s] == 0.0) continue;
            DiscreteAssign full = assign;
            full.emplace_back(X->id, static_cast<int>(s));
            pot.entry(pot.index_of(full)) = Entry{CAddend{MOP::scalar(body.probs[s]), {}}};
          }
          break;
        }
        case BodyDecl::Payload::Density: {
          const DensityDecl& dd = *body.density;
          DensitySpec spec;
          spec.family = dd.family == "standard-normal" ? DensitySpec::Family::StandardNormal
                        : dd.family == "normal"        ? DensitySpec::Family::Normal
                                                       : DensitySpec::Family::LogNormal;
          spec.mu = dd.mean;
          spec.sigma2 = dd.variance;
          spec.halfwidth = dd.halfwidth;
          spec.pieces = dd.pieces;
          spec.degree = dd.degree;
          try {
            MOP dm = density_mop(X->id, spec);
            for (VarId v : dm.scope()) referenced.insert(v);
            pot.entry(pot.index_of(assign)) = Entry{CAddend{std::move(dm), {}}};
          } catch (const AlgebraError& e) {
            errs_.add(at, what + ": " + e.what());
            return;
          }
          break;
        }
        case BodyDecl::Payload::Mop: {
          auto m = build_mop(*body.mop, body_scope, at, what);
          if (!m) return;
          if (!m->in_scope(X->id)) {
            errs_.add(at, what + ": the density must depend on '" + X->name + "'");
            return;
          }
          for (VarId v : m->scope()) referenced.insert(v);
          if (!m->is_zero()) pot.entry(pot.index_of(assign)) = Entry{CAddend{std::move(*m), {}}};
          break;
        }
        case BodyDecl::Payload::Dirac: {
          if (body.diracs.size() != 1 || std::abs(body.diracs[0].weight - 1.0) > 1e-12) {
            errs_.add(at, what + ": a deterministic variable carries exactly one point mass of "
                          "weight 1");
            return;
          }
          Entry e;
          for (const DiracDecl& dd : body.diracs) {
            auto g = build_mop(dd.g, cont_parents, at, what + " (relation)");
            if (!g) return;
            if (g->in_scope(X->id)) {
              errs_.add(at, what + ": the relation may not reference '" + X->name + "' itself");
              return;
            }
            for (VarId v : g->scope()) referenced.insert(v);
            referenced.insert(X->id);
            DiracTerm t;
            t.target = X->id;
            t.weight = dd.weight;
            t.g = std::move(*g);
            e.push_back(CAddend{MOP::scalar(1.0), {std::move(t)}});
          }
          pot.entry(pot.index_of(assign)) = std::move(e);
          break;
        }
        default:
          errs_.add(at, what + ": 'value' rows belong to utilities");
          return;
      }
    }

    // declared continuous parents must actually occur
    for (const Variable* p : cont_parents)
      if (!referenced.count(p->id) && X->kind != VarKind::ChanceDiscrete) {
        errs_.add(at, what + " declares parent '" + p->name + "' but never references it");
        return;
      }
    id_.chance_potentials.back() = std::move(pot);
  }

  // ---- utilities ------------------------------------------------------------

  void build_utility(std::size_t i) {
    const UtilityDecl& d = id_.utility_decls[i];
    const YAML::Node& at = ctx_.util_nodes[i];
    id_.utility_potentials.push_back(Potential::identity(PotKind::Utility));  // placeholder
    const std::string what = "utility '" + d.name + "'";

    if (id_.find(d.name)) {
      errs_.add(at, what + " collides with a variable name");
      return;
    }
    for (std::size_t j = 0; j < i; ++j)
      if (id_.utility_decls[j].name == d.name) {
        errs_.add(at, "duplicate utility name '" + d.name + "'");
        return;
      }

    std::vector<const Variable*> members;
    std::set<std::string> seen;
    for (const std::string& g : d.domain) {
      const Variable* p = need_var(g, at, what.c_str());
      if (!p) return;
      if (!seen.insert(g).second) {
        errs_.add(at, what + " repeats '" + g + "' in its domain");
        return;
      }
      members.push_back(p);
    }

    ContextIter ctxv;
    std::vector<const Variable*> cont_members;
    for (const Variable* p : members)
      (kind_is_discrete(p->kind) ? ctxv.vars : cont_members).push_back(p);

    auto rows = match_cases(d.cases, ctxv, at, what);
    if (!rows) return;

    std::vector<DiscreteAxis> axes;
    for (const Variable* p : ctxv.vars)
      axes.push_back(DiscreteAxis{p->id, static_cast<int>(p->states.size())});
    std::sort(axes.begin(), axes.end(),
              [](const DiscreteAxis& a, const DiscreteAxis& b) { return a.var < b.var; });
    std::vector<VarId> cvars;
    for (const Variable* p : cont_members) cvars.push_back(p->id);
    std::sort(cvars.begin(), cvars.end());
    Potential pot(PotKind::Utility, axes, cvars);

    std::set<VarId> referenced;
    for (std::size_t cfg = 0; cfg < rows->size(); ++cfg) {
      const BodyDecl& body = (*rows)[cfg]->body;
      DiscreteAssign assign;
      std::vector<int> states = ctxv.config_of(cfg);
      for (std::size_t k = 0; k < ctxv.vars.size(); ++k)
        assign.emplace_back(ctxv.vars[k]->id, states[k]);

      if (body.payload == BodyDecl::Payload::Value) {
        if (body.value != 0.0)
          pot.entry(pot.index_of(assign)) = Entry{CAddend{MOP::scalar(body.value), {}}};
      } else if (body.payload == BodyDecl::Payload::Mop) {
        auto m = build_mop(*body.mop, cont_members, at, what);
        if (!m) return;
        for (VarId v : m->scope()) referenced.insert(v);
        if (!m->is_zero()) pot.entry(pot.index_of(assign)) = Entry{CAddend{std::move(*m), {}}};
      } else {
        errs_.add(at, what + ": utilities take 'mop' or 'value' payloads");
        return;
      }
    }

    for (const Variable* p : cont_members)
      if (!referenced.count(p->id)) {
        errs_.add(at, what + " declares '" + p->name + "' in its domain but never references it");
        return;
      }
    id_.utility_potentials.back() = std::move(pot);
  }

  // ---- cross-cutting checks ---------------------------------------------

  void check_decisions_have_utility() {
    for (const Variable& v : id_.variables) {
      if (!kind_is_decision(v.kind)) continue;
      bool found = false;
      for (const UtilityDecl& u : id_.utility_decls)
        for (const std::string& m : u.domain) found = found || m == v.name;
      if (!found)
        errs_.at(0, 0, "decision '" + v.name + "' appears in no utility domain (every decision "
                       "variable must be in the domain of at least one utility potential)");
    }
  }

  void build_constraints() {
    for (const Variable& v : id_.variables) {
      if (!v.constraint) continue;
      const ConstraintDecl& cd = *v.constraint;
      const YAML::Node& at = ctx_.var_nodes[static_cast<std::size_t>(v.id)];
      const std::string what = "constraint of '" + v.name + "'";
      auto dpos = id_.info_position(v.id);

      ContextIter ctxv;
      std::set<std::string> seen;
      bool ok = true;
      for (const std::string& p : cd.predecessors) {
        const Variable* pv = need_var(p, at, what.c_str());
        if (!pv) {
          ok = false;
          continue;
        }
        if (!seen.insert(p).second) {
          errs_.add(at, what + " repeats predecessor '" + p + "'");
          ok = false;
          continue;
        }
        if (!kind_is_discrete(pv->kind)) {
          errs_.add(at, what + ": predecessor '" + p + "' must be discrete");
          ok = false;
          continue;
        }
        auto ppos = id_.info_position(pv->id);
        if (!ppos || (dpos && *ppos >= *dpos)) {
          errs_.add(at, what + ": predecessor '" + p + "' is not observed before the decision");
          ok = false;
          continue;
        }
        ctxv.vars.push_back(pv);
      }
      if (!ok) continue;

      std::vector<const std::vector<std::string>*> allow_by_cfg(ctxv.configs(), nullptr);
      for (const ConstraintDecl::Row& row : cd.rows) {
        auto idx = ctxv.index_of_labels(row.when);
        if (!idx) {
          errs_.add(at, what + ": row 'when: [" + join(row.when, ", ") + "]' does not match the "
                            "predecessors");
          ok = false;
          break;
        }
        if (allow_by_cfg[*idx]) {
          errs_.add(at, what + ": duplicate row for " + ctxv.describe(*idx));
          ok = false;
          break;
        }
        allow_by_cfg[*idx] = &row.allow;
      }
      if (!ok) continue;
      for (std::size_t c = 0; c < allow_by_cfg.size(); ++c)
        if (!allow_by_cfg[c]) {
          errs_.add(at, what + ": no row for " + ctxv.describe(c));
          ok = false;
        }
      if (!ok) continue;

      DecisionConstraint dc;
      for (const Variable* p : ctxv.vars)
        dc.predecessors.push_back(DiscreteAxis{p->id, static_cast<int>(p->states.size())});
      std::sort(dc.predecessors.begin(), dc.predecessors.end(),
                [](const DiscreteAxis& a, const DiscreteAxis& b) { return a.var < b.var; });
      // reindex rows from declared predecessor order to sorted-axis order
      std::vector<std::size_t> strides(dc.predecessors.size(), 1);
      for (std::size_t k = dc.predecessors.size(); k-- > 1;)
        strides[k - 1] = strides[k] * static_cast<std::size_t>(dc.predecessors[k].states);
      std::size_t total = 1;
      for (const DiscreteAxis& ax : dc.predecessors) total *= static_cast<std::size_t>(ax.states);
      dc.allowed.assign(total, {});
      for (std::size_t c = 0; c < allow_by_cfg.size(); ++c) {
        std::vector<int> cfg = ctxv.config_of(c);
        std::size_t idx = 0;
        for (std::size_t k = 0; k < ctxv.vars.size(); ++k) {
          for (std::size_t a = 0; a < dc.predecessors.size(); ++a)
            if (dc.predecessors[a].var == ctxv.vars[k]->id)
              idx += static_cast<std::size_t>(cfg[k]) * strides[a];
        }
        std::vector<int>& allow = dc.allowed[idx];
        for (const std::string& label : *allow_by_cfg[c]) {
          int s = v.state_index(label);
          if (s < 0) {
            errs_.add(at, what + ": '" + label + "' is not a state of '" + v.name + "'");
            ok = false;
            break;
          }
          if (std::find(allow.begin(), allow.end(), s) != allow.end()) {
            errs_.add(at, what + ": state '" + label + "' allowed twice for " + ctxv.describe(c));
            ok = false;
            break;
          }
          allow.push_back(s);
        }
        if (!ok) break;
      }
      if (ok) id_.constraints.emplace(v.id, std::move(dc));
    }
  }

  void check_acyclic() {
    // functional arcs (parents -> chance variable) plus information arcs
    // (observed variable -> later decision)
    std::size_t n = id_.variables.size();
    std::vector<std::vector<VarId>> adj(n);
    for (const PotentialDecl& d : id_.potential_decls) {
      VarId x = id_.id_of(d.variable);
      if (x < 0) continue;
      for (const std::string& g : d.given) {
        VarId p = id_.id_of(g);
        if (p >= 0) adj[static_cast<std::size_t>(p)].push_back(x);
      }
    }
    std::vector<VarId> info = id_.information_ids();
    for (std::size_t i = 0; i < info.size(); ++i) {
      if (info[i] < 0 || !kind_is_decision(id_.var(info[i]).kind)) continue;
      for (std::size_t j = 0; j < i; ++j)
        if (info[j] >= 0) adj[static_cast<std::size_t>(info[j])].push_back(info[i]);
    }
    std::vector<int> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
    std::vector<VarId> stack;
    std::function<bool(VarId)> dfs = [&](VarId v) -> bool {
      state[static_cast<std::size_t>(v)] = 1;
      stack.push_back(v);
      for (VarId w : adj[static_cast<std::size_t>(v)]) {
        if (state[static_cast<std::size_t>(w)] == 1) {
          std::vector<std::string> names;
          auto it = std::find(stack.begin(), stack.end(), w);
          for (; it != stack.end(); ++it) names.push_back(id_.var(*it).name);
          names.push_back(id_.var(w).name);
          errs_.at(0, 0, "cycle: " + join(names, " -> "));
          return false;
        }
        if (state[static_cast<std::size_t>(w)] == 0 && !dfs(w)) return false;
      }
      stack.pop_back();
      state[static_cast<std::size_t>(v)] = 2;
      return true;
    };
    for (std::size_t v = 0; v < n; ++v)
      if (state[v] == 0 && !dfs(static_cast<VarId>(v))) return;
  }
};

}  // namespace

ParseResult parse_diagram(const std::string& text) {
  ParseResult res;
  Errors errs{&res.errors};
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    errs.at(e.mark.line + 1, e.mark.column + 1, "syntax error: " + e.msg);
    return res;
  }
  if (!root.IsMap()) {
    errs.at(1, 1, "the file must be a mapping with sections: format, variables, potentials, "
                  "utilities, information");
    return res;
  }
  check_known_keys(root, {"format", "name", "variables", "potentials", "utilities", "information"},
                   errs, "top level");
  if (!root["format"]) {
    errs.at(1, 1, "missing 'format: 1' version header");
  } else if (as_int(root["format"]) != std::optional<int>(1)) {
    errs.add(root["format"], "unsupported format version (expected 1)");
  }

  ParseCtx ctx;
  if (root["name"]) {
    auto n = as_str(root["name"]);
    if (!n)
      errs.add(root["name"], "'name' must be a string");
    else
      ctx.id.name = *n;
  }
  parse_variables(root["variables"], ctx, errs);
  parse_potentials(root["potentials"], ctx, errs);
  parse_utilities(root["utilities"], ctx, errs);
  parse_information(root["information"], ctx, errs);
  if (!res.errors.empty()) return res;

  Builder(ctx, errs).run();
  if (!res.errors.empty()) return res;

  res.diagram = std::move(ctx.id);
  return res;
}

// --------------------------------------------------------------------------
// canonicalization and serialization
// --------------------------------------------------------------------------

namespace {

// Orders `when` labels and case rows for a permuted context.
void canonicalize_cases(std::vector<CaseDecl>& cases, const std::vector<const Variable*>& old_ctx,
                        const std::vector<const Variable*>& new_ctx) {
  std::vector<std::size_t> perm;  // position of each new-context var in the old context
  for (const Variable* nv : new_ctx)
    for (std::size_t k = 0; k < old_ctx.size(); ++k)
      if (old_ctx[k] == nv) perm.push_back(k);
  for (CaseDecl& c : cases) {
    std::vector<std::string> when;
    for (std::size_t k : perm)
      if (k < c.when.size()) when.push_back(c.when[k]);
    c.when = std::move(when);
  }
  ContextIter ctxv;
  ctxv.vars = new_ctx;
  std::sort(cases.begin(), cases.end(), [&](const CaseDecl& a, const CaseDecl& b) {
    return ctxv.index_of_labels(a.when).value_or(0) < ctxv.index_of_labels(b.when).value_or(0);
  });
}

bool bounds_less(const std::vector<std::pair<std::string, Interval>>& a,
                 const std::vector<std::pair<std::string, Interval>>& b) {
  auto key = [](const std::vector<std::pair<std::string, Interval>>& v) {
    std::vector<std::tuple<std::string, double, double>> k;
    for (const auto& [n, iv] : v) k.emplace_back(n, iv.lo, iv.hi);
    return k;
  };
  return key(a) < key(b);
}

void canonicalize_mop(MopDecl& m) {
  auto by_name = [](const auto& a, const auto& b) { return a.first < b.first; };
  std::sort(m.expr_intervals.begin(), m.expr_intervals.end(), by_name);
  for (PieceDecl& p : m.pieces) {
    std::sort(p.intervals.begin(), p.intervals.end(), by_name);
    std::sort(p.anchors.begin(), p.anchors.end(), by_name);
    for (auto& [key, _] : p.coeffs) key = canonical_monomial_key(key);
    std::sort(p.coeffs.begin(), p.coeffs.end(), by_name);
  }
  std::sort(m.pieces.begin(), m.pieces.end(),
            [](const PieceDecl& a, const PieceDecl& b) { return bounds_less(a.intervals, b.intervals); });
}

void canonicalize_body(BodyDecl& b) {
  if (b.mop) canonicalize_mop(*b.mop);
  for (DiracDecl& d : b.diracs) canonicalize_mop(d.g);
}

// A canonical copy: variables alphabetical (ids remapped), parent/domain
// lists sorted, case rows in configuration order, pieces by lower bound.
InfluenceDiagram canonical_copy(const InfluenceDiagram& src) {
  InfluenceDiagram out;
  out.name = src.name;
  out.information = src.information;

  std::vector<const Variable*> order;
  for (const Variable& v : src.variables) order.push_back(&v);
  std::sort(order.begin(), order.end(),
            [](const Variable* a, const Variable* b) { return a->name < b->name; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    Variable v = *order[i];
    v.id = static_cast<VarId>(i);
    if (v.constraint) {
      // sort predecessors, permute row labels, order rows
      ConstraintDecl& cd = *v.constraint;
      std::vector<std::string> sorted_preds = cd.predecessors;
      std::sort(sorted_preds.begin(), sorted_preds.end());
      std::vector<std::size_t> perm;
      for (const std::string& p : sorted_preds)
        for (std::size_t k = 0; k < cd.predecessors.size(); ++k)
          if (cd.predecessors[k] == p) perm.push_back(k);
      for (ConstraintDecl::Row& r : cd.rows) {
        std::vector<std::string> when;
        for (std::size_t k : perm)
          if (k < r.when.size()) when.push_back(r.when[k]);
        r.when = std::move(when);
      }
      ContextIter ctxv;
      for (const std::string& p : sorted_preds) ctxv.vars.push_back(src.find(p));
      cd.predecessors = std::move(sorted_preds);
      std::sort(cd.rows.begin(), cd.rows.end(),
                [&](const ConstraintDecl::Row& a, const ConstraintDecl::Row& b) {
                  return ctxv.index_of_labels(a.when).value_or(0) <
                         ctxv.index_of_labels(b.when).value_or(0);
                });
    }
    out.variables.push_back(std::move(v));
  }

  out.potential_decls = src.potential_decls;
  std::sort(out.potential_decls.begin(), out.potential_decls.end(),
            [](const PotentialDecl& a, const PotentialDecl& b) { return a.variable < b.variable; });
  for (PotentialDecl& d : out.potential_decls) {
    std::vector<const Variable*> old_ctx, new_ctx;
    for (const std::string& g : d.given) {
      const Variable* v = src.find(g);
      if (v && kind_is_discrete(v->kind)) old_ctx.push_back(v);
    }
    std::sort(d.given.begin(), d.given.end());
    for (const std::string& g : d.given) {
      const Variable* v = src.find(g);
      if (v && kind_is_discrete(v->kind)) new_ctx.push_back(v);
    }
    canonicalize_cases(d.cases, old_ctx, new_ctx);
    for (CaseDecl& c : d.cases) canonicalize_body(c.body);
  }

  out.utility_decls = src.utility_decls;
  std::sort(out.utility_decls.begin(), out.utility_decls.end(),
            [](const UtilityDecl& a, const UtilityDecl& b) { return a.name < b.name; });
  for (UtilityDecl& d : out.utility_decls) {
    std::vector<const Variable*> old_ctx, new_ctx;
    for (const std::string& g : d.domain) {
      const Variable* v = src.find(g);
      if (v && kind_is_discrete(v->kind)) old_ctx.push_back(v);
    }
    std::sort(d.domain.begin(), d.domain.end());
    for (const std::string& g : d.domain) {
      const Variable* v = src.find(g);
      if (v && kind_is_discrete(v->kind)) new_ctx.push_back(v);
    }
    canonicalize_cases(d.cases, old_ctx, new_ctx);
    for (CaseDecl& c : d.cases) canonicalize_body(c.body);
  }
  return out;
}

// ---- emission ----

struct Emitter {
  std::ostringstream os;

  void raw(const std::string& s) { os << s; }
  void line(int indent, const std::string& s) {
    for (int i = 0; i < indent; ++i) os << ' ';
    os << s << '\n';
  }
  static std::string flow_strings(const std::vector<std::string>& v) {
    return "[" + join(v, ", ") + "]";
  }
  static std::string flow_numbers(const std::vector<double>& v) {
    std::vector<std::string> parts;
    for (double d : v) parts.push_back(fmt17(d));
    return "[" + join(parts, ", ") + "]";
  }
  static std::string flow_interval(const Interval& iv) {
    return "[" + fmt17(iv.lo) + ", " + fmt17(iv.hi) + "]";
  }
  static std::string flow_bounds(const std::vector<std::pair<std::string, Interval>>& b) {
    std::vector<std::string> parts;
    for (const auto& [n, iv] : b) parts.push_back(n + ": " + flow_interval(iv));
    return "{" + join(parts, ", ") + "}";
  }

  void emit_mop(int ind, const std::string& key, const MopDecl& m) {
    switch (m.form) {
      case MopDecl::Form::Zero:
        line(ind, key + ": {zero: true}");
        return;
      case MopDecl::Form::Constant:
        line(ind, key + ": {constant: " + fmt17(m.constant) + "}");
        return;
      case MopDecl::Form::Expr:
        line(ind, key + ":");
        line(ind + 2, "expr: " + m.expr);
        if (!m.expr_intervals.empty()) line(ind + 2, "on: " + flow_bounds(m.expr_intervals));
        return;
      case MopDecl::Form::Curve: {
        const CurveDecl& c = *m.curve;
        line(ind, key + ":");
        line(ind + 2, "curve:");
        line(ind + 4, "family: " + c.family);
        if (!c.params.empty()) line(ind + 4, "params: " + flow_numbers(c.params));
        line(ind + 4, "of: " + c.of);
        std::vector<std::string> ivs;
        for (const Interval& iv : c.intervals) ivs.push_back(flow_interval(iv));
        line(ind + 4, "intervals: " + flow_strings(ivs));
        line(ind + 4, "centers: " + flow_numbers(c.centers));
        line(ind + 4, "degree: " + std::to_string(c.degree));
        return;
      }
      case MopDecl::Form::Pieces: {
        line(ind, key + ":");
        line(ind + 2, "pieces:");
        for (const PieceDecl& p : m.pieces) {
          std::string head = "- ";
          bool first = true;
          auto item = [&](const std::string& s) {
            if (first) {
              line(ind + 4, "- " + s);
              first = false;
            } else {
              line(ind + 6, s);
            }
          };
          if (!p.intervals.empty()) item("on: " + flow_bounds(p.intervals));
          if (!p.anchors.empty()) {
            std::vector<std::string> parts;
            for (const auto& [n, a] : p.anchors) parts.push_back(n + ": " + fmt17(a));
            item("anchor: {" + join(parts, ", ") + "}");
          }
          std::vector<std::string> parts;
          for (const auto& [k, v] : p.coeffs) parts.push_back("\"" + k + "\": " + fmt17(v));
          item("coeffs: {" + join(parts, ", ") + "}");
        }
        return;
      }
    }
  }

  void emit_body(int ind, const BodyDecl& b, bool list_head) {
    int head_ind = list_head ? ind - 2 : ind;
    bool first = list_head;
    auto start = [&](const std::string& s) {
      if (first) {
        line(head_ind, "- " + s);
        first = false;
      } else {
        line(ind, s);
      }
    };
    switch (b.payload) {
      case BodyDecl::Payload::Density: {
        const DensityDecl& d = *b.density;
        start("density:");
        line(ind + 2, "family: " + d.family);
        if (d.family != "standard-normal") {
          line(ind + 2, "mean: " + fmt17(d.mean));
          line(ind + 2, "variance: " + fmt17(d.variance));
        }
        line(ind + 2, "halfwidth: " + fmt17(d.halfwidth));
        line(ind + 2, "pieces: " + std::to_string(d.pieces));
        line(ind + 2, "degree: " + std::to_string(d.degree));
        return;
      }
      case BodyDecl::Payload::Dirac: {
        start("dirac:");
        for (const DiracDecl& d : b.diracs) {
          line(ind + 2, "- weight: " + fmt17(d.weight));
          emit_mop(ind + 4, "g", d.g);
        }
        return;
      }
      case BodyDecl::Payload::Mop: {
        if (first) {
          line(head_ind, "-");
          first = false;
        }
        emit_mop(ind, "mop", *b.mop);
        return;
      }
      case BodyDecl::Payload::Probs:
        start("probs: " + flow_numbers(b.probs));
        return;
      case BodyDecl::Payload::Value:
        start("value: " + fmt17(b.value));
        return;
      case BodyDecl::Payload::None:
        return;
    }
  }

  void emit_cases(int ind, const std::vector<CaseDecl>& cases, bool value_rows) {
    if (cases.size() == 1 && cases[0].when.empty()) {
      emit_body(ind, cases[0].body, false);
      return;
    }
    line(ind, value_rows ? "table:" : "cases:");
    for (const CaseDecl& c : cases) {
      line(ind + 2, "- when: " + flow_strings(c.when));
      BodyDecl body = c.body;
      emit_body(ind + 4, body, false);
    }
  }
};

}  // namespace

std::string serialize_diagram(const InfluenceDiagram& src) {
  InfluenceDiagram id = canonical_copy(src);
  Emitter em;
  em.line(0, "format: 1");
  if (!id.name.empty()) em.line(0, "name: " + id.name);
  em.line(0, "variables:");
  for (const Variable& v : id.variables) {
    em.line(2, "- name: " + v.name);
    em.line(4, "kind: " + std::string(kind_name(v.kind)));
    if (kind_is_discrete(v.kind))
      em.line(4, "states: " + Emitter::flow_strings(v.states));
    else
      em.line(4, "domain: " + Emitter::flow_interval(v.domain));
    if (v.log_scale) em.line(4, "scale: log");
    if (v.constraint) {
      em.line(4, "constraint:");
      em.line(6, "predecessors: " + Emitter::flow_strings(v.constraint->predecessors));
      em.line(6, "rows:");
      for (const ConstraintDecl::Row& r : v.constraint->rows) {
        em.line(8, "- when: " + Emitter::flow_strings(r.when));
        em.line(10, "allow: " + Emitter::flow_strings(r.allow));
      }
    }
  }
  if (!id.potential_decls.empty()) {
    em.line(0, "potentials:");
    for (const PotentialDecl& d : id.potential_decls) {
      em.line(2, "- variable: " + d.variable);
      if (!d.given.empty()) em.line(4, "given: " + Emitter::flow_strings(d.given));
      bool value_rows = d.cases.front().body.payload == BodyDecl::Payload::Probs;
      em.emit_cases(4, d.cases, value_rows);
    }
  }
  if (!id.utility_decls.empty()) {
    em.line(0, "utilities:");
    for (const UtilityDecl& d : id.utility_decls) {
      em.line(2, "- name: " + d.name);
      em.line(4, "domain: " + Emitter::flow_strings(d.domain));
      bool value_rows = d.cases.front().body.payload == BodyDecl::Payload::Value;
      em.emit_cases(4, d.cases, value_rows);
    }
  }
  em.line(0, "information: " + Emitter::flow_strings(id.information));
  return em.os.str();
}

bool diagrams_equal(const InfluenceDiagram& a, const InfluenceDiagram& b) {
  InfluenceDiagram ca = canonical_copy(a), cb = canonical_copy(b);
  return ca.name == cb.name && ca.variables == cb.variables &&
         ca.potential_decls == cb.potential_decls && ca.utility_decls == cb.utility_decls &&
         ca.information == cb.information;
}

// --------------------------------------------------------------------------
// elimination planning
// --------------------------------------------------------------------------

std::vector<std::string> EliminationPlan::order_names() const {
  std::vector<std::string> out;
  for (const PlanStep& s : steps) out.push_back(s.name);
  return out;
}

EliminationPlan plan_elimination(const InfluenceDiagram& id,
                                 const std::vector<std::string>* requested) {
  std::map<VarId, int> ipos;
  {
    std::vector<VarId> info = id.information_ids();
    for (std::size_t i = 0; i < info.size(); ++i) ipos[info[i]] = static_cast<int>(i);
  }
  std::set<VarId> unobserved;
  for (const Variable& v : id.variables)
    if (kind_is_chance(v.kind) && !ipos.count(v.id)) unobserved.insert(v.id);

  std::vector<VarId> sequence;
  std::set<VarId> spliceable;
  if (requested) {
    std::set<VarId> listed;
    for (const std::string& n : *requested) {
      VarId v = id.id_of(n);
      if (v < 0) throw AlgebraError("unknown variable '" + n + "' in the elimination order");
      if (!listed.insert(v).second)
        throw AlgebraError("the elimination order lists '" + n + "' twice");
      sequence.push_back(v);
    }
    for (const auto& [v, _] : ipos)
      if (!listed.count(v))
        throw AlgebraError("the elimination order must include " +
                           std::string(kind_is_decision(id.var(v).kind) ? "decision '"
                                                                        : "observed variable '") +
                           id.var(v).name + "'");
    for (VarId v : unobserved)
      if (!listed.count(v)) spliceable.insert(v);
  } else {
    std::vector<VarId> info = id.information_ids();
    sequence.assign(info.rbegin(), info.rend());
    spliceable = unobserved;
  }

  // the fusion pool, tracked at the level of domains
  struct Item {
    std::string label;
    std::set<VarId> dom;
  };
  std::vector<Item> pool;
  for (const Variable& v : id.variables) {
    if (!kind_is_chance(v.kind)) continue;
    const PotentialDecl* d = id.decl_for(v.id);
    if (!d) continue;
    Item it;
    it.label = d->given.empty() ? "p(" + v.name + ")" : "p(" + v.name + "|" + join(d->given, ",") + ")";
    it.dom.insert(v.id);
    for (const std::string& g : d->given) it.dom.insert(id.id_of(g));
    pool.push_back(std::move(it));
  }
  for (const UtilityDecl& u : id.utility_decls) {
    Item it;
    it.label = u.name;
    for (const std::string& g : u.domain) it.dom.insert(id.id_of(g));
    pool.push_back(std::move(it));
  }

  // chance-arc children, for sink-first ordering of spliced variables
  std::map<VarId, std::vector<VarId>> chance_children;
  for (const Variable& v : id.variables) {
    if (!kind_is_chance(v.kind)) continue;
    for (VarId p : id.parents(v.id)) chance_children[p].push_back(v.id);
  }

  std::set<VarId> eliminated;
  EliminationPlan plan;

  auto fused_scope = [&](VarId x) {
    std::set<VarId> scope;
    for (const Item& it : pool)
      if (it.dom.count(x)) scope.insert(it.dom.begin(), it.dom.end());
    return scope;
  };

  auto emit = [&](VarId x) {
    PlanStep st;
    st.var = x;
    st.name = id.var(x).name;
    std::set<VarId> dom;
    std::vector<Item> rest;
    for (Item& it : pool) {
      if (it.dom.count(x)) {
        st.fused.push_back(it.label);
        dom.insert(it.dom.begin(), it.dom.end());
      } else {
        rest.push_back(std::move(it));
      }
    }
    dom.erase(x);
    auto ct = id.constraints.find(x);
    if (ct != id.constraints.end())
      for (const DiscreteAxis& ax : ct->second.predecessors) dom.insert(ax.var);
    pool = std::move(rest);
    pool.push_back(Item{"r" + std::to_string(plan.steps.size() + 1), std::move(dom)});
    plan.steps.push_back(std::move(st));
    eliminated.insert(x);
  };

  auto pair_check = [&](VarId s) {
    for (const auto& [t, tp] : ipos)
      if (tp > ipos.at(s) && !eliminated.count(t))
        throw AlgebraError("'" + id.var(t).name + "' must be marginalized before '" +
                           id.var(s).name + "': '" + id.var(s).name + "' precedes '" +
                           id.var(t).name + "' in the information sequence");
  };

  // Emits every spliceable variable the decision's fused scope transitively
  // pulls in, innermost ones first (chance-graph sinks, descending name).
  auto force_before_decision = [&](VarId d) {
    while (true) {
      std::set<VarId> relevant;
      {
        std::vector<VarId> work;
        for (VarId v : fused_scope(d))
          if (v != d && spliceable.count(v) && !eliminated.count(v)) {
            relevant.insert(v);
            work.push_back(v);
          }
        while (!work.empty()) {
          VarId z = work.back();
          work.pop_back();
          for (const Item& it : pool) {
            if (!it.dom.count(z)) continue;
            for (VarId w : it.dom)
              if (spliceable.count(w) && !eliminated.count(w) && relevant.insert(w).second)
                work.push_back(w);
          }
        }
      }
      if (relevant.empty()) return;
      std::vector<VarId> order(relevant.begin(), relevant.end());
      std::sort(order.begin(), order.end(), [&](VarId a, VarId b) {
        return id.var(a).name > id.var(b).name;
      });
      VarId pick = -1;
      for (VarId z : order) {
        bool sink = true;
        for (VarId c : chance_children[z])
          if (!eliminated.count(c) && relevant.count(c)) sink = false;
        if (sink) {
          pick = z;
          break;
        }
      }
      emit(pick);
    }
  };

  for (VarId s : sequence) {
    const Variable& v = id.var(s);
    if (kind_is_decision(v.kind)) {
      force_before_decision(s);
      pair_check(s);
      std::set<VarId> scope = fused_scope(s);
      scope.erase(s);
      auto ct = id.constraints.find(s);
      if (ct != id.constraints.end())
        for (const DiscreteAxis& ax : ct->second.predecessors) scope.insert(ax.var);
      std::vector<std::string> bad;
      for (VarId w : scope)
        if (!eliminated.count(w) && !ipos.count(w)) bad.push_back(id.var(w).name);
      std::sort(bad.begin(), bad.end());
      if (!bad.empty())
        throw AlgebraError("cannot maximize decision '" + v.name + "': unobserved variable" +
                           (bad.size() > 1 ? "s '" : " '") + join(bad, "', '") +
                           (bad.size() > 1 ? "' are" : "' is") +
                           " still in its fused scope and must be marginalized before it");
      emit(s);
    } else {
      if (ipos.count(s)) pair_check(s);
      emit(s);
    }
  }

  // barren leftovers: never relevant to any decision
  std::vector<VarId> leftover;
  for (VarId v : spliceable)
    if (!eliminated.count(v)) leftover.push_back(v);
  while (!leftover.empty()) {
    std::sort(leftover.begin(), leftover.end(),
              [&](VarId a, VarId b) { return id.var(a).name > id.var(b).name; });
    VarId pick = -1;
    for (VarId z : leftover) {
      bool sink = true;
      for (VarId c : chance_children[z])
        if (!eliminated.count(c)) sink = false;
      if (sink) {
        pick = z;
        break;
      }
    }
    emit(pick);
    leftover.erase(std::remove(leftover.begin(), leftover.end(), pick), leftover.end());
  }
  return plan;
}

// --------------------------------------------------------------------------
// ground truth for samplers
// --------------------------------------------------------------------------

TrueConditional true_conditional(const InfluenceDiagram& id, VarId X) {
  const PotentialDecl* d = id.decl_for(X);
  if (!d)
    throw AlgebraError("'" + id.var(X).name + "' has no conditional (decision variables are "
                       "chosen, not sampled)");
  const BodyDecl& b = d->cases.front().body;
  TrueConditional tc;
  switch (b.payload) {
    case BodyDecl::Payload::Density:
      tc.kind = TrueConditional::Kind::NormalDensity;
      tc.mean = b.density->mean;
      tc.variance = b.density->variance;
      return tc;
    case BodyDecl::Payload::Probs:
      tc.kind = TrueConditional::Kind::DiscreteTable;
      return tc;
    case BodyDecl::Payload::Mop:
      tc.kind = TrueConditional::Kind::MopDensity;
      return tc;
    case BodyDecl::Payload::Dirac:
      tc.kind = TrueConditional::Kind::Deterministic;
      return tc;
    default:
      throw AlgebraError("no sampling form for '" + id.var(X).name + "'");
  }
}

}  // namespace mopid
