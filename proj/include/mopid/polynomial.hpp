#ifndef MOPID_POLYNOMIAL_HPP
#define MOPID_POLYNOMIAL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mopid {

// Continuous variables are identified by small integer ids; the model layer
// owns the id <-> name mapping.
using VarId = std::int32_t;

class AlgebraError : public std::runtime_error {
 public:
  explicit AlgebraError(const std::string& what) : std::runtime_error(what) {}
};

// A monomial: sorted list of (variable, exponent) with exponents >= 1.
// The empty monomial is the constant term.
struct Monomial {
  std::vector<std::pair<VarId, int>> factors;

  bool operator<(const Monomial& o) const { return factors < o.factors; }
  bool operator==(const Monomial& o) const { return factors == o.factors; }
  int degree() const {
    int d = 0;
    for (const auto& [v, e] : factors) d += e;
    return d;
  }
  int exponent_of(VarId v) const {
    for (const auto& [w, e] : factors)
      if (w == v) return e;
    return 0;
  }
};

// Sparse multivariate polynomial with real coefficients.  Stored terms never
// have a coefficient of exactly 0.  Variables are whatever ids appear in the
// monomials; there is no fixed arity.
class Polynomial {
 public:
  Polynomial() = default;
  static Polynomial constant(double c);
  static Polynomial var(VarId v);

  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const;
  double constant_value() const;  // requires is_constant()

  int degree() const;
  int degree_in(VarId v) const;
  std::vector<VarId> variables() const;
  bool references(VarId v) const;
  std::size_t term_count() const { return terms_.size(); }

  void add_term(const Monomial& m, double c);
  double coefficient(const Monomial& m) const;
  const std::map<Monomial, double>& terms() const { return terms_; }

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial operator-() const;
  Polynomial scaled(double c) const;

  // Evaluate with the given variable values; every referenced variable must
  // be present.
  double eval(const std::vector<std::pair<VarId, double>>& point) const;

  // Replace v by the polynomial g (g must not reference v).
  Polynomial substitute(VarId v, const Polynomial& g) const;
  // Replace v by the constant c.
  Polynomial pin(VarId v, double c) const;
  // Replace v by (v + delta): the Taylor shift that moves between anchors.
  Polynomial shift(VarId v, double delta) const;
  // Replace v by -v (negates odd-power coefficients exactly).
  Polynomial reflected(VarId v) const;

  Polynomial derivative(VarId v) const;
  Polynomial antiderivative(VarId v) const;

  bool operator==(const Polynomial& o) const { return terms_ == o.terms_; }

  std::string to_string() const;  // for error messages and debugging

 private:
  Polynomial substitute_unchecked(VarId v, const Polynomial& g) const;

  std::map<Monomial, double> terms_;
};

// Exact multivariate division: returns q with p = q * d if one exists
// (up to a relative residual of 1e-9, which absorbs float noise), otherwise
// an empty optional.  Uses long division under a graded-lex term order.
std::optional<Polynomial> exact_divide(const Polynomial& p, const Polynomial& d);

}  // namespace mopid

#endif  // MOPID_POLYNOMIAL_HPP
