#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mopid/solver.hpp"

using namespace mopid;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fixture(const std::string& name) {
  return read_file(std::string(MOPID_SOURCE_DIR) + "/fixtures/" + name);
}

InfluenceDiagram parse_ok(const std::string& text) {
  ParseResult r = parse_diagram(text);
  for (const Diagnostic& d : r.errors) MESSAGE(d.render());
  REQUIRE(r.ok());
  return *r.diagram;
}

const InfluenceDiagram& coin_diagram() {
  static InfluenceDiagram id = parse_ok(fixture("minimal.yaml"));
  return id;
}

const InfluenceDiagram& venture_diagram() {
  static InfluenceDiagram id = parse_ok(fixture("entrepreneur.yaml"));
  return id;
}

const InfluenceDiagram& put_diagram() {
  static InfluenceDiagram id = parse_ok(fixture("put_option.yaml"));
  return id;
}

SolveOptions with_plots() {
  SolveOptions o;
  o.capture_plots = true;
  return o;
}

const SolveResult& venture_solved() {
  static SolveResult r = solve(venture_diagram(), with_plots());
  return r;
}

const SolveResult& put_solved() {
  static SolveResult r = solve(put_diagram(), with_plots());
  return r;
}

int state_of(const InfluenceDiagram& id, const std::string& var, const std::string& label) {
  const Variable* v = id.find(var);
  REQUIRE(v != nullptr);
  int s = v->state_index(label);
  REQUIRE(s >= 0);
  return s;
}

// the single pair a one-variable case configuration holds
int config_state(const PolicyCase& pc, VarId var) {
  for (const auto& [v, s] : pc.config)
    if (v == var) return s;
  FAIL("configuration misses the expected variable");
  return -1;
}

}  // namespace

TEST_CASE("coin bet: observed coin, then bet or pass") {
  const InfluenceDiagram& id = coin_diagram();
  SolveResult res = solve(id);

  // heads: bet pays 10 beats pass 1; tails: pass 1 beats bet -8
  CHECK(res.root_value == doctest::Approx(0.6 * 10 + 0.4 * 1).epsilon(1e-12));

  REQUIRE(res.rules.size() == 1);
  const DecisionRule& rule = res.rules[0];
  CHECK(rule.name == "D");
  CHECK_FALSE(rule.continuous);
  REQUIRE(rule.cases.size() == 2);
  const VarId xid = id.id_of("X");
  const int heads = state_of(id, "X", "heads");
  const int bet = state_of(id, "D", "bet");
  const int pass = state_of(id, "D", "pass");
  for (const PolicyCase& pc : rule.cases) {
    CHECK_FALSE(pc.piecewise);
    CHECK(pc.state == (config_state(pc, xid) == heads ? bet : pass));
  }

  SUBCASE("division mode agrees") {
    SolveOptions o;
    o.allow_shortcut = false;
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-12));
  }

  SUBCASE("explicit order matches the default") {
    SolveOptions o;
    o.order = std::vector<std::string>{"D", "X"};
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-12));
  }

  SUBCASE("fixed strategies evaluate to their expected payoff") {
    CHECK(evaluate_strategy(id, res.rules) == doctest::Approx(res.root_value).epsilon(1e-12));

    auto fixed = [&](int state) {
      DecisionRule r;
      r.name = "D";
      PolicyCase heads_case;
      heads_case.config = {{xid, 0}};
      heads_case.state = state;
      PolicyCase tails_case;
      tails_case.config = {{xid, 1}};
      tails_case.state = state;
      r.cases = {heads_case, tails_case};
      return std::vector<DecisionRule>{r};
    };
    CHECK(evaluate_strategy(id, fixed(bet)) == doctest::Approx(2.8).epsilon(1e-12));
    CHECK(evaluate_strategy(id, fixed(pass)) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("strategy validation") {
    CHECK_THROWS_AS(evaluate_strategy(id, {}), AlgebraError);
    std::vector<DecisionRule> twice = {res.rules[0], res.rules[0]};
    CHECK_THROWS_AS(evaluate_strategy(id, twice), AlgebraError);
  }
}

TEST_CASE("coin bet: utilities add across separate tables") {
  // the same payoff split over two utilities must fold to the same answer
  std::string text = R"(format: 1
name: coin-bet-split
variables:
  - name: D
    kind: decision-discrete
    states: [bet, pass]
  - name: X
    kind: chance-discrete
    states: [heads, tails]
potentials:
  - variable: X
    probs: [0.6, 0.4]
utilities:
  - name: stake
    domain: [D, X]
    table:
      - when: [bet, heads]
        value: 10
      - when: [bet, tails]
        value: -8
      - when: [pass, heads]
        value: 0
      - when: [pass, tails]
        value: 0
  - name: refund
    domain: [D, X]
    table:
      - when: [bet, heads]
        value: 0
      - when: [bet, tails]
        value: 0
      - when: [pass, heads]
        value: 1
      - when: [pass, tails]
        value: 1
information: [X, D]
)";
  InfluenceDiagram id = parse_ok(text);
  CHECK(solve(id).root_value == doctest::Approx(6.4).epsilon(1e-12));
}

TEST_CASE("venture pricing: optimum price and value") {
  const InfluenceDiagram& id = venture_diagram();
  const SolveResult& res = venture_solved();

  CHECK(res.root_value == doctest::Approx(194.8649).epsilon(5e-5));

  REQUIRE(res.rules.size() == 1);
  const DecisionRule& rule = res.rules[0];
  CHECK(rule.name == "P");
  CHECK(rule.continuous);
  REQUIRE(rule.cases.size() == 1);
  CHECK(rule.cases[0].continuous);
  CHECK(rule.cases[0].value == doctest::Approx(24.404).epsilon(5e-4));

  SUBCASE("step diagnostics follow the plan") {
    REQUIRE(res.steps.size() == 7);
    CHECK(res.steps[0].var == "Ca");
    CHECK(res.steps[0].fused == std::vector<std::string>{"p(Ca|Cn,Z2)", "pi"});
    CHECK(res.steps.back().var == "P");
    CHECK(res.steps.back().fused == std::vector<std::string>{"r6"});
    for (const StepDiag& st : res.steps) CHECK(st.discrete_configs >= 3);
  }

  SUBCASE("price curve captured before maximization") {
    REQUIRE(res.plots.size() == 1);
    const PlotData& pd = res.plots[0];
    CHECK(pd.decision == "P");
    CHECK(pd.x_var == "P");
    CHECK_FALSE(pd.x_log);
    CHECK(pd.range.lo == doctest::Approx(1.0));
    CHECK(pd.range.hi == doctest::Approx(47.0));
    CHECK(pd.labels.empty());
    REQUIRE(pd.curves.size() == 1);
    const VarId pid = id.id_of("P");
    const double at_opt = pd.curves[0].eval({{pid, res.rules[0].cases[0].value}});
    CHECK(at_opt == doctest::Approx(res.root_value).epsilon(1e-9));
    CHECK(pd.curves[0].eval({{pid, 20.0}}) < res.root_value);
    CHECK(pd.curves[0].eval({{pid, 30.0}}) < res.root_value);
  }

  SUBCASE("division mode agrees") {
    SolveOptions o;
    o.allow_shortcut = false;
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("alternate elimination order agrees") {
    SolveOptions o;
    o.order = std::vector<std::string>{"Ca", "Z2", "Cn", "Z1", "Qa", "Qn", "P"};
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("partial order: unlisted chance variables splice in automatically") {
    SolveOptions o;
    o.order = std::vector<std::string>{"P"};
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("explicitly premature maximization is rejected") {
    SolveOptions o;
    o.order = std::vector<std::string>{"P", "Qn", "Qa", "Cn", "Ca", "Z1", "Z2"};
    CHECK_THROWS_AS(solve(id, o), AlgebraError);
  }

  SUBCASE("optimal strategy reproduces the root value; perturbations lose") {
    CHECK(evaluate_strategy(id, res.rules) == doctest::Approx(res.root_value).epsilon(1e-9));

    auto price_rule = [&](double price) {
      DecisionRule r = res.rules[0];
      r.cases[0].value = price;
      return std::vector<DecisionRule>{r};
    };
    for (double price : {22.0, 23.9, 24.9, 27.0, 40.0}) {
      const double v = evaluate_strategy(id, price_rule(price));
      CHECK(v < res.root_value);
    }
    // name-only rules resolve against the diagram
    DecisionRule named;
    named.name = "P";
    named.continuous = true;
    PolicyCase pc;
    pc.continuous = true;
    pc.value = res.rules[0].cases[0].value;
    named.cases = {pc};
    CHECK(evaluate_strategy(id, {named}) == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("strategy evaluation works in division mode too") {
    CHECK(evaluate_strategy(id, res.rules, false) == doctest::Approx(res.root_value).epsilon(1e-9));
  }
}

TEST_CASE("staged put: thresholds and option value") {
  const InfluenceDiagram& id = put_diagram();
  const SolveResult& res = put_solved();

  CHECK(res.root_value == doctest::Approx(1.2016).epsilon(2e-3));

  REQUIRE(res.rules.size() == 3);
  CHECK(res.rules[0].name == "D3");
  CHECK(res.rules[1].name == "D2");
  CHECK(res.rules[2].name == "D1");

  const int exercise1 = state_of(id, "D1", "exercise");
  const int hold1 = state_of(id, "D1", "hold");
  const int ex2 = state_of(id, "D2", "exercise");
  const int hold2 = state_of(id, "D2", "hold");
  const int nochoice2 = state_of(id, "D2", "no-choice");
  const int ex3 = state_of(id, "D3", "exercise");
  const int nochoice3 = state_of(id, "D3", "no-choice");

  SUBCASE("final stage: exercise whenever the option is alive") {
    const DecisionRule& d3 = *res.rule_for("D3");
    const VarId d2id = id.id_of("D2");
    REQUIRE(d3.cases.size() == 3);
    for (const PolicyCase& pc : d3.cases) {
      const int ctx = config_state(pc, d2id);
      if (ctx == hold2) {
        // alive: the exercise payoff is positive below the strike knee and
        // ties the zero continuation above it, so exercise wins everywhere
        if (pc.piecewise) {
          for (int s : pc.states) CHECK(s == ex3);
        } else {
          CHECK(pc.state == ex3);
        }
      } else {
        REQUIRE_FALSE(pc.piecewise);
        CHECK(pc.state == nochoice3);
      }
    }
  }

  SUBCASE("middle stage: threshold rule after holding") {
    const DecisionRule& d2 = *res.rule_for("D2");
    const VarId d1id = id.id_of("D1");
    REQUIRE(d2.cases.size() == 2);
    bool saw_hold_branch = false;
    for (const PolicyCase& pc : d2.cases) {
      if (config_state(pc, d1id) == exercise1) {
        REQUIRE_FALSE(pc.piecewise);
        CHECK(pc.state == nochoice2);
        continue;
      }
      saw_hold_branch = true;
      REQUIRE(pc.piecewise);
      REQUIRE(pc.breaks.size() == 1);
      REQUIRE(pc.states.size() == 2);
      CHECK(pc.states[0] == ex2);
      CHECK(pc.states[1] == hold2);
      CHECK(std::exp(pc.breaks[0]) == doctest::Approx(30.219).epsilon(1e-3));
    }
    CHECK(saw_hold_branch);
  }

  SUBCASE("first stage: threshold rule") {
    const DecisionRule& d1 = *res.rule_for("D1");
    REQUIRE(d1.cases.size() == 1);
    const PolicyCase& pc = d1.cases[0];
    REQUIRE(pc.piecewise);
    REQUIRE(pc.breaks.size() == 1);
    REQUIRE(pc.states.size() == 2);
    CHECK(pc.states[0] == exercise1);
    CHECK(pc.states[1] == hold1);
    CHECK(std::exp(pc.breaks[0]) == doctest::Approx(28.523).epsilon(1e-3));
  }

  SUBCASE("alternative curves captured at each stage") {
    REQUIRE(res.plots.size() == 3);
    CHECK(res.plots[0].decision == "D3");
    CHECK(res.plots[1].decision == "D2");
    CHECK(res.plots[2].decision == "D1");
    CHECK(res.plots[0].x_var == "S3");
    CHECK(res.plots[1].x_var == "S2");
    CHECK(res.plots[2].x_var == "S1");
    for (const PlotData& pd : res.plots) {
      CHECK(pd.x_log);
      REQUIRE(pd.curves.size() == 2);
      REQUIRE(pd.labels.size() == 2);
      CHECK(pd.labels[0] == "exercise");
      CHECK(pd.labels[1] == "hold");
    }
    // the middle-stage curves cross at the threshold
    const PlotData& pd = res.plots[1];
    const VarId s2 = id.id_of("S2");
    const double lo = std::log(29.0), hi = std::log(32.0);
    CHECK(pd.curves[0].eval({{s2, lo}}) > pd.curves[1].eval({{s2, lo}}));
    CHECK(pd.curves[0].eval({{s2, hi}}) < pd.curves[1].eval({{s2, hi}}));
  }

  SUBCASE("division mode agrees") {
    SolveOptions o;
    o.allow_shortcut = false;
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("explicit order with early noise removal agrees") {
    SolveOptions o;
    o.order = std::vector<std::string>{"D3", "S3", "W3", "D2", "W2", "S2", "D1", "S1"};
    CHECK(solve(id, o).root_value == doctest::Approx(res.root_value).epsilon(1e-9));
  }

  SUBCASE("optimal strategy reproduces the root value; worse policies lose") {
    CHECK(evaluate_strategy(id, res.rules) == doctest::Approx(res.root_value).epsilon(1e-9));

    // shifting the first-stage threshold loses a little
    std::vector<DecisionRule> shifted = res.rules;
    for (DecisionRule& r : shifted)
      if (r.name == "D1")
        for (PolicyCase& pc : r.cases) pc.breaks[0] += 0.05;
    const double v_shift = evaluate_strategy(id, shifted);
    CHECK(v_shift < res.root_value);
    CHECK(v_shift > res.root_value - 0.05);

    // never exercising at the last stage forfeits real value
    std::vector<DecisionRule> lazy = res.rules;
    for (DecisionRule& r : lazy)
      if (r.name == "D3")
        for (PolicyCase& pc : r.cases) {
          if (pc.piecewise) {
            pc.piecewise = false;
            pc.breaks.clear();
            pc.states.clear();
            pc.state = state_of(id, "D3", "hold");
          } else if (pc.state == ex3) {
            pc.state = state_of(id, "D3", "hold");
          }
        }
    const double v_lazy = evaluate_strategy(id, lazy);
    CHECK(v_lazy < res.root_value - 1e-4);
  }
}
