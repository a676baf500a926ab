#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mopid/model.hpp"

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

std::string first_error(const std::string& text) {
  ParseResult r = parse_diagram(text);
  REQUIRE_FALSE(r.ok());
  REQUIRE_FALSE(r.errors.empty());
  return r.errors.front().message;
}

template <typename Fn>
std::string throw_message(Fn&& fn) {
  try {
    fn();
  } catch (const AlgebraError& e) {
    return e.what();
  }
  FAIL("expected an AlgebraError");
  return "";
}

}  // namespace

TEST_CASE("minimal diagram parses and builds potentials") {
  InfluenceDiagram id = parse_ok(fixture("minimal.yaml"));
  REQUIRE(id.variables.size() == 2);
  const Variable* D = id.find("D");
  const Variable* X = id.find("X");
  REQUIRE(D != nullptr);
  REQUIRE(X != nullptr);
  CHECK(D->kind == VarKind::DecisionDiscrete);
  CHECK(X->kind == VarKind::ChanceDiscrete);
  CHECK(D->states == std::vector<std::string>{"bet", "pass"});
  CHECK(X->state_index("tails") == 1);

  const Potential* px = id.potential_for(X->id);
  REQUIRE(px != nullptr);
  CHECK(px->kind() == PotKind::Discrete);
  CHECK(px->eval({{X->id, 0}}, {}) == doctest::Approx(0.6));
  CHECK(px->eval({{X->id, 1}}, {}) == doctest::Approx(0.4));

  REQUIRE(id.utility_potentials.size() == 1);
  const Potential& u = id.utility_potentials[0];
  CHECK(u.kind() == PotKind::Utility);
  CHECK(u.eval({{D->id, 0}, {X->id, 1}}, {}) == doctest::Approx(-8.0));
  CHECK(u.eval({{D->id, 1}, {X->id, 0}}, {}) == doctest::Approx(1.0));

  CHECK(id.information == std::vector<std::string>{"X", "D"});
  CHECK(true_conditional(id, X->id).kind == TrueConditional::Kind::DiscreteTable);
}

TEST_CASE("polynomial expression grammar") {
  const char* tmpl = R"(format: 1
variables:
  - name: X
    kind: chance-continuous
    domain: [0, 1]
  - name: D
    kind: decision-discrete
    states: [a, b]
potentials:
  - variable: X
    mop:
      expr: 6*X - 6*X^2
      on: {X: [0, 1]}
utilities:
  - name: u
    domain: [D, X]
    cases:
      - when: [a]
        mop:
          expr: %EXPR%
          on: {X: [0, 1]}
      - when: [b]
        mop: {zero: true}
information: [X, D]
)";
  auto with_expr = [&](const std::string& e) {
    std::string t = tmpl;
    t.replace(t.find("%EXPR%"), 6, e);
    return t;
  };

  SUBCASE("precedence and grouping") {
    InfluenceDiagram id = parse_ok(with_expr("2*X^2 - 3*X + 1 - X*(X - 1)"));
    VarId x = id.id_of("X");
    VarId d = id.id_of("D");
    // 2(.25) - 1.5 + 1 + .25 = 0.25
    CHECK(id.utility_potentials[0].eval({{d, 0}}, {{x, 0.5}}) == doctest::Approx(0.25));
    CHECK(id.utility_potentials[0].eval({{d, 1}}, {{x, 0.5}}) == doctest::Approx(0.0));
  }
  SUBCASE("unary minus and powers of groups") {
    InfluenceDiagram id = parse_ok(with_expr("-(X - 1)^2 + 1"));
    VarId x = id.id_of("X");
    VarId d = id.id_of("D");
    CHECK(id.utility_potentials[0].eval({{d, 0}}, {{x, 0.25}}) == doctest::Approx(1.0 - 0.5625));
  }
  SUBCASE("division is rejected") {
    CHECK(first_error(with_expr("X/2")).find("'/'") != std::string::npos);
  }
  SUBCASE("unknown variables are named") {
    CHECK(first_error(with_expr("X + Yy")).find("Yy") != std::string::npos);
  }
  SUBCASE("discrete variables may not appear in polynomials") {
    CHECK(first_error(with_expr("X + D")).find("discrete") != std::string::npos);
  }
}

TEST_CASE("entrepreneur fixture builds") {
  InfluenceDiagram id = parse_ok(fixture("entrepreneur.yaml"));
  REQUIRE(id.variables.size() == 7);
  CHECK(id.find("P")->kind == VarKind::DecisionContinuous);
  CHECK(id.find("Qn")->kind == VarKind::ChanceDeterministic);
  CHECK(id.find("Z1")->kind == VarKind::ChanceContinuous);
  CHECK(id.information == std::vector<std::string>{"P"});
  REQUIRE(id.potential_decls.size() == 6);
  REQUIRE(id.utility_decls.size() == 1);

  // the standard-normal marginal is a genuine density over Z1
  const Potential* pz = id.potential_for(id.id_of("Z1"));
  REQUIRE(pz != nullptr);
  CHECK(pz->eval({}, {{id.id_of("Z1"), 0.0}}) == doctest::Approx(0.3989).epsilon(0.01));

  // the demand relation carries one unit point mass tied to Qn
  const Potential* pq = id.potential_for(id.id_of("Qn"));
  REQUIRE(pq != nullptr);
  const Entry& e = pq->entry(0);
  REQUIRE(e.size() == 1);
  REQUIRE(e[0].diracs.size() == 1);
  CHECK(e[0].diracs[0].target == id.id_of("Qn"));
  CHECK(e[0].diracs[0].weight == 1.0);
  // g(14) = 80 ln(50/14)
  CHECK(e[0].diracs[0].g.eval({{id.id_of("P"), 14.0}}) ==
        doctest::Approx(80.0 * std::log(50.0 / 14.0)).epsilon(1e-6));

  CHECK(true_conditional(id, id.id_of("Z1")).kind == TrueConditional::Kind::NormalDensity);
  CHECK(true_conditional(id, id.id_of("Z1")).mean == 0.0);
  CHECK(true_conditional(id, id.id_of("Qa")).kind == TrueConditional::Kind::Deterministic);
}

TEST_CASE("put option fixture builds") {
  InfluenceDiagram id = parse_ok(fixture("put_option.yaml"));
  REQUIRE(id.variables.size() == 8);
  CHECK(id.find("S1")->log_scale);  // implied by the lognormal family
  CHECK(id.find("S2")->log_scale);  // declared
  CHECK_FALSE(id.find("W2")->log_scale);

  // stepwise feasibility tables
  const Variable* D2 = id.find("D2");
  const Variable* D3 = id.find("D3");
  REQUIRE(id.constraints.count(D2->id) == 1);
  REQUIRE(id.constraints.count(D3->id) == 1);
  const DecisionConstraint& c2 = id.constraints.at(D2->id);
  REQUIRE(c2.predecessors.size() == 1);
  CHECK(c2.predecessors[0].var == id.id_of("D1"));
  REQUIRE(c2.allowed.size() == 2);
  CHECK(c2.allowed[0] == std::vector<int>{2});     // after exercising: no-choice only
  CHECK(c2.allowed[1] == std::vector<int>{0, 1});  // after holding: exercise or hold
  const DecisionConstraint& c3 = id.constraints.at(D3->id);
  REQUIRE(c3.allowed.size() == 3);
  CHECK(c3.allowed[0] == std::vector<int>{2});
  CHECK(c3.allowed[1] == std::vector<int>{0, 1});
  CHECK(c3.allowed[2] == std::vector<int>{2});

  const TrueConditional tc = true_conditional(id, id.id_of("S1"));
  CHECK(tc.kind == TrueConditional::Kind::NormalDensity);
  CHECK(tc.mean == doctest::Approx(std::log(40.0) + 0.00074));
  CHECK(tc.variance == doctest::Approx(0.13229 * 0.13229));
}

TEST_CASE("fixtures round-trip through the canonical form") {
  for (const char* name : {"minimal.yaml", "entrepreneur.yaml", "put_option.yaml"}) {
    CAPTURE(name);
    InfluenceDiagram a = parse_ok(fixture(name));
    std::string text = serialize_diagram(a);
    ParseResult rb = parse_diagram(text);
    for (const Diagnostic& d : rb.errors) MESSAGE(d.render());
    REQUIRE(rb.ok());
    CHECK(diagrams_equal(a, *rb.diagram));
    CHECK(serialize_diagram(*rb.diagram) == text);  // emission is a fixed point
  }
}

TEST_CASE("canonical form sorts variables and parents") {
  const char* shuffled = R"(format: 1
variables:
  - name: Zed
    kind: chance-continuous
    domain: [-3, 3]
  - name: Alpha
    kind: decision-discrete
    states: [a, b]
potentials:
  - variable: Zed
    density: {family: standard-normal, halfwidth: 3}
utilities:
  - name: u
    domain: [Zed, Alpha]
    cases:
      - when: [a]
        mop:
          expr: Zed
      - when: [b]
        mop: {zero: true}
information: [Zed, Alpha]
)";
  InfluenceDiagram id = parse_ok(shuffled);
  std::string text = serialize_diagram(id);
  CHECK(text.find("- name: Alpha") < text.find("- name: Zed"));
  CHECK(diagrams_equal(id, *parse_diagram(text).diagram));
}

TEST_CASE("invalid fixtures are rejected with diagnostics") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(MOPID_SOURCE_DIR) / "fixtures" / "invalid";
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".yaml") continue;
    ++count;
    CAPTURE(entry.path().filename().string());
    ParseResult r = parse_diagram(read_file(entry.path().string()));
    CHECK_FALSE(r.ok());
    CHECK_FALSE(r.errors.empty());
  }
  CHECK(count >= 20);
}

TEST_CASE("specific diagnostics") {
  SUBCASE("cycles name the path") {
    std::string msg = first_error(fixture("invalid/cycle.yaml"));
    CHECK(msg.find("cycle") != std::string::npos);
    CHECK(msg.find("X") != std::string::npos);
    CHECK(msg.find("Y") != std::string::npos);
  }
  SUBCASE("probability rows must sum to one") {
    CHECK(first_error(fixture("invalid/probs_bad_sum.yaml")).find("sum") != std::string::npos);
  }
  SUBCASE("truncation width is mandatory") {
    CHECK(first_error(fixture("invalid/missing_halfwidth.yaml")).find("halfwidth") !=
          std::string::npos);
  }
  SUBCASE("missing case rows name the configuration") {
    CHECK(first_error(fixture("invalid/case_rows_incomplete.yaml")).find("D=b") !=
          std::string::npos);
  }
  SUBCASE("diagnostics carry source positions") {
    ParseResult r = parse_diagram(fixture("invalid/probs_bad_sum.yaml"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.errors.front().line > 0);
    CHECK(r.errors.front().render().find("line") == 0);
  }
}

TEST_CASE("default elimination order: entrepreneur") {
  InfluenceDiagram id = parse_ok(fixture("entrepreneur.yaml"));
  EliminationPlan plan = plan_elimination(id);
  CHECK(plan.order_names() ==
        std::vector<std::string>{"Ca", "Z2", "Cn", "Qa", "Z1", "Qn", "P"});
  // the first step fuses the payoff with the observed-cost relation
  REQUIRE_FALSE(plan.steps.empty());
  CHECK(plan.steps[0].fused == std::vector<std::string>{"p(Ca|Cn,Z2)", "pi"});
}

TEST_CASE("default elimination order: put option") {
  InfluenceDiagram id = parse_ok(fixture("put_option.yaml"));
  EliminationPlan plan = plan_elimination(id);
  CHECK(plan.order_names() ==
        std::vector<std::string>{"D3", "S3", "W3", "D2", "S2", "W2", "D1", "S1"});
}

TEST_CASE("requested orders") {
  InfluenceDiagram ent = parse_ok(fixture("entrepreneur.yaml"));
  InfluenceDiagram put = parse_ok(fixture("put_option.yaml"));

  SUBCASE("listing only the backbone reproduces the default") {
    std::vector<std::string> req{"P"};
    CHECK(plan_elimination(ent, &req).order_names() ==
          plan_elimination(ent).order_names());
  }
  SUBCASE("unobserved variables may be pinned explicitly") {
    std::vector<std::string> req{"Qa", "P"};
    EliminationPlan plan = plan_elimination(ent, &req);
    CHECK(plan.order_names().front() == "Qa");
    CHECK(plan.order_names().back() == "P");
    CHECK(plan.steps.size() == 7);
  }
  SUBCASE("a decision cannot precede unobserved variables in its scope") {
    std::vector<std::string> req{"P", "Qa", "Cn", "Ca", "Qn", "Z1", "Z2"};
    std::string msg = throw_message([&] { plan_elimination(ent, &req); });
    CHECK(msg.find("cannot maximize decision 'P'") != std::string::npos);
  }
  SUBCASE("the six-variable put order splices the noise terms") {
    std::vector<std::string> req{"D3", "S3", "D2", "S2", "D1", "S1"};
    CHECK(plan_elimination(put, &req).order_names() ==
          std::vector<std::string>{"D3", "S3", "W3", "D2", "S2", "W2", "D1", "S1"});
  }
  SUBCASE("information pairs must be respected") {
    std::vector<std::string> req{"D3", "D2", "S3", "S2", "D1", "S1"};
    std::string msg = throw_message([&] { plan_elimination(put, &req); });
    CHECK(msg.find("'S3' must be marginalized before 'D2'") != std::string::npos);
  }
  SUBCASE("pinning noise after the decisions that need them fails") {
    std::vector<std::string> req{"D3", "S3", "D2", "S2", "D1", "S1", "W2", "W3"};
    std::string msg = throw_message([&] { plan_elimination(put, &req); });
    CHECK(msg.find("cannot maximize decision 'D2'") != std::string::npos);
    CHECK(msg.find("W3") != std::string::npos);
  }
  SUBCASE("unknown names are rejected") {
    std::vector<std::string> req{"Nope", "P"};
    std::string msg = throw_message([&] { plan_elimination(ent, &req); });
    CHECK(msg.find("Nope") != std::string::npos);
  }
  SUBCASE("every decision and observed variable must be listed") {
    std::vector<std::string> req{"S1", "D1", "S2", "D2", "S3"};
    std::string msg = throw_message([&] { plan_elimination(put, &req); });
    CHECK(msg.find("D3") != std::string::npos);
  }
  SUBCASE("duplicates are rejected") {
    std::vector<std::string> req{"P", "P"};
    std::string msg = throw_message([&] { plan_elimination(ent, &req); });
    CHECK(msg.find("twice") != std::string::npos);
  }
}
