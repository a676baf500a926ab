// Command-line front end: `check` parses and validates a diagram, `solve`
// computes the optimal strategy and writes a JSON report plus optional plot
// CSVs, `validate` Monte-Carlo-checks a report's strategy against the
// declared model.  Reports and CSVs are byte-deterministic for fixed inputs
// and flags; timing and other diagnostics go to the error stream.

#include "mopid/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "mopid/oracle.hpp"
#include "mopid/solver.hpp"

namespace mopid {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) return std::nullopt;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// 0 on success; 1/2 with messages on err otherwise
int load_diagram(const std::string& path, std::ostream& err,
                 std::optional<InfluenceDiagram>& out) {
  auto text = slurp(path);
  if (!text) {
    err << "cannot read '" << path << "'\n";
    return 2;
  }
  ParseResult r = parse_diagram(*text);
  if (!r.ok()) {
    for (const Diagnostic& d : r.errors) err << d.render() << "\n";
    return 1;
  }
  out = std::move(*r.diagram);
  return 0;
}

std::string state_label(const InfluenceDiagram& id, VarId var, int s) {
  const Variable& v = id.var(var);
  if (s >= 0 && s < static_cast<int>(v.states.size())) return v.states[static_cast<std::size_t>(s)];
  return std::to_string(s);
}

ordered_json render_case(const InfluenceDiagram& id, const DecisionRule& r, const PolicyCase& pc) {
  ordered_json c;
  ordered_json when = ordered_json::object();
  for (const auto& [cv, cs] : pc.config) when[id.var(cv).name] = state_label(id, cv, cs);
  c["when"] = when;
  if (r.continuous || pc.continuous) {
    c["value"] = pc.value;
    if (id.var(r.var).log_scale) c["valueExp"] = std::exp(pc.value);
  } else if (pc.piecewise) {
    const Variable& ov = id.var(pc.observed);
    c["observed"] = ov.name;
    c["breaks"] = pc.breaks;
    if (ov.log_scale) {
      ordered_json be = ordered_json::array();
      for (double b : pc.breaks) be.push_back(std::exp(b));
      c["breaksExp"] = be;
    }
    ordered_json st = ordered_json::array();
    for (int s : pc.states) st.push_back(state_label(id, r.var, s));
    c["states"] = st;
  } else {
    c["state"] = state_label(id, r.var, pc.state);
  }
  return c;
}

ordered_json render_report(const InfluenceDiagram& id, const SolveResult& res) {
  ordered_json rep;
  rep["diagram"] = id.name;
  rep["rootValue"] = res.root_value;
  ordered_json rules = ordered_json::array();
  for (const DecisionRule& r : res.rules) {
    ordered_json jr;
    jr["decision"] = r.name;
    jr["kind"] = r.continuous ? "continuous" : "discrete";
    ordered_json cases = ordered_json::array();
    for (const PolicyCase& pc : r.cases) cases.push_back(render_case(id, r, pc));
    jr["cases"] = cases;
    rules.push_back(jr);
  }
  rep["rules"] = rules;
  ordered_json steps = ordered_json::array();
  for (const StepDiag& st : res.steps) {
    ordered_json js;
    js["variable"] = st.var;
    js["fused"] = st.fused;
    js["cells"] = st.discrete_configs;
    js["probabilityPieces"] = st.continuous_pieces;
    js["utilityPieces"] = st.utility_pieces;
    steps.push_back(js);
  }
  rep["steps"] = steps;
  return rep;
}

std::vector<DecisionRule> rules_from_report(const InfluenceDiagram& id, const ordered_json& rep) {
  if (!rep.contains("rules") || !rep["rules"].is_array())
    throw AlgebraError("the strategy report has no 'rules' array");
  std::vector<DecisionRule> rules;
  for (const auto& jr : rep["rules"]) {
    DecisionRule r;
    r.name = jr.at("decision").get<std::string>();
    const VarId vid = id.id_of(r.name);
    if (vid < 0) throw AlgebraError("the report names an unknown decision '" + r.name + "'");
    r.var = vid;
    r.continuous = jr.value("kind", std::string("discrete")) == "continuous";
    if (!jr.contains("cases") || !jr.at("cases").is_array() || jr.at("cases").empty())
      throw AlgebraError("the rule for '" + r.name + "' has no cases");
    for (const auto& jc : jr.at("cases")) {
      PolicyCase pc;
      if (jc.contains("when"))
        for (const auto& [k, v] : jc.at("when").items()) {
          const VarId cv = id.id_of(k);
          if (cv < 0) throw AlgebraError("the report conditions on an unknown variable '" + k + "'");
          const int cs = id.var(cv).state_index(v.get<std::string>());
          if (cs < 0)
            throw AlgebraError("'" + v.get<std::string>() + "' is not a state of '" + k + "'");
          pc.config.emplace_back(cv, cs);
        }
      if (jc.contains("value")) {
        pc.continuous = true;
        pc.value = jc.at("value").get<double>();
      } else if (jc.contains("observed")) {
        pc.piecewise = true;
        const std::string ov = jc.at("observed").get<std::string>();
        pc.observed = id.id_of(ov);
        if (pc.observed < 0)
          throw AlgebraError("the report observes an unknown variable '" + ov + "'");
        pc.breaks = jc.at("breaks").get<std::vector<double>>();
        for (const auto& js : jc.at("states")) {
          const int s = id.var(vid).state_index(js.get<std::string>());
          if (s < 0)
            throw AlgebraError("'" + js.get<std::string>() + "' is not a state of '" + r.name + "'");
          pc.states.push_back(s);
        }
        if (pc.states.size() != pc.breaks.size() + 1)
          throw AlgebraError("the rule for '" + r.name + "' needs one more state than breaks");
      } else if (jc.contains("state")) {
        const int s = id.var(vid).state_index(jc.at("state").get<std::string>());
        if (s < 0)
          throw AlgebraError("'" + jc.at("state").get<std::string>() + "' is not a state of '" +
                             r.name + "'");
        pc.state = s;
      } else {
        throw AlgebraError("a case of the rule for '" + r.name + "' declares no action");
      }
      r.cases.push_back(std::move(pc));
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

const PlotData* find_plot(const SolveResult& res, const std::string& name) {
  for (const PlotData& p : res.plots)
    if (p.x_var == name) return &p;
  for (const PlotData& p : res.plots)
    if (p.decision == name) return &p;
  return nullptr;
}

void write_csv(std::ostream& os, const PlotData& p) {
  os << "x";
  if (p.labels.empty()) {
    os << ",value";
  } else {
    for (const std::string& l : p.labels) os << "," << l;
  }
  os << "\n";
  for (int k = 0; k < 1000; ++k) {
    const double x = p.range.lo + (p.range.hi - p.range.lo) * static_cast<double>(k) / 1000.0;
    os << fmt17(p.x_log ? std::exp(x) : x);
    for (const MOP& curve : p.curves) os << "," << fmt17(curve.eval({{p.x_id, x}}));
    os << "\n";
  }
}

int cmd_check(const std::string& path, std::ostream& out, std::ostream& err) {
  std::optional<InfluenceDiagram> id;
  if (const int rc = load_diagram(path, err, id)) return rc;
  try {
    const EliminationPlan plan = plan_elimination(*id, nullptr);
    out << "ok: " << id->name << " (" << id->variables.size() << " variables, "
        << plan.steps.size() << " elimination steps)\n";
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cmd_solve(const std::string& path, const std::string& order_csv, bool no_shortcut,
              const std::string& report_path, const std::vector<std::string>& plot_args,
              std::ostream& out, std::ostream& err) {
  std::optional<InfluenceDiagram> id;
  if (const int rc = load_diagram(path, err, id)) return rc;

  SolveOptions opts;
  if (!order_csv.empty()) opts.order = split_csv(order_csv);
  opts.allow_shortcut = !no_shortcut;
  opts.capture_plots = !plot_args.empty();

  SolveResult res;
  try {
    res = solve(*id, opts);
  } catch (const std::exception& e) {
    err << "solve failed: " << e.what() << "\n";
    return 1;
  }

  for (const StepDiag& st : res.steps) {
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.2f", st.wall_ms);
    err << "step " << st.var << ": fused [" << join(st.fused, ", ") << "], cells "
        << st.discrete_configs << ", probability pieces " << st.continuous_pieces
        << ", utility pieces " << st.utility_pieces << ", " << ms << " ms\n";
  }

  const std::string text = render_report(*id, res).dump(2) + "\n";
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f.good()) {
      err << "cannot write '" << report_path << "'\n";
      return 2;
    }
    f << text;
  } else {
    out << text;
  }

  for (std::size_t i = 0; i + 1 < plot_args.size(); i += 2) {
    const PlotData* p = find_plot(res, plot_args[i]);
    if (!p) {
      std::vector<std::string> have;
      for (const PlotData& pd : res.plots) have.push_back(pd.x_var);
      err << "no plot axis named '" << plot_args[i] << "' (captured: " << join(have, ", ")
          << ")\n";
      return 1;
    }
    std::ofstream f(plot_args[i + 1]);
    if (!f.good()) {
      err << "cannot write '" << plot_args[i + 1] << "'\n";
      return 2;
    }
    write_csv(f, *p);
  }
  return 0;
}

int cmd_validate(const std::string& path, const std::string& strategy_path, std::size_t samples,
                 std::uint64_t seed, std::ostream& out, std::ostream& err) {
  std::optional<InfluenceDiagram> id;
  if (const int rc = load_diagram(path, err, id)) return rc;

  auto text = slurp(strategy_path);
  if (!text) {
    err << "cannot read '" << strategy_path << "'\n";
    return 2;
  }
  ordered_json rep;
  try {
    rep = ordered_json::parse(*text);
  } catch (const std::exception& e) {
    err << "the strategy report is not valid JSON: " << e.what() << "\n";
    return 1;
  }

  OracleEstimate est;
  try {
    const std::vector<DecisionRule> rules = rules_from_report(*id, rep);
    est = mc_evaluate(*id, rules, samples, seed);
  } catch (const std::exception& e) {
    err << "validate failed: " << e.what() << "\n";
    return 1;
  }

  out << "samples " << est.samples << "\n";
  out << "seed " << est.seed << "\n";
  out << "workers " << est.workers << "\n";
  out << "mean " << fmt17(est.mean) << "\n";
  out << "stderr " << fmt17(est.stderr_value) << "\n";
  if (rep.contains("rootValue") && rep["rootValue"].is_number()) {
    const double rv = rep["rootValue"].get<double>();
    out << "reportedRootValue " << fmt17(rv) << "\n";
    if (est.stderr_value > 0.0) out << "z " << fmt17((est.mean - rv) / est.stderr_value) << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"exact solver for hybrid influence diagrams"};
  app.name("mopid");
  app.require_subcommand(1);

  std::string check_path;
  CLI::App* check = app.add_subcommand("check", "parse and validate a diagram");
  check->add_option("file", check_path, "diagram file")->required();

  std::string solve_path, order_csv, report_path;
  bool no_shortcut = false;
  std::vector<std::string> plot_args;
  CLI::App* solve_cmd = app.add_subcommand("solve", "compute the optimal strategy and its value");
  solve_cmd->add_option("file", solve_path, "diagram file")->required();
  solve_cmd->add_option("--order", order_csv, "comma-separated elimination order");
  solve_cmd->add_flag("--no-shortcut", no_shortcut,
                      "disable the division-free marginalization shortcut");
  solve_cmd->add_option("--report", report_path, "write the strategy report to this file");
  solve_cmd
      ->add_option("--plot", plot_args,
                   "axis variable and output CSV for the expected-utility curves")
      ->type_size(2);

  std::string v_path, v_strategy;
  std::size_t v_samples = 100000;
  std::uint64_t v_seed = 1;
  CLI::App* val = app.add_subcommand("validate", "Monte-Carlo check of a solved strategy");
  val->add_option("file", v_path, "diagram file")->required();
  val->add_option("--strategy", v_strategy, "strategy report produced by solve --report")
      ->required();
  val->add_option("--samples", v_samples, "sample count");
  val->add_option("--seed", v_seed, "stream seed");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help and friends
    app.exit(e, out, err);
    return 2;
  }

  if (*check) return cmd_check(check_path, out, err);
  if (*solve_cmd)
    return cmd_solve(solve_path, order_csv, no_shortcut, report_path, plot_args, out, err);
  if (*val) return cmd_validate(v_path, v_strategy, v_samples, v_seed, out, err);
  err << "no command given\n";
  return 2;
}

}  // namespace mopid
