#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "mopid/cli.hpp"

using nlohmann::json;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = mopid::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string fixture(const std::string& name) {
  return std::string(MOPID_SOURCE_DIR) + "/fixtures/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Csv read_csv(const std::string& path) {
  Csv csv;
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) csv.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    REQUIRE(row.size() == csv.header.size());
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

// value key in "key value" lines
double field(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k, v;
  while (in >> k >> v)
    if (k == key) return std::strtod(v.c_str(), nullptr);
  FAIL("missing field ", key);
  return 0.0;
}

}  // namespace

TEST_CASE("check accepts valid diagrams and reports failures") {
  CliRun ok = run({"check", fixture("entrepreneur.yaml")});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ok:") == 0);
  CHECK(ok.err.empty());

  CHECK(run({"check", fixture("put_option.yaml")}).code == 0);
  CHECK(run({"check", fixture("minimal.yaml")}).code == 0);

  CliRun cyc = run({"check", fixture("invalid/cycle.yaml")});
  CHECK(cyc.code == 1);
  CHECK(cyc.err.find("cycle") != std::string::npos);

  CliRun nou = run({"check", fixture("invalid/decision_no_utility.yaml")});
  CHECK(nou.code == 1);
  CHECK(nou.err.find("utility") != std::string::npos);

  CHECK(run({"check", fixture("no_such_file.yaml")}).code == 2);
}

TEST_CASE("solve writes a deterministic report") {
  CliRun r = run({"solve", fixture("entrepreneur.yaml")});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("step ") != std::string::npos);

  const json rep = json::parse(r.out);
  CHECK(rep.at("rootValue").get<double>() == doctest::Approx(194.8649).epsilon(5e-5));
  REQUIRE(rep.at("rules").size() == 1);
  CHECK(rep["rules"][0].at("decision") == "P");
  CHECK(rep["rules"][0].at("kind") == "continuous");
  CHECK(rep["rules"][0].at("cases").at(0).at("value").get<double>() ==
        doctest::Approx(24.404).epsilon(5e-4));
  CHECK(rep.at("steps").size() == 7);
  for (const auto& st : rep["steps"]) {
    CHECK(st.contains("variable"));
    CHECK(st.contains("fused"));
    CHECK(st.contains("cells"));
  }

  SUBCASE("--report runs are byte-identical") {
    const std::string p1 = "tmp_cli_rep1.json", p2 = "tmp_cli_rep2.json";
    REQUIRE(run({"solve", fixture("entrepreneur.yaml"), "--report", p1}).code == 0);
    REQUIRE(run({"solve", fixture("entrepreneur.yaml"), "--report", p2}).code == 0);
    const std::string a = read_file(p1), b = read_file(p2);
    CHECK(a == b);
    CHECK(a == r.out);  // same bytes as the stdout report
    std::remove(p1.c_str());
    std::remove(p2.c_str());
  }

  SUBCASE("marginalization mode and custom orders agree") {
    CliRun div = run({"solve", fixture("entrepreneur.yaml"), "--no-shortcut"});
    REQUIRE(div.code == 0);
    CHECK(json::parse(div.out).at("rootValue").get<double>() ==
          doctest::Approx(rep.at("rootValue").get<double>()).epsilon(1e-9));

    CliRun alt = run({"solve", fixture("entrepreneur.yaml"), "--order", "Ca,Z2,Cn,Z1,Qa,Qn,P"});
    REQUIRE(alt.code == 0);
    CHECK(json::parse(alt.out).at("rootValue").get<double>() ==
          doctest::Approx(rep.at("rootValue").get<double>()).epsilon(1e-9));
  }

  SUBCASE("an order that maximizes too early is rejected") {
    CliRun bad = run({"solve", fixture("entrepreneur.yaml"), "--order", "P,Qn,Qa,Cn,Ca,Z1,Z2"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("P") != std::string::npos);
  }

  SUBCASE("exercise thresholds are rendered on the price scale") {
    CliRun put = run({"solve", fixture("put_option.yaml")});
    REQUIRE(put.code == 0);
    const json prep = json::parse(put.out);
    bool saw_d2 = false;
    for (const auto& rule : prep.at("rules")) {
      if (rule.at("decision") != "D2") continue;
      for (const auto& cs : rule.at("cases")) {
        if (!cs.contains("breaksExp")) continue;
        saw_d2 = true;
        REQUIRE(cs.at("breaksExp").size() == 1);
        CHECK(cs["breaksExp"][0].get<double>() == doctest::Approx(30.219).epsilon(1e-3));
        CHECK(cs.at("observed") == "S2");
        CHECK(cs.at("states").at(0) == "exercise");
        CHECK(cs.at("states").at(1) == "hold");
      }
    }
    CHECK(saw_d2);
  }
}

TEST_CASE("plot CSVs sample the expected-utility curves") {
  const std::string pcsv = "tmp_cli_price.csv";
  REQUIRE(run({"solve", fixture("entrepreneur.yaml"), "--plot", "P", pcsv}).code == 0);
  Csv price = read_csv(pcsv);
  REQUIRE(price.header == std::vector<std::string>{"x", "value"});
  REQUIRE(price.rows.size() == 1000);
  CHECK(price.rows[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 1; k < price.rows.size(); ++k)
    CHECK(price.rows[k][0] > price.rows[k - 1][0]);
  std::size_t arg = 0;
  for (std::size_t k = 1; k < price.rows.size(); ++k)
    if (price.rows[k][1] > price.rows[arg][1]) arg = k;
  CHECK(std::abs(price.rows[arg][0] - 24.40) <= 0.05);
  CHECK(std::abs(price.rows[arg][1] - 194.87) <= 0.05);

  SUBCASE("plot output is byte-identical across runs") {
    const std::string again = "tmp_cli_price2.csv";
    REQUIRE(run({"solve", fixture("entrepreneur.yaml"), "--plot", "P", again}).code == 0);
    CHECK(read_file(pcsv) == read_file(again));
    std::remove(again.c_str());
  }

  SUBCASE("alternative curves for an observed decision") {
    const std::string scsv = "tmp_cli_s2.csv";
    REQUIRE(run({"solve", fixture("put_option.yaml"), "--plot", "S2", scsv}).code == 0);
    Csv s2 = read_csv(scsv);
    REQUIRE(s2.header == std::vector<std::string>{"x", "exercise", "hold"});
    REQUIRE(s2.rows.size() == 1000);
    // the axis is rendered on the price scale
    CHECK(s2.rows[0][0] == doctest::Approx(std::exp(2.632039454113936)).epsilon(1e-9));
    double crossing = 0.0;
    for (std::size_t k = 0; k + 1 < s2.rows.size(); ++k) {
      const double d1 = s2.rows[k][1] - s2.rows[k][2];
      const double d2 = s2.rows[k + 1][1] - s2.rows[k + 1][2];
      if (d1 > 0.0 && d2 < 0.0 && s2.rows[k][0] > 20.0 && s2.rows[k][0] < 40.0)
        crossing = s2.rows[k][0];
    }
    CHECK(std::abs(crossing - 30.14) <= 0.5);

    // the decision's name addresses the same plot
    const std::string dcsv = "tmp_cli_d2.csv";
    REQUIRE(run({"solve", fixture("put_option.yaml"), "--plot", "D2", dcsv}).code == 0);
    CHECK(read_file(scsv) == read_file(dcsv));
    std::remove(scsv.c_str());
    std::remove(dcsv.c_str());
  }

  SUBCASE("unknown plot axes are rejected") {
    CliRun bad = run({"solve", fixture("entrepreneur.yaml"), "--plot", "NOPE", "tmp_cli_x.csv"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("captured") != std::string::npos);
  }

  std::remove(pcsv.c_str());
}

TEST_CASE("validate replays a report's strategy through the sampler") {
  const std::string rep = "tmp_cli_put_rep.json";
  REQUIRE(run({"solve", fixture("put_option.yaml"), "--report", rep}).code == 0);

  CliRun v = run({"validate", fixture("put_option.yaml"), "--strategy", rep, "--samples",
                  "200000", "--seed", "9"});
  REQUIRE(v.code == 0);
  const double mean = field(v.out, "mean");
  const double se = field(v.out, "stderr");
  const double reported = field(v.out, "reportedRootValue");
  CHECK(field(v.out, "samples") == 200000);
  CHECK(field(v.out, "seed") == 9);
  CHECK(se > 0.0);
  CHECK(std::abs(mean - reported) <= 3.0 * se + 0.01);

  SUBCASE("validate output is deterministic") {
    CliRun again = run({"validate", fixture("put_option.yaml"), "--strategy", rep, "--samples",
                        "200000", "--seed", "9"});
    CHECK(again.code == 0);
    CHECK(again.out == v.out);
  }

  SUBCASE("a different seed moves the estimate") {
    CliRun other = run({"validate", fixture("put_option.yaml"), "--strategy", rep, "--samples",
                        "200000", "--seed", "10"});
    CHECK(other.code == 0);
    CHECK(field(other.out, "mean") != mean);
  }

  SUBCASE("broken reports are rejected") {
    CHECK(run({"validate", fixture("put_option.yaml"), "--strategy", "tmp_cli_missing.json"})
              .code == 2);

    const std::string garbled = "tmp_cli_garbled.json";
    std::ofstream(garbled) << "this is not json";
    CHECK(run({"validate", fixture("put_option.yaml"), "--strategy", garbled}).code == 1);
    std::remove(garbled.c_str());

    const std::string empty_rules = "tmp_cli_empty.json";
    std::ofstream(empty_rules) << "{\"rules\": []}";
    CliRun missing = run({"validate", fixture("put_option.yaml"), "--strategy", empty_rules});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("missing a rule") != std::string::npos);
    std::remove(empty_rules.c_str());
  }

  std::remove(rep.c_str());
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate", "x"}).code == 2);
  CHECK(run({"solve"}).code == 2);
  CHECK(run({"validate", fixture("put_option.yaml")}).code == 2);  // --strategy required

  CliRun help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("check") != std::string::npos);
  CHECK(help.out.find("solve") != std::string::npos);
  CHECK(help.out.find("validate") != std::string::npos);
}
