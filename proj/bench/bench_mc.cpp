// Benchmarks the Monte-Carlo strategy evaluator: times the chunk-parallel
// run against the serial reference and fails unless both produce the same
// estimate bit for bit.

#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mopid/oracle.hpp"
#include "mopid/solver.hpp"

namespace {

std::uint64_t bits(double x) {
  std::uint64_t b = 0;
  std::memcpy(&b, &x, sizeof b);
  return b;
}

double seconds(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo strategy evaluator benchmark"};
  std::size_t samples = 2000000;
  std::uint64_t seed = 20260814;
  std::string file = std::string(MOPID_SOURCE_DIR) + "/fixtures/entrepreneur.yaml";
  app.add_option("--samples", samples, "samples per run");
  app.add_option("--seed", seed, "stream seed");
  app.add_option("--file", file, "diagram to evaluate");
  CLI11_PARSE(app, argc, argv);

  try {
    std::ifstream in(file);
    if (!in.good()) {
      std::fprintf(stderr, "cannot open %s\n", file.c_str());
      return 2;
    }
    std::ostringstream os;
    os << in.rdbuf();
    mopid::ParseResult parsed = mopid::parse_diagram(os.str());
    if (!parsed.ok()) {
      for (const mopid::Diagnostic& d : parsed.errors)
        std::fprintf(stderr, "%s\n", d.render().c_str());
      return 2;
    }
    const mopid::InfluenceDiagram& id = *parsed.diagram;
    const mopid::SolveResult solved = mopid::solve(id);

    const auto t0 = std::chrono::steady_clock::now();
    const mopid::OracleEstimate serial = mopid::mc_evaluate_serial(id, solved.rules, samples, seed);
    const auto t1 = std::chrono::steady_clock::now();
    const mopid::OracleEstimate parallel = mopid::mc_evaluate(id, solved.rules, samples, seed);
    const auto t2 = std::chrono::steady_clock::now();
    const mopid::OracleEstimate repeat = mopid::mc_evaluate(id, solved.rules, samples, seed);

    const double ts = seconds(t0, t1), tp = seconds(t1, t2);
    std::printf("samples        %zu\n", samples);
    std::printf("workers        %d\n", parallel.workers);
    std::printf("serial         %.3f s  (%.0f samples/s)\n", ts, static_cast<double>(samples) / ts);
    std::printf("parallel       %.3f s  (%.0f samples/s)\n", tp, static_cast<double>(samples) / tp);
    std::printf("speedup        %.2fx\n", ts / tp);
    std::printf("estimate       %.10f +/- %.10f\n", parallel.mean, parallel.stderr_value);
    std::printf("exact value    %.10f\n", solved.root_value);

    const bool same = bits(serial.mean) == bits(parallel.mean) &&
                      bits(serial.stderr_value) == bits(parallel.stderr_value) &&
                      bits(parallel.mean) == bits(repeat.mean) &&
                      bits(parallel.stderr_value) == bits(repeat.stderr_value);
    if (!same) {
      std::fprintf(stderr, "serial and parallel estimates differ: %.17g vs %.17g\n", serial.mean,
                   parallel.mean);
      return 1;
    }
    std::printf("serial and parallel estimates are bit-identical\n");
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
