// Acceptance run: executes every checked-in acceptance config with the
// tolerance-halving self-check and prints one PASS/FAIL line per criterion.
// Known, documented deviations are reported as FAIL but do not fail the
// process; any other failure does.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nadlab/errors.hpp"
#include "nadlab/experiments.hpp"
#include "structural_checks.hpp"

namespace {

namespace fs = std::filesystem;

// config:gate pairs that fail at the prescribed thresholds (see README).
const std::set<std::string> kKnownDeviations = {
    "erf_constant_gap:residual",
    "superadiabatic_scan:slope_q1",
    "superadiabatic_scan:beta_log_convex",
};

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> configs;
};

struct Outcome {
  bool passed = true;
  bool unexpected = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Outcome run_configs(const std::vector<std::string>& names, const fs::path& out_root, unsigned threads) {
  Outcome o;
  std::ostringstream detail;
  for (const std::string& name : names) {
    try {
      const nadlab::ExperimentConfig cfg = nadlab::load_config(fs::path(NADLAB_CONFIG_DIR) / (name + ".json"));
      nadlab::RunOptions opts;
      opts.output_dir = out_root / name;
      opts.threads = threads;
      opts.self_check = true;
      const nadlab::RunManifest m = nadlab::run(cfg, opts);
      std::vector<nadlab::Gate> gates = m.gates;
      gates.push_back({"self_convergence", m.self_convergence.max_relative_difference, m.self_convergence.threshold,
                       m.self_convergence.passed, ""});
      for (const nadlab::Gate& g : gates) {
        if (g.passed) continue;
        o.passed = false;
        const bool known = kKnownDeviations.count(name + ":" + g.name) > 0;
        o.unexpected = o.unexpected || !known;
        detail << ' ' << name << ':' << g.name << '=' << fmt(g.value) << " (limit " << fmt(g.threshold) << ')'
               << (known ? " [known deviation]" : "");
      }
      if (o.passed) {
        for (const nadlab::Gate& g : gates) detail << ' ' << g.name << '=' << fmt(g.value);
        detail << ';';
      }
    } catch (const std::exception& e) {
      o.passed = false;
      o.unexpected = true;
      detail << ' ' << name << ": " << e.what();
    }
  }
  o.detail = detail.str();
  return o;
}

Outcome run_structural(const fs::path& out_root) {
  Outcome o;
  std::ostringstream detail;
  for (const auto& check : nadlab::checks::all(NADLAB_CLI_PATH, out_root / "structural")) {
    try {
      const nadlab::checks::Check c = check();
      detail << ' ' << c.name << '=' << fmt(c.violation);
      if (!c.ok()) {
        o.passed = false;
        o.unexpected = true;
        detail << " (limit " << fmt(c.limit) << ')';
      }
    } catch (const std::exception& e) {
      o.passed = false;
      o.unexpected = true;
      detail << " error: " << e.what();
    }
  }
  o.detail = detail.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_root = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_out";
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  const std::vector<Criterion> criteria = {
      {1, "Landau-Zener amplitudes (zener, delta 0.5 and 1)", {"lz_zener_delta05", "lz_zener_delta1"}},
      {2, "constant-gap amplitudes", {"lz_constant_gap"}},
      {3, "erf switching profile", {"erf_constant_gap"}},
      {4, "superadiabatic scaling and optimal level", {"superadiabatic_scan"}},
      {5, "decay-rate routes and contour deformation", {"decay_rate_zener"}},
      {6, "Born-Oppenheimer transmitted slope", {"bo_transmit"}},
      {7, "transmitted wave packet", {"bo_packet"}},
      {8, "structural properties", {}},
  };
  bool unexpected = false;
  int passed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    const Outcome o = c.id == 8 ? run_structural(out_root) : run_configs(c.configs, out_root, threads);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s: %s [%.0fs]%s\n", c.id, o.passed ? "PASS" : "FAIL", c.title.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    passed += o.passed;
    unexpected = unexpected || o.unexpected;
  }
  std::printf("%d/%zu criteria pass; %s\n", passed, criteria.size(),
              unexpected ? "unexpected failures present" : "all failures are documented deviations");
  return unexpected ? 1 : 0;
}
