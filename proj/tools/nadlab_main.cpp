// nadlab <experiment> --config cfg.json [--out DIR] [--threads N] [--self-check]
// nadlab compare A/manifest.json B/manifest.json
//
// Exit status: 0 success, 2 config error, 3 numerical failure or failed gate.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nadlab/errors.hpp"
#include "nadlab/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int exit_code_for(nadlab::ErrorCode code) {
  switch (code) {
    case nadlab::ErrorCode::kConfigInvalid:
    case nadlab::ErrorCode::kSchemaMismatch:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

void print_gates(const nadlab::RunManifest& m) {
  for (const auto& g : m.gates) {
    std::printf("%-4s %-26s value=%-12.6g threshold=%-10.4g %s\n", g.passed ? "ok" : "FAIL", g.name.c_str(), g.value,
                g.threshold, g.description.c_str());
  }
  if (m.self_convergence.ran) {
    std::printf("%-4s %-26s value=%-12.6g threshold=%-10.4g tolerance-halving rerun\n",
                m.self_convergence.passed ? "ok" : "FAIL", "self_convergence", m.self_convergence.max_relative_difference,
                m.self_convergence.threshold);
  }
  for (const auto& w : m.warnings) std::printf("warning: %s\n", w.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-adiabatic transition experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  unsigned threads = 1;
  bool self_check = false;
  for (const char* name : {"lz-sweep", "erf-profile", "superadiabatic-scan", "decay-rate", "bo-transmit", "bo-packet"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: config output_dir)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_flag("--self-check", self_check, "rerun at half tolerance and gate the difference");
  }
  std::string manifest_a, manifest_b;
  CLI::App* cmp = app.add_subcommand("compare", "column-wise relative differences of two runs");
  cmp->add_option("manifest_a", manifest_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("manifest_b", manifest_b)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (cmp->parsed()) {
      const nadlab::CompareReport r = nadlab::compare(manifest_a, manifest_b);
      for (const auto& c : r.columns) {
        std::printf("%s.%s %.3e\n", c.table.c_str(), c.column.c_str(), c.max_relative_difference);
      }
      std::printf("max %.3e\n", r.max_relative_difference);
      return 0;
    }
    const std::string experiment = app.get_subcommands().front()->get_name();
    nadlab::ExperimentConfig config = nadlab::load_config(config_path);
    if (nadlab::to_string(config.experiment) != experiment) {
      std::cerr << "config describes experiment '" << nadlab::to_string(config.experiment) << "', not '" << experiment
                << "'\n";
      return kExitConfig;
    }
    nadlab::RunOptions options;
    options.output_dir = out_dir;
    options.threads = threads;
    options.self_check = self_check;
    const nadlab::RunManifest m = nadlab::run(config, options);
    print_gates(m);
    return m.passed() ? 0 : kExitNumerical;
  } catch (const nadlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
