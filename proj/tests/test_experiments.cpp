#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "nadlab/errors.hpp"
#include "nadlab/experiments.hpp"

using namespace nadlab;
using nlohmann::json;

namespace {

json decay_config() {
  return json{{"schema_version", 1},
              {"experiment", "decay-rate"},
              {"family", {{"name", "zener"}, {"delta", 1.0}}},
              {"epsilon_grid", {0.25, 0.2, 0.1}}};
}

ErrorCode code_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInvalidParameter;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("nadlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

int exit_status(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(parse_config(decay_config()));
    json j = decay_config();
    j["epsilon_grid"] = json::array();
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["bogus"] = 1;
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["schema_version"] = 2;
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["family"]["name"] = "nope";
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["family"]["name"] = "tanh_model";
    j["family"]["delta"] = 3.0;
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["epsilon_grid"] = {0.1, "x"};
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
    j = decay_config();
    j["experiment"] = "lz";
    CHECK(code_of(j) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("config round trip") {
    json j = decay_config();
    j["gates"] = {{"three_route", 1e-7}};
    const ExperimentConfig c = parse_config(j);
    const ExperimentConfig d = parse_config(to_json(c));
    CHECK(to_json(c) == to_json(d));
    CHECK(d.gates.at("three_route") == 1e-7);
  }

  TEST_CASE("CSV round trip is exact") {
    Table t{"t", {"a", "b"}, {{0.1, 1.0 / 3.0}, {-2.5e-300, std::nan("")}}};
    const auto dir = scratch("csv");
    std::ofstream(dir / "t.csv") << to_csv(t);
    const Table r = read_csv(dir / "t.csv");
    CHECK(r.columns == t.columns);
    CHECK(r.rows[0][1] == t.rows[0][1]);
    CHECK(r.rows[1][0] == t.rows[1][0]);
    CHECK(std::isnan(r.rows[1][1]));
    CHECK(to_csv(r) == to_csv(t));
  }

  TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("parallel_for keeps index order and rethrows the first error") {
    std::vector<int> out(50);
    parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
    try {
      parallel_for(10, 3, [](std::size_t i) {
        if (i == 3 || i == 7) throw std::runtime_error(std::to_string(i));
      });
      CHECK(false);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "3");
    }
  }

  TEST_CASE("run writes tables, digests and manifest deterministically") {
    const ExperimentConfig c = parse_config(decay_config());
    RunOptions o;
    const auto dir_a = scratch("run_a");
    o.output_dir = dir_a;
    const RunManifest a = run(c, o);
    o.output_dir = scratch("run_b");
    o.threads = 2;
    const RunManifest b = run(c, o);
    CHECK(a.passed());
    CHECK(a.digests == b.digests);
    CHECK(a.digests.count("routes.csv") == 1);
    CHECK(std::filesystem::exists(o.output_dir / "manifest.json"));
    const CompareReport r = compare(dir_a / "manifest.json", o.output_dir / "manifest.json");
    CHECK(r.max_relative_difference == 0.0);
  }

  TEST_CASE("compare rejects different families") {
    RunOptions o;
    const auto dir_a = scratch("cmp_a");
    o.output_dir = dir_a;
    run(parse_config(decay_config()), o);
    json j = decay_config();
    j["family"]["delta"] = 0.5;
    o.output_dir = scratch("cmp_b");
    run(parse_config(j), o);
    try {
      compare(dir_a / "manifest.json", o.output_dir / "manifest.json");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSchemaMismatch);
    }
  }

  TEST_CASE("self-check records the halved-tolerance comparison") {
    json j = decay_config();
    RunOptions o;
    o.output_dir = scratch("self");
    o.self_check = true;
    const RunManifest m = run(parse_config(j), o);
    CHECK(m.self_convergence.ran);
    CHECK(m.self_convergence.passed);
    CHECK(m.to_json()["self_convergence"]["ran"] == true);
  }

  TEST_CASE("module errors carry the sweep coordinates") {
    json j{{"schema_version", 1},
           {"experiment", "bo-transmit"},
           {"family", {{"name", "tanh_model"}, {"delta", 0.25}}},
           {"epsilon_grid", {0.5, 0.4, 0.3, 0.25}},
           {"energy", 0.3}};
    try {
      execute(parse_config(j));
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEnergyOutsideWindow);
      const std::string what = e.what();
      CHECK(what.find("family=tanh_model") != std::string::npos);
      CHECK(what.find("E=0.3") != std::string::npos);
    }
  }

  TEST_CASE("CLI exit codes") {
    const std::string cli = NADLAB_CLI_PATH;
    const auto dir = scratch("cli");
    std::ofstream(dir / "good.json") << decay_config().dump();
    json bad = decay_config();
    bad["epsilon_grid"] = json::array();
    std::ofstream(dir / "bad.json") << bad.dump();
    json failing = decay_config();
    failing["gates"] = {{"three_route", -1.0}};
    std::ofstream(dir / "failing.json") << failing.dump();
    const std::string quiet = " > /dev/null 2>&1";
    const std::string out = " --out " + (dir / "out").string();
    CHECK(exit_status(cli + " decay-rate --config " + (dir / "good.json").string() + out + quiet) == 0);
    CHECK(exit_status(cli + " decay-rate --config " + (dir / "bad.json").string() + out + quiet) == 2);
    CHECK(exit_status(cli + " lz-sweep --config " + (dir / "good.json").string() + out + quiet) == 2);
    CHECK(exit_status(cli + " decay-rate --config " + (dir / "failing.json").string() + out + quiet) == 3);
    CHECK(exit_status(cli + " decay-rate" + quiet) == 2);
    CHECK(exit_status(cli + " compare " + (dir / "out" / "manifest.json").string() + " " +
                      (dir / "out" / "manifest.json").string() + quiet) == 0);
  }
}
