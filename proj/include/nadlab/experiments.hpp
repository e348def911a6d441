#pragma once

// Reproducible experiment runner: JSON configs in, CSV tables and a JSON run
// manifest out. Every experiment is deterministic given its config; sweep
// points run on a worker pool and are merged in input order.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nadlab/hamiltonians.hpp"

namespace nadlab {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

enum class ExperimentKind { kLzSweep, kErfProfile, kSuperadiabaticScan, kDecayRate, kBoTransmit, kBoPacket };

std::string_view to_string(ExperimentKind kind);
/// Throws ConfigInvalid for unknown names.
ExperimentKind experiment_from_string(std::string_view name);

struct FamilyConfig {
  std::string name = "zener";  // zener | constant_gap | tanh_model | decoupled_tanh
  double delta = 1.0;
};

/// Throws ConfigInvalid for unknown families or out-of-range parameters.
FamilyPtr make_family(const FamilyConfig& config);

struct DensityConfig {
  double E0 = 0.8, g = 5.0;
  double E_min = 0.6, E_max = 1.0;
  /// P(E) = 1 + p_slope (E - E0); a non-zero slope makes the incoming
  /// density non-Gaussian.
  double p_slope = 0.0;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  ExperimentKind experiment = ExperimentKind::kLzSweep;
  FamilyConfig family;
  std::vector<double> epsilon_grid;

  // Time window and sampling step for the two-level experiments.
  double t_start = -40.0, t_end = 40.0, t_step = 0.1;
  /// Integrator tolerance (per unit time for the propagator, absolute and
  /// relative for the coefficient ODE). The self-check halves it.
  double tolerance = 1e-10;
  int q_max = 12;
  /// Amplitudes below this are outside the accuracy budget (warning only).
  double amplitude_floor = 1e-10;
  /// Scattering prefactor G in the predicted amplitude G exp(-gamma / eps).
  double prediction_prefactor = 1.0;

  // superadiabatic-scan
  std::vector<int> q_values{0, 1, 2};
  double proxy_epsilon = 0.05;
  double proxy_t_start = -10.0, proxy_t_end = 10.0, proxy_t_step = 0.05;
  int proxy_q_max = 24;

  // decay-rate
  double contour_radius = 0.5;

  // bo-transmit / bo-packet
  double energy = 0.8;
  double x_max = 12.0;
  DensityConfig density;
  std::vector<double> packet_times{20.0, 30.0};
  int energy_nodes = 64;
  /// Half-width of the packet x-window in units of the predicted spread.
  double packet_half_width = 8.0;

  /// Gate thresholds by name; missing entries take the built-in defaults.
  std::map<std::string, double> gates;
  std::string output_dir = "out";
};

/// Throws ConfigInvalid (schema version, unknown keys' types, empty epsilon
/// grid, non-positive epsilons, bad windows).
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(std::string_view name) const;
};

/// Header row plus rows in fixed 17-significant-digit notation.
std::string to_csv(const Table& table);
Table read_csv(const std::filesystem::path& path, std::string name = {});

struct Gate {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string description;
};

struct ExperimentResult {
  std::vector<Table> tables;
  std::vector<Gate> gates;
  /// Table and columns compared by the tolerance-halving self-check.
  std::string convergence_table;
  std::vector<std::string> convergence_columns;
  std::vector<std::string> warnings;
};

/// Runs the computation only (no files).
ExperimentResult execute(const ExperimentConfig& config, unsigned threads = 1);

struct RunOptions {
  std::filesystem::path output_dir;  // empty: config.output_dir
  unsigned threads = 1;
  /// Force the tolerance-halving rerun (always on for acceptance configs).
  bool self_check = false;
};

struct SelfConvergence {
  bool ran = false;
  double max_relative_difference = 0.0;
  double threshold = 0.1;
  bool passed = true;
};

struct RunManifest {
  nlohmann::json config;
  std::string code_version;
  std::vector<Gate> gates;
  SelfConvergence self_convergence;
  /// file name -> SHA-256 hex digest
  std::map<std::string, std::string> digests;
  std::map<std::string, double> timings;
  std::vector<std::string> warnings;

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Executes, writes one CSV per table plus manifest.json into the output
/// directory, and returns the manifest.
RunManifest run(const ExperimentConfig& config, const RunOptions& options = {});

struct ColumnDifference {
  std::string table, column;
  double max_relative_difference = 0.0;
};

struct CompareReport {
  std::string experiment;
  std::vector<ColumnDifference> columns;
  double max_relative_difference = 0.0;
};

/// Column-wise relative differences of the tables two runs produced. Throws
/// SchemaMismatch when experiment, family or table layouts differ.
CompareReport compare(const std::filesystem::path& manifest_a, const std::filesystem::path& manifest_b);
/// In-memory variant on results of the same config family.
CompareReport compare(const ExperimentResult& a, const ExperimentResult& b, std::string experiment = {});

/// Applies fn to 0..n-1 on `threads` workers; results keep index order and
/// the first exception (by index) is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

std::string sha256_hex(std::string_view data);

}  // namespace nadlab
