#pragma once

// Experiment plumbing shared by the command-line tool: the separable
// fixture, single runs, sweeps, results CSV and summary tables.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gmp/trainer.hpp"

namespace gmp {

// ---------------------------------------------------------------- fixture

/// Two-block SBM (50 + 50 nodes, p_in 0.3, p_out 0.02) whose class signal is
/// a 0.05 shift on feature axis 0 or 1, noise std 0.02.
SbmParams fixture_sbm_params();
Graph fixture_graph(std::uint64_t seed);

/// Three frozen GCN layers of width 4. Layer 0 gates axes 0 and 1 with
/// relu(20 (x - 0.05)), which silences the block shift for most nodes, and
/// passes axes 2 and 3 through with bias 1; later layers are the identity.
BackboneSpec fixture_backbone();

struct Certificate {
  /// Best constant c for the rank-1 prompt U = c 1, V = e0 + e1 at layer 0.
  double c = 0.0;
  double test_acc = 0.0;
  std::size_t grid_points = 0;
};

/// Grid search over rank-1 prompts on the fixture, each scored with a
/// nearest-centroid head fitted on all labelled nodes and evaluated on
/// `split.test`.
Certificate certify_rank1_prompt(const Graph& graph, const BackboneSpec& backbone, const SplitSpec& split);

// ---------------------------------------------------------------- configs

struct NoiseSpec {
  /// "none" or "random" (uniform edge flips).
  std::string kind = "none";
  double p = 0.0;

  bool operator==(const NoiseSpec&) const = default;
};
NoiseSpec parse_noise(const std::string& text);

struct ExperimentConfig {
  /// "fixture", "fixture@<graph seed>", or a graph / graph-collection JSON path.
  std::string dataset = "fixture";
  /// "fixture", "init:<kind>:<d0,d1,...>[:<seed>]", or a backbone JSON path.
  std::string backbone = "fixture";
  TrainConfig train;
  NoiseSpec noise;
  /// Use the splits stored in the dataset file instead of sampling.
  bool file_splits = false;
  std::vector<std::uint64_t> seeds;
  bool record_time = false;
};

/// Reads the JSON form of an ExperimentConfig. Missing keys keep defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct ResultRow {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t r = 0;
  std::string placement;
  std::size_t shots = 0;
  std::string noise_kind;
  double noise_p = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::size_t epochs_to_best = 0;
  double wall_time_ms = 0.0;

  bool operator==(const ResultRow&) const = default;
};

struct RunResult {
  ResultRow row;
  TrainedState state;
};

/// Loads dataset and backbone, applies noise, trains with `seed`.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

/// Metrics document for one run: config, split, per-epoch history, summary.
nlohmann::json run_to_json(const ExperimentConfig& cfg, const RunResult& run);

// ---------------------------------------------------------------- CSV

extern const char* const kResultsHeader;
extern const char* const kResultColumns;

std::string result_csv_line(const ResultRow& row);
/// Appends rows, writing the version and column header first when the file
/// is new or empty. Throws ParseError if an existing header differs.
void append_results(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results(std::istream& in);
std::vector<ResultRow> read_results_file(const std::string& path);

// ---------------------------------------------------------------- sweeps

struct SweepAxes {
  std::vector<Method> methods{Method::LrGmp};
  std::vector<std::size_t> r{2};
  std::vector<Placement> placements{Placement::All};
  std::vector<std::size_t> shots{1};
  std::vector<NoiseSpec> noise{NoiseSpec{}};
};

/// Every cell of the Cartesian product times every seed, in canonical
/// order (method, r, placement, shots, noise, seed). Runs on `jobs` threads;
/// the returned order never depends on scheduling.
std::vector<ResultRow> run_sweep(const ExperimentConfig& base, const SweepAxes& axes, std::size_t jobs);

struct SummaryRow {
  std::string method;
  std::string dataset;
  std::size_t r = 0;
  std::string placement;
  std::size_t shots = 0;
  std::string noise_kind;
  double noise_p = 0.0;
  std::size_t runs = 0;
  double val_mean = 0.0;
  double val_std = 0.0;
  double test_mean = 0.0;
  double test_std = 0.0;
  double epochs_to_best_mean = 0.0;
};

/// Groups by every column except seed and the measurements, in order of
/// first appearance. Standard deviations use the n - 1 denominator (0 for
/// a single run).
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string summary_markdown(const std::vector<SummaryRow>& rows);

}  // namespace gmp
