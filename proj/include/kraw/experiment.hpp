#pragma once

// Experiment driver behind the `kraw` command-line tool. Every command
// expands into independent (family, K, H, repeat, fold) cells, runs them,
// and writes CSV/SVG outputs plus a config echo (config.json) that
// `kraw replay` turns back into the same ExperimentSpec.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kraw/data.hpp"
#include "kraw/poly.hpp"
#include "kraw/train.hpp"

namespace kraw::experiment {

enum class Command { train, sweep_k, sweep_h, report_p, response_plot, gen_sbm };

std::string to_string(Command command);
Command parse_command(const std::string& name);

/// A dataset directory or a synthetic SBM configuration, never both.
struct DataSource {
  std::optional<std::filesystem::path> dataset;
  std::optional<data::SbmConfig> sbm;
};

struct ExperimentSpec {
  Command command = Command::train;
  /// Exactly one, except report-p which accepts several.
  std::vector<DataSource> sources;
  std::vector<poly::Family> families{poly::Family::krawtchouk};
  std::vector<int> k_values{3};
  std::vector<std::size_t> h_values{16};
  int N = 20;
  double dropout = 0.5;
  /// Unset: 200 epochs when the dataset's edge homophily is >= 0.5, else 400.
  std::optional<int> epochs;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  /// Independent repeats. SBM sources are regenerated with seed + repeat.
  int seeds = 1;
  /// Number of dataset splits to train on; 0 means all of them.
  std::size_t folds = 0;
  bool row_normalize = true;
  unsigned threads = 1;
  // response-plot only.
  std::vector<double> p_values{0.1, 0.3, 0.5, 0.7, 0.9};
  poly::ResponseDomain view = poly::ResponseDomain::raw;
  int grid_points = 101;

  std::filesystem::path out = "out";

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Per-command defaults (for example the K grid of sweep-k).
ExperimentSpec default_spec(Command command);

/// Config echo. Doubles round-trip exactly.
std::string spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const std::string& text);

std::string sbm_to_json(const data::SbmConfig& config);
/// Unknown keys are rejected; missing keys keep their defaults.
data::SbmConfig sbm_from_json(const std::string& text);

struct Cell {
  std::size_t source = 0;
  poly::Family family = poly::Family::krawtchouk;
  int K = 3;
  std::size_t H = 16;
  int repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
};

struct CellResult {
  Cell cell;
  std::string dataset;
  std::string split_protocol;
  double edge_homophily = 0.0;
  int epochs = 0;
  /// False when training diverged; accuracies are then NaN.
  bool finite = true;
  std::string error;
  train::RunRecord record;
  /// Trained model (absent when training diverged).
  std::optional<nn::Model> model;
};

/// Trains every (source, family, K, H, repeat, fold) cell on up to
/// spec.threads threads. Results come back in that nesting order and do not
/// depend on the thread count.
std::vector<CellResult> run_cells(const ExperimentSpec& spec);

/// Aggregate over repeats and folds of one (source, family, K, H) group.
struct GroupSummary {
  std::size_t source = 0;
  std::string dataset;
  double edge_homophily = 0.0;
  poly::Family family = poly::Family::krawtchouk;
  int K = 0;
  std::size_t H = 0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
  double mean_final_test = 0.0;
  double std_final_test = 0.0;
  double mean_best_val_test = 0.0;
  double std_best_val_test = 0.0;
  /// NaN for Chebyshev.
  double mean_p_conv1 = 0.0;
  double std_p_conv1 = 0.0;
  double mean_p_conv2 = 0.0;
};

/// Groups in order of first appearance. Means skip diverged runs.
std::vector<GroupSummary> summarize(const std::vector<CellResult>& results);

/// One row per run (schema in the README).
std::string runs_csv(const std::vector<CellResult>& results);
std::string sweep_csv(const std::vector<GroupSummary>& groups);
std::string report_p_csv(const std::vector<GroupSummary>& groups);

/// Long-format table: view,p,degree,lambda,x,value over a uniform grid on [0,1].
std::string response_csv(const ExperimentSpec& spec);

/// Runs the command and writes its outputs and config.json into spec.out.
/// Returns the paths written.
std::vector<std::filesystem::path> run(const ExperimentSpec& spec);

/// Re-runs a config echo. `out` overrides the output directory if given.
std::vector<std::filesystem::path> replay(const std::filesystem::path& echo,
                                          const std::optional<std::filesystem::path>& out = {});

}  // namespace kraw::experiment
