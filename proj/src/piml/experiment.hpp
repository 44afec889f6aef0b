#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piml/tasks.hpp"

namespace piml {

using Json = nlohmann::ordered_json;

enum class TaskKind { lwr, carfollowing, toy };

const char* to_string(TaskKind k);
TaskKind task_from_string(const std::string& s);

struct DataConfig {
  std::string path;       // empty: generate from the synthetic block
  std::string test_path;  // empty: split `path` (or the synthetic set)
  double split_ratio = 0.8;
  std::uint64_t split_seed = 1;
  MacroSchema macro_columns;
  CfSchema cf_columns;
};

struct ToyConfig {
  int dim = 20;
  std::uint64_t seed = 1;
  double init_scale = 1.0;
};

struct SweepConfig {
  std::vector<LossWeights> grid;  // empty: task default
  int seeds = 5;
};

struct CompareConfig {
  std::vector<Method> methods;  // empty: all five
  int seeds = 5;
  std::string baseline = "scalarized";
  /// Weights of the scalarized row. Without them the sweep grid is run
  /// first and its best row is used.
  std::optional<LossWeights> baseline_weights;
  /// Precomputed table (method column plus one column per metric); when
  /// set nothing is trained.
  std::string metrics_csv;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::toy;
  std::string output_dir = "run";
  DataConfig data;
  MacroSynthConfig macro_synth;
  CfSynthConfig cf_synth;
  LwrTaskConfig lwr;
  CfTaskConfig cf;
  ToyConfig toy;
  GaConfig calibration;
  std::string idm_file;  // precalibrated parameters; skips the GA
  TrainConfig train;
  SweepConfig sweep;
  CompareConfig compare;

  void validate() const;
  std::vector<LossWeights> sweep_grid() const;
  std::vector<Method> compare_methods() const;
};

/// Strict parse: every object rejects keys it does not know, every field
/// has a type check, missing fields take their defaults.
ExperimentConfig parse_experiment(const Json& j);
/// Fully resolved form. Parsing it back yields the same resolved form.
Json experiment_to_json(const ExperimentConfig& c);
/// Reads a JSON config file and applies `overrides` as a merge patch.
ExperimentConfig load_experiment(const std::string& path, const Json& overrides = Json::object());

// ---------------------------------------------------------------------------
// Checkpoints

struct NetworkEntry {
  std::string name;
  MlpSpec spec;
  std::size_t offset = 0;
};

struct Checkpoint {
  TaskKind task = TaskKind::toy;
  Method method = Method::scalarized;
  std::uint64_t seed = 1;
  std::vector<NetworkEntry> networks;
  Vec params;
  std::optional<LwrScales> lwr_scales;
  std::optional<CfScales> cf_scales;
  std::optional<IdmParams> idm;
  std::optional<Vec> toy_a;
  std::optional<Vec> toy_b;

  std::vector<TensorSlot> layout() const;
};

Json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Metrics of a checkpoint's model on the given data (physical units).
Metrics checkpoint_metrics(const Checkpoint& c, const ExperimentConfig& cfg,
                           const std::string& data_path);

// ---------------------------------------------------------------------------
// Commands. Each writes config.json into the output directory first and
// returns a short JSON summary of what it produced.

/// SHA-1 of "blob <size>\0" + content, as git hashes file contents.
std::string git_blob_sha1(std::string_view content);

Json cmd_simulate(const ExperimentConfig& cfg);
Json cmd_calibrate(const ExperimentConfig& cfg);
Json cmd_train(const ExperimentConfig& cfg);
/// `target` is a checkpoint file or a directory searched recursively for
/// checkpoint.json; `data_path` defaults to the config's test data.
Json cmd_eval(const ExperimentConfig& cfg, const std::string& target,
              const std::string& data_path = "");
Json cmd_sweep(const ExperimentConfig& cfg);
Json cmd_compare(const ExperimentConfig& cfg);
Json cmd_oracle(int instances, std::uint64_t seed, double grid_step);

// ---------------------------------------------------------------------------
// Relative improvement tables

struct MetricTable {
  std::vector<std::string> metrics;
  std::vector<std::string> methods;
  std::vector<std::vector<double>> values;  // [method][metric]
};

/// Reads "method,<metric>..." rows. Columns ending in _std are ignored and
/// a _mean suffix is dropped from metric names.
MetricTable parse_metric_table(const std::string& text);
std::string format_metric_table(const MetricTable& t, const std::string& suffix);
/// 100 (baseline - method) / baseline for every row and metric; the
/// baseline's own row is all zeros.
MetricTable relative_improvement(const MetricTable& t, const std::string& baseline);

}  // namespace piml
