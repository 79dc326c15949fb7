#pragma once

// Metrics, the one-to-one cross-user experiment runner and report files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtsda/data.hpp"
#include "dtsda/networks.hpp"
#include "dtsda/training.hpp"

namespace dtsda::eval {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::size_t classes, std::vector<std::string> names = {});

  std::size_t classes() const { return classes_; }
  const std::vector<std::string>& names() const { return names_; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_.at(truth * classes_ + predicted); }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * classes_ + predicted); }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t support(std::size_t truth) const;
  double accuracy() const;
  /// Per-class recall; 0 for a class with no support.
  std::vector<double> recall() const;

  /// `true\pred,<names...>` then one row per true class.
  std::string to_csv() const;
  static ConfusionMatrix parse_csv(const std::string& text);
  /// C×C heatmap. Cell colour is a linear ramp from #ffffff (row share 0) to
  /// #08519c (row share 1); each cell is labelled with its count.
  std::string to_svg(const std::string& title = "") const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

struct Evaluation {
  double accuracy = 0.0;
  std::vector<double> recall;
  ConfusionMatrix confusion;
};

/// Labels must be in [0, classes).
Evaluation evaluate(std::span<const int> predictions, std::span<const int> truth, std::size_t classes,
                    std::vector<std::string> names = {});

/// Predicts every target window and scores it against the de-anonymised
/// target labels.
Evaluation evaluate_target(nn::Model& model, const data::WindowedDataset& dataset);

/// Windows, pads and normalises (with the model's statistics) every recording
/// of `user`, then scores the model on them.
Evaluation evaluate_user(nn::Model& model, std::span<const data::SensorRecording> recordings, const std::string& user,
                         const data::ActivityTable& activities, double window_seconds = 3.0, double overlap = 0.5);

struct ExperimentResult {
  std::string task;  // "<source>-><target>"
  std::string source_user;
  std::string target_user;
  std::string method;
  std::uint64_t seed = 0;
  std::uint32_t dataset_hash = 0;
  double accuracy = 0.0;
  std::vector<double> recall;
  ConfusionMatrix confusion;
  double runtime_seconds = 0.0;
};

struct ExperimentConfig {
  std::filesystem::path data_dir;
  std::vector<std::string> methods{"dtsda", "dann", "source_only"};
  std::vector<std::string> users;  // empty: every user, first-appearance order
  std::uint64_t root_seed = 0;
  double window_seconds = 3.0;
  double overlap = 0.5;
  std::optional<double> sampling_rate;
  bool heatmaps = true;
  train::TrainConfig train;

  void validate() const;
  /// Keys: data, methods (comma list), users (comma list), seed,
  /// window_seconds, overlap, sampling_rate, heatmaps, plus every training
  /// key. Relative data paths resolve against `base_dir`. Unknown keys are a
  /// ConfigError.
  static ExperimentConfig from_key_values(const std::map<std::string, std::string>& kv,
                                          const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  /// key=value lines in a fixed order.
  std::string to_text() const;
};

/// Ordered (source, target) pairs over `users`, source-major.
std::vector<std::pair<std::string, std::string>> task_pairs(const std::vector<std::string>& users);

using ProgressFn = std::function<void(const ExperimentResult&)>;

/// Task i (0-based, in task_pairs order) uses seed root_seed + i for model
/// initialisation, batching and target anonymisation; every method in a task
/// sees the same prepared dataset.
std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});
std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config, const data::DatasetDir& data,
                                             const ProgressFn& progress = {});

struct MethodSummary {
  std::string method;
  std::size_t tasks = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over tasks
};

std::vector<MethodSummary> summarize(std::span<const ExperimentResult> results);

/// task,source,target,method,seed,dataset_hash,target_supervision,correct,total,
/// accuracy,recall_<class>...
std::string results_csv(std::span<const ExperimentResult> results);
/// Reads results_csv output back; confusion matrices are not part of it.
std::vector<ExperimentResult> parse_results_csv(const std::string& text);
std::string summary_csv(std::span<const MethodSummary> summary);

/// Writes results.csv, summary.csv, timings.csv, config.txt (when given) and
/// confusion_<task>_<method>.csv (+ .svg) into `out_dir`. Task ids in file
/// names use '_to_' in place of '->'.
void emit_reports(std::span<const ExperimentResult> results, const std::filesystem::path& out_dir, bool heatmaps = true,
                  const ExperimentConfig* config = nullptr);

}  // namespace dtsda::eval
