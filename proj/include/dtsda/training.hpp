#pragma once

// Three-phase adversarial training loop (fine-grained -> relabel ->
// temporal-state -> cross-user per epoch) and the DANN / source-only
// baselines built from the same parts.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dtsda/data.hpp"
#include "dtsda/networks.hpp"

namespace dtsda::train {

using ad::Tensor;

struct TrainConfig {
  std::size_t states = 3;
  double gamma = 0.2;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double lambda_max = 1.0;
  std::uint64_t seed = 0;
  bool update_extractor_in_phases_2_3 = false;

  void validate() const;
  /// Applies recognised keys (states, gamma, epochs, batch_size,
  /// learning_rate, lambda_max, seed, update_extractor_in_phases_2_3) and
  /// returns the keys it did not recognise.
  std::vector<std::string> apply(const std::map<std::string, std::string>& kv);
};

/// lambda_max · (2 / (1 + e^{-10 p}) - 1), p in [0, 1].
double lambda_schedule(double progress, double lambda_max = 1.0);

struct EpochState {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double loss_f = 0.0;
  double loss_t = 0.0;
  double loss_c = 0.0;
  double ts_change_fraction = 0.0;
  double wall_seconds = 0.0;
  std::size_t source_rows = 0;  // summed over phase-1 batches
  std::size_t target_rows = 0;
};

struct TrainingLog {
  std::vector<EpochState> epochs;
  /// epoch,lambda,L_f,L_t,L_c,ts_change_fraction,wall_seconds
  std::string to_csv() const;
};

class DtsdaTrainer {
 public:
  /// Copies the dataset, resets every ts to 0 and seeds the model.
  DtsdaTrainer(const data::WindowedDataset& dataset, TrainConfig config);

  EpochState train_epoch();
  TrainingLog fit();

  nn::DtsdaModel& model() { return *model_; }
  std::unique_ptr<nn::DtsdaModel> release_model();
  const data::WindowedDataset& dataset() const { return dataset_; }
  std::vector<int> pseudo_labels() const;
  std::size_t epochs_run() const { return epoch_; }

  /// Features from the current extractor in eval mode, [windows × dim].
  Tensor extract_all();

  // The four steps of train_epoch, in order. Each returns its mean batch loss
  // (relabel returns the ts change fraction).
  double phase_fine_grained(EpochState& st);
  double relabel(const Tensor& features);
  double phase_temporal(const Tensor& features, double lambda);
  double phase_cross_user(const Tensor& features, double lambda);

 private:
  std::vector<std::vector<std::size_t>> shuffled_batches();
  Tensor rows_of(const Tensor& features, std::span<const std::size_t> rows) const;

  data::WindowedDataset dataset_;
  TrainConfig config_;
  std::unique_ptr<nn::DtsdaModel> model_;
  std::mt19937_64 rng_;
  std::unique_ptr<ad::Optimizer> opt_fine_, opt_temporal_, opt_cross_;
  std::size_t epoch_ = 0;
};

struct FitResult {
  std::unique_ptr<nn::Model> model;
  TrainingLog log;
};

FitResult fit_dtsda(const data::WindowedDataset& dataset, const TrainConfig& config);

/// DANN: classification loss on source rows plus a reversed domain loss, over
/// domain-mixed batches. Source-only is the same loop with lambda fixed at 0.
FitResult fit_baseline(const data::WindowedDataset& dataset, const TrainConfig& config, nn::ModelKind kind);

FitResult fit(const data::WindowedDataset& dataset, const TrainConfig& config, nn::ModelKind kind);

}  // namespace dtsda::train
