#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kraw/data.hpp"
#include "kraw/nn.hpp"

namespace kraw::train {

/// Adam with coupled L2 weight decay (wd * theta added to the gradient).
struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

struct AdamState {
  int step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One Adam update of a single scalar at step t (1-based).
void adam_update(double& value, double grad, double& m, double& v, int t, const AdamConfig& cfg,
                 bool decay);

/// Updates every parameter from its `grad`. Parameters with decay == false
/// (p_raw, LayerNorm gains/offsets) are not weight-decayed.
void adam_step(std::span<nn::Parameter* const> params, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  int epochs = 200;
  std::uint64_t seed = 0;
  int eval_every = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  /// False when accuracies were carried over from the last evaluated epoch.
  bool evaluated = true;
  std::vector<double> shape_p;  // per Krawtchouk layer
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  double initial_train_acc = 0.0;
  double initial_val_acc = 0.0;
  double initial_test_acc = 0.0;
  double final_test_acc = 0.0;
  double best_val_acc = 0.0;
  int best_val_epoch = 0;  // 0 means the initial parameters
  double best_val_test_acc = 0.0;
  std::vector<double> final_shape_p;
  double wall_clock_seconds = 0.0;

  /// One row per epoch. Wall-clock time is excluded so the text is a pure
  /// function of seed and configuration.
  std::string to_csv() const;
};

/// Raised when the loss or an activation becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fraction of `rows` whose argmax logit equals the label. Ties resolve to
/// the lowest class index.
double accuracy(const Matrix& logits, const std::vector<int>& labels,
                std::span<const std::size_t> rows);
double evaluate(const nn::Model& model, const data::Dataset& dataset,
                std::span<const std::size_t> rows);

/// Full-batch training with masked softmax cross-entropy on split.train.
/// Deterministic in config.seed.
RunRecord train(nn::Model& model, const data::Dataset& dataset, const data::Split& split,
                const TrainConfig& config);

struct KFoldResult {
  std::vector<RunRecord> runs;
  double mean_final_test = 0.0;
  double std_final_test = 0.0;  // population
  double mean_best_val_test = 0.0;
  double std_best_val_test = 0.0;
};

using ModelFactory = std::function<nn::Model(std::uint64_t seed)>;

/// Trains a fresh model on each of the dataset's splits. Fold i uses seed
/// config.seed + i. Folds run on up to `threads` threads.
KFoldResult kfold_run(const ModelFactory& factory, const data::Dataset& dataset,
                      std::size_t folds, const TrainConfig& config, unsigned threads = 1);

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace kraw::train
