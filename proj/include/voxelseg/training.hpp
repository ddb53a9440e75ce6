#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "voxelseg/augment.hpp"
#include "voxelseg/patch_engine.hpp"
#include "voxelseg/unet3d.hpp"

namespace voxelseg {

struct TrainConfig {
  double alpha = 0.5;  // Tversky weight on false negatives
  double beta = 0.5;   // Tversky weight on false positives
  double initial_lr = 1e-3;
  double lr_factor = 0.1;
  int lr_patience = 15;
  double min_lr = 1e-5;
  int es_patience = 100;
  int max_epochs = 1000;
  int batches_per_epoch = 150;
  std::size_t batch_size = 2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double loss_prob_floor = 1e-7;
  double tversky_smooth = 1e-5;
  int checkpoint_every = 50;

  void validate() const;
};

// ---- losses -------------------------------------------------------------
// probs and onehot are (b, x, y, z, C); every loss returns a one-element
// tensor and records its backward pass on the tape when given one.

/// C - sum_c (TP_c + s) / (TP_c + alpha FN_c + beta FP_c + s), with soft
/// counts summed over every voxel of the batch.
template <typename T>
nn::TensorPtr<T> tversky_loss(nn::Tape<T>* tape, const nn::TensorPtr<T>& probs, const nn::TensorPtr<T>& onehot,
                              double alpha, double beta, double smooth);

/// Mean over voxels of -sum_c y log(clamp(p, floor, 1 - floor)).
template <typename T>
nn::TensorPtr<T> cce_loss(nn::Tape<T>* tape, const nn::TensorPtr<T>& probs, const nn::TensorPtr<T>& onehot,
                          double floor);

template <typename T>
nn::TensorPtr<T> total_loss(nn::Tape<T>* tape, const nn::TensorPtr<T>& probs, const nn::TensorPtr<T>& onehot,
                            const TrainConfig& cfg);

// ---- optimiser and schedules ----------------------------------------------

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m, v;
  std::uint64_t t = 0;
  double lr = 1e-3;
};

/// Bias-corrected Adam over `params` using their accumulated gradients.
/// Throws NonFiniteGradient (and leaves everything untouched) when any
/// gradient is NaN or infinite.
template <typename T>
void adam_step(const std::vector<nn::TensorPtr<T>>& params, OptimizerState<T>& state, const TrainConfig& cfg);

/// Multiplies the learning rate by `factor` (floored at min_lr) after
/// `patience` consecutive epochs without a strictly lower training loss;
/// the counter restarts after every reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double min_lr)
      : lr_(lr), factor_(factor), min_lr_(min_lr), patience_(patience) {}

  double update(double epoch_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, min_lr_;
  int patience_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// True once `patience` consecutive epochs passed without a strict improvement.
  bool update(double epoch_loss);

 private:
  int patience_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Learning rate after replaying a whole loss history through PlateauScheduler.
double lr_on_plateau(const std::vector<double>& train_loss_history, const TrainConfig& cfg);
bool early_stop(const std::vector<double>& train_loss_history, int es_patience);

// ---- fitting --------------------------------------------------------------

struct FitLog {
  struct Row {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when there is no validation data
    double lr = 0.0;
    double seconds = 0.0;
  };
  std::vector<Row> rows;

  /// `epoch,train_loss,val_loss,lr,seconds` with a header line.
  std::string to_csv() const;
};

struct FitOptions {
  /// When set, checkpoints go to `<dir>/epoch_<n>` every cfg.checkpoint_every epochs.
  std::filesystem::path checkpoint_dir;
  std::function<void(const FitLog::Row&)> on_epoch;
};

struct FitResult {
  Model<float> model;
  FitLog log;
  bool early_stopped = false;
};

/// Epoch = batches_per_epoch generated batches, each followed by forward,
/// total loss, backward and an Adam step. After every epoch the validation
/// loss is measured on max(1, batches_per_epoch / 10) augmented random
/// validation batches (infer mode) and the plateau and early-stopping rules
/// see the mean training loss. Batch b of epoch e draws from
/// derive(seed, {e, b, 0}); validation batch i from derive(seed, {e, i, 1}).
FitResult fit(Model<float> model, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg, const PatchGridConfig& patch, const AugmentConfig& aug, std::uint64_t seed,
              const FitOptions& options = {});

}  // namespace voxelseg
