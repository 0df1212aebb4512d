#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sec/matrix.hpp"
#include "sec/policy.hpp"
#include "sec/stratify.hpp"

namespace sec {

struct TrainConfig {
  double lambda = 0.01;
  std::size_t batch_size = 128;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  HeadKind action_kind = HeadKind::kContinuous;
  std::size_t hidden = 32;
  std::size_t predictor_hidden = 32;
  std::size_t classes = 0;  // discrete head width, 0 infers it from the data

  // Throws ConfigError on lambda < 0, learning_rate <= 0 or batch_size < 2.
  void validate() const;
};

struct LossWithGrad {
  double loss = 0.0;
  Matrix grad;
};

// Mean over the batch of squared Euclidean distances; grad = 2(pred - target)/B.
LossWithGrad bc_loss_continuous(const Matrix& pred, const Matrix& target);

// Mean negative log-likelihood with probabilities clamped at 1e-12. The
// gradient is taken with respect to the logits: (probs - onehot)/B.
LossWithGrad bc_loss_discrete(const Matrix& probs, std::span<const std::size_t> targets);

// Negative nuclear norm of the B×d action matrix; gradient -U·Vᵀ. A
// rank-deficient batch is retried once with 1e-8-scale jitter; `jittered`
// reports whether that happened.
LossWithGrad aer_loss_continuous(const Matrix& actions, bool* jittered = nullptr);

// Negative entropy of the batch-mean class distribution p̄; the gradient is
// with respect to the probabilities, (log p̄_j + 1)/B.
LossWithGrad aer_loss_discrete(const Matrix& probs);

struct LevelBatch {
  Matrix states;
  Matrix actions;                  // continuous targets
  std::vector<std::size_t> items;  // discrete targets
  std::size_t size() const { return states.rows(); }
};

struct LevelLoss {
  Level level;
  bool present = false;
  double bc = 0.0;
  double aer = 0.0;
  double total = 0.0;      // bc + lambda * aer
  double grad_norm = 0.0;  // norm of this level's gradient contribution
  bool jittered = false;
};

struct LossReport {
  std::vector<LevelLoss> levels;
  double total = 0.0;  // sum over present levels, accumulated in level order
  std::vector<Level> missing;
};

struct ObjectiveResult {
  LossReport report;
  PolicyGradients grads;
};

// Per-level BC + lambda * AER, gradients summed into one set. Levels whose
// batch is absent are skipped and listed in report.missing.
ObjectiveResult total_loss(const PolicyParams& policy, std::span<const std::optional<LevelBatch>> batches,
                           const TrainConfig& cfg);

struct AdamHyper {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  static AdamHyper from(const TrainConfig& cfg) {
    return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  }
};

struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// Bias-corrected Adam update of one tensor.
void adam_update(std::span<double> param, std::span<const double> grad, AdamSlot& slot, const AdamHyper& h);

struct AdamState {
  std::vector<AdamSlot> slots;  // one per tensor, parameter_tensors() order
};

enum class StepStatus { kApplied, kAbortedNonFinite };

// Updates the encoder and every touched predictor; untouched predictors and
// their moments are left alone. Non-finite gradients abort the whole step.
StepStatus adam_step(PolicyParams& params, const PolicyGradients& grads, AdamState& state, const AdamHyper& h);

struct TrainingLogRow {
  std::size_t epoch = 0;
  Level level;
  double bc_loss = 0.0;
  double aer_loss = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  std::size_t aborted_steps = 0;
  std::size_t jittered_batches = 0;

  std::string to_csv() const;
  static TrainingLog from_csv(const std::string& text);
};

// Objective over a level's data in fixed consecutive batches (no shuffling),
// averaged over batches. Used for the per-epoch log.
std::vector<LevelLoss> evaluate_objective(const PolicyParams& policy, const LeveledDataset& data,
                                          const TrainConfig& cfg);

struct FitResult {
  PolicyParams policy;
  TrainingLog log;
};

// Called with (epoch, params) after initialisation (epoch 0) and after every epoch.
using EpochCallback = std::function<void(std::size_t, const PolicyParams&)>;

// Minibatch Adam over all levels. Each round takes one shuffled batch per
// level in level order and applies a single step on the summed objective.
FitResult fit(const LeveledDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean over fixed consecutive batches of the nuclear norm of predicted
// actions (continuous) or entropy of batch-mean class probabilities (discrete).
double action_diversity(const PolicyParams& policy, const LeveledDataset& data, std::size_t batch_size);

// Gathers rows `idx` of a level into a batch.
LevelBatch gather_batch(const LevelData& level, HeadKind kind, std::span<const std::size_t> idx);

}  // namespace sec
