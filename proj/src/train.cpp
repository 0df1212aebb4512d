#include "sec/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sec/error.hpp"
#include "sec/io.hpp"
#include "sec/linalg.hpp"
#include "sec/random.hpp"

namespace sec {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train: lambda must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
  if (hidden < 1 || predictor_hidden < 1) throw ConfigError("train: layer widths must be >= 1");
}

namespace {
constexpr double kProbFloor = 1e-12;
constexpr double kJitterScale = 1e-8;
}  // namespace

LossWithGrad bc_loss_continuous(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "bc_loss_continuous");
  const double b = static_cast<double>(pred.rows());
  LossWithGrad out{0.0, Matrix(pred.rows(), pred.cols())};
  auto p = pred.values();
  auto t = target.values();
  auto g = out.grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    out.loss += d * d;
    g[i] = 2.0 * d / b;
  }
  out.loss /= b;
  return out;
}

LossWithGrad bc_loss_discrete(const Matrix& probs, std::span<const std::size_t> targets) {
  if (targets.size() != probs.rows()) {
    throw ContractError("bc_loss_discrete: " + std::to_string(targets.size()) + " targets for " +
                        probs.shape_string() + " probabilities");
  }
  const double b = static_cast<double>(probs.rows());
  LossWithGrad out{0.0, probs};
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const std::size_t t = targets[i];
    if (t >= probs.cols()) {
      throw ContractError("bc_loss_discrete: target " + std::to_string(t) + " outside " +
                          std::to_string(probs.cols()) + " classes");
    }
    out.loss -= std::log(std::max(probs(i, t), kProbFloor));
    out.grad(i, t) -= 1.0;
  }
  out.loss /= b;
  for (double& g : out.grad.values()) g /= b;
  return out;
}

LossWithGrad aer_loss_continuous(const Matrix& actions, bool* jittered) {
  if (actions.rows() < 2) throw ContractError("aer_loss_continuous: batch size must be >= 2");
  if (jittered != nullptr) *jittered = false;
  try {
    NuclearNormWithGrad nn = nuclear_norm_with_grad(actions);
    return {-nn.value, -1.0 * nn.grad};
  } catch (const DegenerateSubgradientError&) {
    // Retry below.
  }
  double scale = 1.0;
  for (double x : actions.values()) scale = std::max(scale, std::abs(x));
  Matrix perturbed = actions;
  const std::size_t r = std::min(actions.rows(), actions.cols());
  for (std::size_t i = 0; i < r; ++i) perturbed(i, i) += kJitterScale * scale;
  try {
    const double value = nuclear_norm(actions);
    NuclearNormWithGrad nn = nuclear_norm_with_grad(perturbed);
    if (jittered != nullptr) *jittered = true;
    return {-value, -1.0 * nn.grad};
  } catch (const DegenerateSubgradientError& e) {
    throw NumericalError(std::string("aer_loss_continuous: rank-deficient action batch after jitter: ") + e.what());
  }
}

LossWithGrad aer_loss_discrete(const Matrix& probs) {
  if (probs.rows() < 1) throw ContractError("aer_loss_discrete: empty batch");
  const double b = static_cast<double>(probs.rows());
  Matrix mean = column_sums(probs);
  LossWithGrad out{0.0, Matrix(probs.rows(), probs.cols())};
  std::vector<double> coef(probs.cols());
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    const double pj = mean(0, j) / b;
    const double logp = std::log(std::max(pj, kProbFloor));
    out.loss += pj * logp;
    coef[j] = (logp + 1.0) / b;
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) std::copy(coef.begin(), coef.end(), out.grad.row(i).begin());
  return out;
}

ObjectiveResult total_loss(const PolicyParams& policy, std::span<const std::optional<LevelBatch>> batches,
                           const TrainConfig& cfg) {
  if (batches.size() != policy.levels()) {
    throw ContractError("total_loss: " + std::to_string(batches.size()) + " batch slots for K=" +
                        std::to_string(policy.levels()));
  }
  ObjectiveResult res{{}, PolicyGradients::zeros_like(policy)};
  const bool regularize = cfg.lambda > 0.0;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    LevelLoss ll;
    ll.level = Level::from_index(k);
    if (!batches[k] || batches[k]->size() == 0) {
      res.report.missing.push_back(ll.level);
      res.report.levels.push_back(ll);
      continue;
    }
    const LevelBatch& batch = *batches[k];
    ll.present = true;
    const PolicyForward fwd = forward(policy, ll.level, batch.states);
    Matrix grad_head;
    if (policy.head() == HeadKind::kContinuous) {
      LossWithGrad bc = bc_loss_continuous(fwd.output, batch.actions);
      ll.bc = bc.loss;
      grad_head = std::move(bc.grad);
      if (regularize) {
        LossWithGrad aer = aer_loss_continuous(fwd.output, &ll.jittered);
        ll.aer = aer.loss;
        grad_head += cfg.lambda * aer.grad;
      }
    } else {
      LossWithGrad bc = bc_loss_discrete(fwd.output, batch.items);
      ll.bc = bc.loss;
      grad_head = std::move(bc.grad);
      if (regularize) {
        LossWithGrad aer = aer_loss_discrete(fwd.output);
        ll.aer = aer.loss;
        grad_head += cfg.lambda * softmax_backward(fwd.output, aer.grad);
      }
    }
    ll.total = ll.bc + cfg.lambda * ll.aer;
    PolicyGradients g = backward(policy, fwd, grad_head);
    ll.grad_norm = g.norm();
    res.grads += g;
    res.report.total += ll.total;
    res.report.levels.push_back(ll);
  }
  return res;
}

void adam_update(std::span<double> param, std::span<const double> grad, AdamSlot& slot, const AdamHyper& h) {
  if (param.size() != grad.size()) throw ContractError("adam_update: parameter/gradient size mismatch");
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  ++slot.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(slot.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(slot.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = h.beta1 * slot.m[i] + (1.0 - h.beta1) * grad[i];
    slot.v[i] = h.beta2 * slot.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = slot.m[i] / c1;
    const double vhat = slot.v[i] / c2;
    param[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
  }
}

StepStatus adam_step(PolicyParams& params, const PolicyGradients& grads, AdamState& state, const AdamHyper& h) {
  if (!grads.all_finite()) return StepStatus::kAbortedNonFinite;
  std::vector<Matrix*> tensors = parameter_tensors(params);
  if (state.slots.empty()) state.slots.resize(tensors.size());
  if (state.slots.size() != tensors.size()) throw ContractError("adam_step: optimizer state does not match params");

  std::size_t slot = 0;
  auto apply = [&](const std::vector<DenseLayer>& g_layers, bool active) {
    for (const auto& gl : g_layers) {
      for (const Matrix* g : {&gl.weight, &gl.bias}) {
        if (active) adam_update(tensors[slot]->values(), g->values(), state.slots[slot], h);
        ++slot;
      }
    }
  };
  apply(grads.encoder.layers, true);
  for (std::size_t k = 0; k < grads.predictors.size(); ++k) apply(grads.predictors[k].layers, grads.touched[k]);
  return StepStatus::kApplied;
}

// ---- training log ------------------------------------------------------------

std::string TrainingLog::to_csv() const {
  CsvTable t;
  t.header = {"epoch", "level", "bc_loss", "aer_loss", "total", "grad_norm"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.epoch), std::to_string(r.level.value), format_double(r.bc_loss),
                      format_double(r.aer_loss), format_double(r.total), format_double(r.grad_norm)});
  }
  return t.to_string();
}

TrainingLog TrainingLog::from_csv(const std::string& text) {
  const CsvTable t = CsvTable::parse(text);
  const std::size_t ce = t.column("epoch"), cl = t.column("level"), cb = t.column("bc_loss"),
                    ca = t.column("aer_loss"), ct = t.column("total"), cg = t.column("grad_norm");
  TrainingLog log;
  for (const auto& row : t.rows) {
    log.rows.push_back({static_cast<std::size_t>(std::stoul(row[ce])), Level{std::stoi(row[cl])},
                        parse_double(row[cb]), parse_double(row[ca]), parse_double(row[ct]), parse_double(row[cg])});
  }
  return log;
}

// ---- fit -------------------------------------------------------------------

LevelBatch gather_batch(const LevelData& level, HeadKind kind, std::span<const std::size_t> idx) {
  LevelBatch b;
  b.states = Matrix(idx.size(), level.states.cols());
  if (kind == HeadKind::kContinuous) b.actions = Matrix(idx.size(), level.actions.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto s = level.states.row(idx[r]);
    std::copy(s.begin(), s.end(), b.states.row(r).begin());
    if (kind == HeadKind::kContinuous) {
      auto a = level.actions.row(idx[r]);
      std::copy(a.begin(), a.end(), b.actions.row(r).begin());
    } else {
      b.items.push_back(level.items[idx[r]]);
    }
  }
  return b;
}

namespace {

// Consecutive batches of `batch_size`; a trailing remainder of one row is
// dropped because the regularizer needs at least two rows.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void check_dataset(const LeveledDataset& data, const TrainConfig& cfg) {
  if (data.levels.empty()) throw DataError("fit: dataset has no levels");
  if (data.kind != cfg.action_kind) throw ConfigError("fit: dataset action kind does not match config");
  for (std::size_t k = 0; k < data.levels.size(); ++k) {
    if (data.levels[k].size() < 2) {
      throw DataError("fit: level " + std::to_string(k + 1) + " has " + std::to_string(data.levels[k].size()) +
                      " pairs; every level needs at least 2");
    }
  }
}

}  // namespace

std::vector<LevelLoss> evaluate_objective(const PolicyParams& policy, const LeveledDataset& data,
                                          const TrainConfig& cfg) {
  std::vector<LevelLoss> out;
  for (std::size_t k = 0; k < data.levels.size(); ++k) {
    LevelLoss acc;
    acc.level = Level::from_index(k);
    acc.present = true;
    const auto batches = make_batches(iota_n(data.levels[k].size()), cfg.batch_size);
    for (const auto& idx : batches) {
      const LevelBatch b = gather_batch(data.levels[k], data.kind, idx);
      const PolicyForward fwd = forward(policy, acc.level, b.states);
      if (policy.head() == HeadKind::kContinuous) {
        acc.bc += bc_loss_continuous(fwd.output, b.actions).loss;
        if (cfg.lambda > 0.0) acc.aer -= nuclear_norm(fwd.output);
      } else {
        acc.bc += bc_loss_discrete(fwd.output, b.items).loss;
        if (cfg.lambda > 0.0) acc.aer += aer_loss_discrete(fwd.output).loss;
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    acc.bc /= n;
    acc.aer /= n;
    acc.total = acc.bc + cfg.lambda * acc.aer;
    out.push_back(acc);
  }
  return out;
}

FitResult fit(const LeveledDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  check_dataset(data, cfg);
  const std::size_t levels = data.levels.size();

  PolicyShape shape;
  shape.state_dim = data.state_dim();
  shape.hidden = cfg.hidden;
  shape.predictor_hidden = cfg.predictor_hidden;
  shape.head = cfg.action_kind;
  shape.levels = levels;
  if (cfg.action_kind == HeadKind::kContinuous) {
    shape.action_dim = data.levels.front().actions.cols();
  } else {
    shape.classes = cfg.classes ? cfg.classes : data.action_dim();
    if (data.action_dim() > shape.classes) {
      throw DataError("fit: item index " + std::to_string(data.action_dim() - 1) + " outside " +
                      std::to_string(shape.classes) + " classes");
    }
  }

  FitResult res{init_policy(shape, cfg.seed), {}};
  AdamState adam;
  const AdamHyper hyper = AdamHyper::from(cfg);

  auto log_epoch = [&](std::size_t epoch, const std::vector<double>& grad_norms) {
    const auto losses = evaluate_objective(res.policy, data, cfg);
    for (std::size_t k = 0; k < levels; ++k) {
      res.log.rows.push_back(
          {epoch, losses[k].level, losses[k].bc, losses[k].aer, losses[k].total, grad_norms[k]});
    }
    if (on_epoch) on_epoch(epoch, res.policy);
  };
  log_epoch(0, std::vector<double>(levels, 0.0));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::vector<std::vector<std::size_t>>> level_batches(levels);
    std::size_t rounds = 0;
    for (std::size_t k = 0; k < levels; ++k) {
      std::vector<std::size_t> order = iota_n(data.levels[k].size());
      Engine rng = make_engine(cfg.seed, {stream::kShuffle, epoch, k});
      std::shuffle(order.begin(), order.end(), rng);
      level_batches[k] = make_batches(order, cfg.batch_size);
      rounds = std::max(rounds, level_batches[k].size());
    }
    std::vector<double> grad_sum(levels, 0.0);
    std::vector<std::size_t> grad_count(levels, 0);
    for (std::size_t r = 0; r < rounds; ++r) {
      std::vector<std::optional<LevelBatch>> slots(levels);
      for (std::size_t k = 0; k < levels; ++k)
        if (r < level_batches[k].size()) slots[k] = gather_batch(data.levels[k], data.kind, level_batches[k][r]);
      ObjectiveResult obj = total_loss(res.policy, slots, cfg);
      for (const auto& ll : obj.report.levels) {
        if (!ll.present) continue;
        grad_sum[ll.level.index()] += ll.grad_norm;
        ++grad_count[ll.level.index()];
        if (ll.jittered) ++res.log.jittered_batches;
      }
      if (adam_step(res.policy, obj.grads, adam, hyper) == StepStatus::kAbortedNonFinite) ++res.log.aborted_steps;
    }
    std::vector<double> grad_mean(levels, 0.0);
    for (std::size_t k = 0; k < levels; ++k)
      if (grad_count[k]) grad_mean[k] = grad_sum[k] / static_cast<double>(grad_count[k]);
    log_epoch(epoch, grad_mean);
  }
  return res;
}

double action_diversity(const PolicyParams& policy, const LeveledDataset& data, std::size_t batch_size) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < data.levels.size(); ++k) {
    for (const auto& idx : make_batches(iota_n(data.levels[k].size()), batch_size)) {
      const LevelBatch b = gather_batch(data.levels[k], data.kind, idx);
      const PolicyForward fwd = forward(policy, Level::from_index(k), b.states);
      if (policy.head() == HeadKind::kContinuous) {
        sum += nuclear_norm(fwd.output);
      } else {
        sum += -aer_loss_discrete(fwd.output).loss;
      }
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace sec
