#include "sec/recommenders.hpp"

#include <algorithm>

#include "sec/error.hpp"

namespace sec {

void check_policy_compatible(const PolicyParams& policy, const SimConfig& cfg) {
  if (policy.state_dim() != cfg.state_dim) {
    throw ContractError("policy expects states of width " + std::to_string(policy.state_dim()) +
                        ", environment emits " + std::to_string(cfg.state_dim));
  }
  if (policy.head() != cfg.action_kind) {
    throw ContractError("policy head is " + to_string(policy.head()) + ", environment expects " +
                        to_string(cfg.action_kind));
  }
  const std::size_t want = cfg.action_kind == HeadKind::kContinuous ? cfg.action_dim : cfg.classes;
  if (policy.action_dim() != want) {
    throw ContractError("policy emits " + std::to_string(policy.action_dim()) + " action entries, environment expects " +
                        std::to_string(want));
  }
}

namespace {

StepAction to_step_action(const PolicyParams& policy, const Matrix& out) {
  auto row = out.row(0);
  if (policy.head() == HeadKind::kContinuous) return std::vector<double>(row.begin(), row.end());
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Matrix single_row(std::span<const double> state) {
  return Matrix(1, state.size(), std::vector<double>(state.begin(), state.end()));
}

}  // namespace

SecRecommender::SecRecommender(const PolicyParams& policy, const CentroidBank& bank)
    : policy_(&policy), bank_(&bank), historical_(Level::from_index(bank.levels() - 1)),
      level_counts_(bank.levels(), 0) {
  bank.validate();
  if (bank.levels() != policy.levels()) throw ContractError("SecRecommender: bank and policy disagree on K");
}

void SecRecommender::check_compatible(const SimConfig& cfg) const { check_policy_compatible(*policy_, cfg); }

void SecRecommender::begin_user(const Trajectory& history) {
  historical_ = bank_->rule ? bank_->rule->historical_level(history) : Level::from_index(bank_->levels() - 1);
}

StepAction SecRecommender::act(const StepContext& ctx) {
  const Recommendation rec = recommend(ctx.state, *bank_, *policy_, historical_);
  ++level_counts_[rec.trace.final_level.index()];
  fallbacks_ += rec.trace.fallback_used;
  if (rec.item) return *rec.item;
  return rec.action;
}

FixedLevelRecommender::FixedLevelRecommender(const PolicyParams& policy, Level level) : policy_(&policy), level_(level) {
  if (level.value < 1 || level.index() >= policy.levels()) {
    throw ContractError("FixedLevelRecommender: level " + std::to_string(level.value) + " outside 1.." +
                        std::to_string(policy.levels()));
  }
}

void FixedLevelRecommender::check_compatible(const SimConfig& cfg) const { check_policy_compatible(*policy_, cfg); }

StepAction FixedLevelRecommender::act(const StepContext& ctx) {
  const PolicyForward fwd = forward(*policy_, level_, single_row(ctx.state));
  return to_step_action(*policy_, fwd.output);
}

}  // namespace sec
