#pragma once

#include <vector>

#include "sec/policy.hpp"
#include "sec/select.hpp"
#include "sec/simenv.hpp"

namespace sec {

// Full inference path: encode, route through the centroid bank, cap at the
// user's historical level and act with the chosen predictor. Discrete heads
// recommend the argmax item.
class SecRecommender : public Recommender {
 public:
  SecRecommender(const PolicyParams& policy, const CentroidBank& bank);
  std::string name() const override { return "sec_adaptive"; }
  void check_compatible(const SimConfig& cfg) const override;
  void begin_user(const Trajectory& history) override;
  StepAction act(const StepContext& ctx) override;

  // Steps served by each final level, and steps that used the argmin fallback.
  const std::vector<std::size_t>& level_counts() const { return level_counts_; }
  std::size_t fallback_count() const { return fallbacks_; }

 private:
  const PolicyParams* policy_;
  const CentroidBank* bank_;
  Level historical_;
  std::vector<std::size_t> level_counts_;
  std::size_t fallbacks_ = 0;
};

// Always acts with one level's predictor.
class FixedLevelRecommender : public Recommender {
 public:
  FixedLevelRecommender(const PolicyParams& policy, Level level);
  std::string name() const override { return "level_" + std::to_string(level_.value); }
  void check_compatible(const SimConfig& cfg) const override;
  StepAction act(const StepContext& ctx) override;

 private:
  const PolicyParams* policy_;
  Level level_;
};

// Throws ContractError when the policy's dimensions or head differ from the environment's.
void check_policy_compatible(const PolicyParams& policy, const SimConfig& cfg);

}  // namespace sec
