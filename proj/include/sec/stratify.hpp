#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sec/matrix.hpp"
#include "sec/policy.hpp"

namespace sec {

// A continuous action embedding or a discrete item index.
using StepAction = std::variant<std::vector<double>, std::size_t>;

struct Step {
  std::vector<double> state;
  StepAction action;
  std::map<std::string, double> signals;  // click, long_view, like, ...
  friend bool operator==(const Step&, const Step&) = default;
};

// One user's interaction record plus retention outcomes.
struct Trajectory {
  std::string user_id;
  std::vector<Step> steps;
  std::vector<double> return_times;  // inter-session gaps in days
  int active_days = 0;
  std::optional<int> window_days;  // observation window, when known
  std::optional<int> archetype;    // simulator ground truth, informational only

  HeadKind action_kind() const;
  // Throws DataError describing the first violated invariant.
  void validate() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

std::string trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const std::string& line);
void write_trajectories(const std::string& path, std::span<const Trajectory> ts);
std::vector<Trajectory> read_trajectories(const std::string& path);

enum class RetentionMode {
  kActiveDays,  // score = active days in the window
  kReturnTime,  // score = -mean(return_times)
};

std::string to_string(RetentionMode mode);
RetentionMode retention_mode_from_string(const std::string& name);

// Higher is better in both modes.
double retention_score(const Trajectory& t, RetentionMode mode);

// Return-time mode keeps users with mean return time <= threshold (users with
// no recorded returns are not experts). Active-days mode keeps users with
// active_days >= threshold.
bool is_expert(const Trajectory& t, double threshold, RetentionMode mode);
std::vector<Trajectory> select_experts(std::span<const Trajectory> ts, double threshold, RetentionMode mode);

// Maps retention scores to levels. boundaries[j] is the smallest score that
// still belongs to level j+1; scores equal to a boundary take the better level.
struct StratificationRule {
  RetentionMode mode = RetentionMode::kReturnTime;
  double expert_threshold = 3.0;
  std::size_t levels = 1;
  std::vector<double> boundaries;  // levels - 1 entries, nonincreasing

  Level level_for_score(double score) const;
  // Historical retention level r_h: the stratum the user's own history falls
  // into, or the weakest level K for non-experts.
  Level historical_level(const Trajectory& t) const;
};

// State-action pairs of one expert level.
struct LevelData {
  Matrix states;                  // n×d_s
  Matrix actions;                 // n×d, continuous head
  std::vector<std::size_t> items; // n, discrete head
  std::vector<std::size_t> pair_user;  // index into LeveledDataset::users
  std::size_t size() const { return states.rows(); }
};

struct LeveledDataset {
  HeadKind kind = HeadKind::kContinuous;
  StratificationRule rule;
  std::vector<LevelData> levels;  // levels[level.index()]
  std::vector<std::string> users;
  // user id -> level; nullopt for non-experts.
  std::map<std::string, std::optional<Level>> level_of_user;

  std::size_t level_count() const { return levels.size(); }
  std::size_t state_dim() const { return levels.front().states.cols(); }
  std::size_t action_dim() const;
};

// Sorts experts by retention score, cuts at the (1/k, 2/k, ...) quantiles
// and emits every (state, action) pair of a user into that user's level.
// Rejects fewer experts than levels.
LeveledDataset stratify(std::span<const Trajectory> experts, std::size_t k, RetentionMode mode,
                        double expert_threshold = 3.0);

// select_experts followed by stratify; non-experts are recorded in
// level_of_user with no level and contribute no pairs.
LeveledDataset build_leveled_dataset(std::span<const Trajectory> all, std::size_t k, RetentionMode mode,
                                     double expert_threshold);

// Manifest JSON plus one CSV pair file per level inside `dir`.
void write_leveled_dataset(const std::string& dir, const LeveledDataset& ds);
LeveledDataset read_leveled_dataset(const std::string& dir);

std::string rule_to_json(const StratificationRule& rule);
StratificationRule rule_from_json(const std::string& text);

}  // namespace sec
