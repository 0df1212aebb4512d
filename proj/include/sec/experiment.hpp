#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sec/policy.hpp"
#include "sec/select.hpp"
#include "sec/simenv.hpp"
#include "sec/stratify.hpp"
#include "sec/train.hpp"

namespace sec {

inline constexpr const char* kToolVersion = "sec " SEC_VERSION;

struct StratSection {
  RetentionMode mode = RetentionMode::kReturnTime;
  double expert_threshold = 3.0;
  std::size_t k_levels = 3;
};

struct SelectSection {
  std::size_t clusters_per_level = 32;
  std::string threshold_rule = "half_mean_pairwise";  // the only rule implemented
};

struct EvalSection {
  std::size_t episodes = 1000;
  std::uint64_t seed = 1001;
};

struct PathsSection {
  std::string trajectories;  // gen-data output, train input
  std::string checkpoint;    // train output, build-centroids / evaluate input
  std::string bank;          // build-centroids output, evaluate input
};

struct ExperimentConfig {
  SimConfig sim;
  TrainConfig train;
  StratSection strat;
  SelectSection select;
  EvalSection eval;
  PathsSection paths;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};
  std::vector<double> sweep_grid{0.0, 0.001, 0.01, 0.1, 1.0};
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3, 4, 5};
  std::vector<std::string> report_formats{"csv", "json"};

  // Copies the shared action settings from `sim` into `train` and checks
  // every section. Throws ConfigError.
  void resolve();
};

// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// ---- pipeline ----------------------------------------------------------------

struct TrainedArtifacts {
  LeveledDataset data;
  PolicyParams policy;
  TrainingLog log;
  CentroidBank bank;
};

// stratify -> fit -> build_centroids with K levels, weight lambda and one seed.
TrainedArtifacts train_variant(const ExperimentConfig& cfg, std::span<const Trajectory> trajectories,
                               std::size_t k_levels, double lambda, std::uint64_t seed);

// Adaptive SEC recommender on fresh users; the evaluation seed depends only
// on cfg.eval.seed and `pair_seed`, so variants sharing a pair seed see the
// same users and environment noise.
EvalReport evaluate_sec(const ExperimentConfig& cfg, const TrainedArtifacts& art, std::uint64_t pair_seed);

struct ScoreHistogram {
  std::vector<double> edges;  // bins [edges[i], edges[i+1]), the last one closed
  std::vector<std::size_t> counts;
  std::size_t skipped = 0;    // users without a defined metric
};

// Unit-width bins over the per-user retention metric: mean return time or active days.
ScoreHistogram score_histogram(std::span<const Trajectory> ts, RetentionMode mode);

// ---- commands ------------------------------------------------------------------

struct CommandOptions {
  std::string out;
  bool overwrite = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> trajectories;
  std::optional<std::string> checkpoint;
  std::optional<std::string> bank;
};

void cmd_gen_data(ExperimentConfig cfg, const CommandOptions& opt);
void cmd_train(ExperimentConfig cfg, const CommandOptions& opt);
void cmd_build_centroids(ExperimentConfig cfg, const CommandOptions& opt);
void cmd_evaluate(ExperimentConfig cfg, const CommandOptions& opt);
void cmd_ablate(ExperimentConfig cfg, const CommandOptions& opt);
void cmd_sweep_lambda(ExperimentConfig cfg, const CommandOptions& opt);

}  // namespace sec
