#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sec/matrix.hpp"
#include "sec/policy.hpp"
#include "sec/stratify.hpp"

namespace sec {

// Inference-time routing table: K-means centroids of encoded expert states
// per level, with an acceptance radius delta per level.
struct CentroidBank {
  std::vector<Matrix> centroids;  // centroids[level.index()] is C_k×h
  std::vector<double> deltas;     // all > 0
  std::optional<StratificationRule> rule;  // maps user history to r_h

  std::size_t levels() const { return centroids.size(); }
  std::size_t dim() const { return centroids.front().cols(); }
  void validate() const;
};

// Half the mean Euclidean distance over unordered centroid pairs.
double half_mean_pairwise_distance(const Matrix& centroids);

// Encodes each level's states with the frozen encoder, clusters them into
// `clusters_per_level` groups and derives delta_k from the centroid spread.
CentroidBank build_centroids(const PolicyParams& policy, std::span<const Matrix> level_states,
                             std::size_t clusters_per_level, std::uint64_t seed);
CentroidBank build_centroids(const PolicyParams& policy, const LeveledDataset& data, std::size_t clusters_per_level,
                             std::uint64_t seed);

struct SelectionTrace {
  std::vector<double> distances;  // d_k, exact minima over each level's centroids
  Level pre_cap;                  // first qualifying level, or argmin fallback
  Level historical;               // r_h
  Level final_level;              // min(pre_cap, historical)
  bool fallback_used = false;

  friend bool operator==(const SelectionTrace&, const SelectionTrace&) = default;
};

// Level choice from precomputed distances. Exposed separately so the rule can
// be checked without a policy.
SelectionTrace select_from_distances(std::span<const double> distances, std::span<const double> deltas,
                                     Level historical);

// Distances from one encoded state to every level's nearest centroid.
std::vector<double> level_distances(const CentroidBank& bank, std::span<const double> encoded);

SelectionTrace select_level(std::span<const double> state, const CentroidBank& bank, const PolicyParams& policy,
                            Level historical);

struct Recommendation {
  std::vector<double> action;  // embedding (continuous) or class probabilities (discrete)
  std::optional<std::size_t> item;  // argmax class, discrete head only
  SelectionTrace trace;
};

Recommendation recommend(std::span<const double> state, const CentroidBank& bank, const PolicyParams& policy,
                         Level historical);

std::string bank_to_json(const CentroidBank& bank);
CentroidBank bank_from_json(const std::string& text);
void save_bank(const CentroidBank& bank, const std::string& path);
CentroidBank load_bank(const std::string& path);

// One JSONL line: {user_id, d, pre_cap, r_h, k_star, fallback, action[, item]}.
std::string recommendation_to_json(const std::string& user_id, const Recommendation& rec);

}  // namespace sec
