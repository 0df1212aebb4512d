#include "sec/select.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/io.hpp"
#include "sec/kmeans.hpp"
#include "sec/random.hpp"

namespace sec {

using nlohmann::json;

void CentroidBank::validate() const {
  if (centroids.empty()) throw ContractError("centroid bank: no levels");
  if (deltas.size() != centroids.size()) throw ContractError("centroid bank: delta count does not match levels");
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    if (centroids[k].rows() == 0 || centroids[k].cols() != centroids.front().cols()) {
      throw ContractError("centroid bank: level " + std::to_string(k + 1) + " centroids are " +
                          centroids[k].shape_string());
    }
    if (!centroids[k].all_finite()) throw ContractError("centroid bank: non-finite centroid");
    if (!(deltas[k] > 0.0) || !std::isfinite(deltas[k])) {
      throw ContractError("centroid bank: delta for level " + std::to_string(k + 1) + " must be > 0");
    }
  }
  if (rule && rule->levels != centroids.size()) throw ContractError("centroid bank: rule disagrees on K");
}

double half_mean_pairwise_distance(const Matrix& centroids) {
  const std::size_t c = centroids.rows();
  if (c < 2) throw DataError("delta needs at least two centroids per level");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      sum += std::sqrt(squared_distance(centroids.row(i), centroids.row(j)));
      ++pairs;
    }
  }
  return 0.5 * sum / static_cast<double>(pairs);
}

CentroidBank build_centroids(const PolicyParams& policy, std::span<const Matrix> level_states,
                             std::size_t clusters_per_level, std::uint64_t seed) {
  if (level_states.size() != policy.levels()) {
    throw ContractError("build_centroids: " + std::to_string(level_states.size()) + " state sets for K=" +
                        std::to_string(policy.levels()));
  }
  if (clusters_per_level < 2) throw ConfigError("build_centroids: clusters_per_level must be >= 2");
  CentroidBank bank;
  for (std::size_t k = 0; k < level_states.size(); ++k) {
    if (level_states[k].rows() < clusters_per_level) {
      throw DataError("build_centroids: level " + std::to_string(k + 1) + " has " +
                      std::to_string(level_states[k].rows()) + " states for " + std::to_string(clusters_per_level) +
                      " clusters");
    }
    const Matrix encoded = encode(policy.encoder, level_states[k]);
    KMeansModel model = kmeans(encoded, clusters_per_level, derive_seed(seed, {stream::kKMeans, k}));
    const double delta = half_mean_pairwise_distance(model.centroids);
    if (!(delta > 0.0)) {
      throw NumericalError("build_centroids: level " + std::to_string(k + 1) + " centroids all coincide");
    }
    bank.centroids.push_back(std::move(model.centroids));
    bank.deltas.push_back(delta);
  }
  return bank;
}

CentroidBank build_centroids(const PolicyParams& policy, const LeveledDataset& data, std::size_t clusters_per_level,
                             std::uint64_t seed) {
  std::vector<Matrix> states;
  for (const auto& l : data.levels) states.push_back(l.states);
  CentroidBank bank = build_centroids(policy, states, clusters_per_level, seed);
  bank.rule = data.rule;
  return bank;
}

SelectionTrace select_from_distances(std::span<const double> distances, std::span<const double> deltas,
                                     Level historical) {
  const std::size_t k_levels = distances.size();
  if (deltas.size() != k_levels || k_levels == 0) throw ContractError("select: distance/delta count mismatch");
  if (historical.value < 1 || historical.index() >= k_levels) {
    throw ContractError("select: historical level " + std::to_string(historical.value) + " outside 1.." +
                        std::to_string(k_levels));
  }
  SelectionTrace t;
  t.distances.assign(distances.begin(), distances.end());
  t.historical = historical;
  std::optional<std::size_t> chosen;
  for (std::size_t k = 0; k < k_levels; ++k) {
    if (distances[k] <= deltas[k]) {
      chosen = k;
      break;
    }
  }
  if (!chosen) {
    t.fallback_used = true;
    chosen = static_cast<std::size_t>(std::min_element(distances.begin(), distances.end()) - distances.begin());
  }
  t.pre_cap = Level::from_index(*chosen);
  t.final_level = std::min(t.pre_cap, historical);
  return t;
}

std::vector<double> level_distances(const CentroidBank& bank, std::span<const double> encoded) {
  if (encoded.size() != bank.dim()) throw ContractError("select: encoded state width does not match bank");
  std::vector<double> d(bank.levels());
  for (std::size_t k = 0; k < bank.levels(); ++k) {
    double best = 0.0;
    nearest_centroid(bank.centroids[k], encoded, &best);
    d[k] = std::sqrt(best);
  }
  return d;
}

namespace {

Matrix encode_one(const PolicyParams& policy, std::span<const double> state) {
  if (state.size() != policy.state_dim()) {
    throw ContractError("select: state has " + std::to_string(state.size()) + " entries, policy expects " +
                        std::to_string(policy.state_dim()));
  }
  return encode(policy.encoder, Matrix(1, state.size(), std::vector<double>(state.begin(), state.end())));
}

}  // namespace

SelectionTrace select_level(std::span<const double> state, const CentroidBank& bank, const PolicyParams& policy,
                            Level historical) {
  if (bank.levels() != policy.levels()) throw ContractError("select: bank and policy disagree on K");
  const Matrix h = encode_one(policy, state);
  return select_from_distances(level_distances(bank, h.row(0)), bank.deltas, historical);
}

Recommendation recommend(std::span<const double> state, const CentroidBank& bank, const PolicyParams& policy,
                         Level historical) {
  if (bank.levels() != policy.levels()) throw ContractError("recommend: bank and policy disagree on K");
  const Matrix h = encode_one(policy, state);
  Recommendation rec;
  rec.trace = select_from_distances(level_distances(bank, h.row(0)), bank.deltas, historical);
  const PredictorParams& pred = policy.predictor(rec.trace.final_level);
  if (pred.head == HeadKind::kContinuous) {
    const Matrix a = predict_continuous(pred, h);
    rec.action.assign(a.row(0).begin(), a.row(0).end());
  } else {
    const Matrix p = predict_discrete(pred, h);
    rec.action.assign(p.row(0).begin(), p.row(0).end());
    rec.item = static_cast<std::size_t>(std::max_element(rec.action.begin(), rec.action.end()) - rec.action.begin());
  }
  return rec;
}

std::string bank_to_json(const CentroidBank& bank) {
  bank.validate();
  json doc;
  doc["format"] = "sec-centroid-bank";
  doc["version"] = 1;
  doc["levels"] = bank.levels();
  doc["dim"] = bank.dim();
  json lv = json::array();
  for (std::size_t k = 0; k < bank.levels(); ++k) {
    const auto& c = bank.centroids[k];
    lv.push_back({{"level", k + 1},
                  {"delta", bank.deltas[k]},
                  {"clusters", c.rows()},
                  {"centroids", std::vector<double>(c.values().begin(), c.values().end())}});
  }
  doc["per_level"] = std::move(lv);
  if (bank.rule) doc["stratification"] = json::parse(rule_to_json(*bank.rule));
  return doc.dump(1) + "\n";
}

CentroidBank bank_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "sec-centroid-bank") throw DataError("centroid bank: bad format tag");
    const auto dim = doc.at("dim").get<std::size_t>();
    CentroidBank bank;
    for (const auto& lj : doc.at("per_level")) {
      const auto clusters = lj.at("clusters").get<std::size_t>();
      bank.centroids.emplace_back(clusters, dim, lj.at("centroids").get<std::vector<double>>());
      bank.deltas.push_back(lj.at("delta").get<double>());
    }
    if (doc.contains("stratification")) bank.rule = rule_from_json(doc.at("stratification").dump());
    bank.validate();
    return bank;
  } catch (const json::exception& e) {
    throw DataError(std::string("centroid bank: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("centroid bank: ") + e.what());
  }
}

void save_bank(const CentroidBank& bank, const std::string& path) { write_text_file(path, bank_to_json(bank)); }

CentroidBank load_bank(const std::string& path) { return bank_from_json(read_text_file(path)); }

std::string recommendation_to_json(const std::string& user_id, const Recommendation& rec) {
  json doc{{"user_id", user_id},
           {"d", rec.trace.distances},
           {"pre_cap", rec.trace.pre_cap.value},
           {"r_h", rec.trace.historical.value},
           {"k_star", rec.trace.final_level.value},
           {"fallback", rec.trace.fallback_used},
           {"action", rec.action}};
  if (rec.item) doc["item"] = *rec.item;
  return doc.dump();
}

}  // namespace sec
