#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <limits>

#include "sec/error.hpp"
#include "sec/select.hpp"
#include "support.hpp"

using namespace sec;
using testing::random_matrix;

namespace {

PolicyParams small_policy(std::size_t levels, HeadKind head = HeadKind::kContinuous) {
  PolicyShape s;
  s.state_dim = 4;
  s.hidden = 5;
  s.predictor_hidden = 5;
  s.action_dim = 3;
  s.classes = 6;
  s.head = head;
  s.levels = levels;
  return init_policy(s, 2);
}

CentroidBank random_bank(Engine& rng, std::size_t levels, std::size_t dim, double delta_scale) {
  CentroidBank b;
  for (std::size_t k = 0; k < levels; ++k) {
    b.centroids.push_back(random_matrix(2 + rng() % 4, dim, rng));
    b.deltas.push_back(delta_scale * (0.2 + uniform01(rng)));
  }
  return b;
}

struct Expected {
  int pre_cap;
  int final_level;
  bool fallback;
};

// Direct reading of the rule: distances as plain minima, then first qualifying level.
Expected brute_force(const std::vector<double>& h, const CentroidBank& bank, int r_h) {
  const std::size_t k_levels = bank.centroids.size();
  std::vector<double> d(k_levels);
  for (std::size_t k = 0; k < k_levels; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < bank.centroids[k].rows(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < h.size(); ++j) s += (h[j] - bank.centroids[k](c, j)) * (h[j] - bank.centroids[k](c, j));
      best = std::min(best, std::sqrt(s));
    }
    d[k] = best;
  }
  for (std::size_t k = 0; k < k_levels; ++k)
    if (d[k] <= bank.deltas[k]) return {static_cast<int>(k) + 1, std::min(static_cast<int>(k) + 1, r_h), false};
  std::size_t arg = 0;
  for (std::size_t k = 1; k < k_levels; ++k)
    if (d[k] < d[arg]) arg = k;
  return {static_cast<int>(arg) + 1, std::min(static_cast<int>(arg) + 1, r_h), true};
}

}  // namespace

TEST_CASE("select_level matches a brute-force reading of the rule") {
  Engine rng = make_engine(31);
  const PolicyParams policy = small_policy(3);
  for (int trial = 0; trial < 20; ++trial) {
    const CentroidBank bank = random_bank(rng, 3, 5, 0.5 + trial * 0.1);
    for (int s = 0; s < 25; ++s) {
      const Matrix state = random_matrix(1, 4, rng);
      const Matrix h = encode(policy.encoder, state);
      const int r_h = 1 + static_cast<int>(rng() % 3);
      const SelectionTrace t = select_level(state.row(0), bank, policy, Level{r_h});
      const Expected e = brute_force({h.row(0).begin(), h.row(0).end()}, bank, r_h);
      CHECK(t.pre_cap.value == e.pre_cap);
      CHECK(t.final_level.value == e.final_level);
      CHECK(t.fallback_used == e.fallback);
      CHECK(t.historical.value == r_h);
    }
  }
}

TEST_CASE("selection edge cases") {
  const std::vector<double> deltas{1.0, 1.0, 1.0};
  // Several qualifying levels: the first wins.
  auto t = select_from_distances(std::vector<double>{0.5, 0.2, 0.1}, deltas, Level{3});
  CHECK(t.pre_cap.value == 1);
  CHECK_FALSE(t.fallback_used);
  // Exactly on the threshold qualifies.
  t = select_from_distances(std::vector<double>{2.0, 1.0, 0.1}, deltas, Level{3});
  CHECK(t.pre_cap.value == 2);
  // None qualifies: argmin, lowest index on ties.
  t = select_from_distances(std::vector<double>{3.0, 2.0, 2.0}, deltas, Level{3});
  CHECK(t.pre_cap.value == 2);
  CHECK(t.fallback_used);
  // The historical level caps the choice.
  t = select_from_distances(std::vector<double>{5.0, 5.0, 0.1}, deltas, Level{1});
  CHECK(t.pre_cap.value == 3);
  CHECK(t.final_level.value == 1);
  CHECK_THROWS_AS(select_from_distances(std::vector<double>{1.0}, deltas, Level{1}), ContractError);
  CHECK_THROWS_AS(select_from_distances(std::vector<double>{1.0, 1.0, 1.0}, deltas, Level{4}), ContractError);
}

TEST_CASE("delta is half the mean pairwise centroid distance") {
  const Matrix c = Matrix::from_rows({{0.0, 0.0}, {3.0, 4.0}, {0.0, 4.0}});
  // pairs: 5, 4, 3
  CHECK(half_mean_pairwise_distance(c) == doctest::Approx(0.5 * 4.0));
  CHECK_THROWS_AS(half_mean_pairwise_distance(Matrix(1, 2)), DataError);
}

TEST_CASE("build_centroids clusters encoded states and derives deltas") {
  Engine rng = make_engine(41);
  const PolicyParams policy = small_policy(2);
  const std::vector<Matrix> states{random_matrix(80, 4, rng), random_matrix(60, 4, rng)};
  const CentroidBank bank = build_centroids(policy, states, 5, 9);
  REQUIRE(bank.levels() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(bank.centroids[k].rows() == 5);
    CHECK(bank.centroids[k].cols() == 5);
    // all-pairs oracle
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) {
        sum += std::sqrt(squared_distance(bank.centroids[k].row(i), bank.centroids[k].row(j)));
        ++pairs;
      }
    CHECK(bank.deltas[k] == doctest::Approx(0.5 * sum / pairs));
  }
  const CentroidBank again = build_centroids(policy, states, 5, 9);
  CHECK(again.centroids == bank.centroids);
  CHECK(again.deltas == bank.deltas);
  CHECK_THROWS_AS(build_centroids(policy, states, 81, 9), DataError);
  CHECK_THROWS_AS(build_centroids(policy, states, 1, 9), ConfigError);
}

TEST_CASE("recommend acts with the selected level's predictor") {
  Engine rng = make_engine(51);
  for (HeadKind head : {HeadKind::kContinuous, HeadKind::kDiscrete}) {
    const PolicyParams policy = small_policy(3, head);
    const CentroidBank bank = random_bank(rng, 3, 5, 1.0);
    const Matrix state = random_matrix(1, 4, rng);
    const Recommendation r = recommend(state.row(0), bank, policy, Level{2});
    const PolicyForward f = forward(policy, r.trace.final_level, state);
    CHECK(r.action == std::vector<double>(f.output.row(0).begin(), f.output.row(0).end()));
    CHECK(r.item.has_value() == (head == HeadKind::kDiscrete));
    const std::string line = recommendation_to_json("u1", r);
    CHECK(line.find("\"k_star\"") != std::string::npos);
    CHECK(line.find('\n') == std::string::npos);
  }
}

TEST_CASE("centroid bank JSON round-trips with its rule") {
  Engine rng = make_engine(61);
  CentroidBank bank = random_bank(rng, 3, 4, 1.0);
  StratificationRule rule;
  rule.levels = 3;
  rule.boundaries = {-1.0, -2.0};
  bank.rule = rule;
  const std::string text = bank_to_json(bank);
  const CentroidBank back = bank_from_json(text);
  CHECK(back.centroids == bank.centroids);
  CHECK(back.deltas == bank.deltas);
  CHECK(back.rule->boundaries == rule.boundaries);
  CHECK(bank_to_json(back) == text);
  CHECK_THROWS_AS(bank_from_json("{\"format\":\"sec-centroid-bank\"}"), DataError);
}

TEST_CASE("bank and policy must agree on K and width") {
  Engine rng = make_engine(71);
  const PolicyParams policy = small_policy(2);
  const CentroidBank bank = random_bank(rng, 3, 5, 1.0);
  const Matrix state = random_matrix(1, 4, rng);
  CHECK_THROWS_AS(select_level(state.row(0), bank, policy, Level{1}), ContractError);
  const PolicyParams three = small_policy(3);
  CHECK_THROWS_AS(select_level(std::vector<double>{1.0, 2.0}, bank, three, Level{1}), ContractError);
}
