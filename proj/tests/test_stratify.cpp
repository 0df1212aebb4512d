#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <map>

#include "sec/error.hpp"
#include "sec/stratify.hpp"
#include "support.hpp"

using namespace sec;
namespace fs = std::filesystem;

namespace {

// Users with integer return times from a small range, so scores tie often.
std::vector<Trajectory> population(std::uint64_t seed, std::size_t n, bool discrete = false) {
  Engine rng = make_engine(seed);
  std::vector<Trajectory> ts;
  for (std::size_t u = 0; u < n; ++u) {
    Trajectory t;
    t.user_id = "user" + std::to_string(u);
    const std::size_t returns = 1 + rng() % 4;
    for (std::size_t r = 0; r < returns; ++r) t.return_times.push_back(static_cast<double>(1 + rng() % 4));
    t.active_days = static_cast<int>(returns + 1);
    const std::size_t steps = 1 + rng() % 3;
    for (std::size_t s = 0; s < steps; ++s) {
      Step st;
      st.state = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
      if (discrete) {
        st.action = static_cast<std::size_t>(rng() % 5);
      } else {
        st.action = std::vector<double>{standard_normal(rng), standard_normal(rng)};
      }
      st.signals = {{"click", static_cast<double>(rng() % 2)}};
      t.steps.push_back(std::move(st));
    }
    ts.push_back(std::move(t));
  }
  return ts;
}

// Sort users by score, cut into k contiguous slices, then give every user the
// best slice reached by any user with the same score.
std::map<std::string, int> sort_and_slice(const std::vector<Trajectory>& ts, std::size_t k, RetentionMode mode) {
  std::vector<std::pair<double, std::string>> v;
  for (const auto& t : ts) v.emplace_back(retention_score(t, mode), t.user_id);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t n = v.size();
  std::map<double, int> best_for_score;
  std::vector<int> slice(n);
  for (std::size_t i = 0; i < n; ++i) {
    int level = 1;
    while (static_cast<double>(i) >= std::ceil(static_cast<double>(level) * n / k)) ++level;
    slice[i] = level;
    auto it = best_for_score.find(v[i].first);
    if (it == best_for_score.end() || level < it->second) best_for_score[v[i].first] = level;
  }
  std::map<std::string, int> out;
  for (const auto& [score, id] : v) out[id] = best_for_score[score];
  return out;
}

}  // namespace

TEST_CASE("stratify agrees with a sort-and-slice oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ts = population(seed, 10 + seed * 3);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
      for (RetentionMode mode : {RetentionMode::kReturnTime, RetentionMode::kActiveDays}) {
        const LeveledDataset ds = stratify(ts, k, mode);
        const auto want = sort_and_slice(ts, k, mode);
        for (const auto& [id, level] : want) CHECK(ds.level_of_user.at(id)->value == level);
        // Pairs of each level are exactly the steps of its members.
        std::vector<std::size_t> pairs(k, 0);
        for (const auto& t : ts) pairs[static_cast<std::size_t>(want.at(t.user_id) - 1)] += t.steps.size();
        for (std::size_t j = 0; j < k; ++j) CHECK(ds.levels[j].size() == pairs[j]);
      }
    }
  }
}

TEST_CASE("levels are monotone in score and partition the experts") {
  const auto ts = population(77, 40);
  const LeveledDataset ds = stratify(ts, 4, RetentionMode::kReturnTime);
  CHECK(ds.level_of_user.size() == ts.size());
  for (const auto& a : ts)
    for (const auto& b : ts) {
      const double sa = retention_score(a, RetentionMode::kReturnTime);
      const double sb = retention_score(b, RetentionMode::kReturnTime);
      if (sa > sb) CHECK(*ds.level_of_user.at(a.user_id) <= *ds.level_of_user.at(b.user_id));
    }
  for (std::size_t j = 0; j + 1 < ds.rule.boundaries.size(); ++j) {
    CHECK(ds.rule.boundaries[j] >= ds.rule.boundaries[j + 1]);
  }
}

TEST_CASE("stratify is invariant to input order") {
  auto ts = population(5, 30);
  const LeveledDataset a = stratify(ts, 3, RetentionMode::kReturnTime);
  std::reverse(ts.begin(), ts.end());
  const LeveledDataset b = stratify(ts, 3, RetentionMode::kReturnTime);
  CHECK(a.users == b.users);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a.levels[j].states == b.levels[j].states);
}

TEST_CASE("k = 1 puts everyone in one level and too few experts is rejected") {
  const auto ts = population(3, 4);
  const LeveledDataset one = stratify(ts, 1, RetentionMode::kReturnTime);
  for (const auto& [id, lvl] : one.level_of_user) CHECK(lvl->value == 1);
  CHECK_THROWS_AS(stratify(ts, 5, RetentionMode::kReturnTime), DataError);
}

TEST_CASE("expert selection follows the threshold rule") {
  Trajectory t;
  t.user_id = "u";
  t.return_times = {2.0, 4.0};
  t.active_days = 3;
  CHECK(is_expert(t, 3.0, RetentionMode::kReturnTime));
  CHECK_FALSE(is_expert(t, 2.9, RetentionMode::kReturnTime));
  CHECK(is_expert(t, 3.0, RetentionMode::kActiveDays));
  t.return_times.clear();
  CHECK_FALSE(is_expert(t, 100.0, RetentionMode::kReturnTime));
}

TEST_CASE("historical level uses the quantile boundaries; non-experts get K") {
  auto ts = population(9, 30);
  const LeveledDataset ds = build_leveled_dataset(ts, 3, RetentionMode::kReturnTime, 3.0);
  for (const auto& t : ts) {
    const Level r = ds.rule.historical_level(t);
    const auto& assigned = ds.level_of_user.at(t.user_id);
    if (assigned) {
      CHECK(r == *assigned);
    } else {
      CHECK(r.value == 3);
    }
  }
}

TEST_CASE("trajectory JSONL round-trips exactly") {
  const auto ts = population(4, 12);
  const auto tsd = population(4, 5, true);
  const auto path = (fs::temp_directory_path() / "sec_traj.jsonl").string();
  write_trajectories(path, ts);
  CHECK(read_trajectories(path) == ts);
  write_trajectories(path, tsd);
  CHECK(read_trajectories(path) == tsd);
  fs::remove(path);
  CHECK_THROWS_AS(trajectory_from_json("{\"user_id\": 3}"), DataError);
}

TEST_CASE("leveled dataset round-trips through its manifest and CSVs") {
  for (bool discrete : {false, true}) {
    const auto ts = population(6, 20, discrete);
    const LeveledDataset ds = build_leveled_dataset(ts, 3, RetentionMode::kReturnTime, 3.5);
    const auto dir = (fs::temp_directory_path() / "sec_leveled").string();
    fs::remove_all(dir);
    write_leveled_dataset(dir, ds);
    const LeveledDataset back = read_leveled_dataset(dir);
    CHECK(back.kind == ds.kind);
    CHECK(back.rule.boundaries == ds.rule.boundaries);
    CHECK(back.users == ds.users);
    CHECK(back.level_of_user == ds.level_of_user);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(back.levels[j].states == ds.levels[j].states);
      CHECK(back.levels[j].actions == ds.levels[j].actions);
      CHECK(back.levels[j].items == ds.levels[j].items);
    }
    fs::remove_all(dir);
  }
}

TEST_CASE("rule JSON round-trips") {
  StratificationRule r;
  r.levels = 3;
  r.boundaries = {-1.5, -2.25};
  r.expert_threshold = 3.0;
  const StratificationRule back = rule_from_json(rule_to_json(r));
  CHECK(back.boundaries == r.boundaries);
  CHECK(back.levels == 3);
  CHECK(back.level_for_score(-1.5).value == 1);
  CHECK(back.level_for_score(-2.0).value == 2);
  CHECK(back.level_for_score(-2.25).value == 2);
  CHECK(back.level_for_score(-9.0).value == 3);
}
