#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/experiment.hpp"
#include "sec/io.hpp"

using namespace sec;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "sim": {"n_users": 300, "seed": 11},
  "train": {"epochs": 2, "batch_size": 64, "hidden": 16, "predictor_hidden": 16},
  "select": {"clusters_per_level": 8},
  "eval": {"episodes": 40},
  "ablation": {"seeds": [1]},
  "sweep": {"grid": [0.0, 0.01], "seeds": [1]}
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("sec_harness_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

std::string cli() {
  const char* p = std::getenv("SEC_CLI");
  return p ? p : "sec";
}

int run(const std::string& args) {
  const int status = std::system((cli() + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const TempDir& dir, const std::string& text) {
  const std::string path = dir / "config.json";
  write_text_file(path, text);
  return path;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  const ExperimentConfig a = config_from_json(kSmallConfig);
  const ExperimentConfig b = config_from_json(config_to_json(a));
  CHECK(config_to_json(a) == config_to_json(b));
  CHECK(b.sim.n_users == 300);
  CHECK(b.train.epochs == 2);
  CHECK(b.sweep_grid == std::vector<double>{0.0, 0.01});
  CHECK(b.train.lambda == 0.01);
}

TEST_CASE("malformed or unknown config entries are config errors") {
  CHECK_THROWS_AS(config_from_json(R"({"sim": {"n_user": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"lambda": -1}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"strat": {"mode": "sideways"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"select": {"threshold_rule": "median"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sim": {"n_users": "many"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("score histogram recounts every scored user") {
  ExperimentConfig cfg = config_from_json(kSmallConfig);
  const auto ts = generate_dataset(cfg.sim);
  for (RetentionMode mode : {RetentionMode::kReturnTime, RetentionMode::kActiveDays}) {
    const ScoreHistogram h = score_histogram(ts, mode);
    REQUIRE(h.edges.size() == h.counts.size() + 1);
    std::size_t total = h.skipped;
    for (std::size_t c : h.counts) total += c;
    CHECK(total == ts.size());
    // Oracle: recount each bin directly.
    std::vector<std::size_t> recount(h.counts.size(), 0);
    for (const auto& t : ts) {
      double v;
      if (mode == RetentionMode::kActiveDays) {
        v = t.active_days;
      } else {
        if (t.return_times.empty()) continue;
        v = 0.0;
        for (double r : t.return_times) v += r;
        v /= t.return_times.size();
      }
      for (std::size_t i = 0; i < recount.size(); ++i) {
        const bool last = i + 1 == recount.size();
        if (v >= h.edges[i] && (v < h.edges[i + 1] || (last && v <= h.edges[i + 1]))) {
          ++recount[i];
          break;
        }
      }
    }
    CHECK(recount == h.counts);
  }
}

TEST_CASE("CLI exit codes") {
  TempDir dir("codes");
  const std::string cfg = write_config(dir, kSmallConfig);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("gen-data --out " + dir / "x") == 2);
  CHECK(run("gen-data --config " + dir / "missing.json --out " + dir / "x") == 2);
  write_text_file(dir / "bad.json", R"({"sim": {"k_true": 0}})");
  CHECK(run("gen-data --config " + dir / "bad.json --out " + dir / "x") == 2);
  write_text_file(dir / "broken.jsonl", "{not json\n");
  CHECK(run("train --config " + cfg + " --trajectories " + dir / "broken.jsonl --out " + dir / "t") == 3);
  CHECK(run("evaluate --config " + cfg + " --checkpoint " + dir / "nope.json --bank " + dir / "nope.json --out " +
            dir / "e") == 3);
}

TEST_CASE("pipeline through the CLI") {
  TempDir dir("pipeline");
  const std::string cfg = write_config(dir, kSmallConfig);
  REQUIRE(run("gen-data --config " + cfg + " --out " + dir / "data") == 0);
  const auto summary = nlohmann::json::parse(read_text_file(dir / "data/summary.json"));
  CHECK(summary.at("n_users").get<std::size_t>() == 300);
  CHECK(fs::exists(dir / "data/resolved_config.json"));
  CHECK(read_text_file(dir / "data/VERSION") == std::string(kToolVersion) + "\n");

  SUBCASE("non-empty output directory needs --overwrite") {
    CHECK(run("gen-data --config " + cfg + " --out " + dir / "data") == 2);
    CHECK(run("gen-data --config " + cfg + " --out " + dir / "data --overwrite") == 0);
  }

  SUBCASE("train, centroids and evaluate") {
    const std::string train = "train --config " + cfg + " --trajectories " + dir / "data/trajectories.jsonl";
    REQUIRE(run(train + " --out " + dir / "train") == 0);
    REQUIRE(run(train + " --out " + dir / "train2") == 0);
    const std::string log = read_text_file(dir / "train/training_log.csv");
    CHECK(log == read_text_file(dir / "train2/training_log.csv"));
    CHECK(read_text_file(dir / "train/policy.json") == read_text_file(dir / "train2/policy.json"));

    // The final log rows are recomputable from the final snapshot.
    const ExperimentConfig ec = load_config(cfg);
    const LeveledDataset data = read_leveled_dataset(dir / "train/leveled");
    const PolicyParams last = load_policy(dir / "train/snapshots/epoch_2.json");
    const auto recomputed = evaluate_objective(last, data, ec.train);
    const TrainingLog parsed = TrainingLog::from_csv(log);
    std::size_t matched = 0;
    for (const auto& row : parsed.rows) {
      if (row.epoch != 2) continue;
      const auto& l = recomputed[row.level.index()];
      CHECK(row.bc_loss == doctest::Approx(l.bc).epsilon(1e-12));
      CHECK(row.aer_loss == doctest::Approx(l.aer).epsilon(1e-12));
      ++matched;
    }
    CHECK(matched == ec.strat.k_levels);

    REQUIRE(run("build-centroids --config " + cfg + " --checkpoint " + dir / "train/policy.json --out " +
                dir / "bank") == 0);
    REQUIRE(run("evaluate --config " + cfg + " --checkpoint " + dir / "train/policy.json --bank " +
                dir / "bank/centroids.json --out " + dir / "eval") == 0);
    const auto reports = eval_reports_from_csv(read_text_file(dir / "eval/eval.csv"));
    CHECK(reports.size() == ec.strat.k_levels + 1);
    CHECK(reports.front().name == "sec_adaptive");
    CHECK(fs::exists(dir / "eval/eval_sec_adaptive.json"));
    CHECK(fs::exists(dir / "eval/selection.json"));
  }
}

TEST_CASE("ablation and sweep tables share the no-AER result") {
  TempDir dir("ablate");
  const std::string cfg = write_config(dir, kSmallConfig);
  REQUIRE(run("ablate --config " + cfg + " --out " + dir / "ab") == 0);
  REQUIRE(run("sweep-lambda --config " + cfg + " --out " + dir / "sw") == 0);
  const CsvTable ab = CsvTable::parse(read_text_file(dir / "ab/ablation.csv"));
  REQUIRE(ab.rows.size() == 3);
  CHECK(ab.rows[0][ab.column("variant")] == "full");
  CHECK(ab.rows[1][ab.column("variant")] == "no_multilevel");
  CHECK(ab.rows[1][ab.column("k_levels")] == "1");
  CHECK(ab.rows[2][ab.column("variant")] == "no_aer");
  CHECK(parse_double(ab.rows[0][ab.column("delta_return_time")]) == 0.0);

  const CsvTable sw = CsvTable::parse(read_text_file(dir / "sw/sweep_lambda.csv"));
  REQUIRE(sw.rows.size() == 2);
  CHECK(sw.rows[0][sw.column("return_time")] == ab.rows[2][ab.column("return_time")]);
  CHECK(sw.rows[1][sw.column("return_time")] == ab.rows[0][ab.column("return_time")]);
  CHECK(sw.rows[0][sw.column("seeds")] == "1");

  const CsvTable per_seed = CsvTable::parse(read_text_file(dir / "ab/ablation_per_seed.csv"));
  CHECK(per_seed.rows.size() == 3);
  CHECK(CsvTable::parse(ab.to_string()).to_string() == ab.to_string());
}
