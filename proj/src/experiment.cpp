#include "sec/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/io.hpp"
#include "sec/random.hpp"
#include "sec/recommenders.hpp"

namespace sec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads one JSON object section, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), name_.empty() ? key : name_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + (name_.empty() ? k : name_ + "." + k) + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_calibration(Section& s, SimCalibration& c) {
  s.get("click_gain", c.click_gain);
  s.get("click_bias", c.click_bias);
  s.get("long_view_gain", c.long_view_gain);
  s.get("long_view_bias", c.long_view_bias);
  s.get("like_gain", c.like_gain);
  s.get("like_bias", c.like_bias);
  s.get("weight_click", c.weight_click);
  s.get("weight_long_view", c.weight_long_view);
  s.get("weight_like", c.weight_like);
  s.get("weight_novelty", c.weight_novelty);
  s.get("novelty_window", c.novelty_window);
  s.get("leave_bias", c.leave_bias);
  s.get("leave_length", c.leave_length);
  s.get("leave_stall", c.leave_stall);
  s.get("gap_floor", c.gap_floor);
  s.get("gap_ceiling", c.gap_ceiling);
  s.finish();
}

json calibration_json(const SimCalibration& c) {
  return {{"click_gain", c.click_gain},           {"click_bias", c.click_bias},
          {"long_view_gain", c.long_view_gain},   {"long_view_bias", c.long_view_bias},
          {"like_gain", c.like_gain},             {"like_bias", c.like_bias},
          {"weight_click", c.weight_click},       {"weight_long_view", c.weight_long_view},
          {"weight_like", c.weight_like},         {"weight_novelty", c.weight_novelty},
          {"novelty_window", c.novelty_window},   {"leave_bias", c.leave_bias},
          {"leave_length", c.leave_length},       {"leave_stall", c.leave_stall},
          {"gap_floor", c.gap_floor},             {"gap_ceiling", c.gap_ceiling}};
}

void read_population(Section& s, PopulationParams& p) {
  s.get("taste_spread", p.taste_spread);
  s.get("popular_share", p.popular_share);
  s.get("intent_strength", p.intent_strength);
  s.get("preference_obs_noise", p.preference_obs_noise);
  s.get("intent_obs_noise", p.intent_obs_noise);
  s.get("alignment_best", p.alignment_best);
  s.get("alignment_worst", p.alignment_worst);
  s.get("diversity_best", p.diversity_best);
  s.get("diversity_worst", p.diversity_worst);
  s.get("item_temperature", p.item_temperature);
  s.finish();
}

json population_json(const PopulationParams& p) {
  return {{"taste_spread", p.taste_spread},
          {"popular_share", p.popular_share},
          {"intent_strength", p.intent_strength},
          {"preference_obs_noise", p.preference_obs_noise},
          {"intent_obs_noise", p.intent_obs_noise},
          {"alignment_best", p.alignment_best},
          {"alignment_worst", p.alignment_worst},
          {"diversity_best", p.diversity_best},
          {"diversity_worst", p.diversity_worst},
          {"item_temperature", p.item_temperature}};
}

template <class Fn>
auto as_config_error(Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void ExperimentConfig::resolve() {
  sim.validate();
  train.action_kind = sim.action_kind;
  train.classes = sim.action_kind == HeadKind::kDiscrete ? sim.classes : 0;
  train.validate();
  if (strat.k_levels < 1) throw ConfigError("strat.k_levels must be >= 1");
  if (!std::isfinite(strat.expert_threshold)) throw ConfigError("strat.expert_threshold must be finite");
  if (select.clusters_per_level < 2) throw ConfigError("select.clusters_per_level must be >= 2");
  if (select.threshold_rule != "half_mean_pairwise") {
    throw ConfigError("select.threshold_rule '" + select.threshold_rule + "' is not supported");
  }
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (ablation_seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
  if (sweep_grid.empty() || sweep_seeds.empty()) throw ConfigError("sweep.grid and sweep.seeds must not be empty");
  for (double l : sweep_grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("sweep.grid values must be finite and >= 0");
  for (const auto& f : report_formats)
    if (f != "csv" && f != "json") throw ConfigError("report.formats: unknown format '" + f + "'");
}

ExperimentConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  Section root(doc, "");
  if (auto s = root.sub("sim")) {
    std::string kind = to_string(cfg.sim.action_kind);
    s->get("n_users", cfg.sim.n_users);
    s->get("state_dim", cfg.sim.state_dim);
    s->get("action_kind", kind);
    s->get("action_dim", cfg.sim.action_dim);
    s->get("classes", cfg.sim.classes);
    s->get("k_true", cfg.sim.k_true);
    s->get("session_len_max", cfg.sim.session_len_max);
    s->get("noise_scale", cfg.sim.noise_scale);
    s->get("horizon_days", cfg.sim.horizon_days);
    s->get("seed", cfg.sim.seed);
    if (auto c = s->sub("calibration")) read_calibration(*c, cfg.sim.calibration);
    if (auto p = s->sub("population")) read_population(*p, cfg.sim.population);
    s->finish();
    cfg.sim.action_kind = as_config_error([&] { return head_kind_from_string(kind); });
  }
  if (auto s = root.sub("train")) {
    s->get("lambda", cfg.train.lambda);
    s->get("batch_size", cfg.train.batch_size);
    s->get("learning_rate", cfg.train.learning_rate);
    s->get("adam_beta1", cfg.train.adam_beta1);
    s->get("adam_beta2", cfg.train.adam_beta2);
    s->get("adam_eps", cfg.train.adam_eps);
    s->get("epochs", cfg.train.epochs);
    s->get("seed", cfg.train.seed);
    s->get("hidden", cfg.train.hidden);
    s->get("predictor_hidden", cfg.train.predictor_hidden);
    s->finish();
  }
  if (auto s = root.sub("strat")) {
    std::string mode = to_string(cfg.strat.mode);
    s->get("mode", mode);
    s->get("expert_threshold", cfg.strat.expert_threshold);
    s->get("k_levels", cfg.strat.k_levels);
    s->finish();
    cfg.strat.mode = as_config_error([&] { return retention_mode_from_string(mode); });
  }
  if (auto s = root.sub("select")) {
    s->get("clusters_per_level", cfg.select.clusters_per_level);
    s->get("threshold_rule", cfg.select.threshold_rule);
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    s->get("episodes", cfg.eval.episodes);
    s->get("seed", cfg.eval.seed);
    s->finish();
  }
  if (auto s = root.sub("paths")) {
    s->get("trajectories", cfg.paths.trajectories);
    s->get("checkpoint", cfg.paths.checkpoint);
    s->get("bank", cfg.paths.bank);
    s->finish();
  }
  if (auto s = root.sub("ablation")) {
    s->get("seeds", cfg.ablation_seeds);
    s->finish();
  }
  if (auto s = root.sub("sweep")) {
    s->get("grid", cfg.sweep_grid);
    s->get("seeds", cfg.sweep_seeds);
    s->finish();
  }
  if (auto s = root.sub("report")) {
    s->get("formats", cfg.report_formats);
    s->finish();
  }
  root.finish();
  cfg.resolve();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.sim;
  const auto& t = cfg.train;
  json doc{
      {"sim",
       {{"n_users", s.n_users},
        {"state_dim", s.state_dim},
        {"action_kind", to_string(s.action_kind)},
        {"action_dim", s.action_dim},
        {"classes", s.classes},
        {"k_true", s.k_true},
        {"session_len_max", s.session_len_max},
        {"noise_scale", s.noise_scale},
        {"horizon_days", s.horizon_days},
        {"seed", s.seed},
        {"calibration", calibration_json(s.calibration)},
        {"population", population_json(s.population)}}},
      {"train",
       {{"lambda", t.lambda},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"epochs", t.epochs},
        {"seed", t.seed},
        {"hidden", t.hidden},
        {"predictor_hidden", t.predictor_hidden}}},
      {"strat",
       {{"mode", to_string(cfg.strat.mode)},
        {"expert_threshold", cfg.strat.expert_threshold},
        {"k_levels", cfg.strat.k_levels}}},
      {"select",
       {{"clusters_per_level", cfg.select.clusters_per_level}, {"threshold_rule", cfg.select.threshold_rule}}},
      {"eval", {{"episodes", cfg.eval.episodes}, {"seed", cfg.eval.seed}}},
      {"paths",
       {{"trajectories", cfg.paths.trajectories}, {"checkpoint", cfg.paths.checkpoint}, {"bank", cfg.paths.bank}}},
      {"ablation", {{"seeds", cfg.ablation_seeds}}},
      {"sweep", {{"grid", cfg.sweep_grid}, {"seeds", cfg.sweep_seeds}}},
      {"report", {{"formats", cfg.report_formats}}}};
  return doc.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(text);
}

// ---- pipeline ----------------------------------------------------------------

TrainedArtifacts train_variant(const ExperimentConfig& cfg, std::span<const Trajectory> trajectories,
                               std::size_t k_levels, double lambda, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.lambda = lambda;
  tc.seed = seed;
  TrainedArtifacts art;
  art.data = build_leveled_dataset(trajectories, k_levels, cfg.strat.mode, cfg.strat.expert_threshold);
  FitResult fr = fit(art.data, tc);
  art.policy = std::move(fr.policy);
  art.log = std::move(fr.log);
  art.bank = build_centroids(art.policy, art.data, cfg.select.clusters_per_level, seed);
  return art;
}

EvalReport evaluate_sec(const ExperimentConfig& cfg, const TrainedArtifacts& art, std::uint64_t pair_seed) {
  SecRecommender rec(art.policy, art.bank);
  EvalOptions opt;
  opt.episodes = cfg.eval.episodes;
  opt.seed = derive_seed(cfg.eval.seed, {pair_seed});
  return evaluate(rec, cfg.sim, opt);
}

ScoreHistogram score_histogram(std::span<const Trajectory> ts, RetentionMode mode) {
  std::vector<double> metric;
  ScoreHistogram h;
  for (const auto& t : ts) {
    if (mode == RetentionMode::kReturnTime && t.return_times.empty()) {
      ++h.skipped;
      continue;
    }
    metric.push_back(mode == RetentionMode::kActiveDays ? static_cast<double>(t.active_days)
                                                        : -retention_score(t, mode));
  }
  if (metric.empty()) return h;
  const double lo = std::floor(*std::min_element(metric.begin(), metric.end()));
  const double hi = std::floor(*std::max_element(metric.begin(), metric.end())) + 1.0;
  for (double e = lo; e <= hi; e += 1.0) h.edges.push_back(e);
  h.counts.assign(h.edges.size() - 1, 0);
  for (double m : metric) {
    std::size_t b = static_cast<std::size_t>(m - lo);
    if (b >= h.counts.size()) b = h.counts.size() - 1;
    ++h.counts[b];
  }
  return h;
}

// ---- commands ------------------------------------------------------------------

namespace {

void prepare_out_dir(const std::string& out, bool overwrite) {
  if (out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out)) throw ConfigError("output path '" + out + "' exists and is not a directory");
    if (!overwrite && !fs::is_empty(out)) {
      throw ConfigError("output directory '" + out + "' already exists; pass --overwrite to reuse it");
    }
  }
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory '" + out + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_run_metadata(const std::string& out, const ExperimentConfig& cfg) {
  write_text_file(join(out, "resolved_config.json"), config_to_json(cfg));
  write_text_file(join(out, "VERSION"), std::string(kToolVersion) + "\n");
}

bool wants(const ExperimentConfig& cfg, const char* format) {
  return std::find(cfg.report_formats.begin(), cfg.report_formats.end(), format) != cfg.report_formats.end();
}

std::string require_path(const std::optional<std::string>& flag, const std::string& configured, const char* what) {
  const std::string p = flag.value_or(configured);
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path given (config paths section or flag)");
  return p;
}

std::string sign_of(double x) { return x > 0.0 ? "+" : (x < 0.0 ? "-" : "0"); }

MetricSummary paired_summary(const std::vector<double>& diffs) {
  MetricSummary s;
  const double n = static_cast<double>(diffs.size());
  for (double d : diffs) s.mean += d;
  s.mean /= n;
  if (diffs.size() > 1) {
    double ss = 0.0;
    for (double d : diffs) ss += (d - s.mean) * (d - s.mean);
    s.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

}  // namespace

void cmd_gen_data(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.sim.seed = *opt.seed;
  cfg.resolve();
  prepare_out_dir(opt.out, opt.overwrite);
  const std::vector<Trajectory> ts = generate_dataset(cfg.sim);
  write_trajectories(join(opt.out, "trajectories.jsonl"), ts);

  const ScoreHistogram h = score_histogram(ts, cfg.strat.mode);
  std::map<int, std::pair<double, std::size_t>> by_archetype;
  std::size_t experts = 0, steps = 0;
  for (const auto& t : ts) {
    experts += is_expert(t, cfg.strat.expert_threshold, cfg.strat.mode);
    steps += t.steps.size();
    if (t.archetype && !t.return_times.empty()) {
      auto& [sum, n] = by_archetype[*t.archetype];
      sum += -retention_score(t, RetentionMode::kReturnTime);
      ++n;
    }
  }
  json arche = json::array();
  for (const auto& [a, sn] : by_archetype) {
    arche.push_back({{"archetype", a}, {"users", sn.second}, {"mean_return_time", sn.first / sn.second}});
  }
  json summary{{"n_users", ts.size()},
               {"steps", steps},
               {"experts", experts},
               {"retention_mode", to_string(cfg.strat.mode)},
               {"expert_threshold", cfg.strat.expert_threshold},
               {"score_histogram", {{"edges", h.edges}, {"counts", h.counts}, {"skipped", h.skipped}}},
               {"by_archetype", std::move(arche)}};
  write_text_file(join(opt.out, "summary.json"), summary.dump(1) + "\n");
  write_run_metadata(opt.out, cfg);
}

void cmd_train(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.train.seed = *opt.seed;
  cfg.resolve();
  const std::string input = require_path(opt.trajectories, cfg.paths.trajectories, "trajectories");
  prepare_out_dir(opt.out, opt.overwrite);
  const std::vector<Trajectory> ts = read_trajectories(input);
  const LeveledDataset data =
      build_leveled_dataset(ts, cfg.strat.k_levels, cfg.strat.mode, cfg.strat.expert_threshold);
  write_leveled_dataset(join(opt.out, "leveled"), data);

  const std::size_t mid = cfg.train.epochs / 2;
  const std::string snap_dir = join(opt.out, "snapshots");
  fs::create_directories(snap_dir);
  auto on_epoch = [&](std::size_t epoch, const PolicyParams& p) {
    if (epoch == 0 || epoch == mid || epoch == cfg.train.epochs) {
      save_policy(p, join(snap_dir, "epoch_" + std::to_string(epoch) + ".json"));
    }
  };
  const FitResult fr = fit(data, cfg.train, on_epoch);
  save_policy(fr.policy, join(opt.out, "policy.json"));
  write_text_file(join(opt.out, "training_log.csv"), fr.log.to_csv());

  json levels = json::array();
  for (std::size_t k = 0; k < data.levels.size(); ++k) {
    levels.push_back({{"level", k + 1}, {"pairs", data.levels[k].size()}});
  }
  json summary{{"levels", std::move(levels)},
               {"boundaries", data.rule.boundaries},
               {"aborted_steps", fr.log.aborted_steps},
               {"jittered_batches", fr.log.jittered_batches},
               {"snapshot_epochs", {0, mid, cfg.train.epochs}}};
  write_text_file(join(opt.out, "train_summary.json"), summary.dump(1) + "\n");
  write_run_metadata(opt.out, cfg);
}

void cmd_build_centroids(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.train.seed = *opt.seed;
  cfg.resolve();
  const std::string ckpt = require_path(opt.checkpoint, cfg.paths.checkpoint, "checkpoint");
  prepare_out_dir(opt.out, opt.overwrite);
  const PolicyParams policy = load_policy(ckpt);
  const LeveledDataset data = read_leveled_dataset((fs::path(ckpt).parent_path() / "leveled").string());
  if (data.level_count() != policy.levels()) {
    throw DataError("checkpoint has " + std::to_string(policy.levels()) + " levels, leveled dataset has " +
                    std::to_string(data.level_count()));
  }
  const CentroidBank bank = build_centroids(policy, data, cfg.select.clusters_per_level, cfg.train.seed);
  save_bank(bank, join(opt.out, "centroids.json"));
  write_run_metadata(opt.out, cfg);
}

void cmd_evaluate(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.eval.seed = *opt.seed;
  cfg.resolve();
  const std::string ckpt = require_path(opt.checkpoint, cfg.paths.checkpoint, "checkpoint");
  const std::string bank_path = require_path(opt.bank, cfg.paths.bank, "bank");
  prepare_out_dir(opt.out, opt.overwrite);
  const PolicyParams policy = load_policy(ckpt);
  const CentroidBank bank = load_bank(bank_path);

  EvalOptions eo;
  eo.episodes = cfg.eval.episodes;
  eo.seed = cfg.eval.seed;
  std::vector<EvalReport> reports;
  SecRecommender sec(policy, bank);
  reports.push_back(evaluate(sec, cfg.sim, eo));
  for (std::size_t k = 0; k < policy.levels(); ++k) {
    FixedLevelRecommender fixed(policy, Level::from_index(k));
    reports.push_back(evaluate(fixed, cfg.sim, eo));
  }
  if (wants(cfg, "csv")) write_text_file(join(opt.out, "eval.csv"), eval_reports_to_csv(reports));
  if (wants(cfg, "json")) {
    for (const auto& r : reports) write_text_file(join(opt.out, "eval_" + r.name + ".json"), r.to_json());
  }
  json sel{{"level_counts", sec.level_counts()}, {"fallbacks", sec.fallback_count()}};
  write_text_file(join(opt.out, "selection.json"), sel.dump(1) + "\n");
  write_run_metadata(opt.out, cfg);
}

namespace {

struct VariantSpec {
  std::string name;
  std::size_t k_levels;
  double lambda;
};

const char* const kMetricNames[] = {"return_time", "click_rate", "long_view_rate", "like_rate"};

std::array<double, 4> metric_means(const EvalReport& r) {
  return {r.return_time.mean, r.click_rate.mean, r.long_view_rate.mean, r.like_rate.mean};
}

}  // namespace

void cmd_ablate(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.ablation_seeds = {*opt.seed};
  cfg.resolve();
  prepare_out_dir(opt.out, opt.overwrite);
  write_run_metadata(opt.out, cfg);
  const std::vector<VariantSpec> variants{{"full", cfg.strat.k_levels, cfg.train.lambda},
                                          {"no_multilevel", 1, cfg.train.lambda},
                                          {"no_aer", cfg.strat.k_levels, 0.0}};
  const std::vector<Trajectory> ts = generate_dataset(cfg.sim);

  CsvTable per_seed;
  per_seed.header = {"seed", "variant", "k_levels", "lambda"};
  for (const char* m : kMetricNames) per_seed.header.push_back(m);
  // results[variant][seed] = metric means
  std::vector<std::vector<std::array<double, 4>>> results(variants.size());
  const std::string per_seed_path = join(opt.out, "ablation_per_seed.csv");
  for (std::uint64_t seed : cfg.ablation_seeds) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto& spec = variants[v];
      const TrainedArtifacts art = train_variant(cfg, ts, spec.k_levels, spec.lambda, seed);
      const auto means = metric_means(evaluate_sec(cfg, art, seed));
      results[v].push_back(means);
      std::vector<std::string> row{std::to_string(seed), spec.name, std::to_string(spec.k_levels),
                                   format_double(spec.lambda)};
      for (double x : means) row.push_back(format_double(x));
      per_seed.rows.push_back(std::move(row));
      write_text_file(per_seed_path, per_seed.to_string());
    }
  }

  CsvTable table;
  table.header = {"variant", "k_levels", "lambda"};
  for (const char* m : kMetricNames) table.header.push_back(m);
  for (const char* m : kMetricNames) table.header.push_back(std::string("delta_") + m);
  table.header.push_back("delta_return_time_hw");
  for (const char* m : kMetricNames) table.header.push_back(std::string("sign_") + m);
  json summary = json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::array<double, 4> mean{};
    std::array<std::vector<double>, 4> diffs;
    for (std::size_t s = 0; s < results[v].size(); ++s) {
      for (std::size_t m = 0; m < 4; ++m) {
        mean[m] += results[v][s][m] / static_cast<double>(results[v].size());
        diffs[m].push_back(results[v][s][m] - results[0][s][m]);
      }
    }
    std::vector<std::string> row{variants[v].name, std::to_string(variants[v].k_levels),
                                 format_double(variants[v].lambda)};
    std::array<MetricSummary, 4> delta;
    for (std::size_t m = 0; m < 4; ++m) delta[m] = paired_summary(diffs[m]);
    for (double x : mean) row.push_back(format_double(x));
    for (const auto& d : delta) row.push_back(format_double(d.mean));
    row.push_back(format_double(delta[0].half_width));
    for (const auto& d : delta) row.push_back(sign_of(d.mean));
    table.rows.push_back(std::move(row));
    summary.push_back({{"variant", variants[v].name},
                       {"return_time", mean[0]},
                       {"delta_return_time", delta[0].mean},
                       {"paired_return_time_differences", diffs[0]}});
  }
  if (wants(cfg, "csv")) write_text_file(join(opt.out, "ablation.csv"), table.to_string());
  if (wants(cfg, "json")) write_text_file(join(opt.out, "ablation.json"), summary.dump(1) + "\n");
}

void cmd_sweep_lambda(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.sweep_seeds = {*opt.seed};
  cfg.resolve();
  prepare_out_dir(opt.out, opt.overwrite);
  write_run_metadata(opt.out, cfg);
  const std::vector<Trajectory> ts = generate_dataset(cfg.sim);

  CsvTable per_seed;
  per_seed.header = {"lambda", "seed", "return_time", "click_rate", "long_view_rate", "like_rate", "diversity"};
  CsvTable table;
  table.header = {"lambda", "return_time", "return_time_hw", "click_rate", "long_view_rate", "like_rate", "diversity",
                  "seeds"};
  const std::string per_seed_path = join(opt.out, "sweep_lambda_per_seed.csv");
  for (double lambda : cfg.sweep_grid) {
    std::vector<double> rt;
    std::array<double, 4> mean{};
    double diversity = 0.0;
    const double n = static_cast<double>(cfg.sweep_seeds.size());
    for (std::uint64_t seed : cfg.sweep_seeds) {
      const TrainedArtifacts art = train_variant(cfg, ts, cfg.strat.k_levels, lambda, seed);
      const auto means = metric_means(evaluate_sec(cfg, art, seed));
      const double div = action_diversity(art.policy, art.data, cfg.train.batch_size);
      rt.push_back(means[0]);
      for (std::size_t m = 0; m < 4; ++m) mean[m] += means[m] / n;
      diversity += div / n;
      per_seed.rows.push_back({format_double(lambda), std::to_string(seed), format_double(means[0]),
                               format_double(means[1]), format_double(means[2]), format_double(means[3]),
                               format_double(div)});
      write_text_file(per_seed_path, per_seed.to_string());
    }
    const MetricSummary s = paired_summary(rt);
    table.rows.push_back({format_double(lambda), format_double(mean[0]), format_double(s.half_width),
                          format_double(mean[1]), format_double(mean[2]), format_double(mean[3]),
                          format_double(diversity), std::to_string(cfg.sweep_seeds.size())});
  }
  write_text_file(join(opt.out, "sweep_lambda.csv"), table.to_string());
}

}  // namespace sec
