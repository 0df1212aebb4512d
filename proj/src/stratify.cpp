#include "sec/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/io.hpp"

namespace sec {

using nlohmann::json;

HeadKind Trajectory::action_kind() const {
  if (steps.empty()) throw DataError("trajectory '" + user_id + "' has no steps");
  return std::holds_alternative<std::vector<double>>(steps.front().action) ? HeadKind::kContinuous
                                                                          : HeadKind::kDiscrete;
}

void Trajectory::validate() const {
  const HeadKind kind = action_kind();
  const std::size_t ds = steps.front().state.size();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Step& s = steps[i];
    if (s.state.size() != ds) {
      throw DataError("trajectory '" + user_id + "' step " + std::to_string(i) + ": state dimension " +
                      std::to_string(s.state.size()) + " != " + std::to_string(ds));
    }
    const bool cont = std::holds_alternative<std::vector<double>>(s.action);
    if (cont != (kind == HeadKind::kContinuous)) {
      throw DataError("trajectory '" + user_id + "' mixes continuous and discrete actions");
    }
    for (double x : s.state)
      if (!std::isfinite(x)) throw DataError("trajectory '" + user_id + "': non-finite state entry");
  }
  for (double r : return_times)
    if (!(r >= 0.0) || !std::isfinite(r)) throw DataError("trajectory '" + user_id + "': negative return time");
  if (active_days < 0) throw DataError("trajectory '" + user_id + "': negative active_days");
  if (window_days && active_days > *window_days) {
    throw DataError("trajectory '" + user_id + "': active_days exceeds window");
  }
}

std::string trajectory_to_json(const Trajectory& t) {
  json steps = json::array();
  for (const Step& s : t.steps) {
    json js;
    js["state"] = s.state;
    if (const auto* v = std::get_if<std::vector<double>>(&s.action)) {
      js["action"] = *v;
    } else {
      js["action"] = std::get<std::size_t>(s.action);
    }
    js["signals"] = s.signals;
    steps.push_back(std::move(js));
  }
  json doc{{"user_id", t.user_id},
           {"steps", std::move(steps)},
           {"return_times", t.return_times},
           {"active_days", t.active_days}};
  if (t.window_days) doc["window_days"] = *t.window_days;
  if (t.archetype) doc["archetype"] = *t.archetype;
  return doc.dump();
}

Trajectory trajectory_from_json(const std::string& line) {
  try {
    const json doc = json::parse(line);
    Trajectory t;
    t.user_id = doc.at("user_id").is_string() ? doc.at("user_id").get<std::string>() : doc.at("user_id").dump();
    for (const auto& js : doc.at("steps")) {
      Step s;
      s.state = js.at("state").get<std::vector<double>>();
      const auto& a = js.at("action");
      if (a.is_array()) {
        s.action = a.get<std::vector<double>>();
      } else {
        s.action = a.get<std::size_t>();
      }
      if (js.contains("signals")) s.signals = js.at("signals").get<std::map<std::string, double>>();
      t.steps.push_back(std::move(s));
    }
    t.return_times = doc.at("return_times").get<std::vector<double>>();
    t.active_days = doc.at("active_days").get<int>();
    if (doc.contains("window_days")) t.window_days = doc.at("window_days").get<int>();
    if (doc.contains("archetype")) t.archetype = doc.at("archetype").get<int>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("trajectory line: ") + e.what());
  }
}

void write_trajectories(const std::string& path, std::span<const Trajectory> ts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& t : ts) out << trajectory_to_json(t) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::vector<Trajectory> ts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ts.push_back(trajectory_from_json(line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ts;
}

std::string to_string(RetentionMode mode) {
  return mode == RetentionMode::kActiveDays ? "active_days" : "return_time";
}

RetentionMode retention_mode_from_string(const std::string& name) {
  if (name == "active_days") return RetentionMode::kActiveDays;
  if (name == "return_time") return RetentionMode::kReturnTime;
  throw ConfigError("unknown retention mode '" + name + "'");
}

double retention_score(const Trajectory& t, RetentionMode mode) {
  if (mode == RetentionMode::kActiveDays) return static_cast<double>(t.active_days);
  if (t.return_times.empty()) {
    throw DataError("retention_score: user '" + t.user_id + "' has no return times");
  }
  double sum = 0.0;
  for (double r : t.return_times) sum += r;
  return -(sum / static_cast<double>(t.return_times.size()));
}

bool is_expert(const Trajectory& t, double threshold, RetentionMode mode) {
  if (mode == RetentionMode::kActiveDays) return static_cast<double>(t.active_days) >= threshold;
  if (t.return_times.empty()) return false;
  return -retention_score(t, mode) <= threshold;
}

std::vector<Trajectory> select_experts(std::span<const Trajectory> ts, double threshold, RetentionMode mode) {
  std::vector<Trajectory> out;
  for (const auto& t : ts)
    if (is_expert(t, threshold, mode)) out.push_back(t);
  return out;
}

Level StratificationRule::level_for_score(double score) const {
  for (std::size_t j = 0; j < boundaries.size(); ++j)
    if (score >= boundaries[j]) return Level::from_index(j);
  return Level::from_index(levels - 1);
}

Level StratificationRule::historical_level(const Trajectory& t) const {
  if (!is_expert(t, expert_threshold, mode)) return Level::from_index(levels - 1);
  return level_for_score(retention_score(t, mode));
}

std::size_t LeveledDataset::action_dim() const {
  if (kind == HeadKind::kContinuous) return levels.front().actions.cols();
  std::size_t mx = 0;
  for (const auto& l : levels)
    for (std::size_t i : l.items) mx = std::max(mx, i + 1);
  return mx;
}

namespace {

void fill_level(LevelData& level, const std::vector<const Trajectory*>& members,
                const std::map<std::string, std::size_t>& user_index, HeadKind kind) {
  std::size_t n = 0;
  for (const Trajectory* t : members) n += t->steps.size();
  if (n == 0) return;
  const std::size_t ds = members.front()->steps.front().state.size();
  level.states = Matrix(n, ds);
  if (kind == HeadKind::kContinuous) {
    level.actions = Matrix(n, std::get<std::vector<double>>(members.front()->steps.front().action).size());
  }
  std::size_t row = 0;
  for (const Trajectory* t : members) {
    const std::size_t uid = user_index.at(t->user_id);
    for (const Step& s : t->steps) {
      if (s.state.size() != ds) throw DataError("stratify: inconsistent state dimension across users");
      std::copy(s.state.begin(), s.state.end(), level.states.row(row).begin());
      if (kind == HeadKind::kContinuous) {
        const auto& a = std::get<std::vector<double>>(s.action);
        if (a.size() != level.actions.cols()) throw DataError("stratify: inconsistent action dimension");
        std::copy(a.begin(), a.end(), level.actions.row(row).begin());
      } else {
        level.items.push_back(std::get<std::size_t>(s.action));
      }
      level.pair_user.push_back(uid);
      ++row;
    }
  }
}

}  // namespace

LeveledDataset stratify(std::span<const Trajectory> experts, std::size_t k, RetentionMode mode,
                        double expert_threshold) {
  if (k < 1) throw ConfigError("stratify: level count must be >= 1");
  if (experts.size() < k) {
    throw DataError("stratify: " + std::to_string(experts.size()) + " experts cannot fill " + std::to_string(k) +
                    " levels");
  }
  LeveledDataset ds;
  ds.kind = experts.front().action_kind();
  ds.rule.mode = mode;
  ds.rule.expert_threshold = expert_threshold;
  ds.rule.levels = k;

  std::vector<double> scores;
  scores.reserve(experts.size());
  for (const auto& t : experts) {
    t.validate();
    if (t.action_kind() != ds.kind) throw DataError("stratify: experts mix action kinds");
    scores.push_back(retention_score(t, mode));
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t n = sorted.size();
  for (std::size_t j = 1; j < k; ++j) {
    const std::size_t cut = (j * n + k - 1) / k;  // ceil(j n / k)
    ds.rule.boundaries.push_back(sorted[cut - 1]);
  }

  // Users in a canonical order so the result does not depend on input order.
  std::vector<std::size_t> order(experts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return experts[a].user_id < experts[b].user_id;
  });

  std::map<std::string, std::size_t> user_index;
  std::vector<std::vector<const Trajectory*>> members(k);
  for (std::size_t idx : order) {
    const Trajectory& t = experts[idx];
    if (user_index.count(t.user_id)) throw DataError("stratify: duplicate user id '" + t.user_id + "'");
    user_index[t.user_id] = ds.users.size();
    ds.users.push_back(t.user_id);
    const Level lvl = ds.rule.level_for_score(scores[idx]);
    ds.level_of_user[t.user_id] = lvl;
    members[lvl.index()].push_back(&t);
  }
  ds.levels.resize(k);
  for (std::size_t j = 0; j < k; ++j) fill_level(ds.levels[j], members[j], user_index, ds.kind);
  return ds;
}

LeveledDataset build_leveled_dataset(std::span<const Trajectory> all, std::size_t k, RetentionMode mode,
                                     double expert_threshold) {
  std::vector<Trajectory> experts = select_experts(all, expert_threshold, mode);
  LeveledDataset ds = stratify(experts, k, mode, expert_threshold);
  for (const auto& t : all)
    if (!ds.level_of_user.count(t.user_id)) ds.level_of_user[t.user_id] = std::nullopt;
  return ds;
}

// ---- persistence -----------------------------------------------------------

std::string rule_to_json(const StratificationRule& rule) {
  json doc{{"mode", to_string(rule.mode)},
           {"expert_threshold", rule.expert_threshold},
           {"levels", rule.levels},
           {"boundaries", rule.boundaries}};
  return doc.dump();
}

StratificationRule rule_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    StratificationRule r;
    r.mode = retention_mode_from_string(doc.at("mode").get<std::string>());
    r.expert_threshold = doc.at("expert_threshold").get<double>();
    r.levels = doc.at("levels").get<std::size_t>();
    r.boundaries = doc.at("boundaries").get<std::vector<double>>();
    if (r.levels < 1 || r.boundaries.size() + 1 != r.levels) throw DataError("stratification rule: bad level count");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("stratification rule: ") + e.what());
  }
}

namespace {

std::string level_file_name(std::size_t j) { return "level_" + std::to_string(j + 1) + ".csv"; }

std::string pairs_to_csv(const LevelData& level, const std::vector<std::string>& users, HeadKind kind) {
  CsvTable t;
  t.header.push_back("user_id");
  for (std::size_t c = 0; c < level.states.cols(); ++c) t.header.push_back("s" + std::to_string(c));
  if (kind == HeadKind::kContinuous) {
    for (std::size_t c = 0; c < level.actions.cols(); ++c) t.header.push_back("a" + std::to_string(c));
  } else {
    t.header.push_back("item");
  }
  for (std::size_t i = 0; i < level.size(); ++i) {
    std::vector<std::string> row{users[level.pair_user[i]]};
    for (double x : level.states.row(i)) row.push_back(format_double(x));
    if (kind == HeadKind::kContinuous) {
      for (double x : level.actions.row(i)) row.push_back(format_double(x));
    } else {
      row.push_back(std::to_string(level.items[i]));
    }
    t.rows.push_back(std::move(row));
  }
  return t.to_string();
}

}  // namespace

void write_leveled_dataset(const std::string& dir, const LeveledDataset& ds) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "sec-leveled-dataset";
  manifest["version"] = 1;
  manifest["action_kind"] = to_string(ds.kind);
  manifest["rule"] = json::parse(rule_to_json(ds.rule));
  json levels = json::array();
  for (std::size_t j = 0; j < ds.levels.size(); ++j) {
    std::vector<std::string> members;
    for (const auto& [user, lvl] : ds.level_of_user)
      if (lvl && lvl->index() == j) members.push_back(user);
    levels.push_back({{"level", j + 1},
                      {"pairs", ds.levels[j].size()},
                      {"users", members.size()},
                      {"file", level_file_name(j)}});
    write_text_file((std::filesystem::path(dir) / level_file_name(j)).string(),
                    pairs_to_csv(ds.levels[j], ds.users, ds.kind));
  }
  manifest["levels"] = std::move(levels);
  json assignment = json::object();
  for (const auto& [user, lvl] : ds.level_of_user) assignment[user] = lvl ? json(lvl->value) : json(nullptr);
  manifest["level_of_user"] = std::move(assignment);
  write_text_file((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(1) + "\n");
}

LeveledDataset read_leveled_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  json manifest;
  try {
    manifest = json::parse(read_text_file((root / "manifest.json").string()));
  } catch (const json::exception& e) {
    throw DataError(std::string("leveled dataset manifest: ") + e.what());
  }
  LeveledDataset ds;
  ds.kind = head_kind_from_string(manifest.at("action_kind").get<std::string>());
  ds.rule = rule_from_json(manifest.at("rule").dump());
  std::map<std::string, std::size_t> user_index;
  for (const auto& lj : manifest.at("levels")) {
    const CsvTable t = CsvTable::parse(read_text_file((root / lj.at("file").get<std::string>()).string()));
    std::size_t ds_cols = 0, a_cols = 0;
    for (const auto& h : t.header) {
      if (h.size() > 1 && h[0] == 's' && std::isdigit(static_cast<unsigned char>(h[1]))) ++ds_cols;
      if (h.size() > 1 && h[0] == 'a' && std::isdigit(static_cast<unsigned char>(h[1]))) ++a_cols;
    }
    LevelData level;
    level.states = Matrix(t.rows.size(), ds_cols);
    if (ds.kind == HeadKind::kContinuous) level.actions = Matrix(t.rows.size(), a_cols);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      auto [it, inserted] = user_index.emplace(row[0], ds.users.size());
      if (inserted) ds.users.push_back(row[0]);
      level.pair_user.push_back(it->second);
      for (std::size_t c = 0; c < ds_cols; ++c) level.states(i, c) = parse_double(row[1 + c]);
      if (ds.kind == HeadKind::kContinuous) {
        for (std::size_t c = 0; c < a_cols; ++c) level.actions(i, c) = parse_double(row[1 + ds_cols + c]);
      } else {
        level.items.push_back(static_cast<std::size_t>(std::stoul(row[1 + ds_cols])));
      }
    }
    ds.levels.push_back(std::move(level));
  }
  for (const auto& [user, lvl] : manifest.at("level_of_user").items()) {
    ds.level_of_user[user] = lvl.is_null() ? std::nullopt : std::optional<Level>(Level{lvl.get<int>()});
  }
  return ds;
}

}  // namespace sec
