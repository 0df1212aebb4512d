#include "sec/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/io.hpp"

namespace sec {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPolicyStream = 15;
constexpr std::size_t kEvalUserOffset = 1'000'000;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void normalize(std::vector<double>& a) {
  const double n = norm(a);
  if (n > 0.0)
    for (double& x : a) x /= n;
}

std::vector<double> gaussian_vector(std::size_t n, Engine& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * standard_normal(rng);
  return v;
}

std::vector<double> random_unit(std::size_t n, Engine& rng) {
  std::vector<double> v = gaussian_vector(n, rng);
  normalize(v);
  return v;
}

double lerp(double a, double b, std::size_t i, std::size_t n) {
  if (n <= 1) return a;
  return a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

void SimConfig::validate() const {
  if (n_users < 1 || state_dim < 1 || action_dim < 1 || k_true < 1 || session_len_max < 1 || horizon_days < 1) {
    throw ConfigError("sim: counts must be >= 1");
  }
  if (action_kind == HeadKind::kDiscrete && classes < 2) throw ConfigError("sim: discrete actions need >= 2 classes");
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) throw ConfigError("sim: noise_scale must be finite and >= 0");
  if (state_dim < 2 * action_dim) {
    throw ConfigError("sim: state_dim " + std::to_string(state_dim) + " must be at least twice action_dim " +
                      std::to_string(action_dim));
  }
  const auto& c = calibration;
  const double wsum = c.weight_click + c.weight_long_view + c.weight_like + c.weight_novelty;
  if (std::abs(wsum - 1.0) > 1e-9 || c.weight_click < 0 || c.weight_long_view < 0 || c.weight_like < 0 ||
      c.weight_novelty < 0) {
    throw ConfigError("sim: satisfaction weights must be nonnegative and sum to 1");
  }
  if (!(c.gap_floor >= 1.0) || !(c.gap_ceiling >= c.gap_floor)) {
    throw ConfigError("sim: need 1 <= gap_floor <= gap_ceiling");
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double mean_return_gap(const SimCalibration& cal, double satisfaction) {
  const double s = std::clamp(satisfaction, 0.0, 1.0);
  return cal.gap_ceiling - (cal.gap_ceiling - cal.gap_floor) * s;
}

int sample_return_gap(double mean_gap, double u) {
  if (mean_gap <= 1.0) return 1;
  const double p = 1.0 / mean_gap;
  const double g = 1.0 + std::floor(std::log1p(-u) / std::log1p(-p));
  return static_cast<int>(std::min(g, 1e6));
}

World make_world(const SimConfig& cfg) {
  cfg.validate();
  Engine rng = make_engine(cfg.seed, {stream::kPopulation, 0});
  World w;
  const std::size_t d = cfg.action_dim;
  w.popular = random_unit(d, rng);
  const double share = cfg.population.popular_share;
  for (std::size_t k = 0; k < cfg.k_true; ++k) {
    std::vector<double> z = random_unit(d, rng);
    std::vector<double> c(d);
    for (std::size_t i = 0; i < d; ++i) c[i] = share * w.popular[i] + (1.0 - share) * z[i];
    normalize(c);
    w.archetype_centres.push_back(std::move(c));
    w.alignment.push_back(lerp(cfg.population.alignment_best, cfg.population.alignment_worst, k, cfg.k_true));
    w.diversity.push_back(lerp(cfg.population.diversity_best, cfg.population.diversity_worst, k, cfg.k_true));
  }
  w.items = Matrix(cfg.classes, d);
  for (std::size_t j = 0; j < cfg.classes; ++j) {
    const std::vector<double> e = random_unit(d, rng);
    std::copy(e.begin(), e.end(), w.items.row(j).begin());
  }
  return w;
}

UserLatent sample_user(const SimConfig& cfg, const World& world, std::uint64_t seed, std::size_t index,
                       std::optional<int> archetype) {
  Engine rng = make_engine(seed, {stream::kPopulation, 1, index});
  const std::size_t d = cfg.action_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  UserLatent u;
  u.index = index;
  const int drawn = static_cast<int>(std::uniform_int_distribution<std::size_t>(1, cfg.k_true)(rng));
  u.archetype = archetype.value_or(drawn);
  if (u.archetype < 1 || static_cast<std::size_t>(u.archetype) > cfg.k_true) {
    throw ContractError("sample_user: archetype " + std::to_string(u.archetype) + " outside 1.." +
                        std::to_string(cfg.k_true));
  }
  const auto& centre = world.archetype_centres[static_cast<std::size_t>(u.archetype - 1)];
  const std::vector<double> z = gaussian_vector(d, rng, scale * cfg.population.taste_spread);
  u.preference.resize(d);
  for (std::size_t i = 0; i < d; ++i) u.preference[i] = centre[i] + z[i];
  normalize(u.preference);
  const std::vector<double> n = gaussian_vector(d, rng, scale * cfg.population.preference_obs_noise);
  u.observed_preference.resize(d);
  for (std::size_t i = 0; i < d; ++i) u.observed_preference[i] = u.preference[i] + n[i];
  return u;
}

Population gen_population(const SimConfig& cfg) {
  Population pop{make_world(cfg), {}};
  pop.users.reserve(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) pop.users.push_back(sample_user(cfg, pop.world, cfg.seed, i));
  return pop;
}

// ---- environment -----------------------------------------------------------

RetentionEnv::RetentionEnv(const SimConfig& cfg, const World& world, UserLatent user, std::uint64_t stream_seed)
    : cfg_(&cfg), world_(&world), user_(std::move(user)), stream_seed_(stream_seed) {
  if (user_.preference.size() != cfg.action_dim) throw ContractError("RetentionEnv: preference width mismatch");
}

void RetentionEnv::begin_session() {
  if (in_session_) throw ContractError("begin_session: a session is already running");
  if (finished_) throw ContractError("begin_session: horizon exhausted");
  rng_ = make_engine(stream_seed_, {stream::kSession, static_cast<std::uint64_t>(day_)});
  in_session_ = true;
  session_steps_ = 0;
  satisfaction_ = 0.0;
  buffer_.clear();
  draw_intent();
}

void RetentionEnv::draw_intent() {
  const std::size_t d = cfg_->action_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  intent_ = random_unit(d, rng_);
  const std::vector<double> noise = gaussian_vector(d, rng_, scale * cfg_->population.intent_obs_noise);
  current_pref_.resize(d);
  const double kappa = cfg_->population.intent_strength;
  for (std::size_t i = 0; i < d; ++i) current_pref_[i] = user_.preference[i] + kappa * intent_[i];
  normalize(current_pref_);

  state_.assign(cfg_->state_dim, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    state_[i] = user_.observed_preference[i];
    state_[d + i] = intent_[i] + noise[i];
  }
  if (cfg_->state_dim > 2 * d) {
    state_[2 * d] = static_cast<double>(session_steps_) / static_cast<double>(cfg_->session_len_max);
  }
  if (cfg_->state_dim > 2 * d + 1) {
    state_[2 * d + 1] = session_steps_ ? satisfaction_ / static_cast<double>(session_steps_) : 0.0;
  }
}

std::vector<double> RetentionEnv::direction_of(const StepAction& action) const {
  if (const auto* v = std::get_if<std::vector<double>>(&action)) {
    if (v->size() != cfg_->action_dim) {
      throw ContractError("step: action has " + std::to_string(v->size()) + " entries, expected " +
                          std::to_string(cfg_->action_dim));
    }
    std::vector<double> dir = *v;
    for (double x : dir)
      if (!std::isfinite(x)) throw NumericalError("step: non-finite action");
    normalize(dir);
    return dir;
  }
  const std::size_t item = std::get<std::size_t>(action);
  if (item >= world_->items.rows()) {
    throw ContractError("step: item " + std::to_string(item) + " outside catalogue of " +
                        std::to_string(world_->items.rows()));
  }
  auto row = world_->items.row(item);
  return {row.begin(), row.end()};
}

StepFeedback RetentionEnv::step(const StepAction& action) {
  if (!in_session_) throw ContractError("step: user " + std::to_string(user_.index) + " is not in a session");
  const SimCalibration& cal = cfg_->calibration;
  const std::vector<double> dir = direction_of(action);

  const double n_click = standard_normal(rng_);
  const double n_long = standard_normal(rng_);
  const double n_like = standard_normal(rng_);
  const double u_click = uniform01(rng_);
  const double u_long = uniform01(rng_);
  const double u_like = uniform01(rng_);
  const double u_leave = uniform01(rng_);

  const double align_now = dot(dir, current_pref_);
  const double align_long = dot(dir, user_.preference);
  const double ns = cfg_->noise_scale;

  StepFeedback fb;
  fb.click_probability = logistic(cal.click_gain * align_now + cal.click_bias + ns * n_click);
  fb.long_view_probability = logistic(cal.long_view_gain * align_now + cal.long_view_bias + ns * n_long);
  fb.like_probability = logistic(cal.like_gain * align_long + cal.like_bias + ns * n_like);
  fb.click = u_click < fb.click_probability;
  fb.long_view = u_long < fb.long_view_probability;
  fb.like = u_like < fb.like_probability;

  if (norm(dir) == 0.0) {
    fb.novelty = 0.0;
  } else if (buffer_.empty()) {
    fb.novelty = 1.0;
  } else {
    double max_cos = 0.0;
    for (const auto& b : buffer_) max_cos = std::max(max_cos, dot(dir, b));
    fb.novelty = std::clamp(1.0 - max_cos, 0.0, 1.0);
  }
  fb.satisfaction = cal.weight_click * (fb.click ? 1.0 : 0.0) + cal.weight_long_view * (fb.long_view ? 1.0 : 0.0) +
                    cal.weight_like * (fb.like ? 1.0 : 0.0) + cal.weight_novelty * fb.novelty * fb.click_probability;

  satisfaction_ += fb.satisfaction;
  ++session_steps_;
  buffer_.push_back(dir);
  while (buffer_.size() > cal.novelty_window) buffer_.pop_front();

  const double progress = static_cast<double>(session_steps_) / static_cast<double>(cfg_->session_len_max);
  const double p_leave = logistic(cal.leave_bias + cal.leave_length * progress + cal.leave_stall * (0.5 - fb.satisfaction));
  fb.leave = u_leave < p_leave || session_steps_ >= cfg_->session_len_max;
  if (!fb.leave) draw_intent();
  return fb;
}

int RetentionEnv::end_of_session() {
  if (!in_session_) throw ContractError("end_of_session: no session running");
  const double mean_sat = session_steps_ ? satisfaction_ / static_cast<double>(session_steps_) : 0.0;
  Engine rng = make_engine(stream_seed_, {stream::kReturn, static_cast<std::uint64_t>(day_)});
  const int drawn = sample_return_gap(mean_return_gap(cfg_->calibration, mean_sat), uniform01(rng));
  const int remaining = std::max(1, cfg_->horizon_days - day_);
  const int gap = std::clamp(drawn, 1, remaining);
  day_ += gap;
  in_session_ = false;
  if (day_ >= cfg_->horizon_days) finished_ = true;
  return gap;
}

// ---- policies ----------------------------------------------------------------

GroundTruthPolicy::GroundTruthPolicy(const SimConfig& cfg, int archetype) : cfg_(&cfg), archetype_(archetype) {
  if (archetype < 1 || static_cast<std::size_t>(archetype) > cfg.k_true) {
    throw ContractError("GroundTruthPolicy: archetype outside 1..k_true");
  }
}

std::string GroundTruthPolicy::name() const { return "ground_truth_" + std::to_string(archetype_); }

namespace {

StepAction archetype_action(const SimConfig& cfg, int archetype, const StepContext& ctx) {
  const std::size_t a = static_cast<std::size_t>(archetype - 1);
  const double alpha = ctx.world.alignment[a];
  const double beta = ctx.world.diversity[a];
  const std::size_t d = cfg.action_dim;
  std::vector<double> target(d);
  for (std::size_t i = 0; i < d; ++i) target[i] = alpha * ctx.current_preference[i] + (1.0 - alpha) * ctx.world.popular[i];
  const std::vector<double> xi = gaussian_vector(d, ctx.rng, 1.0 / std::sqrt(static_cast<double>(d)));
  if (cfg.action_kind == HeadKind::kContinuous) {
    for (std::size_t i = 0; i < d; ++i) target[i] += beta * xi[i];
    normalize(target);
    return target;
  }
  const double temp = cfg.population.item_temperature * (1.0 - beta);
  std::vector<double> logits(cfg.classes);
  for (std::size_t j = 0; j < cfg.classes; ++j) {
    double s = 0.0;
    auto e = ctx.world.items.row(j);
    for (std::size_t i = 0; i < d; ++i) s += e[i] * target[i];
    logits[j] = temp * s;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - mx));
  double u = uniform01(ctx.rng) * total;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    u -= logits[j];
    if (u < 0.0) return j;
  }
  return cfg.classes - 1;
}

}  // namespace

StepAction GroundTruthPolicy::act(const StepContext& ctx) { return archetype_action(*cfg_, archetype_, ctx); }

StepAction NaturalBehaviour::act(const StepContext& ctx) { return archetype_action(*cfg_, ctx.user.archetype, ctx); }

StepAction UniformRandomRecommender::act(const StepContext& ctx) {
  if (cfg_->action_kind == HeadKind::kDiscrete) {
    return std::uniform_int_distribution<std::size_t>(0, cfg_->classes - 1)(ctx.rng);
  }
  return random_unit(cfg_->action_dim, ctx.rng);
}

// ---- rollouts ----------------------------------------------------------------

Rollout rollout_user(const SimConfig& cfg, const World& world, const UserLatent& user, std::uint64_t stream_seed,
                     Recommender& rec) {
  RetentionEnv env(cfg, world, user, stream_seed);
  Rollout out;
  char id[32];
  std::snprintf(id, sizeof id, "u%07zu", user.index);
  out.trajectory.user_id = id;
  out.trajectory.window_days = cfg.horizon_days;
  out.trajectory.archetype = user.archetype;
  while (!env.finished()) {
    env.begin_session();
    Engine policy_rng = make_engine(stream_seed, {kPolicyStream, static_cast<std::uint64_t>(env.day())});
    ++out.stats.sessions;
    ++out.trajectory.active_days;
    for (;;) {
      const StepContext ctx{env.state(), env.user(), env.current_preference(), world, policy_rng};
      StepAction action = rec.act(ctx);
      Step step{env.state(), action, {}};
      const StepFeedback fb = env.step(action);
      step.signals = {{"click", fb.click ? 1.0 : 0.0},
                      {"long_view", fb.long_view ? 1.0 : 0.0},
                      {"like", fb.like ? 1.0 : 0.0}};
      out.trajectory.steps.push_back(std::move(step));
      ++out.stats.steps;
      out.stats.clicks += fb.click;
      out.stats.long_views += fb.long_view;
      out.stats.likes += fb.like;
      if (fb.leave) break;
    }
    const int gap = env.end_of_session();
    if (env.finished()) {
      out.stats.censored_gap = gap;
    } else {
      out.trajectory.return_times.push_back(static_cast<double>(gap));
    }
  }
  return out;
}

std::vector<Trajectory> generate_dataset(const SimConfig& cfg) {
  const Population pop = gen_population(cfg);
  NaturalBehaviour natural(cfg);
  std::vector<Trajectory> out;
  out.reserve(pop.users.size());
  for (const auto& u : pop.users) {
    out.push_back(rollout_user(cfg, pop.world, u, derive_seed(cfg.seed, {stream::kSession, u.index}), natural)
                      .trajectory);
  }
  return out;
}

// ---- evaluation ----------------------------------------------------------------

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    s.half_width = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

}  // namespace

EvalReport evaluate(Recommender& rec, const SimConfig& cfg, const EvalOptions& options) {
  cfg.validate();
  rec.check_compatible(cfg);
  if (options.episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  const World world = make_world(cfg);
  NaturalBehaviour natural(cfg);

  EvalReport report;
  report.name = rec.name();
  std::vector<double> rt, cr, lv, lk;
  for (std::size_t i = 0; i < options.episodes; ++i) {
    const std::size_t idx = kEvalUserOffset + i;
    const UserLatent user = sample_user(cfg, world, options.seed, idx, options.archetype);
    const Rollout history =
        rollout_user(cfg, world, user, derive_seed(options.seed, {stream::kHistory, idx}), natural);
    rec.begin_user(history.trajectory);
    const Rollout run = rollout_user(cfg, world, user, derive_seed(options.seed, {stream::kEvaluation, idx}), rec);

    UserEval ue;
    ue.user = idx;
    ue.archetype = user.archetype;
    ue.steps = run.stats.steps;
    ue.sessions = run.stats.sessions;
    const auto& gaps = run.trajectory.return_times;
    ue.return_time = gaps.empty() ? static_cast<double>(run.stats.censored_gap)
                                  : std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    const double steps = static_cast<double>(run.stats.steps);
    ue.click_rate = static_cast<double>(run.stats.clicks) / steps;
    ue.long_view_rate = static_cast<double>(run.stats.long_views) / steps;
    ue.like_rate = static_cast<double>(run.stats.likes) / steps;
    rt.push_back(ue.return_time);
    cr.push_back(ue.click_rate);
    lv.push_back(ue.long_view_rate);
    lk.push_back(ue.like_rate);
    report.users.push_back(ue);
  }
  report.return_time = summarize(rt);
  report.click_rate = summarize(cr);
  report.long_view_rate = summarize(lv);
  report.like_rate = summarize(lk);
  return report;
}

std::string EvalReport::to_json() const {
  auto metric = [](const MetricSummary& m) { return json{{"mean", m.mean}, {"half_width", m.half_width}}; };
  json per_user = json::array();
  for (const auto& u : users) {
    per_user.push_back({{"user", u.user},
                        {"archetype", u.archetype},
                        {"return_time", u.return_time},
                        {"click_rate", u.click_rate},
                        {"long_view_rate", u.long_view_rate},
                        {"like_rate", u.like_rate},
                        {"steps", u.steps},
                        {"sessions", u.sessions}});
  }
  json doc{{"name", name},
           {"return_time", metric(return_time)},
           {"click_rate", metric(click_rate)},
           {"long_view_rate", metric(long_view_rate)},
           {"like_rate", metric(like_rate)},
           {"users", std::move(per_user)}};
  return doc.dump(1) + "\n";
}

std::string eval_reports_to_csv(const std::vector<EvalReport>& reports) {
  CsvTable t;
  t.header = {"name",           "return_time", "return_time_hw", "click_rate",     "click_rate_hw",
              "long_view_rate", "long_view_rate_hw", "like_rate",  "like_rate_hw"};
  for (const auto& r : reports) {
    t.rows.push_back({r.name, format_double(r.return_time.mean), format_double(r.return_time.half_width),
                      format_double(r.click_rate.mean), format_double(r.click_rate.half_width),
                      format_double(r.long_view_rate.mean), format_double(r.long_view_rate.half_width),
                      format_double(r.like_rate.mean), format_double(r.like_rate.half_width)});
  }
  return t.to_string();
}

std::vector<EvalReport> eval_reports_from_csv(const std::string& text) {
  const CsvTable t = CsvTable::parse(text);
  std::vector<EvalReport> out;
  for (const auto& row : t.rows) {
    EvalReport r;
    r.name = row[t.column("name")];
    auto m = [&](const char* col) {
      return MetricSummary{parse_double(row[t.column(col)]), parse_double(row[t.column(std::string(col) + "_hw")])};
    };
    r.return_time = m("return_time");
    r.click_rate = m("click_rate");
    r.long_view_rate = m("long_view_rate");
    r.like_rate = m("like_rate");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sec
