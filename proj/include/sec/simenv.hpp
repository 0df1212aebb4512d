#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "sec/matrix.hpp"
#include "sec/policy.hpp"
#include "sec/random.hpp"
#include "sec/stratify.hpp"

namespace sec {

// Feedback, leave and return calibration. Satisfaction weights sum to one so
// per-step satisfaction lies in [0, 1].
struct SimCalibration {
  double click_gain = 3.0;
  double click_bias = 0.0;
  double long_view_gain = 6.0;
  double long_view_bias = -4.0;
  double like_gain = 3.0;
  double like_bias = -1.5;

  double weight_click = 0.15;
  double weight_long_view = 0.4;
  double weight_like = 0.1;
  double weight_novelty = 0.35;
  std::size_t novelty_window = 4;

  double leave_bias = -2.5;
  double leave_length = 2.5;  // per unit of session progress
  double leave_stall = 3.0;   // per unit of satisfaction shortfall below 0.5

  double gap_floor = 1.0;     // mean return gap at satisfaction 1
  double gap_ceiling = 8.0;   // mean return gap at satisfaction 0
};

// Generative parameters of users and of the archetype expert behaviour.
struct PopulationParams {
  double taste_spread = 0.8;          // user preference spread around the archetype centre
  double popular_share = 0.5;         // pull of archetype centres toward the popular direction
  double intent_strength = 0.6;       // weight of the per-step intent in the current preference
  double preference_obs_noise = 0.3;  // fixed per-user noise on the observed preference
  double intent_obs_noise = 0.5;      // per-step noise on the observed intent
  double alignment_best = 0.95;       // archetype 1
  double alignment_worst = 0.1;       // archetype k_true
  double diversity_best = 0.2;
  double diversity_worst = 0.6;
  double item_temperature = 6.0;      // discrete expert softmax sharpness
};

struct SimConfig {
  std::size_t n_users = 2000;
  std::size_t state_dim = 16;
  HeadKind action_kind = HeadKind::kContinuous;
  std::size_t action_dim = 8;  // preference / embedding width
  std::size_t classes = 32;    // item catalogue size, discrete actions
  std::size_t k_true = 4;
  std::size_t session_len_max = 8;
  double noise_scale = 0.1;  // std-dev of logit noise
  int horizon_days = 30;
  std::uint64_t seed = 7;
  SimCalibration calibration;
  PopulationParams population;

  // Throws ConfigError when a count is zero, noise is not finite or
  // state_dim < 2 * action_dim.
  void validate() const;
};

// Fixed structure shared by every user of one seeded world.
struct World {
  std::vector<double> popular;                        // unit
  std::vector<std::vector<double>> archetype_centres;  // unit, one per archetype
  std::vector<double> alignment;                      // per archetype, decreasing
  std::vector<double> diversity;                      // per archetype, increasing
  Matrix items;                                       // classes×action_dim, unit rows
};

struct UserLatent {
  std::size_t index = 0;
  int archetype = 1;  // 1-based
  std::vector<double> preference;           // unit
  std::vector<double> observed_preference;  // preference plus fixed noise
};

struct Population {
  World world;
  std::vector<UserLatent> users;
};

World make_world(const SimConfig& cfg);
UserLatent sample_user(const SimConfig& cfg, const World& world, std::uint64_t seed, std::size_t index,
                       std::optional<int> archetype = std::nullopt);
Population gen_population(const SimConfig& cfg);

// Mean of the geometric return-gap distribution at a session's mean satisfaction.
double mean_return_gap(const SimCalibration& cal, double satisfaction);
// Inverse-CDF draw from the geometric law on {1, 2, ...} with the given mean.
int sample_return_gap(double mean_gap, double u);
double logistic(double x);

struct StepFeedback {
  bool click = false;
  bool long_view = false;
  bool like = false;
  bool leave = false;
  double click_probability = 0.0;
  double long_view_probability = 0.0;
  double like_probability = 0.0;
  double novelty = 0.0;
  double satisfaction = 0.0;  // this step's contribution, in [0, 1]
};

// One user's environment: sessions on integer days within the horizon.
class RetentionEnv {
 public:
  RetentionEnv(const SimConfig& cfg, const World& world, UserLatent user, std::uint64_t stream_seed);

  const UserLatent& user() const { return user_; }
  int day() const { return day_; }
  bool in_session() const { return in_session_; }
  bool finished() const { return finished_; }
  std::size_t session_steps() const { return session_steps_; }
  double session_satisfaction() const { return satisfaction_; }  // summed over the session

  // Starts a session on the current day. Throws ContractError if a session
  // is running or the horizon is exhausted.
  void begin_session();
  // Observation for the pending step: [observed preference; observed intent; extras].
  const std::vector<double>& state() const { return state_; }
  // The preference this step's feedback is computed against (unit).
  const std::vector<double>& current_preference() const { return current_pref_; }

  // Applies one recommendation. Rejects users that are not in a session.
  StepFeedback step(const StepAction& action);

  // Closes the session and returns the gap in days until the next visit,
  // clamped to [1, days remaining]. The user is finished when the next visit
  // falls outside the horizon.
  int end_of_session();

 private:
  std::vector<double> direction_of(const StepAction& action) const;
  void draw_intent();

  const SimConfig* cfg_;
  const World* world_;
  UserLatent user_;
  std::uint64_t stream_seed_;
  Engine rng_;
  int day_ = 0;
  bool in_session_ = false;
  bool finished_ = false;
  std::size_t session_steps_ = 0;
  double satisfaction_ = 0.0;
  std::deque<std::vector<double>> buffer_;
  std::vector<double> intent_;
  std::vector<double> current_pref_;
  std::vector<double> state_;
};

// Everything a recommender may look at for one step. Learned recommenders
// only read `state`; ground-truth policies also read the latent fields.
struct StepContext {
  const std::vector<double>& state;
  const UserLatent& user;
  const std::vector<double>& current_preference;
  const World& world;
  Engine& rng;  // recommender-private stream
};

class Recommender {
 public:
  virtual ~Recommender() = default;
  virtual std::string name() const = 0;
  // Throws ContractError when the recommender cannot act in this environment.
  virtual void check_compatible(const SimConfig& cfg) const { (void)cfg; }
  // Called once per evaluated user with the user's pre-evaluation history.
  virtual void begin_user(const Trajectory& history) { (void)history; }
  virtual StepAction act(const StepContext& ctx) = 0;
};

// Expert behaviour of an archetype: alignment with the current preference
// decreasing in the archetype index, random spread increasing in it.
class GroundTruthPolicy : public Recommender {
 public:
  GroundTruthPolicy(const SimConfig& cfg, int archetype);
  std::string name() const override;
  StepAction act(const StepContext& ctx) override;

 private:
  const SimConfig* cfg_;
  int archetype_;
};

// Plays each user's own archetype policy.
class NaturalBehaviour : public Recommender {
 public:
  explicit NaturalBehaviour(const SimConfig& cfg) : cfg_(&cfg) {}
  std::string name() const override { return "natural"; }
  StepAction act(const StepContext& ctx) override;

 private:
  const SimConfig* cfg_;
};

// Uniform random direction (continuous) or uniform random item (discrete).
class UniformRandomRecommender : public Recommender {
 public:
  explicit UniformRandomRecommender(const SimConfig& cfg) : cfg_(&cfg) {}
  std::string name() const override { return "uniform_random"; }
  StepAction act(const StepContext& ctx) override;

 private:
  const SimConfig* cfg_;
};

struct RolloutStats {
  std::size_t steps = 0;
  std::size_t sessions = 0;
  std::size_t clicks = 0;
  std::size_t long_views = 0;
  std::size_t likes = 0;
  int censored_gap = 0;  // days from the last session to the horizon end
};

struct Rollout {
  Trajectory trajectory;
  RolloutStats stats;
};

// Rolls one user for the whole horizon under `rec`. Only returns inside the
// horizon are recorded in return_times.
Rollout rollout_user(const SimConfig& cfg, const World& world, const UserLatent& user, std::uint64_t stream_seed,
                     Recommender& rec);

// Every user of the population under their archetype's expert behaviour.
std::vector<Trajectory> generate_dataset(const SimConfig& cfg);

struct MetricSummary {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation interval
};

struct UserEval {
  std::size_t user = 0;
  int archetype = 1;
  double return_time = 0.0;  // mean observed gap; the censored gap if the user never returned
  double click_rate = 0.0;
  double long_view_rate = 0.0;
  double like_rate = 0.0;
  std::size_t steps = 0;
  std::size_t sessions = 0;
};

struct EvalReport {
  std::string name;
  MetricSummary return_time;
  MetricSummary click_rate;
  MetricSummary long_view_rate;
  MetricSummary like_rate;
  std::vector<UserEval> users;

  std::string to_json() const;
};

struct EvalOptions {
  std::size_t episodes = 1000;  // fresh users
  std::uint64_t seed = 1001;
  std::optional<int> archetype;  // restrict the population to one archetype
};

// Fresh users each get a history under their natural behaviour, then a
// horizon of recommendations from `rec`. Identical options give identical reports.
EvalReport evaluate(Recommender& rec, const SimConfig& cfg, const EvalOptions& options);

// Rows: name, the four metric means and half-widths.
std::string eval_reports_to_csv(const std::vector<EvalReport>& reports);
std::vector<EvalReport> eval_reports_from_csv(const std::string& text);

}  // namespace sec
