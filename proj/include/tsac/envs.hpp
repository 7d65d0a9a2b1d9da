#pragma once

// Fixed-horizon point-mass control tasks with dense or terminal-only reward.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsac::envs {

enum class RewardMode { Dense, Sparse };

RewardMode parse_reward_mode(std::string_view s);
std::string_view to_string(RewardMode m);

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 0;
  int horizon = 0;
  RewardMode reward_mode = RewardMode::Dense;
};

struct EnvState {
  std::vector<double> observation;
  int step_index = 0;
  bool done = false;
  bool success = false;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view id() const = 0;
  virtual const EnvSpec& spec() const = 0;

  /// Deterministic initial state for `seed`.
  virtual EnvState reset(std::uint64_t seed) = 0;

  /// Actions are clipped to [-1, 1]. Stepping a finished episode throws std::logic_error.
  virtual StepResult step(std::span<const double> action) = 0;
};

struct PointMassOptions {
  std::string id = "pointmass-2d";
  int dims = 2;
  int horizon = 50;
  double dt = 0.1;
  double success_tol = 0.1;
  bool phase_feature = false;  // append step_index / horizon to the observation
  RewardMode reward_mode = RewardMode::Dense;
};

/// Double integrator x' = x + dt v, v' = v + dt a toward a random goal in [-1, 1]^dims.
/// Observation: [x, v, goal] (+ [t / T] when phase_feature is set).
class PointMass final : public Environment {
 public:
  explicit PointMass(PointMassOptions opts);

  std::string_view id() const override { return opts_.id; }
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;

  std::span<const double> position() const { return pos_; }
  std::span<const double> velocity() const { return vel_; }
  std::span<const double> goal() const { return goal_; }
  double distance_to_goal() const;

 private:
  EnvState snapshot() const;

  PointMassOptions opts_;
  EnvSpec spec_;
  std::vector<double> pos_;
  std::vector<double> vel_;
  std::vector<double> goal_;
  int step_ = 0;
  bool done_ = true;
};

/// Registered ids: "pointmass-2d" (obs 6, act 2, T = 50) and
/// "chain-reach" (1-D, obs [x, v, goal, t/T], act 1, T = 25).
std::unique_ptr<Environment> make_env(std::string_view id, RewardMode mode);
bool is_known_env(std::string_view id);
std::vector<std::string> known_envs();

}  // namespace tsac::envs
