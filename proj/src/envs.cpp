#include "tsac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsac::envs {

RewardMode parse_reward_mode(std::string_view s) {
  if (s == "dense") return RewardMode::Dense;
  if (s == "sparse") return RewardMode::Sparse;
  throw std::invalid_argument("reward_mode must be dense or sparse, got " + std::string(s));
}

std::string_view to_string(RewardMode m) { return m == RewardMode::Dense ? "dense" : "sparse"; }

PointMass::PointMass(PointMassOptions opts) : opts_(std::move(opts)) {
  if (opts_.dims < 1) throw std::invalid_argument("point mass needs at least one dimension");
  if (opts_.horizon < 2) throw std::invalid_argument("horizon must be >= 2");
  spec_.act_dim = opts_.dims;
  spec_.obs_dim = 3 * opts_.dims + (opts_.phase_feature ? 1 : 0);
  spec_.horizon = opts_.horizon;
  spec_.reward_mode = opts_.reward_mode;
  pos_.assign(static_cast<std::size_t>(opts_.dims), 0.0);
  vel_ = pos_;
  goal_ = pos_;
}

EnvState PointMass::reset(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x706d6173u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& x : pos_) x = unit(rng);
  for (auto& g : goal_) g = unit(rng);
  std::fill(vel_.begin(), vel_.end(), 0.0);
  step_ = 0;
  done_ = false;
  return snapshot();
}

double PointMass::distance_to_goal() const {
  double d2 = 0.0;
  for (std::size_t i = 0; i < pos_.size(); ++i) d2 += (pos_[i] - goal_[i]) * (pos_[i] - goal_[i]);
  return std::sqrt(d2);
}

EnvState PointMass::snapshot() const {
  EnvState s;
  s.observation.reserve(static_cast<std::size_t>(spec_.obs_dim));
  s.observation.insert(s.observation.end(), pos_.begin(), pos_.end());
  s.observation.insert(s.observation.end(), vel_.begin(), vel_.end());
  s.observation.insert(s.observation.end(), goal_.begin(), goal_.end());
  if (opts_.phase_feature) s.observation.push_back(static_cast<double>(step_) / opts_.horizon);
  s.step_index = step_;
  s.done = done_;
  s.success = distance_to_goal() <= opts_.success_tol;
  return s;
}

StepResult PointMass::step(std::span<const double> action) {
  if (done_) throw std::logic_error(opts_.id + ": step() called on a finished episode");
  if (action.size() != pos_.size()) {
    throw std::invalid_argument(opts_.id + ": action has " + std::to_string(action.size()) +
                                " entries, expected " + std::to_string(pos_.size()));
  }
  for (std::size_t i = 0; i < pos_.size(); ++i) {
    if (!std::isfinite(action[i])) throw std::invalid_argument(opts_.id + ": non-finite action");
    const double a = std::clamp(action[i], -1.0, 1.0);
    pos_[i] += opts_.dt * vel_[i];
    vel_[i] += opts_.dt * a;
  }
  ++step_;
  done_ = step_ >= opts_.horizon;

  StepResult out;
  const double dist = distance_to_goal();
  if (opts_.reward_mode == RewardMode::Dense || done_) out.reward = -dist;
  out.state = snapshot();
  out.done = done_;
  out.success = out.state.success;
  return out;
}

std::unique_ptr<Environment> make_env(std::string_view id, RewardMode mode) {
  PointMassOptions o;
  o.reward_mode = mode;
  if (id == "pointmass-2d") {
    o.id = "pointmass-2d";
    return std::make_unique<PointMass>(o);
  }
  if (id == "chain-reach") {
    o.id = "chain-reach";
    o.dims = 1;
    o.horizon = 25;
    o.dt = 0.2;
    o.phase_feature = true;
    return std::make_unique<PointMass>(o);
  }
  throw std::invalid_argument("unknown environment id: " + std::string(id));
}

bool is_known_env(std::string_view id) { return id == "pointmass-2d" || id == "chain-reach"; }

std::vector<std::string> known_envs() { return {"pointmass-2d", "chain-reach"}; }

}  // namespace tsac::envs
