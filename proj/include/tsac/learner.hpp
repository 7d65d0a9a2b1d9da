#pragma once

// Multi-horizon critic training without importance weights, SAC policy and
// temperature updates, target schedules and the collection/update loop.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsac/config.hpp"
#include "tsac/envs.hpp"
#include "tsac/evalstats.hpp"
#include "tsac/nets.hpp"
#include "tsac/replay.hpp"

namespace tsac::learn {

// ---------------------------------------------------------------------------
// Targets and losses (pure tensor functions). Shapes: [B, n] unless noted.

/// G^(i) = sum_{j<i} gamma^j r_j + gamma^i V(s_{t+i}) for i = 1..n, with the
/// bootstrap dropped once a terminal occurred at or before step i - 1.
/// Entries at invalid positions are 0.
torch::Tensor nstep_targets(const torch::Tensor& rewards, const torch::Tensor& dones,
                            const torch::Tensor& valid, const torch::Tensor& next_values,
                            double gamma);

/// Mean of the valid targets of each window, [B]. Windows without valid positions give 0.
torch::Tensor averaged_targets(const torch::Tensor& targets, const torch::Tensor& valid);

/// (1/B) sum_k (1/n_k) sum_i valid_ki (Q_ki - G_ki)^2; `horizon` is [B] int64.
torch::Tensor critic_loss(const torch::Tensor& q, const torch::Tensor& targets,
                          const torch::Tensor& valid, const torch::Tensor& horizon);

/// Ablation loss: only the last valid position, regressed on the averaged target.
torch::Tensor averaged_target_loss(const torch::Tensor& q, const torch::Tensor& targets,
                                   const torch::Tensor& valid);

/// Per-horizon batch means of the valid squared errors, [n].
torch::Tensor per_horizon_losses(const torch::Tensor& q, const torch::Tensor& targets,
                                 const torch::Tensor& valid);

/// alpha * log pi(a|s) - Q(s, a), averaged; alpha is treated as a constant.
torch::Tensor policy_objective(const torch::Tensor& log_prob, const torch::Tensor& q,
                               const torch::Tensor& alpha);

/// -(alpha * (log pi + target_entropy)), averaged; gradient flows only into log_alpha.
torch::Tensor temperature_objective(const torch::Tensor& log_alpha, const torch::Tensor& log_prob,
                                    double target_entropy);

// ---------------------------------------------------------------------------
// Batches.

struct SegmentBatch {
  std::vector<std::size_t> slots;
  std::vector<std::uint64_t> serials;
  torch::Tensor states;   // [B, L+1, obs]
  torch::Tensor actions;  // [B, L, act]
  torch::Tensor rewards;  // [B, L]
  torch::Tensor dones;    // [B, L] float
  torch::Tensor mask;     // [B, L] bool
  torch::Tensor values;   // [B, L+1] V(s) at every state, filled by the learner

  std::int64_t size() const { return states.defined() ? states.size(0) : 0; }
  int length() const { return static_cast<int>(actions.size(1)); }
};

SegmentBatch gather_segments(const replay::ReplayBuffer& buf, std::span<const std::size_t> slots);

struct WindowBatch {
  torch::Tensor start_states;  // [B, obs]
  torch::Tensor actions;       // [B, n, act], zero past each window's horizon
  torch::Tensor rewards;       // [B, n]
  torch::Tensor dones;         // [B, n]
  torch::Tensor valid;         // [B, n] bool: inside the horizon and unmasked
  torch::Tensor horizon;       // [B] int64
  torch::Tensor next_values;   // [B, n] V(s_{t+i}) for i = 1..n
  torch::Tensor value_index;   // [B, n] columns of SegmentBatch::values behind next_values

  std::int64_t width() const { return actions.size(1); }
};

/// Window k starts at starts[k] of segment k and runs horizons[k] steps.
WindowBatch slice_windows(const SegmentBatch& seg, std::span<const int> starts,
                          std::span<const int> horizons);

// ---------------------------------------------------------------------------

/// Soft Polyak after every critic update, or hard snapshots every K updates.
class TargetSchedule {
 public:
  TargetSchedule(TargetMode mode, double tau, int freeze_k);

  /// Called before each critic update. Hard mode copies online -> target at
  /// span boundaries (update 0, K, 2K, ...) and reports it.
  bool before_update(torch::nn::Module& target, const torch::nn::Module& online);
  /// Soft mode: target <- tau * online + (1 - tau) * target.
  void after_update(torch::nn::Module& target, const torch::nn::Module& online);

  TargetMode mode() const { return mode_; }
  std::int64_t updates() const { return updates_; }
  std::int64_t snapshots() const { return snapshots_; }

 private:
  TargetMode mode_;
  double tau_;
  int k_;
  std::int64_t updates_ = 0;
  std::int64_t snapshots_ = 0;
};

struct UpdateStats {
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double alpha_loss = 0.0;
  std::int64_t critic_updates = 0;
  std::int64_t policy_updates = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Learner {
 public:
  /// Initial weights and every sampling stream derive from `seed`.
  Learner(const RunConfig& cfg, const envs::EnvSpec& spec, std::uint64_t seed);

  const RunConfig& config() const { return cfg_; }
  nets::GaussianPolicy& policy() { return *policy_; }
  nets::CriticBase& critic(int k = 0) { return *critics_.at(static_cast<std::size_t>(k)); }
  nets::CriticBase& target(int k = 0) { return *targets_.at(static_cast<std::size_t>(k)); }
  int num_critics() const { return static_cast<int>(critics_.size()); }
  TargetSchedule& schedule() { return schedule_; }
  double alpha() const;
  double target_entropy() const { return target_entropy_; }

  /// Replaces policy sampling in bootstrap values (tests with a fixed policy).
  void set_bootstrap_policy(std::function<torch::Tensor(const torch::Tensor&)> fn);

  /// Q at n = 1 for single actions, [B]; the min over critics in twin mode.
  torch::Tensor q_first(std::span<const std::shared_ptr<nets::CriticBase>> critics,
                        const torch::Tensor& states, const torch::Tensor& actions);

  /// Monte-Carlo E_{a~pi}[Q_target(s, a)] with n = 1, [M]; no entropy term, no gradient.
  torch::Tensor bootstrap_values(const torch::Tensor& states);

  /// Fills seg.values, reusing the span cache in hard-freeze mode.
  void fill_values(SegmentBatch& seg);

  /// Draws one window per segment, notes coverage in `buf` when given.
  WindowBatch draw_windows(const SegmentBatch& seg, std::mt19937_64& rng,
                           replay::ReplayBuffer* buf = nullptr);

  /// Targets for a window batch under the configured style.
  torch::Tensor targets(const WindowBatch& w) const;

  /// One optimizer step on the critic(s). Runs the schedule hooks; a snapshot
  /// refreshes `seg.values` before the targets are formed.
  double critic_update(SegmentBatch& seg, const WindowBatch& w);

  double policy_update(const torch::Tensor& states);
  double temperature_update(const torch::Tensor& states);

  /// One outer iteration: B segments, N_c critic updates, then N_p policy /
  /// temperature updates when past the warmups.
  UpdateStats update_iteration(replay::ReplayBuffer& buf, std::int64_t env_steps);

  /// Uniformly drawn stored states, [B, obs].
  torch::Tensor sample_states(const replay::ReplayBuffer& buf, int count);

  torch::Generator& policy_generator() { return policy_gen_; }
  torch::optim::AdamW& critic_optimizer() { return *critic_opt_; }

  void save(const std::string& path, const nlohmann::json& meta) const;
  void load(const std::string& path);

 private:
  void check_loss(double v, const char* what) const;

  RunConfig cfg_;
  envs::EnvSpec spec_;
  std::shared_ptr<nets::GaussianPolicy> policy_;
  std::vector<std::shared_ptr<nets::CriticBase>> critics_;
  std::vector<std::shared_ptr<nets::CriticBase>> targets_;
  torch::nn::ModuleList critic_set_;
  torch::nn::ModuleList target_set_;
  torch::Tensor log_alpha_;
  double target_entropy_;
  std::unique_ptr<torch::optim::AdamW> policy_opt_;
  std::unique_ptr<torch::optim::AdamW> critic_opt_;
  std::unique_ptr<torch::optim::AdamW> alpha_opt_;
  TargetSchedule schedule_;
  std::map<std::pair<std::size_t, std::uint64_t>, torch::Tensor> value_cache_;
  std::function<torch::Tensor(const torch::Tensor&)> bootstrap_policy_;
  torch::Generator policy_gen_;
  torch::Generator bootstrap_gen_;
  std::mt19937_64 replay_rng_;
  std::int64_t critic_updates_ = 0;
};

// ---------------------------------------------------------------------------

struct EvalResult {
  std::vector<double> returns;
  std::vector<double> successes;  // 0/1, read at the final step
};

/// Deterministic-policy episodes on the fixed evaluation seeds of `seed`.
EvalResult evaluate(nets::GaussianPolicy& policy, const RunConfig& cfg, std::uint64_t seed);

struct SeedSummary {
  std::uint64_t seed = 0;
  std::vector<evalstats::MetricsRow> rows;
  std::int64_t env_steps = 0;
  std::int64_t critic_updates = 0;
  std::int64_t policy_updates = 0;
};

/// Runs one seed; rows are also streamed to `metrics` when non-null.
/// Checkpoints go to `ckpt_dir` when non-empty. Throws DivergenceError.
SeedSummary train_seed(const RunConfig& cfg, std::uint64_t seed, std::ostream* metrics,
                       const std::string& ckpt_dir);

struct RunResult {
  std::vector<SeedSummary> seeds;
  bool diverged = false;
  std::string message;
};

/// Creates `out_dir` with config.cfg, metrics.csv and checkpoints/ and runs
/// seeds seed .. seed + num_seeds - 1.
RunResult train(const RunConfig& cfg, const std::string& out_dir);

/// Version string recorded in run directories and checkpoints.
const char* code_version();

}  // namespace tsac::learn
