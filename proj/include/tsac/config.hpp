#pragma once

// Flat key = value run configuration.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsac {

enum class TargetMode { SoftPolyak, HardFreeze };
enum class TargetStyle { Gradient, Averaged };  // Averaged supervises only the last prefix

struct RunConfig {
  std::string env = "pointmass-2d";
  std::string reward_mode = "dense";
  std::uint64_t seed = 0;
  int num_seeds = 1;
  std::int64_t total_steps = 200000;

  int segment_length = 25;
  int l_min = 1;
  int l_max = 8;
  int windows_per_step = 4;
  int batch_size = 256;
  int buffer_segments = 4000;

  double gamma = 0.99;
  TargetMode target_mode = TargetMode::SoftPolyak;
  double tau = 5e-3;
  int freeze_k = 20;
  TargetStyle target_style = TargetStyle::Gradient;
  bool twin_critic = false;
  int n_action_samples = 1;

  double utd = 1.0;
  int n_critic = 10;
  int n_policy = 2;
  std::int64_t learning_starts = 20;
  std::int64_t temperature_warmup = 1000;
  std::string target_entropy = "auto";  // "auto" means -act_dim
  double init_alpha = 1.0;

  std::string critic_backbone = "transformer";
  int critic_layers = 2;
  int critic_heads = 4;
  int critic_head_dim = 32;
  int critic_ffn = 128;
  std::string critic_norm = "post";
  int policy_hidden = 128;
  double log_std_init = -5.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  double lr_policy = 2.5e-4;
  double lr_critic = 2.5e-5;
  double lr_alpha = 2.5e-4;
  double weight_decay = 0.0;
  double divergence_limit = 1e6;

  std::int64_t eval_interval = 5000;
  int eval_episodes = 16;
  int n_boot = 1000;
  std::int64_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::string out_dir;

  /// Applies one `key=value` (or `key = value`); throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  /// Every violated precondition, one message each; empty means valid.
  std::vector<std::string> violations() const;

  int model_width() const { return critic_heads * critic_head_dim; }

  /// Canonical key = value listing, sorted by key.
  std::string to_text() const;
  std::map<std::string, std::string> to_map() const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses config text; `origin` prefixes line-numbered error messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

/// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

/// Throws ConfigError listing every violation.
void validate(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace tsac
