#pragma once

// Critic backbones and the squashed-Gaussian policy.
//
// Every critic maps a state and an action sequence a_t..a_{t+n-1} to n
// prefix-conditioned values: output column i-1 estimates the return after
// executing the first i actions. Shapes: states [B, obs], actions [B, n, act],
// output [B, n].

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <utility>

namespace tsac::nets {

enum class Backbone { Transformer, Gru, Lstm, MlpConcat };

Backbone parse_backbone(const std::string& s);
std::string to_string(Backbone b);

struct CriticConfig {
  Backbone backbone = Backbone::Transformer;
  int obs_dim = 1;
  int act_dim = 1;
  int num_layers = 2;
  int num_heads = 4;
  int dims_per_head = 32;
  int ffn_width = 128;
  int n_max = 16;          // longest sequence (fixed horizon for MlpConcat)
  bool pre_norm = false;   // transformer: post-norm Add&Norm unless set

  int width() const { return num_heads * dims_per_head; }
  void validate() const;
};

class CriticBase : public torch::nn::Module {
 public:
  explicit CriticBase(CriticConfig cfg) : cfg_(std::move(cfg)) {}
  const CriticConfig& config() const { return cfg_; }

  /// Checks shapes, finiteness and the horizon limit, then calls run().
  torch::Tensor forward(const torch::Tensor& states, const torch::Tensor& actions);

  /// True when output i never depends on actions after position i.
  virtual bool causal() const { return true; }

 protected:
  virtual torch::Tensor run(const torch::Tensor& states, const torch::Tensor& actions) = 0;
  CriticConfig cfg_;
};

/// Causal Transformer: tokens [s_t, a_t, ..., a_{t+n-1}] with bias-free linear
/// embeddings, sinusoidal positions, masked multi-head attention and a bias-free
/// scalar head over the action tokens.
class TransformerCritic final : public CriticBase {
 public:
  explicit TransformerCritic(CriticConfig cfg);

  struct Block {
    torch::nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, o{nullptr};
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Linear ff1{nullptr}, ff2{nullptr};
  };

 protected:
  torch::Tensor run(const torch::Tensor& states, const torch::Tensor& actions) override;

 private:
  torch::Tensor attend(Block& b, const torch::Tensor& x);

  torch::nn::Linear embed_s_{nullptr};
  torch::nn::Linear embed_a_{nullptr};
  std::vector<Block> blocks_;
  torch::nn::LayerNorm final_norm_{nullptr};  // pre-norm only
  torch::nn::Linear head_{nullptr};
  torch::Tensor positions_;  // [n_max + 1, width], buffer
};

/// GRU or LSTM over the same token sequence; one value per action token.
class RecurrentCritic final : public CriticBase {
 public:
  explicit RecurrentCritic(CriticConfig cfg);

 protected:
  torch::Tensor run(const torch::Tensor& states, const torch::Tensor& actions) override;

 private:
  torch::nn::Linear embed_s_{nullptr};
  torch::nn::Linear embed_a_{nullptr};
  torch::nn::GRU gru_{nullptr};
  torch::nn::LSTM lstm_{nullptr};
  torch::nn::Linear head_{nullptr};
};

/// MLP on the flattened (s_t, a_t..a_{t+n-1}) with a fixed n. All n outputs
/// read the whole flattened input, so early outputs see future actions.
class MlpConcatCritic final : public CriticBase {
 public:
  explicit MlpConcatCritic(CriticConfig cfg);
  bool causal() const override { return false; }

 protected:
  torch::Tensor run(const torch::Tensor& states, const torch::Tensor& actions) override;

 private:
  torch::nn::Sequential body_{nullptr};
};

std::shared_ptr<CriticBase> make_critic(const CriticConfig& cfg);

/// Copies parameters and buffers of `src` into `dst` (same architecture).
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

/// dst <- tau * src + (1 - tau) * dst. tau = 1 copies exactly; tau = 0 is a no-op.
void polyak_update(torch::nn::Module& dst, const torch::nn::Module& src, double tau);

int64_t parameter_count(const torch::nn::Module& m);

/// Sinusoidal position table [rows, width].
torch::Tensor sinusoidal_positions(int rows, int width);

// ---------------------------------------------------------------------------

struct PolicyConfig {
  int obs_dim = 1;
  int act_dim = 1;
  int hidden = 128;
  double log_std_init = -5.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

struct GaussianHead {
  torch::Tensor mean;     // [B, act]
  torch::Tensor log_std;  // [B, act], clamped
};

struct ActionSample {
  torch::Tensor action;    // [B, act] in (-1, 1)
  torch::Tensor log_prob;  // [B]
};

class GaussianPolicy final : public torch::nn::Module {
 public:
  explicit GaussianPolicy(PolicyConfig cfg);
  const PolicyConfig& config() const { return cfg_; }

  GaussianHead forward(const torch::Tensor& states);

  /// Reparameterized tanh-Gaussian sample with its exact log-density.
  ActionSample sample(const torch::Tensor& states, torch::Generator& gen);

  /// tanh(mean).
  torch::Tensor deterministic(const torch::Tensor& states);

  /// Log-density of externally supplied actions. Refused while a
  /// ReplayDensityGuard is alive, so critic updates cannot reweight replay.
  torch::Tensor log_prob_of(const torch::Tensor& states, const torch::Tensor& actions);

  /// Number of log_prob_of calls made in this process.
  static std::int64_t external_density_calls();

 private:
  PolicyConfig cfg_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, mean_{nullptr}, log_std_{nullptr};
  torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr};
};

/// log N(u; mean, std) - log(1 - tanh(u)^2), summed over action dims.
torch::Tensor squashed_log_prob(const torch::Tensor& u, const torch::Tensor& mean,
                                const torch::Tensor& log_std);

/// Scope in which density evaluation of replayed actions is a hard error.
class ReplayDensityGuard {
 public:
  ReplayDensityGuard();
  ~ReplayDensityGuard();
  ReplayDensityGuard(const ReplayDensityGuard&) = delete;
  ReplayDensityGuard& operator=(const ReplayDensityGuard&) = delete;

  static bool active();
};

}  // namespace tsac::nets
