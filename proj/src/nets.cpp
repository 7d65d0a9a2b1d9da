#include "tsac/nets.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsac::nets {

namespace {

thread_local int guard_depth = 0;
std::atomic<std::int64_t> density_calls{0};

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw std::invalid_argument(std::string(what) + " contains non-finite values");
  }
}

torch::nn::Linear linear(int in, int out, bool bias) {
  return torch::nn::Linear(torch::nn::LinearOptions(in, out).bias(bias));
}

}  // namespace

Backbone parse_backbone(const std::string& s) {
  if (s == "transformer") return Backbone::Transformer;
  if (s == "gru") return Backbone::Gru;
  if (s == "lstm") return Backbone::Lstm;
  if (s == "mlp_concat") return Backbone::MlpConcat;
  throw std::invalid_argument("unknown critic backbone: " + s);
}

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::Transformer: return "transformer";
    case Backbone::Gru: return "gru";
    case Backbone::Lstm: return "lstm";
    case Backbone::MlpConcat: return "mlp_concat";
  }
  return "?";
}

void CriticConfig::validate() const {
  if (obs_dim < 1 || act_dim < 1) throw std::invalid_argument("critic: dimensions must be positive");
  if (num_layers < 1) throw std::invalid_argument("critic: num_layers must be >= 1");
  if (num_heads < 1 || dims_per_head < 1) throw std::invalid_argument("critic: bad head layout");
  if (ffn_width < 1) throw std::invalid_argument("critic: ffn_width must be >= 1");
  if (n_max < 1) throw std::invalid_argument("critic: n_max must be >= 1");
}

torch::Tensor CriticBase::forward(const torch::Tensor& states, const torch::Tensor& actions) {
  if (states.dim() != 2 || states.size(1) != cfg_.obs_dim) {
    throw std::invalid_argument("critic: states must be [B, " + std::to_string(cfg_.obs_dim) + "]");
  }
  if (actions.dim() != 3 || actions.size(0) != states.size(0) || actions.size(2) != cfg_.act_dim) {
    throw std::invalid_argument("critic: actions must be [B, n, " + std::to_string(cfg_.act_dim) +
                                "]");
  }
  const auto n = actions.size(1);
  if (n < 1 || n > cfg_.n_max) {
    throw std::invalid_argument("critic: horizon " + std::to_string(n) + " outside [1, " +
                                std::to_string(cfg_.n_max) + "]");
  }
  require_finite(states, "critic: states");
  require_finite(actions, "critic: actions");
  return run(states, actions);
}

torch::Tensor sinusoidal_positions(int rows, int width) {
  auto pe = torch::zeros({rows, width}, torch::kFloat64);
  auto acc = pe.accessor<double, 2>();
  for (int pos = 0; pos < rows; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / width);
      acc[pos][i] = i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

TransformerCritic::TransformerCritic(CriticConfig cfg) : CriticBase(std::move(cfg)) {
  cfg_.validate();
  const int d = cfg_.width();
  embed_s_ = register_module("embed_s", linear(cfg_.obs_dim, d, false));
  embed_a_ = register_module("embed_a", linear(cfg_.act_dim, d, false));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const auto p = "layer" + std::to_string(l) + "_";
    Block b;
    b.q = register_module(p + "q", linear(d, d, true));
    b.k = register_module(p + "k", linear(d, d, true));
    b.v = register_module(p + "v", linear(d, d, true));
    b.o = register_module(p + "o", linear(d, d, true));
    b.norm1 = register_module(p + "norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    b.norm2 = register_module(p + "norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    b.ff1 = register_module(p + "ff1", linear(d, cfg_.ffn_width, true));
    b.ff2 = register_module(p + "ff2", linear(cfg_.ffn_width, d, true));
    blocks_.push_back(b);
  }
  if (cfg_.pre_norm) {
    final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  }
  head_ = register_module("head", linear(d, 1, false));
  positions_ = register_buffer("positions", sinusoidal_positions(cfg_.n_max + 1, d));
}

torch::Tensor TransformerCritic::attend(Block& b, const torch::Tensor& x) {
  const auto B = x.size(0);
  const auto T = x.size(1);
  const int h = cfg_.num_heads;
  const int dh = cfg_.dims_per_head;
  auto split = [&](const torch::Tensor& t) { return t.view({B, T, h, dh}).transpose(1, 2); };
  const auto q = split(b.q->forward(x));
  const auto k = split(b.k->forward(x));
  const auto v = split(b.v->forward(x));
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
  const auto mask = torch::full({T, T}, -std::numeric_limits<double>::infinity(), x.options()).triu(1);
  const auto att = torch::softmax(scores + mask, -1);
  const auto out = torch::matmul(att, v).transpose(1, 2).reshape({B, T, h * dh});
  return b.o->forward(out);
}

torch::Tensor TransformerCritic::run(const torch::Tensor& states, const torch::Tensor& actions) {
  const auto n = actions.size(1);
  auto x = torch::cat({embed_s_->forward(states).unsqueeze(1), embed_a_->forward(actions)}, 1);
  x = x + positions_.slice(0, 0, n + 1).to(x.dtype());
  for (auto& b : blocks_) {
    auto ff = [&](const torch::Tensor& t) {
      return b.ff2->forward(torch::leaky_relu(b.ff1->forward(t)));
    };
    if (cfg_.pre_norm) {
      x = x + attend(b, b.norm1->forward(x));
      x = x + ff(b.norm2->forward(x));
    } else {
      x = b.norm1->forward(x + attend(b, x));
      x = b.norm2->forward(x + ff(x));
    }
  }
  if (cfg_.pre_norm) x = final_norm_->forward(x);
  return head_->forward(x.slice(1, 1, n + 1)).squeeze(-1);
}

RecurrentCritic::RecurrentCritic(CriticConfig cfg) : CriticBase(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.backbone != Backbone::Gru && cfg_.backbone != Backbone::Lstm) {
    throw std::invalid_argument("RecurrentCritic needs the gru or lstm backbone");
  }
  const int d = cfg_.width();
  embed_s_ = register_module("embed_s", linear(cfg_.obs_dim, d, false));
  embed_a_ = register_module("embed_a", linear(cfg_.act_dim, d, false));
  if (cfg_.backbone == Backbone::Gru) {
    gru_ = register_module("gru", torch::nn::GRU(torch::nn::GRUOptions(d, d)
                                                     .num_layers(cfg_.num_layers)
                                                     .batch_first(true)));
  } else {
    lstm_ = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(d, d)
                                                        .num_layers(cfg_.num_layers)
                                                        .batch_first(true)));
  }
  head_ = register_module("head", linear(d, 1, false));
}

torch::Tensor RecurrentCritic::run(const torch::Tensor& states, const torch::Tensor& actions) {
  const auto n = actions.size(1);
  auto x = torch::cat({embed_s_->forward(states).unsqueeze(1), embed_a_->forward(actions)}, 1);
  torch::Tensor y;
  if (gru_) {
    y = std::get<0>(gru_->forward(x));
  } else {
    y = std::get<0>(lstm_->forward(x));
  }
  return head_->forward(y.slice(1, 1, n + 1)).squeeze(-1);
}

MlpConcatCritic::MlpConcatCritic(CriticConfig cfg) : CriticBase(std::move(cfg)) {
  cfg_.validate();
  torch::nn::Sequential body;
  int in = cfg_.obs_dim + cfg_.n_max * cfg_.act_dim;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    body->push_back(linear(in, cfg_.ffn_width, true));
    body->push_back(torch::nn::LeakyReLU());
    in = cfg_.ffn_width;
  }
  body->push_back(linear(in, cfg_.n_max, false));
  body_ = register_module("body", body);
}

torch::Tensor MlpConcatCritic::run(const torch::Tensor& states, const torch::Tensor& actions) {
  if (actions.size(1) != cfg_.n_max) {
    throw std::invalid_argument("mlp_concat critic takes exactly " + std::to_string(cfg_.n_max) +
                                " actions, got " + std::to_string(actions.size(1)));
  }
  const auto flat = torch::cat({states, actions.flatten(1)}, 1);
  return body_->forward(flat);
}

std::shared_ptr<CriticBase> make_critic(const CriticConfig& cfg) {
  switch (cfg.backbone) {
    case Backbone::Transformer: return std::make_shared<TransformerCritic>(cfg);
    case Backbone::Gru:
    case Backbone::Lstm: return std::make_shared<RecurrentCritic>(cfg);
    case Backbone::MlpConcat: return std::make_shared<MlpConcatCritic>(cfg);
  }
  throw std::invalid_argument("unknown backbone");
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard ng;
  auto d = dst.named_parameters(true);
  const auto s = src.named_parameters(true);
  if (d.size() != s.size()) throw std::invalid_argument("copy_parameters: architecture mismatch");
  for (const auto& item : s) d[item.key()].copy_(item.value());
  auto db = dst.named_buffers(true);
  for (const auto& item : src.named_buffers(true)) db[item.key()].copy_(item.value());
}

void polyak_update(torch::nn::Module& dst, const torch::nn::Module& src, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("polyak_update: tau outside [0, 1]");
  if (tau == 0.0) return;
  if (tau == 1.0) {
    copy_parameters(dst, src);
    return;
  }
  torch::NoGradGuard ng;
  auto d = dst.named_parameters(true);
  for (const auto& item : src.named_parameters(true)) {
    d[item.key()].mul_(1.0 - tau).add_(item.value(), tau);
  }
}

int64_t parameter_count(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters(true)) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------

GaussianPolicy::GaussianPolicy(PolicyConfig cfg) : cfg_(cfg) {
  if (cfg_.obs_dim < 1 || cfg_.act_dim < 1 || cfg_.hidden < 1) {
    throw std::invalid_argument("policy: dimensions must be positive");
  }
  fc1_ = register_module("fc1", linear(cfg_.obs_dim, cfg_.hidden, true));
  ln1_ = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg_.hidden})));
  fc2_ = register_module("fc2", linear(cfg_.hidden, cfg_.hidden, true));
  ln2_ = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg_.hidden})));
  mean_ = register_module("mean", linear(cfg_.hidden, cfg_.act_dim, true));
  log_std_ = register_module("log_std", linear(cfg_.hidden, cfg_.act_dim, true));
  torch::NoGradGuard ng;
  log_std_->weight.zero_();
  log_std_->bias.fill_(cfg_.log_std_init);
}

GaussianHead GaussianPolicy::forward(const torch::Tensor& states) {
  if (states.dim() != 2 || states.size(1) != cfg_.obs_dim) {
    throw std::invalid_argument("policy: states must be [B, " + std::to_string(cfg_.obs_dim) + "]");
  }
  require_finite(states, "policy: states");
  auto x = torch::leaky_relu(ln1_->forward(fc1_->forward(states)));
  x = torch::leaky_relu(ln2_->forward(fc2_->forward(x)));
  return {mean_->forward(x), torch::clamp(log_std_->forward(x), cfg_.log_std_min, cfg_.log_std_max)};
}

torch::Tensor squashed_log_prob(const torch::Tensor& u, const torch::Tensor& mean,
                                const torch::Tensor& log_std) {
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  const auto z = (u - mean) * torch::exp(-log_std);
  const auto gauss = -0.5 * z * z - log_std - half_log_2pi;
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|.
  const auto squash = 2.0 * (std::log(2.0) - u - torch::softplus(-2.0 * u));
  return (gauss - squash).sum(-1);
}

ActionSample GaussianPolicy::sample(const torch::Tensor& states, torch::Generator& gen) {
  const auto head = forward(states);
  const auto eps = torch::randn(head.mean.sizes(), gen, head.mean.options());
  const auto u = head.mean + torch::exp(head.log_std) * eps;
  return {torch::tanh(u), squashed_log_prob(u, head.mean, head.log_std)};
}

torch::Tensor GaussianPolicy::deterministic(const torch::Tensor& states) {
  return torch::tanh(forward(states).mean);
}

torch::Tensor GaussianPolicy::log_prob_of(const torch::Tensor& states, const torch::Tensor& actions) {
  if (ReplayDensityGuard::active()) {
    throw std::logic_error(
        "policy density of a supplied action requested inside a critic update; replayed actions "
        "are never reweighted");
  }
  ++density_calls;
  const auto head = forward(states);
  const double lim = actions.scalar_type() == torch::kFloat64 ? 1.0 - 1e-12 : 1.0 - 1e-6;
  const auto u = torch::atanh(torch::clamp(actions, -lim, lim));
  return squashed_log_prob(u, head.mean, head.log_std);
}

std::int64_t GaussianPolicy::external_density_calls() { return density_calls.load(); }

ReplayDensityGuard::ReplayDensityGuard() { ++guard_depth; }
ReplayDensityGuard::~ReplayDensityGuard() { --guard_depth; }
bool ReplayDensityGuard::active() { return guard_depth > 0; }

}  // namespace tsac::nets
