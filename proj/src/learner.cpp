#include "tsac/learner.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsac/checkpoint.hpp"
#include "tsac/rng.hpp"

#ifndef TSAC_VERSION
#define TSAC_VERSION "unknown"
#endif

namespace tsac::learn {

namespace {

torch::Tensor discounts(std::int64_t n, double gamma, const torch::TensorOptions& opts) {
  return torch::pow(torch::full({n}, gamma, opts.dtype(torch::kFloat64)),
                    torch::arange(n, opts.dtype(torch::kFloat64)))
      .to(opts.dtype());
}

torch::Generator make_gen(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

}  // namespace

torch::Tensor nstep_targets(const torch::Tensor& rewards, const torch::Tensor& dones,
                            const torch::Tensor& valid, const torch::Tensor& next_values,
                            double gamma) {
  TORCH_CHECK(rewards.dim() == 2 && rewards.sizes() == dones.sizes() &&
                  rewards.sizes() == valid.sizes() && rewards.sizes() == next_values.sizes(),
              "nstep_targets: shape mismatch");
  const auto n = rewards.size(1);
  const auto opts = rewards.options();
  auto zero = torch::zeros({}, opts);
  auto disc = discounts(n, gamma, opts);                       // gamma^j, j = 0..n-1
  auto alive = (1.0 - torch::where(valid, dones, zero)).cumprod(1);
  // Rewards after a terminal inside the window never count.
  auto alive_before = torch::cat({torch::ones({rewards.size(0), 1}, opts), alive.slice(1, 0, n - 1)}, 1);
  auto live = valid & (alive_before > 0);
  auto partial = torch::where(live, rewards, zero).mul(disc).cumsum(1);
  auto boot_disc = disc * gamma;                               // gamma^i, i = 1..n
  auto boot = torch::where(alive > 0, next_values * boot_disc, zero);
  return torch::where(valid, partial + boot, zero);
}

torch::Tensor averaged_targets(const torch::Tensor& targets, const torch::Tensor& valid) {
  auto cnt = valid.sum(1).to(targets.scalar_type());
  auto sum = torch::where(valid, targets, torch::zeros({}, targets.options())).sum(1);
  return torch::where(cnt > 0, sum / cnt.clamp_min(1), torch::zeros({}, targets.options()));
}

torch::Tensor critic_loss(const torch::Tensor& q, const torch::Tensor& targets,
                          const torch::Tensor& valid, const torch::Tensor& horizon) {
  TORCH_CHECK(q.sizes() == targets.sizes() && q.sizes() == valid.sizes(),
              "critic_loss: shape mismatch");
  auto se = torch::where(valid, (q - targets).square(), torch::zeros({}, q.options()));
  auto per_window = se.sum(1) / horizon.to(q.scalar_type()).clamp_min(1);
  return per_window.mean();
}

torch::Tensor averaged_target_loss(const torch::Tensor& q, const torch::Tensor& targets,
                                   const torch::Tensor& valid) {
  auto cnt = valid.sum(1);
  auto last = (cnt - 1).clamp_min(0).unsqueeze(1);
  auto q_last = q.gather(1, last).squeeze(1);
  auto gbar = averaged_targets(targets, valid);
  auto se = torch::where(cnt > 0, (q_last - gbar).square(), torch::zeros({}, q.options()));
  return se.mean();
}

torch::Tensor per_horizon_losses(const torch::Tensor& q, const torch::Tensor& targets,
                                 const torch::Tensor& valid) {
  auto se = torch::where(valid, (q - targets).square(), torch::zeros({}, q.options()));
  return se.sum(0) / valid.sum(0).to(q.scalar_type()).clamp_min(1);
}

torch::Tensor policy_objective(const torch::Tensor& log_prob, const torch::Tensor& q,
                               const torch::Tensor& alpha) {
  return (alpha.detach() * log_prob - q).mean();
}

torch::Tensor temperature_objective(const torch::Tensor& log_alpha, const torch::Tensor& log_prob,
                                    double target_entropy) {
  return -(log_alpha.exp() * (log_prob.detach() + target_entropy)).mean();
}

// ---------------------------------------------------------------------------

SegmentBatch gather_segments(const replay::ReplayBuffer& buf, std::span<const std::size_t> slots) {
  const auto B = static_cast<std::int64_t>(slots.size());
  const int L = buf.segment_length();
  const int obs = buf.obs_dim();
  const int act = buf.act_dim();
  std::vector<double> s, a, r, d;
  std::vector<std::uint8_t> m;
  s.reserve(static_cast<std::size_t>(B) * (L + 1) * obs);
  SegmentBatch out;
  for (auto slot : slots) {
    const auto& seg = buf.segment(slot);
    s.insert(s.end(), seg.states.begin(), seg.states.end());
    a.insert(a.end(), seg.actions.begin(), seg.actions.end());
    r.insert(r.end(), seg.rewards.begin(), seg.rewards.end());
    d.insert(d.end(), seg.dones.begin(), seg.dones.end());
    m.insert(m.end(), seg.mask.begin(), seg.mask.end());
    out.slots.push_back(slot);
    out.serials.push_back(buf.serial(slot));
  }
  auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
  out.states = torch::from_blob(s.data(), {B, L + 1, obs}, f64).to(torch::kFloat32);
  out.actions = torch::from_blob(a.data(), {B, L, act}, f64).to(torch::kFloat32);
  out.rewards = torch::from_blob(r.data(), {B, L}, f64).to(torch::kFloat32);
  out.dones = torch::from_blob(d.data(), {B, L}, f64).to(torch::kFloat32);
  out.mask = torch::from_blob(m.data(), {B, L}, torch::kUInt8).to(torch::kBool);
  return out;
}

WindowBatch slice_windows(const SegmentBatch& seg, std::span<const int> starts,
                          std::span<const int> horizons) {
  const auto B = seg.size();
  TORCH_CHECK(static_cast<std::int64_t>(starts.size()) == B &&
                  static_cast<std::int64_t>(horizons.size()) == B,
              "slice_windows: one window per segment");
  const int L = seg.length();
  int n = 0;
  for (std::int64_t k = 0; k < B; ++k) {
    TORCH_CHECK(starts[k] >= 0 && horizons[k] >= 1 && starts[k] + horizons[k] <= L,
                "slice_windows: window outside its segment");
    n = std::max(n, horizons[k]);
  }
  auto i64 = torch::TensorOptions().dtype(torch::kInt64);
  auto p = torch::tensor(std::vector<std::int64_t>(starts.begin(), starts.end()), i64);
  auto h = torch::tensor(std::vector<std::int64_t>(horizons.begin(), horizons.end()), i64);
  auto offs = torch::arange(n, i64).unsqueeze(0);
  auto within = offs < h.unsqueeze(1);
  auto idx = (p.unsqueeze(1) + offs).clamp_max(L - 1);

  WindowBatch w;
  w.horizon = h;
  w.valid = within & seg.mask.gather(1, idx);
  auto zero = torch::zeros({}, seg.rewards.options());
  w.rewards = torch::where(w.valid, seg.rewards.gather(1, idx), zero);
  w.dones = torch::where(w.valid, seg.dones.gather(1, idx), zero);
  const auto act = seg.actions.size(2);
  auto a = seg.actions.gather(1, idx.unsqueeze(2).expand({B, n, act}));
  w.actions = torch::where(w.valid.unsqueeze(2), a, zero);
  const auto obs = seg.states.size(2);
  w.start_states = seg.states.gather(1, p.view({B, 1, 1}).expand({B, 1, obs})).squeeze(1);
  w.value_index = (p.unsqueeze(1) + offs + 1).clamp_max(L);
  if (seg.values.defined()) w.next_values = seg.values.gather(1, w.value_index);
  return w;
}

// ---------------------------------------------------------------------------

TargetSchedule::TargetSchedule(TargetMode mode, double tau, int freeze_k)
    : mode_(mode), tau_(tau), k_(freeze_k) {
  if (mode_ == TargetMode::SoftPolyak && !(tau_ >= 0.0 && tau_ <= 1.0)) {
    throw std::invalid_argument("tau must lie in [0, 1]");
  }
  if (mode_ == TargetMode::HardFreeze && k_ < 1) throw std::invalid_argument("freeze_k must be >= 1");
}

bool TargetSchedule::before_update(torch::nn::Module& target, const torch::nn::Module& online) {
  if (mode_ != TargetMode::HardFreeze || updates_ % k_ != 0) return false;
  nets::copy_parameters(target, online);
  ++snapshots_;
  return true;
}

void TargetSchedule::after_update(torch::nn::Module& target, const torch::nn::Module& online) {
  ++updates_;
  if (mode_ == TargetMode::SoftPolyak) nets::polyak_update(target, online, tau_);
}

// ---------------------------------------------------------------------------

Learner::Learner(const RunConfig& cfg, const envs::EnvSpec& spec, std::uint64_t seed)
    : cfg_(cfg),
      spec_(spec),
      schedule_(cfg.target_mode, cfg.tau, cfg.freeze_k),
      policy_gen_(make_gen(substream_seed(seed, "policy-sampling"))),
      bootstrap_gen_(make_gen(substream_seed(seed, "bootstrap-sampling"))),
      replay_rng_(substream(seed, "replay")) {
  torch::manual_seed(substream_seed(seed, "nets-init"));

  nets::PolicyConfig pc;
  pc.obs_dim = spec.obs_dim;
  pc.act_dim = spec.act_dim;
  pc.hidden = cfg.policy_hidden;
  pc.log_std_init = cfg.log_std_init;
  pc.log_std_min = cfg.log_std_min;
  pc.log_std_max = cfg.log_std_max;
  policy_ = std::make_shared<nets::GaussianPolicy>(pc);

  nets::CriticConfig cc;
  cc.backbone = nets::parse_backbone(cfg.critic_backbone);
  cc.obs_dim = spec.obs_dim;
  cc.act_dim = spec.act_dim;
  cc.num_layers = cfg.critic_layers;
  cc.num_heads = cfg.critic_heads;
  cc.dims_per_head = cfg.critic_head_dim;
  cc.ffn_width = cfg.critic_ffn;
  cc.n_max = cfg.l_max;
  cc.pre_norm = cfg.critic_norm == "pre";

  const int count = cfg.twin_critic ? 2 : 1;
  for (int k = 0; k < count; ++k) {
    critics_.push_back(nets::make_critic(cc));
    targets_.push_back(nets::make_critic(cc));
    nets::copy_parameters(*targets_.back(), *critics_.back());
    for (auto& p : targets_.back()->parameters()) p.set_requires_grad(false);
    critic_set_->push_back(critics_.back());
    target_set_->push_back(targets_.back());
  }

  log_alpha_ = torch::full({}, std::log(cfg.init_alpha), torch::kFloat32).set_requires_grad(true);
  target_entropy_ = cfg.target_entropy == "auto" ? -static_cast<double>(spec.act_dim)
                                                 : std::stod(cfg.target_entropy);

  auto adamw = [&](std::vector<torch::Tensor> params, double lr) {
    return std::make_unique<torch::optim::AdamW>(
        std::move(params), torch::optim::AdamWOptions(lr).weight_decay(cfg.weight_decay));
  };
  policy_opt_ = adamw(policy_->parameters(), cfg.lr_policy);
  critic_opt_ = adamw(critic_set_->parameters(), cfg.lr_critic);
  alpha_opt_ = adamw({log_alpha_}, cfg.lr_alpha);
}

double Learner::alpha() const { return std::exp(log_alpha_.item<double>()); }

void Learner::set_bootstrap_policy(std::function<torch::Tensor(const torch::Tensor&)> fn) {
  bootstrap_policy_ = std::move(fn);
  value_cache_.clear();
}

torch::Tensor Learner::q_first(std::span<const std::shared_ptr<nets::CriticBase>> critics,
                               const torch::Tensor& states, const torch::Tensor& actions) {
  torch::Tensor out;
  for (const auto& c : critics) {
    // Non-causal critics take a fixed sequence; the unused tail is zero.
    auto seq = actions.unsqueeze(1);
    if (!c->causal() && c->config().n_max > 1) {
      seq = torch::cat({seq, torch::zeros({actions.size(0), c->config().n_max - 1, actions.size(1)},
                                          actions.options())},
                       1);
    }
    auto q = c->forward(states, seq).select(1, 0);
    out = out.defined() ? torch::min(out, q) : q;
  }
  return out;
}

torch::Tensor Learner::bootstrap_values(const torch::Tensor& states) {
  torch::NoGradGuard ng;
  torch::Tensor sum;
  const int samples = bootstrap_policy_ ? 1 : cfg_.n_action_samples;
  for (int i = 0; i < samples; ++i) {
    auto a = bootstrap_policy_ ? bootstrap_policy_(states) : policy_->sample(states, bootstrap_gen_).action;
    auto q = q_first(targets_, states, a);
    sum = sum.defined() ? sum + q : q;
  }
  return sum / samples;
}

void Learner::fill_values(SegmentBatch& seg) {
  const auto B = seg.size();
  const auto rows = seg.states.size(1);
  const auto obs = seg.states.size(2);
  if (cfg_.target_mode != TargetMode::HardFreeze) {
    seg.values = bootstrap_values(seg.states.reshape({B * rows, obs})).view({B, rows});
    return;
  }
  // Hard freeze: one value row per stored segment for the whole span.
  std::vector<std::int64_t> missing;
  for (std::int64_t k = 0; k < B; ++k) {
    if (!value_cache_.count({seg.slots[k], seg.serials[k]})) missing.push_back(k);
  }
  if (!missing.empty()) {
    auto idx = torch::tensor(missing, torch::kInt64);
    auto s = seg.states.index_select(0, idx).reshape({-1, obs});
    auto v = bootstrap_values(s).view({static_cast<std::int64_t>(missing.size()), rows});
    for (std::size_t i = 0; i < missing.size(); ++i) {
      const auto k = missing[i];
      value_cache_[{seg.slots[k], seg.serials[k]}] = v[static_cast<std::int64_t>(i)].clone();
    }
  }
  std::vector<torch::Tensor> parts;
  for (std::int64_t k = 0; k < B; ++k) parts.push_back(value_cache_.at({seg.slots[k], seg.serials[k]}));
  seg.values = torch::stack(parts);
}

WindowBatch Learner::draw_windows(const SegmentBatch& seg, std::mt19937_64& rng,
                                  replay::ReplayBuffer* buf) {
  const int L = seg.length();
  const bool fixed = !critics_.front()->causal();
  std::vector<int> starts, horizons;
  for (std::int64_t k = 0; k < seg.size(); ++k) {
    int p, n;
    if (fixed) {
      n = cfg_.l_max;
      p = std::uniform_int_distribution<int>(0, L - n)(rng);
    } else {
      std::tie(p, n) = replay::draw_start_and_horizon(L, {cfg_.l_min, cfg_.l_max}, rng);
    }
    starts.push_back(p);
    horizons.push_back(n);
    if (buf) buf->note_sampled(seg.slots[static_cast<std::size_t>(k)], p, n);
  }
  return slice_windows(seg, starts, horizons);
}

torch::Tensor Learner::targets(const WindowBatch& w) const {
  torch::NoGradGuard ng;
  return nstep_targets(w.rewards, w.dones, w.valid, w.next_values, cfg_.gamma).detach();
}

double Learner::critic_update(SegmentBatch& seg, const WindowBatch& w) {
  nets::ReplayDensityGuard guard;
  WindowBatch cur = w;
  if (schedule_.before_update(*target_set_, *critic_set_)) {
    value_cache_.clear();
    fill_values(seg);
    cur.next_values = seg.values.gather(1, w.value_index);
  }
  if (!cur.next_values.defined()) cur.next_values = seg.values.gather(1, w.value_index);
  auto g = targets(cur);

  torch::Tensor loss;
  for (auto& c : critics_) {
    auto q = c->forward(cur.start_states, cur.actions);
    auto l = cfg_.target_style == TargetStyle::Averaged ? averaged_target_loss(q, g, cur.valid)
                                                        : critic_loss(q, g, cur.valid, cur.horizon);
    loss = loss.defined() ? loss + l : l;
  }
  const double v = loss.item<double>() / static_cast<double>(critics_.size());
  check_loss(v, "critic");
  critic_opt_->zero_grad();
  loss.backward();
  critic_opt_->step();
  schedule_.after_update(*target_set_, *critic_set_);
  ++critic_updates_;
  return v;
}

double Learner::policy_update(const torch::Tensor& states) {
  auto s = policy_->sample(states, policy_gen_);
  auto q = q_first(critics_, states, s.action);
  auto loss = policy_objective(s.log_prob, q, log_alpha_.exp());
  const double v = loss.item<double>();
  check_loss(v, "policy");
  policy_opt_->zero_grad();
  loss.backward();
  policy_opt_->step();
  for (auto& c : critics_) c->zero_grad();
  return v;
}

double Learner::temperature_update(const torch::Tensor& states) {
  torch::Tensor logp;
  {
    torch::NoGradGuard ng;
    logp = policy_->sample(states, policy_gen_).log_prob;
  }
  auto loss = temperature_objective(log_alpha_, logp, target_entropy_);
  const double v = loss.item<double>();
  check_loss(v, "temperature");
  alpha_opt_->zero_grad();
  loss.backward();
  alpha_opt_->step();
  return v;
}

torch::Tensor Learner::sample_states(const replay::ReplayBuffer& buf, int count) {
  std::vector<float> rows;
  rows.reserve(static_cast<std::size_t>(count) * buf.obs_dim());
  std::uniform_int_distribution<int> pos(0, buf.segment_length() - 1);
  for (int i = 0; i < count; ++i) {
    const auto& seg = buf.segment(buf.draw_segment(replay_rng_));
    int t = pos(replay_rng_);
    while (!seg.mask[static_cast<std::size_t>(t)]) t = pos(replay_rng_);
    for (double x : seg.state(t)) rows.push_back(static_cast<float>(x));
  }
  return torch::from_blob(rows.data(), {count, buf.obs_dim()}, torch::kFloat32).clone();
}

UpdateStats Learner::update_iteration(replay::ReplayBuffer& buf, std::int64_t env_steps) {
  UpdateStats st;
  std::vector<std::size_t> slots;
  for (int i = 0; i < cfg_.batch_size; ++i) slots.push_back(buf.draw_segment(replay_rng_));
  auto seg = gather_segments(buf, slots);
  {
    nets::ReplayDensityGuard guard;
    fill_values(seg);
    for (int c = 0; c < cfg_.n_critic; ++c) {
      auto w = draw_windows(seg, replay_rng_, &buf);
      st.critic_loss += critic_update(seg, w);
      ++st.critic_updates;
    }
  }
  if (env_steps > cfg_.learning_starts) {
    auto states = sample_states(buf, cfg_.batch_size);
    for (int p = 0; p < cfg_.n_policy; ++p) {
      st.policy_loss += policy_update(states);
      ++st.policy_updates;
      if (env_steps > cfg_.temperature_warmup) st.alpha_loss += temperature_update(states);
    }
  }
  return st;
}

void Learner::check_loss(double v, const char* what) const {
  if (!std::isfinite(v) || std::abs(v) > cfg_.divergence_limit) {
    std::ostringstream os;
    os << what << " loss diverged: " << v << " after " << critic_updates_
       << " critic updates (limit " << cfg_.divergence_limit << ", alpha " << alpha() << ")";
    throw DivergenceError(os.str());
  }
}

void Learner::save(const std::string& path, const nlohmann::json& meta) const {
  auto t = checkpoint::collect("policy", *policy_);
  auto c = checkpoint::collect("critics", *critic_set_);
  auto g = checkpoint::collect("targets", *target_set_);
  t.insert(t.end(), c.begin(), c.end());
  t.insert(t.end(), g.begin(), g.end());
  t.emplace_back("log_alpha", log_alpha_);
  auto m = meta;
  m["version"] = code_version();
  m["critic_updates"] = critic_updates_;
  m["schedule_updates"] = schedule_.updates();
  checkpoint::save(path, t, m);
}

void Learner::load(const std::string& path) {
  auto c = checkpoint::load(path);
  checkpoint::restore(*policy_, "policy", c);
  checkpoint::restore(*critic_set_, "critics", c);
  checkpoint::restore(*target_set_, "targets", c);
  torch::NoGradGuard ng;
  log_alpha_.copy_(c.at("log_alpha"));
  value_cache_.clear();
}

// ---------------------------------------------------------------------------

EvalResult evaluate(nets::GaussianPolicy& policy, const RunConfig& cfg, std::uint64_t seed) {
  torch::NoGradGuard ng;
  const auto mode = envs::parse_reward_mode(cfg.reward_mode);
  const std::uint64_t base = substream_seed(seed, "eval");
  std::vector<std::unique_ptr<envs::Environment>> envs;
  std::vector<envs::EnvState> states;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    envs.push_back(envs::make_env(cfg.env, mode));
    states.push_back(envs.back()->reset(base + static_cast<std::uint64_t>(e)));
  }
  const int obs = envs.front()->spec().obs_dim;
  const int act = envs.front()->spec().act_dim;
  EvalResult out;
  out.returns.assign(envs.size(), 0.0);
  out.successes.assign(envs.size(), 0.0);
  std::vector<bool> done(envs.size(), false);
  std::vector<float> buf(envs.size() * static_cast<std::size_t>(obs));
  while (!std::all_of(done.begin(), done.end(), [](bool d) { return d; })) {
    for (std::size_t e = 0; e < envs.size(); ++e) {
      for (int i = 0; i < obs; ++i) buf[e * obs + i] = static_cast<float>(states[e].observation[i]);
    }
    auto s = torch::from_blob(buf.data(), {static_cast<std::int64_t>(envs.size()), obs}, torch::kFloat32);
    auto a = policy.deterministic(s).to(torch::kFloat64).contiguous();
    const double* ap = a.data_ptr<double>();
    for (std::size_t e = 0; e < envs.size(); ++e) {
      if (done[e]) continue;
      auto r = envs[e]->step(std::span<const double>(ap + e * act, static_cast<std::size_t>(act)));
      out.returns[e] += r.reward;
      states[e] = r.state;
      if (r.done) {
        done[e] = true;
        out.successes[e] = r.success ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

namespace {

std::string ckpt_name(const std::string& dir, std::uint64_t seed, const std::string& tag) {
  return (std::filesystem::path(dir) / ("seed" + std::to_string(seed) + "_" + tag + ".ckpt")).string();
}

}  // namespace

SeedSummary train_seed(const RunConfig& cfg, std::uint64_t seed, std::ostream* metrics,
                       const std::string& ckpt_dir) {
  torch::set_num_threads(1);
  const auto mode = envs::parse_reward_mode(cfg.reward_mode);
  const int W = cfg.windows_per_step;
  const int L = cfg.segment_length;

  std::vector<std::unique_ptr<envs::Environment>> streams;
  for (int w = 0; w < W; ++w) streams.push_back(envs::make_env(cfg.env, mode));
  const auto spec = streams.front()->spec();
  Learner learner(cfg, spec, seed);
  replay::ReplayBuffer buf(static_cast<std::size_t>(cfg.buffer_segments), L, spec.obs_dim,
                           spec.act_dim);

  auto env_rng = substream(seed, "env");
  auto ci_rng = substream(seed, "eval-ci");
  std::vector<envs::EnvState> cur;
  for (auto& e : streams) cur.push_back(e->reset(env_rng()));

  SeedSummary sum;
  sum.seed = seed;
  double critic_acc = 0.0, policy_acc = 0.0;
  std::int64_t critic_n = 0, policy_n = 0;

  auto emit = [&](std::int64_t step) {
    auto ev = evaluate(learner.policy(), cfg, seed);
    evalstats::MetricsRow row;
    row.step = step;
    row.seed = seed;
    row.iqm_return = evalstats::iqm(ev.returns);
    double succ = 0.0;
    for (double s : ev.successes) succ += s;
    row.iqm_success = succ / static_cast<double>(ev.successes.size());
    auto ci = evalstats::bootstrap_ci(ev.returns, cfg.n_boot, 0.95, ci_rng);
    row.ci_lo = ci.lo;
    row.ci_hi = ci.hi;
    row.critic_loss = critic_n ? critic_acc / static_cast<double>(critic_n) : 0.0;
    row.policy_loss = policy_n ? policy_acc / static_cast<double>(policy_n) : 0.0;
    row.alpha = learner.alpha();
    critic_acc = policy_acc = 0.0;
    critic_n = policy_n = 0;
    sum.rows.push_back(row);
    if (metrics) *metrics << evalstats::format_metrics_row(row) << '\n' << std::flush;
  };
  auto meta = [&](std::int64_t step) {
    return nlohmann::json{{"seed", seed}, {"env_steps", step}, {"config", cfg.to_text()}};
  };

  std::int64_t steps = 0;
  double budget = 0.0;
  emit(0);
  try {
    std::vector<replay::Segment> open(static_cast<std::size_t>(W));
    std::vector<float> sbuf(static_cast<std::size_t>(W) * spec.obs_dim);
    while (steps < cfg.total_steps) {
      for (auto& s : open) s = replay::Segment(L, spec.obs_dim, spec.act_dim);
      for (int t = 0; t < L; ++t) {
        torch::Tensor actions;
        if (steps < cfg.learning_starts) {
          actions = torch::rand({W, spec.act_dim}, learner.policy_generator()) * 2.0 - 1.0;
        } else {
          torch::NoGradGuard ng;
          for (int w = 0; w < W; ++w) {
            for (int i = 0; i < spec.obs_dim; ++i) {
              sbuf[static_cast<std::size_t>(w) * spec.obs_dim + i] =
                  static_cast<float>(cur[static_cast<std::size_t>(w)].observation[i]);
            }
          }
          auto s = torch::from_blob(sbuf.data(), {W, spec.obs_dim}, torch::kFloat32);
          actions = learner.policy().sample(s, learner.policy_generator()).action;
        }
        auto a = actions.to(torch::kFloat64).contiguous();
        const double* ap = a.data_ptr<double>();
        for (int w = 0; w < W; ++w) {
          auto& seg = open[static_cast<std::size_t>(w)];
          auto& st = cur[static_cast<std::size_t>(w)];
          std::span<const double> aw(ap + static_cast<std::size_t>(w) * spec.act_dim,
                                     static_cast<std::size_t>(spec.act_dim));
          std::copy(st.observation.begin(), st.observation.end(), seg.state(t).begin());
          std::copy(aw.begin(), aw.end(), seg.action(t).begin());
          auto r = streams[static_cast<std::size_t>(w)]->step(aw);
          seg.rewards[static_cast<std::size_t>(t)] = r.reward;
          seg.dones[static_cast<std::size_t>(t)] = r.done ? 1 : 0;
          std::copy(r.state.observation.begin(), r.state.observation.end(), seg.state(t + 1).begin());
          st = r.done ? streams[static_cast<std::size_t>(w)]->reset(env_rng()) : r.state;
        }
      }
      for (auto& s : open) {
        s.rebuild_mask();
        buf.commit(std::move(s));
      }
      const std::int64_t before = steps;
      steps += static_cast<std::int64_t>(W) * L;

      if (steps >= cfg.learning_starts) {
        budget += cfg.utd * W * L;
        while (budget >= cfg.n_critic) {
          budget -= cfg.n_critic;
          auto st = learner.update_iteration(buf, steps);
          critic_acc += st.critic_loss;
          critic_n += st.critic_updates;
          policy_acc += st.policy_loss;
          policy_n += st.policy_updates;
          sum.critic_updates += st.critic_updates;
          sum.policy_updates += st.policy_updates;
        }
      }

      const bool last = steps >= cfg.total_steps;
      if (last || steps / cfg.eval_interval != before / cfg.eval_interval) emit(steps);
      if (!ckpt_dir.empty() && !last && cfg.checkpoint_interval > 0 &&
          steps / cfg.checkpoint_interval != before / cfg.checkpoint_interval) {
        learner.save(ckpt_name(ckpt_dir, seed, "step" + std::to_string(steps)), meta(steps));
      }
    }
  } catch (const DivergenceError&) {
    if (!ckpt_dir.empty()) learner.save(ckpt_name(ckpt_dir, seed, "diverged"), meta(steps));
    throw;
  }
  if (!ckpt_dir.empty()) {
    learner.save(ckpt_name(ckpt_dir, seed, "step" + std::to_string(steps)), meta(steps));
  }
  sum.env_steps = steps;
  return sum;
}

RunResult train(const RunConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "checkpoints");
  {
    std::ofstream os(root / "config.cfg");
    if (!os) throw std::runtime_error("cannot write " + (root / "config.cfg").string());
    os << "# tsac " << code_version() << '\n' << cfg.to_text();
  }
  std::ofstream metrics(root / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot write " + (root / "metrics.csv").string());
  metrics << evalstats::kMetricsHeader << '\n';

  RunResult out;
  for (int i = 0; i < cfg.num_seeds; ++i) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(i);
    try {
      out.seeds.push_back(train_seed(cfg, s, &metrics, (root / "checkpoints").string()));
    } catch (const DivergenceError& e) {
      out.diverged = true;
      out.message = "seed " + std::to_string(s) + ": " + e.what();
      break;
    }
  }
  return out;
}

const char* code_version() { return TSAC_VERSION; }

}  // namespace tsac::learn
