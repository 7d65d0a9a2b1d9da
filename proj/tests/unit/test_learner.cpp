#include <doctest.h>

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "tsac/learner.hpp"

using namespace tsac;
using namespace tsac::learn;

namespace {

torch::Tensor row(std::vector<double> v) {
  return torch::tensor(v, torch::kFloat64).unsqueeze(0);
}
torch::Tensor all_valid(int n) { return torch::ones({1, n}, torch::kBool); }

RunConfig tiny_config() {
  RunConfig c;
  c.segment_length = 6;
  c.l_min = 1;
  c.l_max = 4;
  c.batch_size = 8;
  c.n_critic = 2;
  c.n_policy = 1;
  c.critic_layers = 1;
  c.critic_heads = 2;
  c.critic_head_dim = 4;
  c.critic_ffn = 16;
  c.policy_hidden = 16;
  c.buffer_segments = 64;
  return c;
}

envs::EnvSpec spec_of(int obs, int act) {
  envs::EnvSpec s;
  s.obs_dim = obs;
  s.act_dim = act;
  s.horizon = 50;
  return s;
}

// Fills `buf` with random segments; terminals at the listed steps of every segment.
void fill_buffer(replay::ReplayBuffer& buf, int count, std::vector<int> terminal_at, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(-1, 1);
  for (int c = 0; c < count; ++c) {
    replay::Segment s(buf.segment_length(), buf.obs_dim(), buf.act_dim());
    for (auto& x : s.states) x = n01(rng);
    for (auto& x : s.actions) x = u(rng);
    for (auto& x : s.rewards) x = n01(rng);
    for (int t : terminal_at) s.dones[t] = 1;
    s.rebuild_mask();
    buf.commit(std::move(s));
  }
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).abs().max().item<double>();
}

}  // namespace

TEST_CASE("n-step targets: worked examples") {
  auto g = nstep_targets(row({1, 0}), row({0, 0}), all_valid(2), row({2, 4}), 0.5);
  CHECK(g[0][0].item<double>() == doctest::Approx(2.0));
  CHECK(g[0][1].item<double>() == doctest::Approx(2.0));

  auto g0 = nstep_targets(row({3, 5, 7}), row({0, 0, 0}), all_valid(3), row({9, 9, 9}), 0.0);
  CHECK(torch::equal(g0, row({3, 3, 3})));

  // Terminal after the first reward: later rewards and all bootstraps drop out.
  auto gt = nstep_targets(row({2, 5, 7}), row({1, 0, 0}), all_valid(3), row({9, 9, 9}), 0.9);
  CHECK(torch::equal(gt, row({2, 2, 2})));

  // Terminal at the last position keeps every reward but the final bootstrap.
  auto gl = nstep_targets(row({1, 1}), row({0, 1}), all_valid(2), row({10, 10}), 1.0);
  CHECK(torch::equal(gl, row({11, 2})));
}

TEST_CASE("n-step targets agree with a direct sum") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    const double gamma = 0.3 + 0.1 * (trial % 7);
    std::vector<double> r(n), v(n), d(n, 0.0);
    for (int i = 0; i < n; ++i) {
      r[i] = u(rng);
      v[i] = u(rng);
    }
    if (trial % 3 == 0) d[trial % n] = 1.0;
    auto g = nstep_targets(row(r), row(d), all_valid(n), row(v), gamma);
    for (int i = 1; i <= n; ++i) {
      double ref = 0, disc = 1;
      bool ended = false;
      for (int j = 0; j < i && !ended; ++j) {
        ref += disc * r[j];
        disc *= gamma;
        ended = d[j] > 0;
      }
      if (!ended) ref += std::pow(gamma, i) * v[i - 1];
      CHECK(g[0][i - 1].item<double>() == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("averaged targets") {
  auto g1 = averaged_targets(row({4}), all_valid(1));
  CHECK(g1.item<double>() == 4.0);
  auto g2 = averaged_targets(row({2, 2}), all_valid(2));
  CHECK(g2.item<double>() == 2.0);
  const double r = 0.7;
  auto g = nstep_targets(row({r, r, r}), row({0, 0, 0}), all_valid(3), row({0, 0, 0}), 1.0);
  CHECK(averaged_targets(g, all_valid(3)).item<double>() == doctest::Approx(2 * r));
  auto partial = torch::tensor({{true, true, false}});
  CHECK(averaged_targets(row({1, 3, 100}), partial).item<double>() == 2.0);
  CHECK(averaged_targets(row({1, 3}), torch::zeros({1, 2}, torch::kBool)).item<double>() == 0.0);
}

TEST_CASE("critic loss normalisation and perfect fit") {
  auto q = torch::tensor({{1.0, 2.0, 0.0}, {0.0, 0.0, 0.0}}, torch::kFloat64);
  auto g = torch::tensor({{0.0, 0.0, 0.0}, {3.0, 0.0, 0.0}}, torch::kFloat64);
  auto valid = torch::tensor({{true, true, false}, {true, false, false}});
  auto h = torch::tensor({2, 1}, torch::kInt64);
  // ((1 + 4) / 2 + 9 / 1) / 2
  CHECK(critic_loss(q, g, valid, h).item<double>() == doctest::Approx(5.75));
  auto phl = per_horizon_losses(q, g, valid);
  CHECK(phl[0].item<double>() == doctest::Approx(5.0));
  CHECK(phl[1].item<double>() == doctest::Approx(4.0));
  CHECK(phl[2].item<double>() == 0.0);
  // Only the last valid position is supervised, against the mean target.
  CHECK(averaged_target_loss(q, g, valid).item<double>() == doctest::Approx((4.0 + 9.0) / 2));

  auto qq = g.clone().set_requires_grad(true);
  auto loss = critic_loss(qq, g, valid, h);
  loss.backward();
  CHECK(loss.item<double>() == 0.0);
  CHECK(qq.grad().abs().sum().item<double>() == 0.0);
}

TEST_CASE("horizon-mean gradient equals the mean of per-horizon gradients") {
  torch::manual_seed(12);
  nets::CriticConfig cc;
  cc.obs_dim = 3;
  cc.act_dim = 2;
  cc.num_layers = 2;
  cc.num_heads = 2;
  cc.dims_per_head = 4;
  cc.ffn_width = 16;
  cc.n_max = 5;
  auto critic = nets::make_critic(cc);
  critic->to(torch::kFloat64);
  const int B = 16, n = 5;
  auto s = torch::randn({B, 3}, torch::kFloat64);
  auto a = torch::rand({B, n, 2}, torch::kFloat64) * 2 - 1;
  auto g = torch::randn({B, n}, torch::kFloat64);
  auto valid = torch::ones({B, n}, torch::kBool);
  auto h = torch::full({B}, n, torch::kInt64);
  auto params = critic->parameters();

  auto flat_grad = [&](const torch::Tensor& loss) {
    auto gs = torch::autograd::grad({loss}, params);
    std::vector<torch::Tensor> f;
    for (auto& x : gs) f.push_back(x.reshape(-1));
    return torch::cat(f);
  };
  auto mean_grad = flat_grad(critic_loss(critic->forward(s, a), g, valid, h));
  torch::Tensor acc;
  for (int i = 0; i < n; ++i) {
    auto q = critic->forward(s, a);
    auto li = (q.select(1, i) - g.select(1, i)).square().mean();
    auto gi = flat_grad(li);
    acc = acc.defined() ? acc + gi : gi;
  }
  acc = acc / n;
  const double rel = ((mean_grad - acc).norm() / acc.norm()).item<double>();
  CHECK(rel < 1e-6);
}

TEST_CASE("equicorrelated gradient averaging variance") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  const double rho = 0.5;
  const int n = 4, trials = 100000;
  double s1 = 0, s2 = 0, m1 = 0, m2 = 0;
  for (int t = 0; t < trials; ++t) {
    const double z0 = n01(rng);
    double sum = 0, first = 0;
    for (int i = 0; i < n; ++i) {
      const double gi = std::sqrt(rho) * z0 + std::sqrt(1 - rho) * n01(rng);
      if (i == 0) first = gi;
      sum += gi;
    }
    const double gbar = sum / n;
    s1 += gbar;
    s2 += gbar * gbar;
    m1 += first;
    m2 += first * first;
  }
  const double var_bar = s2 / trials - (s1 / trials) * (s1 / trials);
  const double var_one = m2 / trials - (m1 / trials) * (m1 / trials);
  CHECK(var_bar / var_one == doctest::Approx((1 + (n - 1) * rho) / n).epsilon(0.05));
}

TEST_CASE("slice_windows zero-pads and masks") {
  replay::ReplayBuffer buf(4, 6, 2, 1);
  fill_buffer(buf, 2, {2}, 14);
  std::vector<std::size_t> slots{0, 1};
  auto seg = gather_segments(buf, slots);
  seg.values = torch::arange(14, torch::kFloat32).view({2, 7});
  std::vector<int> p{1, 3}, h{4, 2};
  auto w = slice_windows(seg, p, h);
  CHECK(w.width() == 4);
  CHECK(torch::equal(w.valid, torch::tensor({{true, true, false, false}, {false, false, false, false}})));
  CHECK(w.actions[0][2].abs().sum().item<double>() == 0.0);
  CHECK(w.actions[0][3].abs().sum().item<double>() == 0.0);
  CHECK(torch::equal(w.value_index, torch::tensor({{2, 3, 4, 5}, {4, 5, 6, 6}}, torch::kInt64)));
  CHECK(w.next_values[1][0].item<float>() == 11.0f);
  CHECK(w.start_states[0][0].item<float>() == static_cast<float>(buf.segment(0).state(1)[0]));
  CHECK_THROWS(slice_windows(seg, std::vector<int>{5, 0}, std::vector<int>{2, 1}));
}

TEST_CASE("masked positions are inert to the last bit") {
  auto cfg = tiny_config();
  const auto spec = spec_of(3, 2);
  replay::ReplayBuffer a(8, cfg.segment_length, 3, 2), b(8, cfg.segment_length, 3, 2);
  fill_buffer(a, 4, {2}, 15);
  fill_buffer(b, 4, {2}, 15);
  // Scramble everything after the terminal in b (states from s_3 on).
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  for (std::size_t k = 0; k < 4; ++k) {
    auto seg = b.segment(k);
    for (int t = 3; t < cfg.segment_length; ++t) {
      seg.rewards[t] = 100 * n01(rng);
      seg.dones[t] = rng() % 2;
      for (auto& x : seg.action(t)) x = std::tanh(n01(rng));
    }
    for (int t = 3; t <= cfg.segment_length; ++t)
      for (auto& x : seg.state(t)) x = 10 * n01(rng);
    seg.rebuild_mask();
    b.commit(std::move(seg));
  }
  for (auto mode : {TargetStyle::Gradient, TargetStyle::Averaged}) {
    cfg.target_style = mode;
    Learner la(cfg, spec, 5), lb(cfg, spec, 5);
    std::vector<std::size_t> slots{0, 1, 2, 3};
    std::vector<std::size_t> slots_b{4, 5, 6, 7};
    auto sa = gather_segments(a, slots);
    auto sb = gather_segments(b, slots_b);
    la.fill_values(sa);
    lb.fill_values(sb);
    std::vector<int> p{0, 1, 2, 3}, h{4, 4, 3, 2};
    auto wa = slice_windows(sa, p, h);
    auto wb = slice_windows(sb, p, h);
    CHECK(torch::equal(la.targets(wa), lb.targets(wb)));
    const double va = la.critic_update(sa, wa);
    const double vb = lb.critic_update(sb, wb);
    CHECK(va == vb);
    CHECK(std::isfinite(va));
  }
}

TEST_CASE("targets carry no gradient to the online critic") {
  auto cfg = tiny_config();
  Learner l(cfg, spec_of(3, 2), 6);
  replay::ReplayBuffer buf(8, cfg.segment_length, 3, 2);
  fill_buffer(buf, 4, {}, 16);
  std::vector<std::size_t> slots{0, 1, 2, 3};
  auto seg = gather_segments(buf, slots);
  l.fill_values(seg);
  std::mt19937_64 rng(1);
  auto w = l.draw_windows(seg, rng);
  auto g = l.targets(w);
  CHECK_FALSE(g.requires_grad());
  CHECK_FALSE(seg.values.requires_grad());
}

TEST_CASE("soft schedule with tau = 1 equals a hard copy after one update") {
  auto cfg = tiny_config();
  cfg.tau = 1.0;
  cfg.lr_critic = 1e-2;
  Learner l(cfg, spec_of(3, 2), 7);
  replay::ReplayBuffer buf(8, cfg.segment_length, 3, 2);
  fill_buffer(buf, 8, {}, 17);
  l.update_iteration(buf, 0);
  auto on = l.critic().named_parameters();
  for (const auto& p : l.target().named_parameters()) CHECK(torch::equal(p.value(), on[p.key()]));

  cfg.tau = 0.0;
  Learner frozen(cfg, spec_of(3, 2), 7);
  std::vector<torch::Tensor> before;
  for (const auto& p : frozen.target().parameters()) before.push_back(p.clone());
  frozen.update_iteration(buf, 0);
  auto after = frozen.target().parameters();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
  CHECK_FALSE(torch::equal(frozen.critic().parameters()[0], before[0]));
}

TEST_CASE("hard freeze: cached targets fixed within a span and refreshed at its boundary") {
  auto cfg = tiny_config();
  cfg.target_mode = TargetMode::HardFreeze;
  cfg.freeze_k = 20;
  cfg.lr_critic = 1e-2;
  Learner l(cfg, spec_of(3, 2), 8);
  replay::ReplayBuffer buf(8, cfg.segment_length, 3, 2);
  fill_buffer(buf, 8, {}, 18);
  std::vector<std::size_t> slots{0, 1, 2, 3, 4, 5, 6, 7};
  auto seg = gather_segments(buf, slots);
  l.fill_values(seg);
  std::mt19937_64 rng(2);
  auto w = l.draw_windows(seg, rng);

  std::vector<torch::Tensor> seen;
  for (int u = 1; u <= 41; ++u) {
    l.critic_update(seg, w);
    auto cur = w;
    cur.next_values = seg.values.gather(1, w.value_index);
    seen.push_back(l.targets(cur).clone());
    // A fresh fill mid-span comes from the cache.
    auto again = seg;
    l.fill_values(again);
    CHECK(torch::equal(again.values, seg.values));
  }
  for (int u = 1; u < 20; ++u) CHECK(torch::equal(seen[u], seen[0]));
  CHECK_FALSE(torch::equal(seen[20], seen[19]));
  for (int u = 21; u < 40; ++u) CHECK(torch::equal(seen[u], seen[20]));
  CHECK_FALSE(torch::equal(seen[40], seen[39]));
  CHECK(l.schedule().snapshots() == 3);
  CHECK(l.schedule().updates() == 41);
}

TEST_CASE("no replayed action is ever density-evaluated during training") {
  auto cfg = tiny_config();
  cfg.learning_starts = 0;
  cfg.temperature_warmup = 0;
  Learner l(cfg, spec_of(3, 2), 9);
  replay::ReplayBuffer buf(8, cfg.segment_length, 3, 2);
  fill_buffer(buf, 8, {3}, 19);
  const auto before = nets::GaussianPolicy::external_density_calls();
  for (int i = 0; i < 3; ++i) l.update_iteration(buf, 100);
  CHECK(nets::GaussianPolicy::external_density_calls() == before);

  // A bootstrap path that tries to reweight replay is stopped at runtime.
  auto& pol = l.policy();
  l.set_bootstrap_policy([&](const torch::Tensor& s) {
    auto a = torch::zeros({s.size(0), 2});
    pol.log_prob_of(s, a);
    return a;
  });
  CHECK_THROWS_AS(l.update_iteration(buf, 100), std::logic_error);
}

TEST_CASE("policy and temperature objectives") {
  auto logp = torch::tensor({-1.0, -2.0}, torch::kFloat64);
  auto q = torch::tensor({3.0, 5.0}, torch::kFloat64);
  auto zero = torch::zeros({}, torch::kFloat64);
  CHECK(policy_objective(logp, q, zero).item<double>() == -4.0);
  CHECK(policy_objective(logp, q, torch::full({}, 2.0, torch::kFloat64)).item<double>() == -7.0);

  // Entropy at the target: stationary temperature.
  auto la = torch::zeros({}, torch::kFloat64).set_requires_grad(true);
  auto at_target = torch::full({8}, 2.0, torch::kFloat64);
  temperature_objective(la, at_target, -2.0).backward();
  CHECK(la.grad().item<double>() == 0.0);
  // Entropy too low (log pi above -H) pushes alpha up.
  la.mutable_grad().zero_();
  temperature_objective(la, torch::full({8}, 3.0, torch::kFloat64), -2.0).backward();
  CHECK(la.grad().item<double>() < 0.0);
}

TEST_CASE("bandit: one policy step moves the action toward the optimum") {
  for (unsigned seed : {1u, 2u, 3u}) {
    torch::manual_seed(seed);
    nets::PolicyConfig pc;
    pc.obs_dim = 1;
    pc.act_dim = 1;
    pc.hidden = 16;
    pc.log_std_init = -1.0;
    nets::GaussianPolicy pi(pc);
    torch::optim::SGD opt(pi.parameters(), 1e-2);
    auto s = torch::ones({256, 1});
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
    const double before = pi.deterministic(s.slice(0, 0, 1)).item<double>();
    auto smp = pi.sample(s, gen);
    auto qv = -(smp.action - 0.3).square().squeeze(1);
    auto loss = policy_objective(smp.log_prob, qv, torch::zeros({}));
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double after = pi.deterministic(s.slice(0, 0, 1)).item<double>();
    CHECK(std::abs(after - 0.3) < std::abs(before - 0.3));
  }
}

TEST_CASE("more bootstrap action samples lower the value variance") {
  auto cfg = tiny_config();
  cfg.log_std_init = 0.0;
  const auto spec = spec_of(3, 2);
  Learner one(cfg, spec, 10);
  cfg.n_action_samples = 8;
  Learner eight(cfg, spec, 10);
  auto s = torch::randn({1, 3}).expand({10000, 3}).contiguous();
  auto v1 = one.bootstrap_values(s);
  auto v8 = eight.bootstrap_values(s);
  CHECK(v8.var().item<double>() <= v1.var().item<double>());
  CHECK(v8.var().item<double>() < 0.25 * v1.var().item<double>());
  // Same networks, so both estimate the same mean.
  const double se = std::sqrt(v1.var().item<double>() / 10000) * 4;
  CHECK(std::abs(v1.mean().item<double>() - v8.mean().item<double>()) < se + 1e-6);
}

TEST_CASE("deterministic bootstrap policy gives Q at the mean action") {
  auto cfg = tiny_config();
  cfg.log_std_init = -20.0;
  cfg.log_std_min = -20.0;
  Learner l(cfg, spec_of(3, 2), 11);
  auto s = torch::randn({5, 3});
  auto v = l.bootstrap_values(s);
  auto a = l.policy().deterministic(s);
  std::vector<std::shared_ptr<nets::CriticBase>> t{std::shared_ptr<nets::CriticBase>(&l.target(), [](auto*) {})};
  auto q = l.q_first(t, s, a);
  CHECK(max_abs_diff(v, q.detach()) < 1e-5);
}

TEST_CASE("tabular evaluation converges to the dynamic-programming values") {
  // States one-hot {0, 1}; action > 0 switches state, otherwise stay.
  // r(0, stay) = 0, r(0, switch) = 1, r(1, stay) = 0.5, r(1, switch) = 0.
  // Fixed policy: switch in 0, stay in 1.
  const double gamma = 0.9;
  const double v1 = 0.5 / (1 - gamma), v0 = 1 + gamma * v1;
  const double q_ref[2][2] = {{gamma * v0, 1 + gamma * v1}, {gamma * v1 + 0.5, gamma * v0}};

  for (auto mode : {TargetMode::SoftPolyak, TargetMode::HardFreeze}) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    cfg.segment_length = 8;
    cfg.l_min = 1;
    cfg.l_max = 4;
    cfg.batch_size = 32;
    cfg.n_critic = 10;
    cfg.gamma = gamma;
    cfg.target_mode = mode;
    cfg.tau = 0.05;
    cfg.freeze_k = 20;
    cfg.critic_layers = 1;
    cfg.critic_heads = 2;
    cfg.critic_head_dim = 8;
    cfg.critic_ffn = 32;
    cfg.policy_hidden = 8;
    cfg.lr_critic = 3e-3;
    cfg.learning_starts = 1 << 30;
    Learner l(cfg, spec_of(2, 1), 21);
    l.set_bootstrap_policy([](const torch::Tensor& s) {
      return torch::where(s.select(1, 0).unsqueeze(1) > 0.5, torch::full({1}, 0.5), torch::full({1}, -0.5));
    });

    replay::ReplayBuffer buf(64, cfg.segment_length, 2, 1);
    std::mt19937_64 rng(5);
    for (int c = 0; c < 64; ++c) {
      replay::Segment seg(cfg.segment_length, 2, 1);
      int st = static_cast<int>(rng() % 2);
      for (int t = 0; t < cfg.segment_length; ++t) {
        const bool sw = rng() % 2;
        seg.state(t)[st] = 1.0;
        seg.action(t)[0] = sw ? 0.5 : -0.5;
        seg.rewards[t] = st == 0 ? (sw ? 1.0 : 0.0) : (sw ? 0.0 : 0.5);
        st = sw ? 1 - st : st;
      }
      seg.state(cfg.segment_length)[st] = 1.0;
      seg.rebuild_mask();
      buf.commit(std::move(seg));
    }

    const int iters = 400;
    for (int it = 0; it < iters; ++it) {
      if (it == iters / 2 || it == 3 * iters / 4) {
        for (auto& g : l.critic_optimizer().param_groups()) {
          g.options().set_lr(g.options().get_lr() * 0.2);
        }
      }
      l.update_iteration(buf, 0);
    }
    auto s = torch::tensor({{1.f, 0.f}, {1.f, 0.f}, {0.f, 1.f}, {0.f, 1.f}});
    auto a = torch::tensor({{-0.5f}, {0.5f}, {-0.5f}, {0.5f}});
    std::vector<std::shared_ptr<nets::CriticBase>> c{std::shared_ptr<nets::CriticBase>(&l.critic(), [](auto*) {})};
    torch::NoGradGuard ng;
    auto q = l.q_first(c, s, a);
    double worst = 0;
    for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(q[i].item<double>() - q_ref[i / 2][i % 2]));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("schedule " << (mode == TargetMode::HardFreeze ? "hard" : "soft") << ": max |Q - Q_dp| = "
                        << worst << " in " << secs << " s");
    CHECK(worst < 1e-2);
    CHECK(secs < 30.0);
  }
}

TEST_CASE("checkpoint round trip restores every network") {
  auto cfg = tiny_config();
  const auto spec = spec_of(3, 2);
  Learner a(cfg, spec, 31), b(cfg, spec, 32);
  const auto path = (std::filesystem::temp_directory_path() / "tsac_roundtrip.ckpt").string();
  a.save(path, {{"note", "test"}});
  b.load(path);
  auto s = torch::randn({4, 3});
  auto act = torch::rand({4, 2, 2}) * 2 - 1;
  CHECK(torch::equal(a.critic().forward(s, act), b.critic().forward(s, act)));
  CHECK(torch::equal(a.target().forward(s, act), b.target().forward(s, act)));
  CHECK(torch::equal(a.policy().deterministic(s), b.policy().deterministic(s)));
  CHECK(a.alpha() == b.alpha());
  std::filesystem::remove(path);
}

TEST_CASE("mlp_concat windows use the fixed horizon") {
  auto cfg = tiny_config();
  cfg.critic_backbone = "mlp_concat";
  Learner l(cfg, spec_of(3, 2), 12);
  replay::ReplayBuffer buf(8, cfg.segment_length, 3, 2);
  fill_buffer(buf, 8, {}, 20);
  std::vector<std::size_t> slots{0, 1, 2, 3, 4, 5, 6, 7};
  auto seg = gather_segments(buf, slots);
  l.fill_values(seg);
  std::mt19937_64 rng(3);
  auto w = l.draw_windows(seg, rng);
  CHECK(w.width() == cfg.l_max);
  CHECK(torch::all(w.horizon == cfg.l_max).item<bool>());
  CHECK(std::isfinite(l.critic_update(seg, w)));
}
