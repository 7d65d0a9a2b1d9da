#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsac/nets.hpp"

using namespace tsac::nets;

namespace {

CriticConfig small_cfg(Backbone b, int n_max = 5) {
  CriticConfig c;
  c.backbone = b;
  c.obs_dim = 3;
  c.act_dim = 2;
  c.num_layers = 2;
  c.num_heads = 2;
  c.dims_per_head = 4;
  c.ffn_width = 16;
  c.n_max = n_max;
  return c;
}

bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && torch::equal(a, b);
}

// ---- independent double-precision forward of the causal transformer ----

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

struct Params {
  std::map<std::string, torch::Tensor> p;
  Mat mat(const std::string& k) const {
    auto t = p.at(k);
    Mat m(t.size(0), Vec(t.size(1)));
    for (int i = 0; i < t.size(0); ++i)
      for (int j = 0; j < t.size(1); ++j) m[i][j] = t[i][j].item<double>();
    return m;
  }
  Vec vec(const std::string& k) const {
    auto t = p.at(k);
    Vec v(t.size(0));
    for (int i = 0; i < t.size(0); ++i) v[i] = t[i].item<double>();
    return v;
  }
};

Vec affine(const Mat& w, const Vec& x, const Vec* b = nullptr) {
  Vec y(w.size(), 0.0);
  for (size_t i = 0; i < w.size(); ++i) {
    for (size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
    if (b) y[i] += (*b)[i];
  }
  return y;
}

Vec layer_norm(const Vec& x, const Vec& g, const Vec& b) {
  double mu = 0, var = 0;
  for (double v : x) mu += v;
  mu /= x.size();
  for (double v : x) var += (v - mu) * (v - mu);
  var /= x.size();
  Vec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
  return y;
}

std::vector<Vec> attention(const Params& P, const std::string& pre, const std::vector<Vec>& x, int heads,
                           int dh) {
  const auto wq = P.mat(pre + "q.weight"), wk = P.mat(pre + "k.weight"), wv = P.mat(pre + "v.weight"),
             wo = P.mat(pre + "o.weight");
  const auto bq = P.vec(pre + "q.bias"), bk = P.vec(pre + "k.bias"), bv = P.vec(pre + "v.bias"),
             bo = P.vec(pre + "o.bias");
  const size_t T = x.size();
  std::vector<Vec> q, k, v;
  for (const auto& xi : x) {
    q.push_back(affine(wq, xi, &bq));
    k.push_back(affine(wk, xi, &bk));
    v.push_back(affine(wv, xi, &bv));
  }
  std::vector<Vec> out;
  for (size_t i = 0; i < T; ++i) {
    Vec cat(heads * dh, 0.0);
    for (int h = 0; h < heads; ++h) {
      Vec s(i + 1);
      double mx = -1e300;
      for (size_t j = 0; j <= i; ++j) {
        double d = 0;
        for (int c = 0; c < dh; ++c) d += q[i][h * dh + c] * k[j][h * dh + c];
        s[j] = d / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (size_t j = 0; j <= i; ++j)
        for (int c = 0; c < dh; ++c) cat[h * dh + c] += s[j] / z * v[j][h * dh + c];
    }
    out.push_back(affine(wo, cat, &bo));
  }
  return out;
}

Vec reference_forward(const Params& P, const CriticConfig& c, const Vec& s, const std::vector<Vec>& a) {
  const int d = c.width();
  std::vector<Vec> x;
  x.push_back(affine(P.mat("embed_s.weight"), s));
  for (const auto& ai : a) x.push_back(affine(P.mat("embed_a.weight"), ai));
  for (size_t pos = 0; pos < x.size(); ++pos) {
    for (int i = 0; i < d; ++i) {
      const double f = std::pow(10000.0, -double(i - i % 2) / d);
      x[pos][i] += i % 2 == 0 ? std::sin(pos * f) : std::cos(pos * f);
    }
  }
  auto add = [](Vec u, const Vec& v) {
    for (size_t i = 0; i < u.size(); ++i) u[i] += v[i];
    return u;
  };
  for (int l = 0; l < c.num_layers; ++l) {
    const auto pre = "layer" + std::to_string(l) + "_";
    const auto g1 = P.vec(pre + "norm1.weight"), b1 = P.vec(pre + "norm1.bias");
    const auto g2 = P.vec(pre + "norm2.weight"), b2 = P.vec(pre + "norm2.bias");
    const auto w1 = P.mat(pre + "ff1.weight"), w2 = P.mat(pre + "ff2.weight");
    const auto c1 = P.vec(pre + "ff1.bias"), c2 = P.vec(pre + "ff2.bias");
    auto ff = [&](const Vec& t) {
      auto h = affine(w1, t, &c1);
      for (auto& e : h) e = e > 0 ? e : 0.01 * e;
      return affine(w2, h, &c2);
    };
    if (c.pre_norm) {
      std::vector<Vec> n1;
      for (const auto& xi : x) n1.push_back(layer_norm(xi, g1, b1));
      auto att = attention(P, pre, n1, c.num_heads, c.dims_per_head);
      for (size_t i = 0; i < x.size(); ++i) x[i] = add(x[i], att[i]);
      for (auto& xi : x) xi = add(xi, ff(layer_norm(xi, g2, b2)));
    } else {
      auto att = attention(P, pre, x, c.num_heads, c.dims_per_head);
      for (size_t i = 0; i < x.size(); ++i) x[i] = layer_norm(add(x[i], att[i]), g1, b1);
      for (auto& xi : x) xi = layer_norm(add(xi, ff(xi)), g2, b2);
    }
  }
  if (c.pre_norm) {
    const auto g = P.vec("final_norm.weight"), b = P.vec("final_norm.bias");
    for (auto& xi : x) xi = layer_norm(xi, g, b);
  }
  const auto head = P.mat("head.weight");
  Vec q;
  for (size_t i = 1; i < x.size(); ++i) q.push_back(affine(head, x[i])[0]);
  return q;
}

}  // namespace

TEST_CASE("causal backbones ignore future actions bit for bit") {
  torch::manual_seed(1);
  for (auto b : {Backbone::Transformer, Backbone::Gru, Backbone::Lstm}) {
    for (bool pre : {false, true}) {
      auto cfg = small_cfg(b);
      cfg.pre_norm = pre;
      auto critic = make_critic(cfg);
      CHECK(critic->causal());
      auto s = torch::randn({4, 3});
      auto a = torch::rand({4, 5, 2}) * 2 - 1;
      auto base = critic->forward(s, a);
      for (int j = 0; j < 5; ++j) {
        auto a2 = a.clone();
        a2.select(1, j).copy_(torch::rand({4, 2}) * 2 - 1);
        auto q = critic->forward(s, a2);
        // Output i (0-based) conditions on a_t..a_{t+i}; a_{t+j} may only move i >= j.
        if (j > 0) CHECK(bit_equal(q.slice(1, 0, j), base.slice(1, 0, j)));
        CHECK_FALSE(bit_equal(q.select(1, j), base.select(1, j)));
      }
    }
  }
}

TEST_CASE("mlp_concat leaks future actions into early outputs") {
  torch::manual_seed(2);
  auto critic = make_critic(small_cfg(Backbone::MlpConcat));
  CHECK_FALSE(critic->causal());
  auto s = torch::randn({4, 3});
  auto a = torch::rand({4, 5, 2}) * 2 - 1;
  auto a2 = a.clone();
  a2.select(1, 4).add_(0.5);
  CHECK_FALSE(bit_equal(critic->forward(s, a).select(1, 0), critic->forward(s, a2).select(1, 0)));
  CHECK_THROWS_AS(critic->forward(s, a.slice(1, 0, 3)), std::invalid_argument);
}

TEST_CASE("critic rejects bad inputs") {
  auto critic = make_critic(small_cfg(Backbone::Transformer));
  CHECK_THROWS_AS(critic->forward(torch::zeros({2, 4}), torch::zeros({2, 1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(critic->forward(torch::zeros({2, 3}), torch::zeros({2, 6, 2})), std::invalid_argument);
  auto s = torch::zeros({2, 3});
  s[0][0] = std::nan("");
  CHECK_THROWS_AS(critic->forward(s, torch::zeros({2, 1, 2})), std::invalid_argument);
}

TEST_CASE("transformer forward matches a scalar reference") {
  torch::manual_seed(3);
  for (bool pre : {false, true}) {
    auto cfg = small_cfg(Backbone::Transformer, 4);
    cfg.pre_norm = pre;
    auto critic = make_critic(cfg);
    critic->to(torch::kFloat64);
    {
      // Non-trivial norm parameters so the reference exercises them.
      torch::NoGradGuard ng;
      for (auto& p : critic->named_parameters()) {
        if (p.key().find("norm") != std::string::npos) p.value().uniform_(0.5, 1.5);
      }
    }
    Params P;
    for (const auto& p : critic->named_parameters()) P.p[p.key()] = p.value().detach();
    auto s = torch::randn({2, 3}, torch::kFloat64);
    auto a = torch::rand({2, 4, 2}, torch::kFloat64) * 2 - 1;
    auto q = critic->forward(s, a);
    for (int b = 0; b < 2; ++b) {
      Vec sv{s[b][0].item<double>(), s[b][1].item<double>(), s[b][2].item<double>()};
      std::vector<Vec> av;
      for (int i = 0; i < 4; ++i) av.push_back({a[b][i][0].item<double>(), a[b][i][1].item<double>()});
      auto ref = reference_forward(P, cfg, sv, av);
      for (int i = 0; i < 4; ++i) CHECK(q[b][i].item<double>() == doctest::Approx(ref[i]).epsilon(1e-10));
      // Shorter sequences give the same prefix outputs.
      auto q2 = critic->forward(s.slice(0, b, b + 1), a.slice(0, b, b + 1).slice(1, 0, 2));
      for (int i = 0; i < 2; ++i) CHECK(q2[0][i].item<double>() == doctest::Approx(ref[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("critic gradients match central differences") {
  torch::manual_seed(4);
  for (auto b : {Backbone::Transformer, Backbone::Gru, Backbone::Lstm, Backbone::MlpConcat}) {
    auto cfg = small_cfg(b, 3);
    cfg.num_layers = 1;
    auto critic = make_critic(cfg);
    critic->to(torch::kFloat64);
    REQUIRE(parameter_count(*critic) <= 10000);
    auto s = torch::randn({3, 3}, torch::kFloat64);
    auto a = torch::rand({3, 3, 2}, torch::kFloat64) * 2 - 1;
    auto c = torch::randn({3, 3}, torch::kFloat64);
    auto loss_of = [&] { return (critic->forward(s, a) * c).sum(); };
    critic->zero_grad();
    loss_of().backward();
    int checked = 0, bad = 0;
    torch::NoGradGuard ng;
    for (auto& p : critic->parameters()) {
      auto flat = p.view(-1);
      auto g = p.grad().view(-1);
      // Every 3rd entry keeps the runtime short while touching every tensor.
      for (int64_t i = 0; i < flat.numel(); i += 3) {
        const double h = 1e-6;
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = loss_of().item<double>();
        flat[i] = orig - h;
        const double dn = loss_of().item<double>();
        flat[i] = orig;
        const double fd = (up - dn) / (2 * h);
        const double an = g[i].item<double>();
        ++checked;
        if (std::abs(fd - an) > 1e-3 * std::max(std::abs(an), std::abs(fd)) + 1e-8) ++bad;
      }
    }
    CHECK(checked > 50);
    CHECK(bad == 0);
  }
}

TEST_CASE("soft and hard parameter copies") {
  torch::manual_seed(5);
  auto cfg = small_cfg(Backbone::Transformer);
  auto online = make_critic(cfg);
  auto target = make_critic(cfg);
  auto before = target->parameters()[0].clone();
  polyak_update(*target, *online, 0.0);
  CHECK(bit_equal(target->parameters()[0], before));
  polyak_update(*target, *online, 0.5);
  CHECK(torch::allclose(target->parameters()[0], 0.5 * before + 0.5 * online->parameters()[0]));
  polyak_update(*target, *online, 1.0);
  auto tp = target->parameters(), op = online->parameters();
  for (size_t i = 0; i < tp.size(); ++i) CHECK(bit_equal(tp[i], op[i]));
  CHECK_THROWS_AS(polyak_update(*target, *online, 1.5), std::invalid_argument);
}

TEST_CASE("policy head initialisation and bounds") {
  torch::manual_seed(6);
  PolicyConfig pc;
  pc.obs_dim = 4;
  pc.act_dim = 3;
  pc.hidden = 32;
  GaussianPolicy pi(pc);
  auto head = pi.forward(torch::randn({8, 4}));
  CHECK(torch::allclose(head.log_std, torch::full({8, 3}, -5.0)));
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(7);
  auto smp = pi.sample(torch::randn({64, 4}), gen);
  CHECK(smp.action.abs().max().item<double>() < 1.0);
  CHECK(smp.log_prob.sizes() == torch::IntArrayRef{64});
  CHECK(torch::isfinite(smp.log_prob).all().item<bool>());
}

TEST_CASE("squashed density integrates to one and matches the CDF slope") {
  torch::manual_seed(8);
  PolicyConfig pc;
  pc.obs_dim = 2;
  pc.act_dim = 1;
  pc.hidden = 16;
  pc.log_std_init = -0.3;
  GaussianPolicy pi(pc);
  pi.to(torch::kFloat64);
  auto s = torch::randn({1, 2}, torch::kFloat64);
  auto head = pi.forward(s);
  const double mu = head.mean.item<double>();
  const double sigma = std::exp(head.log_std.item<double>());
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(std::atanh(x) - mu) / (sigma * std::sqrt(2.0))); };

  const int M = 20000;
  auto xs = torch::linspace(-1 + 1e-9, 1 - 1e-9, M, torch::kFloat64).unsqueeze(1);
  auto dens = pi.log_prob_of(s.expand({M, 2}), xs).exp();
  const double integral = torch::trapz(dens, xs.squeeze(1)).item<double>();
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  for (double x : {-0.9, -0.4, 0.0, 0.3, 0.8}) {
    const double h = 1e-6;
    const double slope = (cdf(x + h) - cdf(x - h)) / (2 * h);
    auto lp = pi.log_prob_of(s, torch::full({1, 1}, x, torch::kFloat64)).item<double>();
    CHECK(std::exp(lp) == doctest::Approx(slope).epsilon(1e-5));
  }
}

TEST_CASE("sampled log-probabilities equal the density of the sampled action") {
  torch::manual_seed(9);
  PolicyConfig pc;
  pc.obs_dim = 2;
  pc.act_dim = 2;
  pc.hidden = 16;
  pc.log_std_init = -1.0;
  GaussianPolicy pi(pc);
  pi.to(torch::kFloat64);
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(3);
  auto s = torch::randn({16, 2}, torch::kFloat64);
  auto smp = pi.sample(s, gen);
  CHECK(torch::allclose(smp.log_prob, pi.log_prob_of(s, smp.action), 1e-6, 1e-6));
}

TEST_CASE("replay density guard refuses supplied actions") {
  PolicyConfig pc;
  pc.obs_dim = 2;
  pc.act_dim = 1;
  GaussianPolicy pi(pc);
  auto s = torch::zeros({1, 2});
  auto a = torch::zeros({1, 1});
  const auto before = GaussianPolicy::external_density_calls();
  CHECK_NOTHROW(pi.log_prob_of(s, a));
  CHECK(GaussianPolicy::external_density_calls() == before + 1);
  {
    ReplayDensityGuard g;
    CHECK(ReplayDensityGuard::active());
    {
      ReplayDensityGuard nested;
      CHECK_THROWS_AS(pi.log_prob_of(s, a), std::logic_error);
    }
    CHECK_THROWS_AS(pi.log_prob_of(s, a), std::logic_error);
  }
  CHECK_FALSE(ReplayDensityGuard::active());
  CHECK(GaussianPolicy::external_density_calls() == before + 1);
}

TEST_CASE("backbone names") {
  CHECK(parse_backbone("transformer") == Backbone::Transformer);
  CHECK(parse_backbone("gru") == Backbone::Gru);
  CHECK(parse_backbone("lstm") == Backbone::Lstm);
  CHECK(parse_backbone("mlp_concat") == Backbone::MlpConcat);
  CHECK(to_string(Backbone::MlpConcat) == "mlp_concat");
  CHECK_THROWS_AS(parse_backbone("cnn"), std::invalid_argument);
}
