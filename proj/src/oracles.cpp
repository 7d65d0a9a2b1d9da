#include "tsac/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tsac::oracles {

namespace {

struct Named {
  Formula f;
  std::string_view id;
};

constexpr std::array kNames = {
    Named{Formula::RewardSumVariance, "reward_sum_variance"},
    Named{Formula::AveragedRewardVariance, "averaged_reward_variance"},
    Named{Formula::RewardRatio, "reward_ratio"},
    Named{Formula::BootstrapVariance, "bootstrap_variance"},
    Named{Formula::AveragedBootstrapVariance, "averaged_bootstrap_variance"},
    Named{Formula::BootstrapRatio, "bootstrap_ratio"},
    Named{Formula::AveragedGradVariance, "averaged_grad_variance"},
    Named{Formula::EffectiveSampleSize, "effective_sample_size"},
    Named{Formula::ExpectedReuse, "expected_reuse"},
    Named{Formula::ReuseLast, "reuse_last"},
    Named{Formula::Coverage, "coverage_probability"},
    Named{Formula::SparseRewardUpdates, "sparse_reward_updates"},
    Named{Formula::SparseAmplification, "sparse_amplification"},
    Named{Formula::MeanReuse, "mean_reuse"},
};

// Draws x_0..x_{n-1} with unit variance and pairwise correlation rho.
class Equicorrelated {
 public:
  Equicorrelated(int n, double rho) : x_(static_cast<std::size_t>(n)),
                                      shared_(std::sqrt(rho)), own_(std::sqrt(1.0 - rho)) {}

  const std::vector<double>& draw(std::mt19937_64& rng) {
    const double z = normal_(rng);
    for (auto& v : x_) v = shared_ * z + own_ * normal_(rng);
    return x_;
  }

 private:
  std::vector<double> x_;
  double shared_;
  double own_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct VarianceEstimate {
  double var_a = 0.0;
  double se_a = 0.0;
  double var_b = 0.0;
  double se_b = 0.0;
  double ratio = 0.0;  // var_a / var_b
  double se_ratio = 0.0;
};

// Sample variances of two statistics computed on the same draws, plus their ratio.
// Standard errors use the squared-deviation sample; the ratio uses the delta method.
VarianceEstimate paired_variances(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ma += a[t];
    mb += b[t];
  }
  ma /= n;
  mb /= n;
  double ua = 0.0;
  double ub = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ua += (a[t] - ma) * (a[t] - ma);
    ub += (b[t] - mb) * (b[t] - mb);
  }
  ua /= n;
  ub /= n;
  const double r = ua / ub;
  double sa = 0.0;
  double sb = 0.0;
  double sr = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double da = (a[t] - ma) * (a[t] - ma) - ua;
    const double db = (b[t] - mb) * (b[t] - mb) - ub;
    sa += da * da;
    sb += db * db;
    sr += (da - r * db) * (da - r * db);
  }
  VarianceEstimate out;
  const double bessel = n / (n - 1.0);
  out.var_a = ua * bessel;
  out.var_b = ub * bessel;
  out.se_a = std::sqrt(sa / (n - 1.0) / n) * bessel;
  out.se_b = std::sqrt(sb / (n - 1.0) / n) * bessel;
  out.ratio = r;
  out.se_ratio = ub > 0.0 ? std::sqrt(sr / (n - 1.0) / n) / ub : 0.0;
  return out;
}

// Single N-step reward sum vs. the mean of the N partial returns.
VarianceEstimate simulate_rewards(const analysis::VarianceModel& m, std::int64_t trials,
                                  std::mt19937_64& rng) {
  Equicorrelated gen(m.N, m.rho);
  const double sigma = std::sqrt(m.sigma2);
  std::vector<double> single(static_cast<std::size_t>(trials));
  std::vector<double> averaged(static_cast<std::size_t>(trials));
  for (std::int64_t t = 0; t < trials; ++t) {
    const auto& x = gen.draw(rng);
    double disc = 1.0;
    double partial = 0.0;
    double sum_partials = 0.0;
    for (int k = 0; k < m.N; ++k) {
      partial += disc * sigma * x[static_cast<std::size_t>(k)];
      sum_partials += partial;
      disc *= m.gamma;
    }
    single[static_cast<std::size_t>(t)] = partial;
    averaged[static_cast<std::size_t>(t)] = sum_partials / m.N;
  }
  return paired_variances(single, averaged);
}

// gamma^N Z_N vs. (1/N) sum_{i=1..N} gamma^i Z_i.
VarianceEstimate simulate_bootstrap(const analysis::VarianceModel& m, std::int64_t trials,
                                    std::mt19937_64& rng) {
  Equicorrelated gen(m.N, m.kappa);
  const double tau = std::sqrt(m.tau2);
  std::vector<double> single(static_cast<std::size_t>(trials));
  std::vector<double> averaged(static_cast<std::size_t>(trials));
  for (std::int64_t t = 0; t < trials; ++t) {
    const auto& z = gen.draw(rng);
    double disc = 1.0;
    double acc = 0.0;
    for (int i = 1; i <= m.N; ++i) {
      disc *= m.gamma;
      acc += disc * tau * z[static_cast<std::size_t>(i - 1)];
    }
    single[static_cast<std::size_t>(t)] = disc * tau * z[static_cast<std::size_t>(m.N - 1)];
    averaged[static_cast<std::size_t>(t)] = acc / m.N;
  }
  return paired_variances(single, averaged);
}

// Variance of the horizon-mean of n equicorrelated per-horizon gradients.
Estimate simulate_grad_mean(const OracleParams& p, std::int64_t trials, std::mt19937_64& rng,
                            bool as_effective_size) {
  Equicorrelated gen(p.n, p.rho_w);
  const double sigma = std::sqrt(p.sigma_w2);
  std::vector<double> mean(static_cast<std::size_t>(trials));
  for (std::int64_t t = 0; t < trials; ++t) {
    const auto& g = gen.draw(rng);
    double acc = 0.0;
    for (double x : g) acc += sigma * x;
    mean[static_cast<std::size_t>(t)] = acc / p.n;
  }
  const auto v = paired_variances(mean, mean);
  if (!as_effective_size) return {v.var_a, v.se_a, false};
  // n_eff = sigma^2 / Var[mean]; delta method for the standard error.
  return {p.sigma_w2 / v.var_a, p.sigma_w2 * v.se_a / (v.var_a * v.var_a), false};
}

struct WindowDraw {
  int p;
  int q;
};

// Applies `visit` to every equally likely (p, L) pair, or to `trials` random ones.
template <class Visit>
double window_expectation(const analysis::WindowModel& w, WindowMode mode, std::int64_t trials,
                          std::mt19937_64& rng, Visit visit, double* std_error) {
  if (mode == WindowMode::Enumerate) {
    double acc = 0.0;
    for (int p = 1; p <= w.N; ++p) {
      for (int l = w.l_min; l <= w.l_max; ++l) acc += visit(WindowDraw{p, std::min(p + l - 1, w.N)});
    }
    *std_error = 0.0;
    return acc / (static_cast<double>(w.N) * (w.l_max - w.l_min + 1));
  }
  std::uniform_int_distribution<int> start(1, w.N);
  std::uniform_int_distribution<int> length(w.l_min, w.l_max);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const int p = start(rng);
    const int l = length(rng);
    const double v = visit(WindowDraw{p, std::min(p + l - 1, w.N)});
    sum += v;
    sum_sq += v * v;
  }
  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  *std_error = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / (n - 1.0));
  return mean;
}

Estimate window_oracle(Formula f, const OracleParams& p, std::int64_t trials, std::mt19937_64& rng,
                       WindowMode mode) {
  const auto& w = p.window;
  w.validate();
  if (f == Formula::ExpectedReuse || f == Formula::Coverage) {
    if (p.j < 1 || p.j > w.N) throw std::invalid_argument("oracle: j must lie in [1, N]");
  }
  if (mode == WindowMode::Sample && trials < kMinTrials) {
    throw std::invalid_argument("oracle: at least 1000 trials required");
  }
  double se = 0.0;
  double value = 0.0;
  switch (f) {
    case Formula::ExpectedReuse:
      value = window_expectation(w, mode, trials, rng, [&](WindowDraw d) {
        return d.q == p.j ? static_cast<double>(d.q - d.p) : 0.0;
      }, &se);
      break;
    case Formula::ReuseLast:
      value = window_expectation(w, mode, trials, rng, [&](WindowDraw d) {
        return d.q == w.N ? static_cast<double>(d.q - d.p) : 0.0;
      }, &se);
      break;
    case Formula::Coverage:
      value = window_expectation(w, mode, trials, rng, [&](WindowDraw d) {
        return (d.p <= p.j && p.j <= d.q) ? 1.0 : 0.0;
      }, &se);
      break;
    case Formula::SparseRewardUpdates:
    case Formula::SparseAmplification: {
      // Only the transition into state N is rewarded; every update i in [p, q)
      // whose bootstrap sits at q == N sums over it.
      value = window_expectation(w, mode, trials, rng, [&](WindowDraw d) {
        double hits = 0.0;
        for (int i = d.p; i < d.q; ++i) hits += (d.q == w.N) ? 1.0 : 0.0;
        return hits;
      }, &se);
      if (f == Formula::SparseAmplification) {
        // 1-step TD touches the terminal reward in 1/N of its samples.
        value *= w.N;
        se *= w.N;
      }
      break;
    }
    case Formula::MeanReuse:
      value = window_expectation(w, mode, trials, rng, [&](WindowDraw d) {
        return static_cast<double>(d.q - d.p);
      }, &se) / w.N;
      se /= w.N;
      break;
    default:
      throw std::logic_error("window_oracle: not a window formula");
  }
  return {value, se, mode == WindowMode::Enumerate};
}

}  // namespace

Formula parse_formula(std::string_view id) {
  for (const auto& n : kNames) {
    if (n.id == id) return n.f;
  }
  throw std::invalid_argument("unknown formula id: " + std::string(id));
}

std::string_view formula_id(Formula f) {
  for (const auto& n : kNames) {
    if (n.f == f) return n.id;
  }
  return "unknown";
}

const std::vector<Formula>& all_formulas() {
  static const std::vector<Formula> all = [] {
    std::vector<Formula> v;
    for (const auto& n : kNames) v.push_back(n.f);
    return v;
  }();
  return all;
}

bool is_window_formula(Formula f) {
  switch (f) {
    case Formula::ExpectedReuse:
    case Formula::ReuseLast:
    case Formula::Coverage:
    case Formula::SparseRewardUpdates:
    case Formula::SparseAmplification:
    case Formula::MeanReuse:
      return true;
    default:
      return false;
  }
}

Estimate mc_oracle(Formula f, const OracleParams& p, std::int64_t trials, std::mt19937_64& rng,
                   WindowMode mode) {
  if (is_window_formula(f)) return window_oracle(f, p, trials, rng, mode);
  if (trials < kMinTrials) throw std::invalid_argument("oracle: at least 1000 trials required");

  switch (f) {
    case Formula::RewardSumVariance:
    case Formula::AveragedRewardVariance:
    case Formula::RewardRatio: {
      p.variance.validate();
      const auto v = simulate_rewards(p.variance, trials, rng);
      if (f == Formula::RewardSumVariance) return {v.var_a, v.se_a, false};
      if (f == Formula::AveragedRewardVariance) return {v.var_b, v.se_b, false};
      return {v.ratio, v.se_ratio, false};
    }
    case Formula::BootstrapVariance:
    case Formula::AveragedBootstrapVariance:
    case Formula::BootstrapRatio: {
      p.variance.validate();
      const auto v = simulate_bootstrap(p.variance, trials, rng);
      if (f == Formula::BootstrapVariance) return {v.var_a, v.se_a, false};
      if (f == Formula::AveragedBootstrapVariance) return {v.var_b, v.se_b, false};
      return {v.ratio, v.se_ratio, false};
    }
    case Formula::AveragedGradVariance:
      return simulate_grad_mean(p, trials, rng, false);
    case Formula::EffectiveSampleSize:
      return simulate_grad_mean(p, trials, rng, true);
    default:
      break;
  }
  throw std::invalid_argument("mc_oracle: unhandled formula");
}

bool agrees(const Estimate& e, double closed_form, double z) {
  const double diff = std::abs(e.value - closed_form);
  const double roundoff = 1e-12 * std::max(1.0, std::abs(closed_form));
  if (e.exact || e.std_error == 0.0) return diff <= roundoff;
  return diff <= z * e.std_error + roundoff;
}

}  // namespace tsac::oracles
