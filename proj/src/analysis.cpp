#include "tsac/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tsac::analysis {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_horizon_gamma(int N, double gamma) {
  require(N >= 1, "N must be >= 1, got " + std::to_string(N));
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1], got " + std::to_string(gamma));
}

// 1 - gamma^m without cancellation for gamma close to one.
double one_minus_pow(double gamma, double m) {
  return -std::expm1(m * std::log1p(-(1.0 - gamma)));
}

}  // namespace

void VarianceModel::validate() const {
  check_horizon_gamma(N, gamma);
  require(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1), got " + std::to_string(rho));
  require(kappa >= 0.0 && kappa <= 1.0, "kappa must lie in [0, 1], got " + std::to_string(kappa));
  require(sigma2 >= 0.0, "sigma2 must be non-negative");
  require(tau2 >= 0.0, "tau2 must be non-negative");
}

void WindowModel::validate() const {
  require(N >= 1, "N must be >= 1");
  require(l_min >= 1, "l_min must be >= 1");
  require(l_min <= l_max, "l_min must not exceed l_max");
  require(l_max <= N, "l_max must not exceed N");
}

GeometricSums geometric_sums(int N, double gamma) {
  check_horizon_gamma(N, gamma);
  if (gamma == 1.0) {
    const double n = N;
    return {n, n, n, n};
  }
  const double one_m_g = 1.0 - gamma;  // exact for gamma in [0.5, 1]
  const double one_m_g2 = one_m_g * (1.0 + gamma);
  const double S0 = one_minus_pow(gamma, 2.0 * N) / one_m_g2;
  const double T0 = one_minus_pow(gamma, N) / one_m_g;
  return {S0, T0, gamma * gamma * S0, gamma * T0};
}

TriangularWeights triangular_weights(int N, double gamma) {
  check_horizon_gamma(N, gamma);
  TriangularWeights out;
  out.w.resize(static_cast<std::size_t>(N));
  double g = 1.0;
  for (int k = 0; k < N; ++k) {
    out.w[static_cast<std::size_t>(k)] = (static_cast<double>(N - k) / N) * g;
    g *= gamma;
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : out.w) {
    sum += x;
    sum_sq += x * x;
  }
  out.A = sum_sq;
  // B = sum_{k != l} w_k w_l; the direct pair sum avoids cancellation in (sum)^2 - A.
  double cross = 0.0;
  double prefix = 0.0;
  for (double x : out.w) {
    cross += x * prefix;
    prefix += x;
  }
  out.B = 2.0 * cross;
  return out;
}

double triangular_weight_sum(int N, double gamma) {
  check_horizon_gamma(N, gamma);
  const double n = N;
  if (gamma == 1.0) return n * (n + 1.0) / 2.0;
  const double one_m_g = 1.0 - gamma;
  return (1.0 - (n + 1.0) * std::pow(gamma, n) + n * std::pow(gamma, n + 1.0)) /
         (one_m_g * one_m_g);
}

double reward_sum_variance(const VarianceModel& m) {
  m.validate();
  const auto g = geometric_sums(m.N, m.gamma);
  return m.sigma2 * (g.S0 + m.rho * (g.T0 * g.T0 - g.S0));
}

double averaged_reward_variance(const VarianceModel& m) {
  m.validate();
  const auto t = triangular_weights(m.N, m.gamma);
  return m.sigma2 * (t.A + m.rho * t.B);
}

double reward_ratio(const VarianceModel& m) {
  m.validate();
  const auto g = geometric_sums(m.N, m.gamma);
  const auto t = triangular_weights(m.N, m.gamma);
  const double r = (g.S0 + m.rho * (g.T0 * g.T0 - g.S0)) / (t.A + m.rho * t.B);
  // Bracket [1, 4) holds for every N, rho and gamma; a violation is a numerical bug.
  if (!(r >= 1.0 - 1e-12 && r < 4.0)) {
    throw std::logic_error("reward_ratio left [1, 4): " + std::to_string(r));
  }
  return r;
}

double bootstrap_variance(const VarianceModel& m) {
  m.validate();
  return m.tau2 * std::pow(m.gamma, 2.0 * m.N);
}

double averaged_bootstrap_variance(const VarianceModel& m) {
  m.validate();
  const auto g = geometric_sums(m.N, m.gamma);
  const double n = m.N;
  return m.tau2 / (n * n) * (g.S1 + m.kappa * (g.C * g.C - g.S1));
}

double bootstrap_ratio(const VarianceModel& m) {
  m.validate();
  const auto g = geometric_sums(m.N, m.gamma);
  const double n = m.N;
  return n * n * std::pow(m.gamma, 2.0 * m.N) / (g.S1 + m.kappa * (g.C * g.C - g.S1));
}

std::optional<double> kappa_star(int N, double gamma) {
  check_horizon_gamma(N, gamma);
  if (N == 1) return std::nullopt;
  const auto g = geometric_sums(N, gamma);
  const double n = N;
  return (n * n * std::pow(gamma, 2.0 * N) - g.S1) / (g.C * g.C - g.S1);
}

Bracket bootstrap_ratio_bounds(int N, double gamma) {
  const auto g = geometric_sums(N, gamma);
  const double num = static_cast<double>(N) * N * std::pow(gamma, 2.0 * N);
  return {num / (g.C * g.C), num / g.S1};
}

double total_variance_ratio(const VarianceModel& m) {
  return (reward_sum_variance(m) + bootstrap_variance(m)) /
         (averaged_reward_variance(m) + averaged_bootstrap_variance(m));
}

double effective_sample_size(int n, double rho_w) {
  require(n >= 1, "n must be >= 1");
  require(rho_w >= 0.0 && rho_w < 1.0, "rho_w must lie in [0, 1)");
  return n / (1.0 + (n - 1) * rho_w);
}

double averaged_grad_variance(int n, double rho_w, double sigma_w2) {
  return sigma_w2 / effective_sample_size(n, rho_w);
}

double weighted_grad_variance(std::span<const double> alpha, double rho_w, double sigma_w2) {
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double a : alpha) {
    sum += a;
    sum_sq += a * a;
  }
  return sigma_w2 * ((1.0 - rho_w) * sum_sq + rho_w * sum * sum);
}

UniformOptimalityReport uniform_weights_optimal(int n, double rho_w, std::int64_t trials,
                                                std::mt19937_64& rng) {
  require(n >= 1, "n must be >= 1");
  require(rho_w >= 0.0 && rho_w < 1.0, "rho_w must lie in [0, 1)");
  UniformOptimalityReport rep;
  rep.n = n;
  rep.rho_w = rho_w;
  rep.trials = trials;
  const std::vector<double> uniform(static_cast<std::size_t>(n), 1.0 / n);
  rep.uniform_variance = weighted_grad_variance(uniform, rho_w, 1.0);
  rep.best_random_variance = std::numeric_limits<double>::infinity();

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> alpha(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < trials; ++t) {
    if (t % 2 == 0) {
      // Positive weights normalised onto the simplex.
      double s = 0.0;
      for (auto& a : alpha) s += (a = unif(rng));
      for (auto& a : alpha) a /= s;
    } else {
      // Uniform plus a zero-sum perturbation, which also reaches negative weights.
      double s = 0.0;
      for (auto& a : alpha) s += (a = normal(rng));
      const double scale = std::pow(10.0, -3.0 * unif(rng));
      for (auto& a : alpha) a = 1.0 / n + scale * (a - s / n);
    }
    const double v = weighted_grad_variance(alpha, rho_w, 1.0);
    rep.best_random_variance = std::min(rep.best_random_variance, v);
    if (v < rep.uniform_variance * (1.0 - 1e-12)) ++rep.violations;
  }
  return rep;
}

double expected_reuse(int j, const WindowModel& w) {
  w.validate();
  require(j >= 1 && j <= w.N, "state index j must lie in [1, N]");
  if (j == w.N) return reuse_last(w);
  const double N = w.N;
  const double delta = w.delta();
  if (j < w.l_min) return 0.0;
  if (j < w.l_max) {
    return static_cast<double>(j - w.l_min + 1) * (j + w.l_min - 2) / (2.0 * N * delta);
  }
  return (w.l_min + w.l_max - 2) / (2.0 * N);
}

double reuse_plateau(const WindowModel& w) {
  w.validate();
  return (w.l_min + w.l_max - 2) / (2.0 * w.N);
}

double reuse_last(const WindowModel& w) {
  w.validate();
  const double N = w.N;
  const double delta = w.delta();
  double full = 0.0;
  for (int h = 1; h <= w.l_min; ++h) full += h - 1;
  double partial = 0.0;
  for (int h = w.l_min + 1; h <= w.l_max; ++h) {
    partial += static_cast<double>(h - 1) * (w.l_max - h + 1);
  }
  return full / N + partial / (N * delta);
}

double coverage_probability(int j, const WindowModel& w) {
  w.validate();
  require(j >= 1 && j <= w.N, "state index j must lie in [1, N]");
  double count = 0.0;
  for (int p = 1; p <= j; ++p) {
    count += std::max(0, w.l_max - std::max(w.l_min, j - p + 1) + 1);
  }
  return count / (static_cast<double>(w.N) * w.delta());
}

double coverage_probability_ramp(int j, const WindowModel& w) {
  w.validate();
  require(w.l_min == 1, "ramp form of the coverage probability requires l_min == 1");
  require(j >= 1 && j <= w.N, "state index j must lie in [1, N]");
  const double N = w.N;
  const double m = w.l_max;
  if (j <= w.l_max) return (j - j * (j - 1.0) / (2.0 * m)) / N;
  return (m + 1.0) / (2.0 * N);
}

double sparse_reward_updates(const WindowModel& w) { return reuse_last(w); }

double sparse_amplification(const WindowModel& w) {
  return sparse_reward_updates(w) * w.N;
}

double mean_reuse(const WindowModel& w) {
  w.validate();
  // E[min(L-1, N-p)] = E[L] - 1 - E[L(L-1)] / (2N) for p uniform on 1..N.
  double second = 0.0;
  for (int l = w.l_min; l <= w.l_max; ++l) second += static_cast<double>(l) * (l - 1);
  second /= w.delta();
  const double N = w.N;
  return (w.mean_length() - 1.0 - second / (2.0 * N)) / N;
}

double mean_reuse_untruncated(const WindowModel& w) {
  w.validate();
  return (w.mean_length() - 1.0) / w.N;
}

}  // namespace tsac::analysis
