#pragma once

// Closed-form variance and reuse results for multi-horizon N-step critics.
//
// Three families live here:
//   * target-side variance of single vs. triangularly averaged N-step returns
//     under an equicorrelation model (reward part and bootstrap part),
//   * variance of gradient-level averaging across horizons,
//   * reuse / coverage / sparse-reward propagation of uniformly sampled
//     windows inside a fixed segment.
//
// Everything is a pure function of its arguments. Segment states are indexed
// 1..N throughout this header; the replay buffer converts at its boundary.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace tsac::analysis {

/// Equicorrelated reward / bootstrap-value model.
struct VarianceModel {
  int N = 1;            // horizon
  double gamma = 1.0;   // discount in (0, 1]
  double rho = 0.0;     // pairwise reward correlation in [0, 1)
  double kappa = 0.0;   // pairwise bootstrap-value correlation in [0, 1]
  double sigma2 = 1.0;  // reward variance
  double tau2 = 1.0;    // bootstrap-value variance

  /// Throws std::invalid_argument naming the first violated range.
  void validate() const;
};

/// Uniform (start, length) window sampling inside a segment of N states.
struct WindowModel {
  int N = 1;
  int l_min = 1;
  int l_max = 1;

  int delta() const { return l_max - l_min + 1; }
  double mean_length() const { return 0.5 * (l_min + l_max); }
  void validate() const;
};

struct GeometricSums {
  double S0;  // sum_{k<N} gamma^{2k}
  double T0;  // sum_{k<N} gamma^k
  double S1;  // sum_{i=1..N} gamma^{2i}
  double C;   // sum_{i=1..N} gamma^i
};

/// Closed forms; gamma == 1 uses the analytic limits (all four equal N).
GeometricSums geometric_sums(int N, double gamma);

struct TriangularWeights {
  std::vector<double> w;  // w_k = ((N-k)/N) gamma^k, k = 0..N-1
  double A;               // sum w_k^2
  double B;               // (sum w_k)^2 - A
};

TriangularWeights triangular_weights(int N, double gamma);

/// sum_{k<N} (N-k) gamma^k in closed form.
double triangular_weight_sum(int N, double gamma);

// Reward part.
double reward_sum_variance(const VarianceModel& m);       // Var[R_N]
double averaged_reward_variance(const VarianceModel& m);  // Var[mean_i R_i]
double reward_ratio(const VarianceModel& m);              // R_gamma(N)

// Bootstrap part.
double bootstrap_variance(const VarianceModel& m);           // Var[gamma^N Z_N]
double averaged_bootstrap_variance(const VarianceModel& m);  // Var[(1/N) sum gamma^i Z_i]
double bootstrap_ratio(const VarianceModel& m);              // R_B(N, gamma, kappa)

/// Threshold correlation below which averaging shrinks bootstrap variance.
/// Undefined (nullopt) for N == 1, where C^2 == S1.
std::optional<double> kappa_star(int N, double gamma);

struct Bracket {
  double lo;
  double hi;
};

/// [N^2 gamma^{2N} / C^2, N^2 gamma^{2N} / S1], valid for every kappa in [0, 1].
Bracket bootstrap_ratio_bounds(int N, double gamma);

/// Var[G_N] / Var[mean_i G_i] with independent reward and bootstrap parts.
double total_variance_ratio(const VarianceModel& m);

// Gradient-level averaging over n equicorrelated per-horizon gradients.
double effective_sample_size(int n, double rho_w);
double averaged_grad_variance(int n, double rho_w, double sigma_w2);

/// alpha^T Sigma alpha for the exchangeable covariance sigma_w2 [(1-rho) I + rho 11^T].
double weighted_grad_variance(std::span<const double> alpha, double rho_w, double sigma_w2);

struct UniformOptimalityReport {
  int n = 0;
  double rho_w = 0.0;
  double uniform_variance = 0.0;
  double best_random_variance = 0.0;  // smallest variance seen among random weights
  std::int64_t trials = 0;
  std::int64_t violations = 0;  // random weights that beat uniform beyond round-off
  bool passed() const {
    return violations == 0 && best_random_variance >= uniform_variance * (1.0 - 1e-12);
  }
};

/// Random search over unbiased weights (sum alpha = 1); uniform weights must never lose.
UniformOptimalityReport uniform_weights_optimal(int n, double rho_w, std::int64_t trials,
                                                std::mt19937_64& rng);

// Window reuse and coverage. j is a 1-based state index.
double expected_reuse(int j, const WindowModel& w);
double reuse_last(const WindowModel& w);
double reuse_plateau(const WindowModel& w);

/// General clipped-sum form, valid for any l_min.
double coverage_probability(int j, const WindowModel& w);

/// Ramp/plateau closed form; requires l_min == 1.
double coverage_probability_ramp(int j, const WindowModel& w);

/// Expected number of updates per window whose target contains a terminal-only reward.
double sparse_reward_updates(const WindowModel& w);

/// sparse_reward_updates relative to uniform 1-step TD (which hits it in 1/N of samples).
double sparse_amplification(const WindowModel& w);

/// (1/N) sum_j E[reuse_j], exact under right-boundary truncation.
double mean_reuse(const WindowModel& w);

/// (E[L] - 1) / N: the truncation-free approximation of mean_reuse.
double mean_reuse_untruncated(const WindowModel& w);

}  // namespace tsac::analysis
