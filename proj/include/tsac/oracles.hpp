#pragma once

// Brute-force and Monte-Carlo oracles for the closed forms in analysis.hpp.
//
// Nothing in this library calls the closed forms it checks: variances come
// from simulating equicorrelated draws through the shared-factor construction
// X_k = sqrt(rho) Z + sqrt(1 - rho) E_k, and window statistics come from
// enumerating (or drawing) every (start, length) pair.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tsac/analysis.hpp"

namespace tsac::oracles {

enum class Formula {
  RewardSumVariance,
  AveragedRewardVariance,
  RewardRatio,
  BootstrapVariance,
  AveragedBootstrapVariance,
  BootstrapRatio,
  AveragedGradVariance,
  EffectiveSampleSize,
  ExpectedReuse,
  ReuseLast,
  Coverage,
  SparseRewardUpdates,
  SparseAmplification,
  MeanReuse,
};

/// Throws std::invalid_argument for an unknown id.
Formula parse_formula(std::string_view id);
std::string_view formula_id(Formula f);
const std::vector<Formula>& all_formulas();

/// True for window-model formulas, whose outcome space is finite.
bool is_window_formula(Formula f);

struct OracleParams {
  analysis::VarianceModel variance;
  analysis::WindowModel window;
  int j = 1;  // 1-based state index for ExpectedReuse / Coverage
  int n = 1;  // number of horizons for the gradient formulas
  double rho_w = 0.0;
  double sigma_w2 = 1.0;
};

enum class WindowMode { Enumerate, Sample };

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};

inline constexpr std::int64_t kMinTrials = 1000;

/// Throws std::invalid_argument when trials < kMinTrials (Monte-Carlo paths only).
Estimate mc_oracle(Formula f, const OracleParams& p, std::int64_t trials, std::mt19937_64& rng,
                   WindowMode mode = WindowMode::Enumerate);

/// Exact estimates must match to round-off; stochastic ones within z standard errors.
bool agrees(const Estimate& e, double closed_form, double z = 4.0);

}  // namespace tsac::oracles
