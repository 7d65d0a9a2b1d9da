#include "tsac/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "tsac/analysis.hpp"

namespace tsac::verify {

using oracles::Formula;

namespace {

constexpr int kHorizons[] = {1, 2, 3, 4, 5, 6, 7, 8, 100};
constexpr double kGammas[] = {0.5, 0.9, 0.99, 1.0};
constexpr double kCorr[] = {0.0, 0.3, 0.7, 0.999};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace

double closed_form(Formula f, const oracles::OracleParams& p) {
  using namespace analysis;
  switch (f) {
    case Formula::RewardSumVariance: return reward_sum_variance(p.variance);
    case Formula::AveragedRewardVariance: return averaged_reward_variance(p.variance);
    case Formula::RewardRatio: return reward_ratio(p.variance);
    case Formula::BootstrapVariance: return bootstrap_variance(p.variance);
    case Formula::AveragedBootstrapVariance: return averaged_bootstrap_variance(p.variance);
    case Formula::BootstrapRatio: return bootstrap_ratio(p.variance);
    case Formula::AveragedGradVariance: return averaged_grad_variance(p.n, p.rho_w, p.sigma_w2);
    case Formula::EffectiveSampleSize: return effective_sample_size(p.n, p.rho_w);
    case Formula::ExpectedReuse: return expected_reuse(p.j, p.window);
    case Formula::ReuseLast: return reuse_last(p.window);
    case Formula::Coverage: return coverage_probability(p.j, p.window);
    case Formula::SparseRewardUpdates: return sparse_reward_updates(p.window);
    case Formula::SparseAmplification: return sparse_amplification(p.window);
    case Formula::MeanReuse: return mean_reuse(p.window);
  }
  return 0.0;
}

std::vector<GridPoint> formula_grid() {
  std::vector<GridPoint> out;
  int idx = 0;
  for (int N : kHorizons) {
    for (double g : kGammas) {
      // Two (rho, kappa) pairs per (N, gamma); every value appears in both roles.
      for (int shift : {0, 1}) {
        oracles::OracleParams p;
        p.variance.N = N;
        p.variance.gamma = g;
        p.variance.rho = kCorr[(idx + shift) % 4];
        p.variance.kappa = kCorr[(idx + shift + 2) % 4];
        p.variance.sigma2 = 1.0;
        p.variance.tau2 = 1.5;
        for (auto f : {Formula::RewardSumVariance, Formula::AveragedRewardVariance, Formula::RewardRatio,
                       Formula::BootstrapVariance, Formula::AveragedBootstrapVariance,
                       Formula::BootstrapRatio}) {
          out.push_back({f, p});
        }
      }
      ++idx;
    }
  }
  for (int n : kHorizons) {
    for (double r : kCorr) {
      oracles::OracleParams p;
      p.n = n;
      p.rho_w = r;
      p.sigma_w2 = 2.0;
      out.push_back({Formula::AveragedGradVariance, p});
      out.push_back({Formula::EffectiveSampleSize, p});
    }
  }
  for (int N : kHorizons) {
    for (int lmin = 1; lmin <= std::min(N, 4); ++lmin) {
      for (int lmax : {lmin, std::min(N, lmin + 2), std::min(N, 8)}) {
        if (lmax < lmin) continue;
        oracles::OracleParams p;
        p.window = {N, lmin, lmax};
        for (auto f : {Formula::ReuseLast, Formula::SparseRewardUpdates, Formula::SparseAmplification,
                       Formula::MeanReuse}) {
          out.push_back({f, p});
        }
        for (int j : {1, (N + 1) / 2, N}) {
          p.j = j;
          out.push_back({Formula::ExpectedReuse, p});
          out.push_back({Formula::Coverage, p});
        }
      }
    }
  }
  return out;
}

std::vector<CheckResult> check_formulas(std::int64_t trials, std::uint64_t seed) {
  std::map<Formula, CheckResult> by;
  std::mt19937_64 rng(seed);
  for (const auto& gp : formula_grid()) {
    auto& r = by[gp.formula];
    if (r.name.empty()) {
      r.name = std::string(oracles::formula_id(gp.formula));
      r.passed = true;
    }
    const double closed = closed_form(gp.formula, gp.params);
    const auto est = oracles::mc_oracle(gp.formula, gp.params, trials, rng);
    const bool ok = oracles::agrees(est, closed);
    double score;
    if (est.exact) {
      score = std::abs(est.value - closed);
    } else if (est.std_error > 0) {
      score = std::abs(est.value - closed) / est.std_error;
    } else {
      score = std::abs(est.value - closed);
    }
    ++r.settings;
    if (score >= r.worst) {
      r.worst = score;
      r.detail = est.exact ? fmt("exact; worst |diff| %.3g", score)
                           : fmt("Monte-Carlo; worst |z| %.3g", score);
    }
    if (!ok) {
      r.passed = false;
      r.detail = fmt("closed %.10g vs oracle %.10g (se %.3g)", closed, est.value, est.std_error);
    }
  }
  std::vector<CheckResult> out;
  for (auto f : oracles::all_formulas()) {
    if (by.count(f)) out.push_back(by[f]);
  }
  return out;
}

std::vector<CheckResult> check_bounds() {
  using namespace analysis;
  std::vector<CheckResult> out;

  {
    CheckResult r{"R_gamma in [1, 4) on the grid", true, 0, 0.0, ""};
    double lo = 1e300, hi = -1e300;
    for (int N : kHorizons)
      for (double g : kGammas)
        for (double rho : kCorr) {
          VarianceModel m;
          m.N = N;
          m.gamma = g;
          m.rho = rho;
          const double v = reward_ratio(m);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          ++r.settings;
          if (!(v >= 1.0 - 1e-12 && v < 4.0)) r.passed = false;
        }
    r.detail = fmt("min %.6f, max %.6f", lo, hi);
    out.push_back(r);
  }
  {
    VarianceModel m;
    m.N = 10000;
    m.gamma = 1.0;
    m.rho = 0.5;
    const double v = reward_ratio(m);
    out.push_back({"R_1(10^4, rho=0.5) in [3.9, 4)", v >= 3.9 && v < 4.0, 1, v, fmt("%.6f", v)});
  }
  {
    // Every rho on the grid must already be within 1% at N = 200.
    double worst = 0.0;
    for (double rho : kCorr) {
      VarianceModel m;
      m.N = 200;
      m.gamma = 0.9;
      m.rho = rho;
      worst = std::max(worst, std::abs(reward_ratio(m) - 1.0));
    }
    // Smallest N from which every larger N (up to 5000) stays within 1%.
    int last_out = 0;
    for (int N = 1; N <= 5000; ++N) {
      for (double rho : kCorr) {
        VarianceModel m;
        m.N = N;
        m.gamma = 0.9;
        m.rho = rho;
        if (std::abs(reward_ratio(m) - 1.0) > 0.01) {
          last_out = N;
          break;
        }
      }
    }
    const int first = last_out + 1;
    out.push_back({"R_0.9(200) within 1% of 1", worst <= 0.01, 4, worst,
                   fmt("max |R - 1| = %.4f at N=200; within 1%% for every rho only from N=%.0f", worst,
                       static_cast<double>(first))});
  }
  {
    CheckResult r{"R_B non-increasing in kappa", true, 0, 0.0, ""};
    for (int N : kHorizons)
      for (double g : kGammas) {
        double prev = 1e300;
        for (int i = 0; i <= 100; ++i) {
          VarianceModel m;
          m.N = N;
          m.gamma = g;
          m.kappa = i / 100.0;
          const double v = bootstrap_ratio(m);
          if (v > prev * (1 + 1e-12)) r.passed = false;
          prev = v;
          ++r.settings;
        }
      }
    r.detail = r.passed ? "101-point kappa sweep per (N, gamma)" : "increase found";
    out.push_back(r);
  }
  {
    CheckResult r{"R_B >= 1 iff kappa <= kappa*", true, 0, 0.0, ""};
    for (int N : kHorizons)
      for (double g : kGammas) {
        const auto ks = kappa_star(N, g);
        for (int i = 0; i <= 100; ++i) {
          VarianceModel m;
          m.N = N;
          m.gamma = g;
          m.kappa = i / 100.0;
          const double v = bootstrap_ratio(m);
          ++r.settings;
          if (!ks) continue;  // N = 1: ratio identically 1
          // Points within round-off of the threshold are not decidable.
          if (std::abs(m.kappa - *ks) < 1e-9) continue;
          if ((v >= 1.0) != (m.kappa <= *ks)) {
            r.passed = false;
            r.detail = fmt("N=%.0f gamma=%.3g kappa=%.2f", N, g, m.kappa);
          }
        }
      }
    if (r.passed) r.detail = "kappa sweep of 101 points per (N, gamma)";
    out.push_back(r);
  }
  return out;
}

}  // namespace tsac::verify
