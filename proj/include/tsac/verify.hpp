#pragma once

// Closed-form vs oracle sweep and the analytic bound checks.

#include <cstdint>
#include <string>
#include <vector>

#include "tsac/oracles.hpp"

namespace tsac::verify {

/// Closed-form value of `f` at `p`.
double closed_form(oracles::Formula f, const oracles::OracleParams& p);

struct GridPoint {
  oracles::Formula formula;
  oracles::OracleParams params;
};

/// N in {1..8, 100}, gamma in {0.5, 0.9, 0.99, 1}, rho / kappa in {0, 0.3, 0.7, 1-}.
std::vector<GridPoint> formula_grid();

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t settings = 0;
  double worst = 0.0;  // abs error (exact) or |z| (Monte-Carlo)
  std::string detail;
};

/// One result per formula; Monte-Carlo oracles use `trials` draws.
std::vector<CheckResult> check_formulas(std::int64_t trials, std::uint64_t seed);

/// Bounds on R_gamma and R_B over the same grid.
std::vector<CheckResult> check_bounds();

}  // namespace tsac::verify
