#pragma once

// Reporting statistics: success at the final step, interquartile mean,
// percentile-bootstrap confidence intervals, and metrics CSV I/O.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tsac::evalstats {

struct EpisodeRecord {
  std::vector<bool> success;  // one flag per executed step
  int horizon = 0;
};

/// Success flag of the last step; throws if fewer than `horizon` steps were recorded.
bool success_at_final(const EpisodeRecord& ep);

/// Drops floor(n/4) values from each end of the sorted input and averages the rest.
double iqm(std::span<const double> values);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the IQM over resampled values.
Interval bootstrap_ci(std::span<const double> values, int n_boot, double confidence,
                      std::mt19937_64& rng);

/// Seeds x steps; every seed shares the step grid.
struct RunCurve {
  std::vector<std::int64_t> steps;
  std::vector<std::vector<double>> per_seed;

  void validate() const;
  std::vector<double> column(std::size_t step_index) const;
};

/// IQM across seeds at every step.
std::vector<double> iqm_curve(const RunCurve& c);

/// Per-task IQM curves averaged across tasks. Tasks must share the step grid.
std::vector<double> aggregate(std::span<const RunCurve> task_curves);

struct MetricsRow {
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  double iqm_return = 0.0;
  double iqm_success = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double alpha = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,seed,iqm_return,iqm_success,ci_lo,ci_hi,critic_loss,policy_loss,alpha";

std::string format_metrics_row(const MetricsRow& r);

/// Parses a metrics CSV; errors carry the offending line number.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// Groups rows by seed into a curve of the chosen column ("iqm_success" or "iqm_return").
RunCurve curve_from_rows(std::span<const MetricsRow> rows, const std::string& column);

}  // namespace tsac::evalstats
