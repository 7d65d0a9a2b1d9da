#pragma once

// IQM learning curves with bootstrap bands, rendered as standalone SVG.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsac/evalstats.hpp"

namespace tsac::plot {

struct Band {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct CurveSummary {
  std::string label;
  std::vector<std::int64_t> steps;
  std::vector<double> center;  // IQM across seeds
  std::optional<Band> band;    // percentile bootstrap; needs >= 2 seeds
  std::size_t seeds = 0;
};

/// Same seed -> same band, so plots are reproducible.
CurveSummary summarize(const std::string& label, const evalstats::RunCurve& curve, int n_boot = 1000,
                       double confidence = 0.95, std::uint64_t seed = 0);

std::string render_svg(const std::vector<CurveSummary>& curves, const std::string& y_label);

}  // namespace tsac::plot
