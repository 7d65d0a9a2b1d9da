#include "tsac/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tsac::evalstats {

bool success_at_final(const EpisodeRecord& ep) {
  if (ep.horizon < 1 || static_cast<int>(ep.success.size()) < ep.horizon) {
    throw std::invalid_argument("success_at_final: truncated episode (" +
                                std::to_string(ep.success.size()) + " of " +
                                std::to_string(ep.horizon) + " steps)");
  }
  return ep.success.back();
}

double iqm(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("iqm: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t cut = v.size() / 4;
  double sum = 0.0;
  for (std::size_t i = cut; i < v.size() - cut; ++i) sum += v[i];
  return sum / static_cast<double>(v.size() - 2 * cut);
}

Interval bootstrap_ci(std::span<const double> values, int n_boot, double confidence,
                      std::mt19937_64& rng) {
  if (values.size() < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 values");
  if (n_boot < 100) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 100");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("bootstrap_ci: confidence must lie in (0, 1)");
  }
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> stats(static_cast<std::size_t>(n_boot));
  std::vector<double> resample(values.size());
  for (auto& s : stats) {
    for (auto& x : resample) x = values[pick(rng)];
    s = iqm(resample);
  }
  std::sort(stats.begin(), stats.end());
  // Type-7 quantile (linear interpolation between order statistics).
  auto quantile = [&](double q) {
    const double h = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, stats.size() - 1);
    return stats[lo] + (h - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  const double tail = 0.5 * (1.0 - confidence);
  return {quantile(tail), quantile(1.0 - tail)};
}

void RunCurve::validate() const {
  for (const auto& row : per_seed) {
    if (row.size() != steps.size()) throw std::invalid_argument("RunCurve: ragged seed rows");
    for (double x : row) {
      if (!std::isfinite(x)) throw std::invalid_argument("RunCurve: non-finite entry");
    }
  }
}

std::vector<double> RunCurve::column(std::size_t step_index) const {
  std::vector<double> out;
  out.reserve(per_seed.size());
  for (const auto& row : per_seed) out.push_back(row.at(step_index));
  return out;
}

std::vector<double> iqm_curve(const RunCurve& c) {
  c.validate();
  if (c.per_seed.empty()) throw std::invalid_argument("iqm_curve: no seeds");
  std::vector<double> out;
  out.reserve(c.steps.size());
  for (std::size_t k = 0; k < c.steps.size(); ++k) out.push_back(iqm(c.column(k)));
  return out;
}

std::vector<double> aggregate(std::span<const RunCurve> task_curves) {
  if (task_curves.empty()) throw std::invalid_argument("aggregate: no tasks");
  std::vector<double> acc(task_curves.front().steps.size(), 0.0);
  for (const auto& c : task_curves) {
    if (c.steps != task_curves.front().steps) {
      throw std::invalid_argument("aggregate: tasks use different step grids");
    }
    const auto curve = iqm_curve(c);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += curve[k];
  }
  for (auto& x : acc) x /= static_cast<double>(task_curves.size());
  return acc;
}

std::string format_metrics_row(const MetricsRow& r) {
  // %.17g round-trips doubles exactly, which keeps reruns byte-comparable.
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(r.step), static_cast<unsigned long long>(r.seed),
                r.iqm_return, r.iqm_success, r.ci_lo, r.ci_hi, r.critic_loss, r.policy_loss,
                r.alpha);
  return buf;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw std::runtime_error(path + ":1: unexpected header");

  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    const auto where = path + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != 9) {
      throw std::runtime_error(where + "expected 9 columns, found " + std::to_string(cells.size()));
    }
    MetricsRow r;
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      r.step = std::stoll(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument(cells[0]);
      r.seed = std::stoull(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument(cells[1]);
      r.iqm_return = num(cells[2]);
      r.iqm_success = num(cells[3]);
      r.ci_lo = num(cells[4]);
      r.ci_hi = num(cells[5]);
      r.critic_loss = num(cells[6]);
      r.policy_loss = num(cells[7]);
      r.alpha = num(cells[8]);
    } catch (const std::exception&) {
      throw std::runtime_error(where + "malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

RunCurve curve_from_rows(std::span<const MetricsRow> rows, const std::string& column) {
  double MetricsRow::*field = nullptr;
  if (column == "iqm_success") field = &MetricsRow::iqm_success;
  else if (column == "iqm_return") field = &MetricsRow::iqm_return;
  else if (column == "critic_loss") field = &MetricsRow::critic_loss;
  else if (column == "policy_loss") field = &MetricsRow::policy_loss;
  else if (column == "alpha") field = &MetricsRow::alpha;
  else throw std::invalid_argument("curve_from_rows: unknown column " + column);

  std::map<std::uint64_t, std::map<std::int64_t, double>> by_seed;
  for (const auto& r : rows) by_seed[r.seed][r.step] = r.*field;
  RunCurve c;
  if (by_seed.empty()) return c;
  for (const auto& [step, _] : by_seed.begin()->second) c.steps.push_back(step);
  for (const auto& [seed, series] : by_seed) {
    std::vector<double> row;
    for (auto s : c.steps) {
      auto it = series.find(s);
      if (it == series.end()) {
        throw std::invalid_argument("curve_from_rows: seed " + std::to_string(seed) +
                                    " is missing step " + std::to_string(s));
      }
      row.push_back(it->second);
    }
    if (series.size() != c.steps.size()) {
      throw std::invalid_argument("curve_from_rows: seeds disagree on the step grid");
    }
    c.per_seed.push_back(std::move(row));
  }
  return c;
}

}  // namespace tsac::evalstats
