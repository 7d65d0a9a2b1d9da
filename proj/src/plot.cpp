#include "tsac/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsac::plot {

namespace {

constexpr double kW = 720, kH = 440;
constexpr double kLeft = 70, kRight = 180, kTop = 30, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace

CurveSummary summarize(const std::string& label, const evalstats::RunCurve& curve, int n_boot,
                       double confidence, std::uint64_t seed) {
  curve.validate();
  CurveSummary s;
  s.label = label;
  s.steps = curve.steps;
  s.center = evalstats::iqm_curve(curve);
  s.seeds = curve.per_seed.size();
  if (s.seeds >= 2) {
    std::mt19937_64 rng(seed);
    Band b;
    for (std::size_t i = 0; i < curve.steps.size(); ++i) {
      const auto col = curve.column(i);
      const auto ci = evalstats::bootstrap_ci(col, n_boot, confidence, rng);
      b.lo.push_back(ci.lo);
      b.hi.push_back(ci.hi);
    }
    s.band = std::move(b);
  }
  return s;
}

std::string render_svg(const std::vector<CurveSummary>& curves, const std::string& y_label) {
  if (curves.empty()) throw std::invalid_argument("plot: no curves");
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& c : curves) {
    for (auto s : c.steps) {
      x0 = std::min(x0, static_cast<double>(s));
      x1 = std::max(x1, static_cast<double>(s));
    }
    auto span_y = [&](const std::vector<double>& v) {
      for (double y : v) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    };
    span_y(c.center);
    if (c.band) {
      span_y(c.band->lo);
      span_y(c.band->hi);
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto X = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto Y = [&](double y) { return kTop + (1 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    o << "<text x=\"" << num(X(xv)) << "\" y=\"" << num(kTop + ph + 18)
      << "\" text-anchor=\"middle\">" << static_cast<long long>(std::llround(xv)) << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(Y(yv) + 4) << "\" text-anchor=\"end\">"
      << num(yv) << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kH - 10)
    << "\" text-anchor=\"middle\">environment steps</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* col = kColors[k % std::size(kColors)];
    if (c.band) {
      o << "<polygon class=\"band\" fill=\"" << col << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < c.steps.size(); ++i) o << num(X(c.steps[i])) << ',' << num(Y(c.band->hi[i])) << ' ';
      for (std::size_t i = c.steps.size(); i-- > 0;) o << num(X(c.steps[i])) << ',' << num(Y(c.band->lo[i])) << ' ';
      o << "\"/>\n";
    }
    o << "<polyline class=\"iqm\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.steps.size(); ++i) o << num(X(c.steps[i])) << ',' << num(Y(c.center[i])) << ' ';
    o << "\"/>\n";
    const double ly = kTop + 10 + 20 * k;
    o << "<line x1=\"" << num(kW - kRight + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kW - kRight + 36)
      << "\" y2=\"" << num(ly) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    o << "<text class=\"legend\" x=\"" << num(kW - kRight + 42) << "\" y=\"" << num(ly + 4) << "\">"
      << escape(c.label) << " (" << c.seeds << (c.seeds == 1 ? " seed" : " seeds") << ")</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace tsac::plot
