#include <doctest.h>

#include <random>
#include <stdexcept>
#include <string>

#include "tsac/plot.hpp"

using namespace tsac;

namespace {

evalstats::RunCurve curve(int seeds, double shift) {
  evalstats::RunCurve c;
  c.steps = {0, 100, 200};
  for (int s = 0; s < seeds; ++s) c.per_seed.push_back({shift + 0.1 * s, shift + 0.2 + 0.1 * s, shift + 0.5});
  return c;
}

std::size_t count(const std::string& s, const std::string& pat) {
  std::size_t n = 0;
  for (auto p = s.find(pat); p != std::string::npos; p = s.find(pat, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("single seed gives a curve without a band") {
  auto s = plot::summarize("solo", curve(1, 0.0));
  CHECK_FALSE(s.band.has_value());
  const auto svg = plot::render_svg({s}, "iqm_success");
  CHECK(count(svg, "class=\"iqm\"") == 1);
  CHECK(count(svg, "class=\"band\"") == 0);
}

TEST_CASE("band equals the per-step bootstrap interval") {
  const auto c = curve(4, 0.0);
  auto s = plot::summarize("four", c, 500, 0.95, 7);
  REQUIRE(s.band.has_value());
  std::mt19937_64 rng(7);
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    const auto col = c.column(i);
    const auto ci = evalstats::bootstrap_ci(col, 500, 0.95, rng);
    CHECK(s.band->lo[i] == ci.lo);
    CHECK(s.band->hi[i] == ci.hi);
    CHECK(s.center[i] == evalstats::iqm(col));
  }
}

TEST_CASE("two runs share one figure with both labels") {
  auto a = plot::summarize("run-a", curve(4, 0.0));
  auto b = plot::summarize("run<b>", curve(2, 0.3));
  const auto svg = plot::render_svg({a, b}, "iqm_return");
  CHECK(count(svg, "class=\"legend\"") == 2);
  CHECK(svg.find("run-a") != std::string::npos);
  CHECK(svg.find("run&lt;b&gt;") != std::string::npos);
  CHECK(svg == plot::render_svg({a, b}, "iqm_return"));
  CHECK_THROWS_AS(plot::render_svg({}, "x"), std::invalid_argument);
}
