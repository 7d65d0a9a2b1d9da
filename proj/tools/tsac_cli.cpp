// tsac: train, analyze, verify, plot.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tsac/analysis.hpp"
#include "tsac/config.hpp"
#include "tsac/evalstats.hpp"
#include "tsac/learner.hpp"
#include "tsac/plot.hpp"
#include "tsac/verify.hpp"

namespace fs = std::filesystem;
using namespace tsac;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDiverged = 3, kVerify = 4 };

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !(is >> std::ws).eof()) throw std::invalid_argument(std::string(what) + ": bad value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
  return out;
}

std::string default_out(const RunConfig& cfg, const std::string& config_path) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const char* root = std::getenv("TSAC_RUNS");
  const std::string stem = config_path.empty() ? "run" : fs::path(config_path).stem().string();
  return (fs::path(root && *root ? root : "runs") / (stem + "-seed" + std::to_string(cfg.seed))).string();
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, std::string out) {
  RunConfig cfg;
  try {
    if (!config.empty()) cfg = load_config(config);
    apply_overrides(cfg, sets);
    validate(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return kConfig;
  }
  if (out.empty()) out = default_out(cfg, config);
  std::cerr << "tsac " << learn::code_version() << ": " << cfg.env << " -> " << out << '\n';
  const auto res = learn::train(cfg, out);
  if (res.diverged) {
    std::cerr << "diverged: " << res.message << '\n';
    return kDiverged;
  }
  for (const auto& s : res.seeds) {
    const auto& last = s.rows.back();
    std::printf("seed %llu: %lld steps, %lld critic / %lld policy updates, final success %.3f, return %.3f\n",
                static_cast<unsigned long long>(s.seed), static_cast<long long>(s.env_steps),
                static_cast<long long>(s.critic_updates), static_cast<long long>(s.policy_updates),
                last.iqm_success, last.iqm_return);
  }
  return kOk;
}

struct AnalyzeArgs {
  std::string N = "10", gamma = "0.99", rho = "0", kappa = "0", lmin = "1", lmax = "1";
};

int cmd_analyze(const AnalyzeArgs& a) {
  using namespace analysis;
  const auto Ns = parse_list<int>(a.N, "--N");
  const auto gammas = parse_list<double>(a.gamma, "--gamma");
  const auto rhos = parse_list<double>(a.rho, "--rho");
  const auto kappas = parse_list<double>(a.kappa, "--kappa");
  const auto lmins = parse_list<int>(a.lmin, "--lmin");
  const auto lmaxs = parse_list<int>(a.lmax, "--lmax");
  auto line = [](const char* name, double v) { std::printf("  %-30s = %.6f\n", name, v); };
  for (int N : Ns)
    for (double g : gammas)
      for (double r : rhos)
        for (double k : kappas) {
          VarianceModel m;
          m.N = N;
          m.gamma = g;
          m.rho = r;
          m.kappa = k;
          m.validate();
          std::printf("# N=%d gamma=%g rho=%g kappa=%g\n", N, g, r, k);
          line("reward_sum_variance", reward_sum_variance(m));
          line("averaged_reward_variance", averaged_reward_variance(m));
          line("R_gamma", reward_ratio(m));
          line("bootstrap_variance", bootstrap_variance(m));
          line("averaged_bootstrap_variance", averaged_bootstrap_variance(m));
          line("R_B", bootstrap_ratio(m));
          line("total_variance_ratio", total_variance_ratio(m));
          const auto ks = kappa_star(N, g);
          if (ks) line("kappa_star", *ks);
          else std::printf("  %-30s = undefined\n", "kappa_star");
          const auto br = bootstrap_ratio_bounds(N, g);
          line("R_B_lower", br.lo);
          line("R_B_upper", br.hi);
          for (int lo : lmins)
            for (int hi : lmaxs) {
              if (hi < lo || hi > N) continue;
              WindowModel w{N, lo, hi};
              std::printf("# N=%d lmin=%d lmax=%d\n", N, lo, hi);
              line("reuse_last", reuse_last(w));
              line("reuse_plateau", reuse_plateau(w));
              line("mean_reuse", mean_reuse(w));
              line("sparse_reward_updates", sparse_reward_updates(w));
              line("sparse_amplification", sparse_amplification(w));
              line("coverage_first", coverage_probability(1, w));
              line("coverage_last", coverage_probability(N, w));
            }
        }
  return kOk;
}

int cmd_verify(std::int64_t trials, std::uint64_t seed) {
  bool ok = true;
  std::size_t settings = 0;
  for (const auto& r : verify::check_formulas(trials, seed)) {
    std::printf("%s %-28s settings=%-4zu %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.settings,
                r.detail.c_str());
    ok = ok && r.passed;
    settings += r.settings;
  }
  std::printf("%s: %zu closed-form/oracle comparisons at %lld trials\n", ok ? "all checks pass" : "FAILED",
              settings, static_cast<long long>(trials));
  return ok ? kOk : kVerify;
}

int cmd_plot(const std::vector<std::string>& inputs, std::vector<std::string> labels, const std::string& column,
             const std::string& out) {
  std::vector<plot::CurveSummary> curves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    fs::path p(inputs[i]);
    std::string label = i < labels.size() ? labels[i] : "";
    if (fs::is_directory(p)) {
      if (label.empty()) label = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
      p /= "metrics.csv";
    } else if (label.empty()) {
      label = p.parent_path().filename().string();
      if (label.empty()) label = p.stem().string();
    }
    const auto rows = evalstats::read_metrics_csv(p.string());
    curves.push_back(plot::summarize(label, evalstats::curve_from_rows(rows, column)));
  }
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << plot::render_svg(curves, column);
  std::printf("wrote %s (%zu curves)\n", out.c_str(), curves.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-critic SAC: training, analysis and verification"};
  app.require_subcommand(1);

  std::string config, out;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "train one or more seeds and write a run directory");
  train->add_option("--config", config, "flat key = value config file")->check(CLI::ExistingFile);
  train->add_option("--set", sets, "override, key=value (repeatable)")->take_all();
  train->add_option("--out", out, "run directory (default: $TSAC_RUNS or ./runs)");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "print the variance and reuse formulas on a grid");
  analyze->add_option("--N", aa.N, "horizon(s), comma separated");
  analyze->add_option("--gamma", aa.gamma, "discount(s)");
  analyze->add_option("--rho", aa.rho, "reward correlation(s)");
  analyze->add_option("--kappa", aa.kappa, "bootstrap-value correlation(s)");
  analyze->add_option("--lmin", aa.lmin, "shortest window(s)");
  analyze->add_option("--lmax", aa.lmax, "longest window(s)");

  std::int64_t trials = 100000;
  std::uint64_t vseed = 2024;
  auto* verify = app.add_subcommand("verify", "compare every closed form with its oracle");
  verify->add_option("--trials", trials, "Monte-Carlo draws per setting")->check(CLI::Range(1000, 100000000));
  verify->add_option("--seed", vseed, "oracle seed");

  std::vector<std::string> inputs, labels;
  std::string column = "iqm_success", svg = "curves.svg";
  auto* plotc = app.add_subcommand("plot", "IQM curves with bootstrap bands as SVG");
  plotc->add_option("inputs", inputs, "metrics.csv files or run directories")->required();
  plotc->add_option("--label", labels, "legend label per input (repeatable)")->take_all();
  plotc->add_option("--column", column, "iqm_success or iqm_return")
      ->check(CLI::IsMember({"iqm_success", "iqm_return"}));
  plotc->add_option("--out", svg, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(config, sets, out);
    if (*analyze) return cmd_analyze(aa);
    if (*verify) return cmd_verify(trials, vseed);
    if (*plotc) return cmd_plot(inputs, labels, column, svg);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) std::cerr << p << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const learn::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
