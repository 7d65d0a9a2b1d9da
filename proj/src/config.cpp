#include "tsac/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "tsac/envs.hpp"

namespace tsac {

namespace {

using Field = std::variant<std::string RunConfig::*, std::uint64_t RunConfig::*,
                           std::int64_t RunConfig::*, int RunConfig::*, double RunConfig::*,
                           bool RunConfig::*, TargetMode RunConfig::*, TargetStyle RunConfig::*>;

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"env", &RunConfig::env},
      {"reward_mode", &RunConfig::reward_mode},
      {"seed", &RunConfig::seed},
      {"num_seeds", &RunConfig::num_seeds},
      {"total_steps", &RunConfig::total_steps},
      {"segment_length", &RunConfig::segment_length},
      {"l_min", &RunConfig::l_min},
      {"l_max", &RunConfig::l_max},
      {"windows_per_step", &RunConfig::windows_per_step},
      {"batch_size", &RunConfig::batch_size},
      {"buffer_segments", &RunConfig::buffer_segments},
      {"gamma", &RunConfig::gamma},
      {"target_mode", &RunConfig::target_mode},
      {"tau", &RunConfig::tau},
      {"freeze_k", &RunConfig::freeze_k},
      {"target_style", &RunConfig::target_style},
      {"twin_critic", &RunConfig::twin_critic},
      {"n_action_samples", &RunConfig::n_action_samples},
      {"utd", &RunConfig::utd},
      {"n_critic", &RunConfig::n_critic},
      {"n_policy", &RunConfig::n_policy},
      {"learning_starts", &RunConfig::learning_starts},
      {"temperature_warmup", &RunConfig::temperature_warmup},
      {"target_entropy", &RunConfig::target_entropy},
      {"init_alpha", &RunConfig::init_alpha},
      {"critic_backbone", &RunConfig::critic_backbone},
      {"critic_layers", &RunConfig::critic_layers},
      {"critic_heads", &RunConfig::critic_heads},
      {"critic_head_dim", &RunConfig::critic_head_dim},
      {"critic_ffn", &RunConfig::critic_ffn},
      {"critic_norm", &RunConfig::critic_norm},
      {"policy_hidden", &RunConfig::policy_hidden},
      {"log_std_init", &RunConfig::log_std_init},
      {"log_std_min", &RunConfig::log_std_min},
      {"log_std_max", &RunConfig::log_std_max},
      {"lr_policy", &RunConfig::lr_policy},
      {"lr_critic", &RunConfig::lr_critic},
      {"lr_alpha", &RunConfig::lr_alpha},
      {"weight_decay", &RunConfig::weight_decay},
      {"divergence_limit", &RunConfig::divergence_limit},
      {"eval_interval", &RunConfig::eval_interval},
      {"eval_episodes", &RunConfig::eval_episodes},
      {"n_boot", &RunConfig::n_boot},
      {"checkpoint_interval", &RunConfig::checkpoint_interval},
      {"out_dir", &RunConfig::out_dir},
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError({key + ": expected an integer, got '" + v + "'"});
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError({key + ": expected a real number, got '" + v + "'"});
}

std::string fmt_real(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

void RunConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string v = trim(value_in);
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError({"unknown key '" + key + "'"});
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        T& slot = this->*member;
        if constexpr (std::is_same_v<T, std::string>) {
          slot = v;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") slot = true;
          else if (v == "false" || v == "0") slot = false;
          else throw ConfigError({key + ": expected true or false, got '" + v + "'"});
        } else if constexpr (std::is_same_v<T, double>) {
          slot = parse_real(key, v);
        } else if constexpr (std::is_same_v<T, TargetMode>) {
          if (v == "soft") slot = TargetMode::SoftPolyak;
          else if (v == "hard") slot = TargetMode::HardFreeze;
          else throw ConfigError({key + ": expected soft or hard, got '" + v + "'"});
        } else if constexpr (std::is_same_v<T, TargetStyle>) {
          if (v == "gradient") slot = TargetStyle::Gradient;
          else if (v == "averaged") slot = TargetStyle::Averaged;
          else throw ConfigError({key + ": expected gradient or averaged, got '" + v + "'"});
        } else {
          slot = parse_integer<T>(key, v);
        }
      },
      it->second);
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) {
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(this->*member)>;
          const T& v = this->*member;
          if constexpr (std::is_same_v<T, std::string>) out[key] = v;
          else if constexpr (std::is_same_v<T, bool>) out[key] = v ? "true" : "false";
          else if constexpr (std::is_same_v<T, double>) out[key] = fmt_real(v);
          else if constexpr (std::is_same_v<T, TargetMode>)
            out[key] = v == TargetMode::SoftPolyak ? "soft" : "hard";
          else if constexpr (std::is_same_v<T, TargetStyle>)
            out[key] = v == TargetStyle::Gradient ? "gradient" : "averaged";
          else out[key] = std::to_string(v);
        },
        field);
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  need(envs::is_known_env(env), "env: unknown environment '" + env + "'");
  need(reward_mode == "dense" || reward_mode == "sparse", "reward_mode: must be dense or sparse");
  need(num_seeds >= 1, "num_seeds: must be >= 1");
  need(total_steps >= 0, "total_steps: must be >= 0");
  need(segment_length >= 1, "segment_length: must be >= 1");
  need(l_min >= 1 && l_min <= l_max && l_max <= segment_length,
       "l_min/l_max: need 1 <= l_min <= l_max <= segment_length");
  need(windows_per_step >= 1, "windows_per_step: must be >= 1");
  need(batch_size >= 1, "batch_size: must be >= 1");
  need(buffer_segments >= 1, "buffer_segments: must be >= 1");
  need(gamma > 0.0 && gamma <= 1.0, "gamma: must lie in (0, 1]");
  need(tau >= 0.0 && tau <= 1.0, "tau: must lie in [0, 1]");
  need(freeze_k >= 1, "freeze_k: must be >= 1");
  need(n_action_samples >= 1, "n_action_samples: must be >= 1");
  need(std::isfinite(utd) && utd >= 0.0, "utd: must be a finite value >= 0");
  need(n_critic >= 1, "n_critic: must be >= 1");
  need(n_policy >= 0, "n_policy: must be >= 0");
  need(learning_starts >= 0, "learning_starts: must be >= 0");
  need(temperature_warmup >= 0, "temperature_warmup: must be >= 0");
  if (target_entropy != "auto") {
    try {
      std::size_t used = 0;
      const double h = std::stod(target_entropy, &used);
      need(used == target_entropy.size() && std::isfinite(h),
           "target_entropy: must be 'auto' or a finite number");
    } catch (const std::exception&) {
      bad.push_back("target_entropy: must be 'auto' or a finite number");
    }
  }
  need(init_alpha > 0.0, "init_alpha: must be > 0");
  need(critic_backbone == "transformer" || critic_backbone == "gru" || critic_backbone == "lstm" ||
           critic_backbone == "mlp_concat",
       "critic_backbone: must be transformer, gru, lstm or mlp_concat");
  need(critic_backbone != "mlp_concat" || l_min == l_max,
       "critic_backbone: mlp_concat needs a fixed horizon (l_min == l_max)");
  need(critic_layers >= 1, "critic_layers: must be >= 1");
  need(critic_heads >= 1, "critic_heads: must be >= 1");
  need(critic_head_dim >= 1, "critic_head_dim: must be >= 1");
  need(critic_ffn >= 1, "critic_ffn: must be >= 1");
  need(critic_norm == "post" || critic_norm == "pre", "critic_norm: must be post or pre");
  need(policy_hidden >= 1, "policy_hidden: must be >= 1");
  need(log_std_min < log_std_max, "log_std_min/log_std_max: need log_std_min < log_std_max");
  need(log_std_init >= log_std_min && log_std_init <= log_std_max,
       "log_std_init: must lie in [log_std_min, log_std_max]");
  need(lr_policy > 0.0, "lr_policy: must be > 0");
  need(lr_critic > 0.0, "lr_critic: must be > 0");
  need(lr_alpha > 0.0, "lr_alpha: must be > 0");
  need(weight_decay >= 0.0, "weight_decay: must be >= 0");
  need(divergence_limit > 0.0, "divergence_limit: must be > 0");
  need(eval_interval >= 1, "eval_interval: must be >= 1");
  need(eval_episodes >= 1, "eval_episodes: must be >= 1");
  need(n_boot >= 100, "n_boot: must be >= 100");
  need(checkpoint_interval >= 0, "checkpoint_interval: must be >= 0");
  return bad;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back(where + p);
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot read config file"});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      problems.push_back("--set " + o + ": expected key=value");
      continue;
    }
    try {
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back("--set " + p);
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
}

void validate(const RunConfig& cfg) {
  auto bad = cfg.violations();
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

}  // namespace tsac
