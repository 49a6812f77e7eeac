#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oranslice/errors.hpp"
#include "oranslice/policy.hpp"
#include "oranslice/slicing_env.hpp"
#include "oranslice/transfer.hpp"

namespace oranslice {

// Everything one run needs. Loaded from a sectioned text file; every field
// has the documented default.
struct RunConfig {
  EnvConfig env;
  PpoHyperparams ppo;
  ExplorationSchedule explore;
  TransferConfig transfer;
  std::vector<std::string> expert_keys;
  int64_t total_steps = 10000;
  uint64_t seed = 1;
  std::string pattern = "default";
  std::vector<int> hidden = {32, 32};
  int64_t oracle_windows = 200;
  uint64_t oracle_seed = 9001;  // convergence anchor; independent of run seed

  NetArchitecture architecture(size_t num_actions) const {
    NetArchitecture arch;
    arch.input_dim = env.num_slices();
    arch.hidden = hidden;
    arch.num_actions = static_cast<int>(num_actions);
    return arch;
  }

  void validate() const {
    env.validate();
    ppo.validate();
    explore.validate();
    transfer.validate();
    if (total_steps < 1) throw ConfigError("run: total_steps must be >= 1");
    if (transfer.duration_steps > total_steps)
      throw ConfigError("run: transfer duration T must not exceed total_steps");
  }
};

// The sweep grid: cartesian product filtered per mode (none ignores theta
// and gamma, reuse/distill ignore gamma).
struct SweepSpec {
  std::vector<TransferMode> modes{TransferMode::none, TransferMode::reuse, TransferMode::distill,
                                  TransferMode::hybrid};
  std::vector<uint64_t> seeds{1, 2};
  std::vector<double> thetas{0.9, 0.7, 0.5, 0.3};
  std::vector<double> gammas{0.99, 0.9, 0.7, 0.5, 0.3};
  std::vector<double> explore_decays;  // empty: keep the [explore] value
  int top_k = 16;
};

namespace detail {

struct IniFile {
  // section -> ordered key/value pairs
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  std::filesystem::path dir;

  bool has(const std::string& section) const { return sections.count(section) > 0; }

  const std::string* find(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    if (it == sections.end()) return nullptr;
    for (const auto& [k, v] : it->second)
      if (k == key) return &v;
    return nullptr;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    try {
      return std::stod(*v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad number for [" + section + "] " + key + " = " + *v);
    }
  }

  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    try {
      return std::stoll(*v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad integer for [" + section + "] " + key + " = " + *v);
    }
  }

  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  std::vector<double> fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    std::vector<double> out;
    std::istringstream ss(*v);
    std::string token;
    while (ss >> token) {
      if (!token.empty() && token.back() == ',') token.pop_back();
      if (token.empty()) continue;
      out.push_back(std::stod(token));
    }
    return out;
  }
};

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline IniFile parse_ini(std::istream& in, const std::filesystem::path& dir) {
  IniFile ini;
  ini.dir = dir;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section header at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      ini.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    if (section.empty())
      throw ConfigError("config: key outside any section at line " + std::to_string(line_no));
    ini.sections[section].emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return ini;
}

inline void check_known_keys(const IniFile& ini, const std::string& section,
                             const std::set<std::string>& known) {
  auto it = ini.sections.find(section);
  if (it == ini.sections.end()) return;
  for (const auto& [k, v] : it->second)
    if (!known.count(k))
      throw ConfigError("config: unknown key '" + k + "' in section [" + section + "]");
}

inline TrafficModel parse_traffic(const IniFile& ini, const std::string& section) {
  UserCountModel users;
  users.mean = ini.get_double(section, "user_mean", 1.0);
  users.max = static_cast<int>(ini.get_int(section, "user_max", 1));
  const std::string kind = ini.get_string(section, "traffic", "");
  if (kind == "video") {
    return TrafficModel::video(ini.get_double(section, "interarrival_mean_ms", 6.0),
                               ini.get_double(section, "interarrival_max_ms", 12.5),
                               ini.get_double(section, "size_mean_b", 100.0),
                               ini.get_double(section, "size_max_b", 250.0), users,
                               ini.get_double(section, "pareto_shape", 1.2));
  }
  if (kind == "vonr") {
    return TrafficModel::vonr(ini.get_double(section, "interarrival_min_ms", 0.0),
                              ini.get_double(section, "interarrival_max_ms", 160.0),
                              ini.get_double(section, "size_b", 40.0), users);
  }
  if (kind == "vr_synthetic") {
    return TrafficModel::vr_synthetic(ini.get_double(section, "frame_period_ms", 13.89),
                                      ini.get_double(section, "frame_mean_b", 4000.0),
                                      ini.get_double(section, "frame_sigma_b", 1000.0),
                                      ini.get_double(section, "frame_min_b", 500.0),
                                      ini.get_double(section, "frame_max_b", 8000.0), users);
  }
  if (kind == "vr_trace") {
    const std::string rel = ini.get_string(section, "trace_path", "");
    if (rel.empty()) throw ConfigError("config: [" + section + "] vr_trace needs trace_path");
    std::filesystem::path path(rel);
    if (path.is_relative()) path = ini.dir / path;
    return TrafficModel::vr_trace(std::make_shared<Trace>(load_trace(path.string())), users);
  }
  throw ConfigError("config: [" + section + "] traffic must be one of "
                    "video|vonr|vr_synthetic|vr_trace (got '" + kind + "')");
}

}  // namespace detail

inline RunConfig load_run_config(std::istream& in, const std::filesystem::path& dir = ".") {
  const detail::IniFile ini = detail::parse_ini(in, dir);
  RunConfig cfg;

  for (const auto& [section, kv] : ini.sections) {
    static const std::set<std::string> known = {"env", "ppo", "explore", "transfer", "run", "sweep"};
    if (!known.count(section) && section.rfind("slices.", 0) != 0)
      throw ConfigError("config: unknown section [" + section + "]");
  }

  detail::check_known_keys(ini, "env",
                           {"total_capacity", "window_len_slots", "granularity", "min_share",
                            "departure_age_factor", "departure_count"});
  cfg.env.total_capacity = ini.get_double("env", "total_capacity", cfg.env.total_capacity);
  cfg.env.window_len_slots =
      static_cast<int>(ini.get_int("env", "window_len_slots", cfg.env.window_len_slots));
  cfg.env.action_granularity = ini.get_double("env", "granularity", cfg.env.action_granularity);
  cfg.env.min_share = ini.get_double("env", "min_share", cfg.env.min_share);
  cfg.env.departure_age_factor =
      ini.get_double("env", "departure_age_factor", cfg.env.departure_age_factor);
  cfg.env.departure_count =
      static_cast<int>(ini.get_int("env", "departure_count", cfg.env.departure_count));

  const std::set<std::string> slice_keys = {
      "name",          "weight",           "c1",
      "c2",            "traffic",          "user_mean",
      "user_max",      "pareto_shape",     "interarrival_mean_ms",
      "interarrival_max_ms", "interarrival_min_ms", "size_mean_b",
      "size_max_b",    "size_b",           "frame_period_ms",
      "frame_mean_b",  "frame_sigma_b",    "frame_min_b",
      "frame_max_b",   "trace_path"};
  for (int s = 0;; ++s) {
    const std::string section = "slices." + std::to_string(s);
    if (!ini.has(section)) break;
    detail::check_known_keys(ini, section, slice_keys);
    SliceSpec spec;
    spec.slice_id = s;
    spec.name = ini.get_string(section, "name", "slice" + std::to_string(s));
    spec.weight = ini.get_double(section, "weight", 0.0);
    spec.c1 = ini.get_double(section, "c1", 1.0);
    spec.c2 = ini.get_double(section, "c2", 1.0);
    spec.traffic = detail::parse_traffic(ini, section);
    cfg.env.slices.push_back(std::move(spec));
  }

  detail::check_known_keys(ini, "ppo",
                           {"learning_rate", "batch_size", "clip_ratio", "discount",
                            "entropy_coef", "value_coef", "epochs_per_update"});
  cfg.ppo.learning_rate = ini.get_double("ppo", "learning_rate", cfg.ppo.learning_rate);
  cfg.ppo.batch_size = static_cast<int>(ini.get_int("ppo", "batch_size", cfg.ppo.batch_size));
  cfg.ppo.clip_ratio = ini.get_double("ppo", "clip_ratio", cfg.ppo.clip_ratio);
  cfg.ppo.discount = ini.get_double("ppo", "discount", cfg.ppo.discount);
  cfg.ppo.entropy_coef = ini.get_double("ppo", "entropy_coef", cfg.ppo.entropy_coef);
  cfg.ppo.value_coef = ini.get_double("ppo", "value_coef", cfg.ppo.value_coef);
  cfg.ppo.epochs_per_update =
      static_cast<int>(ini.get_int("ppo", "epochs_per_update", cfg.ppo.epochs_per_update));

  detail::check_known_keys(ini, "explore", {"eps0", "decay", "end_step"});
  cfg.explore.eps0 = ini.get_double("explore", "eps0", cfg.explore.eps0);
  cfg.explore.decay = ini.get_double("explore", "decay", cfg.explore.decay);
  cfg.explore.end_step = ini.get_int("explore", "end_step", cfg.explore.end_step);

  detail::check_known_keys(ini, "transfer", {"mode", "theta", "nu", "duration", "gamma", "expert"});
  cfg.transfer.mode = transfer_mode_from_string(ini.get_string("transfer", "mode", "none"));
  cfg.transfer.theta = ini.get_double("transfer", "theta", 0.9);
  cfg.transfer.nu = ini.get_double("transfer", "nu", 0.999);
  cfg.transfer.duration_steps = ini.get_int("transfer", "duration", 3000);
  cfg.transfer.gamma = ini.get_double("transfer", "gamma", 0.99);
  {
    std::istringstream ss(ini.get_string("transfer", "expert", ""));
    std::string key;
    while (ss >> key) cfg.expert_keys.push_back(key);
  }

  detail::check_known_keys(
      ini, "run", {"total_steps", "seed", "pattern", "hidden", "oracle_windows", "oracle_seed"});
  cfg.total_steps = ini.get_int("run", "total_steps", cfg.total_steps);
  cfg.seed = static_cast<uint64_t>(ini.get_int("run", "seed", static_cast<int64_t>(cfg.seed)));
  cfg.pattern = ini.get_string("run", "pattern", cfg.pattern);
  {
    const auto h = ini.get_doubles("run", "hidden", {32, 32});
    cfg.hidden.clear();
    for (double v : h) cfg.hidden.push_back(static_cast<int>(v));
  }
  cfg.oracle_windows = ini.get_int("run", "oracle_windows", cfg.oracle_windows);
  cfg.oracle_seed =
      static_cast<uint64_t>(ini.get_int("run", "oracle_seed", static_cast<int64_t>(cfg.oracle_seed)));

  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not readable: " + path.string());
  return load_run_config(in, path.has_parent_path() ? path.parent_path() : ".");
}

inline SweepSpec load_sweep_spec(std::istream& in) {
  const detail::IniFile ini = detail::parse_ini(in, ".");
  SweepSpec spec;
  detail::check_known_keys(ini, "sweep",
                           {"modes", "seeds", "thetas", "gammas", "explore_decays", "top_k"});
  if (const std::string* modes = ini.find("sweep", "modes")) {
    spec.modes.clear();
    std::istringstream ss(*modes);
    std::string m;
    while (ss >> m) spec.modes.push_back(transfer_mode_from_string(m));
  }
  if (const std::string* seeds = ini.find("sweep", "seeds")) {
    spec.seeds.clear();
    std::istringstream ss(*seeds);
    uint64_t s = 0;
    while (ss >> s) spec.seeds.push_back(s);
  }
  spec.thetas = ini.get_doubles("sweep", "thetas", spec.thetas);
  spec.gammas = ini.get_doubles("sweep", "gammas", spec.gammas);
  spec.explore_decays = ini.get_doubles("sweep", "explore_decays", spec.explore_decays);
  spec.top_k = static_cast<int>(ini.get_int("sweep", "top_k", spec.top_k));
  if (spec.modes.empty() || spec.seeds.empty())
    throw ConfigError("sweep: modes and seeds must be non-empty");
  return spec;
}

inline SweepSpec load_sweep_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not readable: " + path.string());
  return load_sweep_spec(in);
}

}  // namespace oranslice
