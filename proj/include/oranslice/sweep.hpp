#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oranslice/config.hpp"
#include "oranslice/harness.hpp"
#include "oranslice/metrics.hpp"

namespace oranslice {

struct SweepRunSpec {
  TransferMode mode = TransferMode::none;
  double theta = 0.0;
  double gamma = 0.0;
  double explore_decay = 0.99;
  uint64_t grid_seed = 0;
  std::string run_id;
};

namespace detail {

inline std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

// The Cartesian grid, filtered per mode: none ignores theta and gamma,
// reuse/distill ignore gamma.
inline std::vector<SweepRunSpec> build_sweep_grid(const SweepSpec& spec, double config_decay) {
  std::vector<double> decays = spec.explore_decays;
  if (decays.empty()) decays.push_back(config_decay);
  std::vector<SweepRunSpec> grid;
  for (TransferMode mode : spec.modes) {
    for (double decay : decays) {
      const std::vector<double> thetas =
          mode == TransferMode::none ? std::vector<double>{0.0} : spec.thetas;
      for (double theta : thetas) {
        const std::vector<double> gammas =
            mode == TransferMode::hybrid ? spec.gammas : std::vector<double>{0.0};
        for (double gamma : gammas) {
          for (uint64_t seed : spec.seeds) {
            SweepRunSpec run;
            run.mode = mode;
            run.theta = theta;
            run.gamma = gamma;
            run.explore_decay = decay;
            run.grid_seed = seed;
            std::ostringstream id;
            id << to_string(mode) << "_d" << detail::short_double(decay);
            if (mode != TransferMode::none) id << "_t" << detail::short_double(theta);
            if (mode == TransferMode::hybrid) id << "_g" << detail::short_double(gamma);
            id << "_s" << seed;
            run.run_id = sanitize_run_id(id.str());
            grid.push_back(std::move(run));
          }
        }
      }
    }
  }
  return grid;
}

struct SweepOutcome {
  std::vector<RunResult> results;  // grid order
  double oracle_avg = 0.0;
  std::filesystem::path metrics_path;
};

// Runs the whole grid with bounded parallelism. Every run derives its RNG
// state as mix_seed(config seed, grid seed) and owns its environment and
// learner, so the parallel schedule cannot change any output; rows are
// written in grid order afterwards.
inline SweepOutcome run_sweep(const RunConfig& base_cfg, const SweepSpec& spec,
                              const std::filesystem::path& policy_dir,
                              const std::filesystem::path& out_dir, int jobs = 1) {
  base_cfg.validate();
  const auto grid = build_sweep_grid(spec, base_cfg.explore.decay);

  const bool needs_experts =
      std::any_of(grid.begin(), grid.end(),
                  [](const SweepRunSpec& r) { return r.mode != TransferMode::none; });
  const std::vector<PolicyNet> experts =
      needs_experts ? load_experts(base_cfg, policy_dir) : std::vector<PolicyNet>{};

  const double oracle_avg =
      oracle_best_reward(base_cfg.env, base_cfg.oracle_seed, base_cfg.oracle_windows).average;

  std::vector<RunResult> results(grid.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= grid.size()) break;
      const SweepRunSpec& run = grid[i];
      RunConfig cfg = base_cfg;
      cfg.transfer.mode = run.mode;
      cfg.transfer.theta = run.theta;
      cfg.transfer.gamma = run.gamma;
      cfg.explore.decay = run.explore_decay;
      const uint64_t effective_seed = mix_seed(base_cfg.seed, run.grid_seed);
      std::span<const PolicyNet> run_experts =
          run.mode == TransferMode::none ? std::span<const PolicyNet>{} : std::span(experts);
      RunResult result = run_episode(cfg, run_experts, effective_seed, run.run_id,
                                     out_dir / "runs" / (run.run_id + ".csv"), oracle_avg);
      result.seed = run.grid_seed;
      result.effective_seed = effective_seed;
      results[i] = std::move(result);
      {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cout << "[sweep] " << (i + 1) << "/" << grid.size() << " " << run.run_id
                  << (results[i].aborted ? " ABORTED" : "") << "\n";
      }
    }
  };
  const int n_threads = std::max(1, jobs);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  SweepOutcome outcome;
  outcome.oracle_avg = oracle_avg;
  outcome.results = std::move(results);

  std::filesystem::create_directories(out_dir);
  outcome.metrics_path = out_dir / "metrics.csv";
  {
    std::ofstream metrics(outcome.metrics_path);
    write_metrics_csv(metrics, outcome.results);
  }
  {
    nlohmann::json manifest;
    manifest["pattern"] = base_cfg.pattern;
    manifest["base_seed"] = base_cfg.seed;
    manifest["oracle_avg"] = oracle_avg;
    manifest["transfer_duration"] = base_cfg.transfer.duration_steps;
    manifest["total_steps"] = base_cfg.total_steps;
    manifest["top_k"] = spec.top_k;
    nlohmann::json runs = nlohmann::json::array();
    for (const RunResult& r : outcome.results) {
      nlohmann::json row;
      row["run_id"] = r.run_id;
      row["mode"] = to_string(r.mode);
      row["grid_seed"] = r.seed;
      row["effective_seed"] = r.effective_seed;
      row["explore_decay"] = r.explore_decay;
      row["aborted"] = r.aborted;
      row["sources"] = {
          {"learner", r.metrics.source_count(ActionSource::learner)},
          {"expert_reuse", r.metrics.source_count(ActionSource::expert_reuse)},
          {"distilled", r.metrics.source_count(ActionSource::distilled)},
          {"random_exploration", r.metrics.source_count(ActionSource::random_exploration)}};
      runs.push_back(std::move(row));
    }
    manifest["runs"] = std::move(runs);
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
  }
  return outcome;
}

struct ModeSummary {
  TransferMode mode = TransferMode::none;
  int runs_total = 0;
  int runs_selected = 0;
  double mean_initial_reward = 0.0;
  double mean_reward_variance = 0.0;
  double mean_steps_to_converge = 0.0;  // over converged selected runs
  double converged_pct = 0.0;
  double mean_avg_normalized_reward = 0.0;
  std::array<double, 4> mean_source_counts{};
};

struct GammaSummary {
  double gamma = 0.0;
  int runs_selected = 0;
  double mean_initial_reward = 0.0;
  double mean_reward_variance = 0.0;
  double mean_steps_to_converge = 0.0;
  double converged_pct = 0.0;
  double mean_reuse_count = 0.0;
  double mean_distilled_count = 0.0;
};

struct Report {
  std::vector<ModeSummary> modes;
  std::vector<GammaSummary> gammas;  // hybrid runs only
  // trailing-W smoothed mean reward per mode, one value per step
  std::vector<std::pair<TransferMode, std::vector<double>>> curves;
  std::vector<std::string> warnings;
};

namespace detail {

template <typename It>
inline double mean_of(It begin, It end) {
  double sum = 0.0;
  int n = 0;
  for (It it = begin; it != end; ++it, ++n) sum += *it;
  return n > 0 ? sum / n : 0.0;
}

inline std::vector<const RunResult*> top_k_by_avg_reward(std::vector<const RunResult*> runs,
                                                         int top_k) {
  std::sort(runs.begin(), runs.end(), [](const RunResult* a, const RunResult* b) {
    if (a->metrics.avg_normalized_reward != b->metrics.avg_normalized_reward)
      return a->metrics.avg_normalized_reward > b->metrics.avg_normalized_reward;
    return a->run_id < b->run_id;  // deterministic tiebreak
  });
  if (static_cast<int>(runs.size()) > top_k) runs.resize(top_k);
  return runs;
}

inline void fill_common(std::span<const RunResult* const> selected, double& initial, double& variance,
                        double& steps, double& converged_pct) {
  double init_sum = 0.0, var_sum = 0.0, steps_sum = 0.0;
  int converged = 0;
  for (const RunResult* r : selected) {
    init_sum += r->metrics.initial_reward;
    var_sum += r->metrics.reward_variance;
    if (r->metrics.converged) {
      steps_sum += static_cast<double>(r->metrics.steps_to_converge);
      ++converged;
    }
  }
  const int n = static_cast<int>(selected.size());
  initial = n > 0 ? init_sum / n : 0.0;
  variance = n > 0 ? var_sum / n : 0.0;
  // Steps-to-converge averages over converged runs only; if none converged
  // report the run length stored in steps_to_converge.
  steps = converged > 0 ? steps_sum / converged
                        : (n > 0 ? static_cast<double>(selected[0]->metrics.steps_to_converge) : 0.0);
  converged_pct = n > 0 ? 100.0 * converged / n : 0.0;
}

}  // namespace detail

// Per-mode top-k selection by average normalized reward, then means of the
// four headline metrics, the smoothed curves, and the per-gamma breakdown.
inline Report aggregate_report(std::span<const RunResult> results, int top_k,
                               int smoothing_window = 200) {
  Report report;
  std::vector<const RunResult*> usable;
  for (const RunResult& r : results) {
    if (r.aborted) {
      report.warnings.push_back("run " + r.run_id + " aborted; excluded from the report");
      continue;
    }
    usable.push_back(&r);
  }

  const TransferMode mode_order[] = {TransferMode::none, TransferMode::reuse,
                                     TransferMode::distill, TransferMode::hybrid};
  for (TransferMode mode : mode_order) {
    std::vector<const RunResult*> mode_runs;
    for (const RunResult* r : usable)
      if (r->mode == mode) mode_runs.push_back(r);
    if (mode_runs.empty()) continue;

    if (static_cast<int>(mode_runs.size()) < top_k)
      report.warnings.push_back("mode " + std::string(to_string(mode)) + ": only " +
                                std::to_string(mode_runs.size()) + " runs available for top-" +
                                std::to_string(top_k) + "; using all");
    const auto selected = detail::top_k_by_avg_reward(mode_runs, top_k);

    ModeSummary summary;
    summary.mode = mode;
    summary.runs_total = static_cast<int>(mode_runs.size());
    summary.runs_selected = static_cast<int>(selected.size());
    detail::fill_common(selected, summary.mean_initial_reward, summary.mean_reward_variance,
                        summary.mean_steps_to_converge, summary.converged_pct);
    double avg_sum = 0.0;
    for (const RunResult* r : selected) {
      avg_sum += r->metrics.avg_normalized_reward;
      for (size_t s = 0; s < 4; ++s)
        summary.mean_source_counts[s] += static_cast<double>(r->metrics.action_source_counts[s]);
    }
    summary.mean_avg_normalized_reward = avg_sum / selected.size();
    for (double& c : summary.mean_source_counts) c /= selected.size();
    report.modes.push_back(summary);

    // mean reward per step over the selected runs, then trailing smoothing
    size_t len = 0;
    for (const RunResult* r : selected) len = std::max(len, r->rewards.size());
    std::vector<double> mean_curve(len, 0.0);
    if (len > 0) {
      for (const RunResult* r : selected)
        for (size_t t = 0; t < r->rewards.size(); ++t) mean_curve[t] += r->rewards[t];
      for (double& v : mean_curve) v /= selected.size();
      report.curves.emplace_back(mode, trailing_moving_average(mean_curve, smoothing_window));
    }
  }

  // Per-gamma breakdown (hybrid only): top-k within each gamma value.
  std::map<double, std::vector<const RunResult*>> by_gamma;
  for (const RunResult* r : usable)
    if (r->mode == TransferMode::hybrid) by_gamma[r->gamma].push_back(r);
  for (auto& [gamma, runs] : by_gamma) {
    const auto selected = detail::top_k_by_avg_reward(runs, top_k);
    GammaSummary summary;
    summary.gamma = gamma;
    summary.runs_selected = static_cast<int>(selected.size());
    detail::fill_common(selected, summary.mean_initial_reward, summary.mean_reward_variance,
                        summary.mean_steps_to_converge, summary.converged_pct);
    double reuse = 0.0, distilled = 0.0;
    for (const RunResult* r : selected) {
      reuse += static_cast<double>(r->metrics.source_count(ActionSource::expert_reuse));
      distilled += static_cast<double>(r->metrics.source_count(ActionSource::distilled));
    }
    summary.mean_reuse_count = reuse / selected.size();
    summary.mean_distilled_count = distilled / selected.size();
    report.gammas.push_back(summary);
  }
  return report;
}

// Reloads sweep results from disk (metrics.csv plus the per-step CSVs) so
// the report subcommand can run on a finished sweep directory.
inline std::vector<RunResult> load_sweep_results(const std::filesystem::path& dir) {
  std::ifstream metrics(dir / "metrics.csv");
  if (!metrics) throw ConfigError("no metrics.csv under " + dir.string());
  std::vector<RunResult> results;
  std::string line;
  std::getline(metrics, line);  // header
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 11) throw ConfigError("malformed metrics.csv row: " + line);
    RunResult r;
    r.run_id = cols[0];
    r.mode = transfer_mode_from_string(cols[1]);
    r.seed = std::stoull(cols[2]);
    r.theta0 = std::stod(cols[3]);
    r.nu = std::stod(cols[4]);
    r.gamma = std::stod(cols[5]);
    r.metrics.initial_reward = std::stod(cols[6]);
    r.metrics.reward_variance = std::stod(cols[7]);
    r.metrics.steps_to_converge = std::stoll(cols[8]);
    r.metrics.converged = cols[9] == "1";
    r.metrics.avg_normalized_reward = std::stod(cols[10]);

    std::ifstream steps(dir / "runs" / (r.run_id + ".csv"));
    if (!steps) throw ConfigError("missing per-step CSV for run " + r.run_id);
    std::string row;
    std::getline(steps, row);  // header
    while (std::getline(steps, row)) {
      if (row.empty()) continue;
      if (row[0] == '#') {
        r.aborted = true;
        continue;
      }
      // columns: step,action_id,source,reward,...
      size_t pos = row.find(',');
      pos = row.find(',', pos + 1);
      const size_t source_begin = pos + 1;
      const size_t source_end = row.find(',', source_begin);
      const std::string source = row.substr(source_begin, source_end - source_begin);
      const size_t reward_end = row.find(',', source_end + 1);
      r.rewards.push_back(std::stod(row.substr(source_end + 1, reward_end - source_end - 1)));
      if (source == "learner")
        ++r.metrics.action_source_counts[static_cast<size_t>(ActionSource::learner)];
      else if (source == "expert_reuse")
        ++r.metrics.action_source_counts[static_cast<size_t>(ActionSource::expert_reuse)];
      else if (source == "distilled")
        ++r.metrics.action_source_counts[static_cast<size_t>(ActionSource::distilled)];
      else
        ++r.metrics.action_source_counts[static_cast<size_t>(ActionSource::random_exploration)];
    }
    results.push_back(std::move(r));
  }
  return results;
}

// Writes the summary CSV plus sibling files for the per-gamma breakdown and
// the smoothed curves (<out>_gamma.csv, <out>_curves.csv).
inline void write_report(const Report& report, const std::filesystem::path& out_file) {
  if (out_file.has_parent_path()) std::filesystem::create_directories(out_file.parent_path());
  {
    std::ofstream out(out_file);
    out << "mode,runs_total,runs_selected,mean_initial_reward,mean_reward_variance,"
           "mean_steps_to_converge,converged_pct,mean_avg_normalized_reward,"
           "mean_learner,mean_expert_reuse,mean_distilled,mean_random_exploration\n";
    for (const ModeSummary& m : report.modes) {
      out << to_string(m.mode) << ',' << m.runs_total << ',' << m.runs_selected << ','
          << format_double(m.mean_initial_reward) << ',' << format_double(m.mean_reward_variance)
          << ',' << format_double(m.mean_steps_to_converge) << ','
          << format_double(m.converged_pct) << ','
          << format_double(m.mean_avg_normalized_reward);
      for (double c : m.mean_source_counts) out << ',' << format_double(c);
      out << "\n";
    }
  }
  {
    std::filesystem::path gamma_path = out_file;
    gamma_path.replace_extension();
    gamma_path += "_gamma.csv";
    std::ofstream out(gamma_path);
    out << "gamma,runs_selected,mean_initial_reward,mean_reward_variance,"
           "mean_steps_to_converge,converged_pct,mean_reuse_count,mean_distilled_count\n";
    for (const GammaSummary& g : report.gammas) {
      out << format_double(g.gamma) << ',' << g.runs_selected << ','
          << format_double(g.mean_initial_reward) << ',' << format_double(g.mean_reward_variance)
          << ',' << format_double(g.mean_steps_to_converge) << ','
          << format_double(g.converged_pct) << ',' << format_double(g.mean_reuse_count) << ','
          << format_double(g.mean_distilled_count) << "\n";
    }
  }
  {
    std::filesystem::path curves_path = out_file;
    curves_path.replace_extension();
    curves_path += "_curves.csv";
    std::ofstream out(curves_path);
    out << "step";
    for (const auto& [mode, curve] : report.curves) out << ',' << to_string(mode);
    out << "\n";
    size_t len = 0;
    for (const auto& [mode, curve] : report.curves) len = std::max(len, curve.size());
    for (size_t t = 0; t < len; ++t) {
      out << t;
      for (const auto& [mode, curve] : report.curves) {
        out << ',';
        if (t < curve.size() && !std::isnan(curve[t])) out << format_double(curve[t]);
      }
      out << "\n";
    }
  }
}

}  // namespace oranslice
