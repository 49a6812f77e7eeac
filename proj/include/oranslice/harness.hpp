#pragma once

#include <array>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "oranslice/config.hpp"
#include "oranslice/metrics.hpp"
#include "oranslice/policy.hpp"
#include "oranslice/policy_store.hpp"
#include "oranslice/slicing_env.hpp"
#include "oranslice/transfer.hpp"

namespace oranslice {

// Stream indices for deriving a run's RNG streams from its seed via
// mix_seed. Env-internal streams (per-slice traffic, user counts) are
// derived inside SlicingEnv::reset from the same seed.
inline constexpr uint64_t kInitStream = 0x696E6974;      // learner weight init
inline constexpr uint64_t kSelectStream = 0x73656C65;    // action selection
inline constexpr uint64_t kTransferStream = 0x7472616E;  // transfer (x, r) draws

struct RunResult {
  std::string run_id;
  TransferMode mode = TransferMode::none;
  uint64_t seed = 0;  // as requested (grid seed for sweep runs)
  uint64_t effective_seed = 0;
  double theta0 = 0.0;
  double nu = 1.0;
  double gamma = 0.0;
  double explore_decay = 0.99;
  std::vector<double> rewards;
  RunMetrics metrics;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline std::string csv_header(int num_slices) {
  std::string h = "step,action_id,source,reward";
  for (int s = 0; s < num_slices; ++s) h += ",kappa_" + std::to_string(s);
  for (int s = 0; s < num_slices; ++s) h += ",l_" + std::to_string(s);
  h += ",theta,epsilon";
  return h;
}

}  // namespace detail

// Runs one training or deployment episode: transfer_select -> env.step ->
// buffer -> PPO update every batch_size steps -> theta decay. Writes the
// per-step CSV when csv_path is non-empty. Learner weights end up in
// *final_learner when provided.
inline RunResult run_episode(const RunConfig& cfg, std::span<const PolicyNet> experts,
                             uint64_t seed, const std::string& run_id,
                             const std::filesystem::path& csv_path, double oracle_avg,
                             PolicyNet* final_learner = nullptr,
                             const PolicyNet* initial_learner = nullptr) {
  cfg.validate();
  if (cfg.transfer.mode != TransferMode::none && experts.empty())
    throw ConfigError("run: transfer mode " + std::string(to_string(cfg.transfer.mode)) +
                      " requires at least one expert policy");

  SlicingEnv env(cfg.env);
  const ActionSpace& space = env.action_space();
  const NetArchitecture arch = cfg.architecture(space.size());
  for (const PolicyNet& expert : experts)
    if (!(expert.arch() == arch))
      throw ConfigError("run: expert architecture does not match this run's configuration");

  Rng init_rng(mix_seed(seed, kInitStream));
  Rng select_rng(mix_seed(seed, kSelectStream));
  Rng transfer_rng(mix_seed(seed, kTransferStream));

  PolicyNet learner =
      initial_learner ? *initial_learner : PolicyNet::random_init(arch, init_rng, PolicyRole::learner);

  RunResult result;
  result.run_id = run_id;
  result.mode = cfg.transfer.mode;
  result.seed = seed;
  result.effective_seed = seed;
  result.theta0 = cfg.transfer.theta;
  result.nu = cfg.transfer.nu;
  result.gamma = cfg.transfer.gamma;
  result.explore_decay = cfg.explore.decay;
  result.rewards.reserve(cfg.total_steps);

  std::ofstream csv;
  if (!csv_path.empty()) {
    std::filesystem::create_directories(csv_path.parent_path());
    csv.open(csv_path);
    if (!csv) throw ConfigError("cannot write per-step CSV: " + csv_path.string());
    csv << detail::csv_header(cfg.env.num_slices()) << "\n";
  }

  StateVector state = env.reset(seed);
  TransitionBuffer buffer(cfg.ppo.batch_size);
  double theta = cfg.transfer.mode == TransferMode::none ? 0.0 : cfg.transfer.theta;

  for (int64_t t = 0; t < cfg.total_steps; ++t) {
    const double epsilon = exploration_rate(t, cfg.explore);
    const double theta_used = theta;
    try {
      const TransferDecision decision =
          transfer_select(state.kappa, learner, experts, cfg.transfer, theta, t, epsilon,
                          transfer_rng, select_rng, space);
      const SlicingEnv::StepResult step = env.step(decision.action_id);

      Transition tr;
      tr.state = state.kappa;
      tr.action_id = decision.action_id;
      tr.log_prob = decision.log_prob;
      tr.reward = step.reward;
      tr.value = decision.learner_value;
      buffer.push(std::move(tr));

      result.rewards.push_back(step.reward);
      ++result.metrics.action_source_counts[static_cast<size_t>(decision.source)];

      if (csv.is_open()) {
        csv << t << ',' << decision.action_id << ',' << to_string(decision.source) << ','
            << format_double(step.reward);
        for (double k : step.state.kappa) csv << ',' << format_double(k);
        for (const auto& kp : step.kpis.slices) csv << ',' << format_double(kp.avg_latency_ms);
        csv << ',' << format_double(theta_used) << ',' << format_double(epsilon) << "\n";
      }

      if (buffer.full()) {
        buffer.set_bootstrap(learner.forward(step.state.kappa).value);
        ppo_update(learner, buffer, cfg.ppo);
        buffer.clear();
      }

      theta = decay_theta(theta, cfg.transfer.nu);
      state = step.state;
    } catch (const NumericError& err) {
      result.aborted = true;
      result.abort_reason = err.what();
      if (csv.is_open()) csv << "# run aborted at step " << t << ": " << err.what() << "\n";
      std::cerr << "[oranslice] run " << run_id << " aborted at step " << t << ": " << err.what()
                << "\n";
      break;
    }
  }

  if (!result.rewards.empty() && !result.aborted) {
    MetricsParams params;
    auto counts = result.metrics.action_source_counts;
    result.metrics = compute_run_metrics(result.rewards, oracle_avg, params, cfg.env.weight_sum());
    result.metrics.action_source_counts = counts;
  }
  if (final_learner) *final_learner = learner;
  return result;
}

struct OracleResult {
  std::vector<double> best_rewards;
  std::vector<int> best_action_ids;
  // reward every action would have earned from the committed snapshot
  std::vector<std::vector<double>> per_window_rewards;
  // state each window's decision would observe (previous window's kappa)
  std::vector<StateVector> states_before;
  double average = 0.0;
};

// Exhaustive search: per window, every action is evaluated from the same
// frozen snapshot (queues, stream state, RNG state), the best is committed.
inline OracleResult oracle_best_reward(const EnvConfig& cfg, uint64_t seed, int64_t n_windows) {
  SlicingEnv env(cfg);
  StateVector state = env.reset(seed);
  const size_t num_actions = env.action_space().size();

  OracleResult out;
  out.best_rewards.reserve(n_windows);
  double total = 0.0;
  for (int64_t w = 0; w < n_windows; ++w) {
    out.states_before.push_back(state);
    std::vector<double> rewards(num_actions);
    int best = 0;
    double best_reward = -1.0;
    for (size_t a = 0; a < num_actions; ++a) {
      SlicingEnv trial = env;
      rewards[a] = trial.step(static_cast<int>(a)).reward;
      if (rewards[a] > best_reward) {
        best_reward = rewards[a];
        best = static_cast<int>(a);
      }
    }
    const SlicingEnv::StepResult committed = env.step(best);
    state = committed.state;
    out.best_rewards.push_back(best_reward);
    out.best_action_ids.push_back(best);
    out.per_window_rewards.push_back(std::move(rewards));
    total += best_reward;
  }
  out.average = n_windows > 0 ? total / n_windows : 0.0;
  return out;
}

// Greedy (argmax) rollout of a fixed policy; used for expert evaluation
// against the oracle on the same seed.
inline std::vector<double> greedy_replay(const EnvConfig& cfg, const PolicyNet& policy,
                                         uint64_t seed, int64_t n_windows) {
  SlicingEnv env(cfg);
  StateVector state = env.reset(seed);
  std::vector<double> rewards;
  rewards.reserve(n_windows);
  for (int64_t w = 0; w < n_windows; ++w) {
    const int action = argmax_index(policy.forward(state.kappa).probs);
    const auto step = env.step(action);
    rewards.push_back(step.reward);
    state = step.state;
  }
  return rewards;
}

inline std::string default_context_key(const RunConfig& cfg, uint64_t seed) {
  return std::to_string(cfg.env.num_slices()) + "slice/" + cfg.pattern + "/seed" +
         std::to_string(seed);
}

inline std::string sanitize_run_id(std::string s) {
  for (char& c : s)
    if (c == '/' || c == ' ') c = '_';
  return s;
}

inline std::string timestamp_utc() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct TrainOutcome {
  PolicyRecord record;
  RunResult run;
  std::filesystem::path policy_path;
  std::filesystem::path csv_path;
};

// Training workflow: a plain (mode = none) run whose final learner weights
// are stored in the policy directory under the context key.
inline TrainOutcome train_expert(RunConfig cfg, uint64_t seed, const std::filesystem::path& out_dir,
                                 std::string context_key = "", bool overwrite = false,
                                 std::optional<double> oracle_avg = std::nullopt) {
  cfg.transfer.mode = TransferMode::none;
  cfg.transfer.theta = 0.0;
  cfg.validate();
  if (context_key.empty()) context_key = default_context_key(cfg, seed);

  const double anchor =
      oracle_avg ? *oracle_avg
                 : oracle_best_reward(cfg.env, cfg.oracle_seed, cfg.oracle_windows).average;

  TrainOutcome outcome;
  outcome.csv_path = out_dir / "runs" / ("train_" + sanitize_run_id(context_key) + ".csv");
  PolicyNet learner;
  outcome.run = run_episode(cfg, {}, seed, "train_" + sanitize_run_id(context_key),
                            outcome.csv_path, anchor, &learner);
  if (outcome.run.aborted)
    throw NumericError("expert training aborted: " + outcome.run.abort_reason);

  const ActionSpace space =
      ActionSpace::enumerate(cfg.env.num_slices(), cfg.env.action_granularity, cfg.env.min_share);
  PolicyRecord record;
  record.context_key = context_key;
  record.arch = learner.arch();
  record.action_space_hash = space.hash();
  record.weights = learner.params();
  record.training_steps = cfg.total_steps;
  record.final_avg_reward = outcome.run.metrics.avg_normalized_reward * cfg.env.weight_sum();
  record.created_at = timestamp_utc();
  record.role = PolicyRole::expert;
  outcome.policy_path = save_policy(out_dir / "policies", record, overwrite);
  outcome.record = std::move(record);
  return outcome;
}

// Loads the configured experts for a deployment, enforcing architecture and
// action-space compatibility with this run's config.
inline std::vector<PolicyNet> load_experts(const RunConfig& cfg,
                                           const std::filesystem::path& policy_dir) {
  const ActionSpace space =
      ActionSpace::enumerate(cfg.env.num_slices(), cfg.env.action_granularity, cfg.env.min_share);
  const NetArchitecture arch = cfg.architecture(space.size());
  std::vector<PolicyNet> experts;
  for (const std::string& key : cfg.expert_keys) {
    const std::string resolved = resolve_context(policy_dir, key);
    PolicyRecord record = load_policy(policy_dir, resolved, arch, space.hash());
    record.role = PolicyRole::expert;
    experts.push_back(record.to_net());
  }
  return experts;
}

struct DeployOutcome {
  RunResult run;
  std::filesystem::path csv_path;
  std::filesystem::path metrics_path;
  double oracle_avg = 0.0;
};

inline void write_metrics_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "run_id,mode,seed,theta0,nu,gamma,initial_reward,variance,steps_to_converge,"
         "converged,avg_normalized_reward\n";
  for (const RunResult& r : runs) {
    out << r.run_id << ',' << to_string(r.mode) << ',' << r.seed << ','
        << format_double(r.theta0) << ',' << format_double(r.nu) << ',' << format_double(r.gamma)
        << ',' << format_double(r.metrics.initial_reward) << ','
        << format_double(r.metrics.reward_variance) << ',' << r.metrics.steps_to_converge << ','
        << (r.metrics.converged ? 1 : 0) << ','
        << format_double(r.metrics.avg_normalized_reward) << "\n";
  }
}

// Deployment workflow: load experts, run the TL-aided episode, emit the
// per-step CSV and a one-row metrics CSV.
inline DeployOutcome deploy_run(const RunConfig& cfg, const std::filesystem::path& policy_dir,
                                uint64_t seed, const std::filesystem::path& out_dir,
                                std::string run_id = "",
                                std::optional<double> oracle_avg = std::nullopt,
                                const PolicyNet* initial_learner = nullptr) {
  cfg.validate();
  const std::vector<PolicyNet> experts =
      cfg.transfer.mode == TransferMode::none ? std::vector<PolicyNet>{} : load_experts(cfg, policy_dir);

  if (run_id.empty()) {
    std::ostringstream id;
    id << to_string(cfg.transfer.mode);
    if (cfg.transfer.mode != TransferMode::none) id << "_t" << cfg.transfer.theta;
    if (cfg.transfer.mode == TransferMode::hybrid) id << "_g" << cfg.transfer.gamma;
    id << "_s" << seed;
    run_id = sanitize_run_id(id.str());
  }

  DeployOutcome outcome;
  outcome.oracle_avg =
      oracle_avg ? *oracle_avg
                 : oracle_best_reward(cfg.env, cfg.oracle_seed, cfg.oracle_windows).average;
  outcome.csv_path = out_dir / "runs" / (run_id + ".csv");
  outcome.run = run_episode(cfg, experts, seed, run_id, outcome.csv_path, outcome.oracle_avg,
                            nullptr, initial_learner);

  outcome.metrics_path = out_dir / (run_id + ".metrics.csv");
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(outcome.metrics_path);
  write_metrics_csv(metrics, {&outcome.run, 1});
  return outcome;
}

}  // namespace oranslice
