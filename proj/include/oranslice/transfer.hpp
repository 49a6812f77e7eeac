#pragma once

#include <span>
#include <string>
#include <vector>

#include "oranslice/action_space.hpp"
#include "oranslice/errors.hpp"
#include "oranslice/policy.hpp"
#include "oranslice/rng.hpp"

namespace oranslice {

enum class TransferMode { none, reuse, distill, hybrid };

inline const char* to_string(TransferMode mode) {
  switch (mode) {
    case TransferMode::none: return "none";
    case TransferMode::reuse: return "reuse";
    case TransferMode::distill: return "distill";
    case TransferMode::hybrid: return "hybrid";
  }
  return "?";
}

inline TransferMode transfer_mode_from_string(const std::string& s) {
  if (s == "none") return TransferMode::none;
  if (s == "reuse") return TransferMode::reuse;
  if (s == "distill") return TransferMode::distill;
  if (s == "hybrid") return TransferMode::hybrid;
  throw ConfigError("unknown transfer mode: " + s);
}

struct TransferConfig {
  TransferMode mode = TransferMode::none;
  double theta = 0.0;           // initial transfer rate
  double nu = 1.0;              // per-step transfer rate decay
  int64_t duration_steps = 3000;  // T
  double gamma = 0.0;           // hybrid gate, ignored unless mode == hybrid

  void validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("transfer: theta in [0,1]");
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("transfer: nu in (0,1]");
    if (duration_steps < 0) throw ConfigError("transfer: duration must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("transfer: gamma in [0,1]");
  }
};

enum class ActionSource { learner, expert_reuse, distilled, random_exploration };

inline const char* to_string(ActionSource source) {
  switch (source) {
    case ActionSource::learner: return "learner";
    case ActionSource::expert_reuse: return "expert_reuse";
    case ActionSource::distilled: return "distilled";
    case ActionSource::random_exploration: return "random_exploration";
  }
  return "?";
}

// Generalized policy improvement over explicit per-expert action scores:
// argmax over actions of max over experts. Ties go to the lowest action id.
inline int gpi_action_from_scores(std::span<const std::vector<double>> expert_scores) {
  if (expert_scores.empty()) throw ConfigError("gpi: no experts given");
  const size_t num_actions = expert_scores[0].size();
  int best = 0;
  double best_score = -1e308;
  for (size_t a = 0; a < num_actions; ++a) {
    double score = expert_scores[0][a];
    for (size_t e = 1; e < expert_scores.size(); ++e)
      score = std::max(score, expert_scores[e][a]);
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(a);
    }
  }
  return best;
}

// Experts expose no Q-function, so their policy logits serve as the action
// preference values that GPI maximizes over.
inline int gpi_action(std::span<const double> state, std::span<const PolicyNet> experts) {
  if (experts.empty()) throw ConfigError("gpi: no experts given");
  std::vector<std::vector<double>> scores;
  scores.reserve(experts.size());
  for (const PolicyNet& expert : experts) scores.push_back(expert.forward(state).logits);
  return gpi_action_from_scores(scores);
}

// Midpoint of the expert and learner share vectors, snapped to the nearest
// grid action by Euclidean distance (ties -> lowest id).
inline int distill_action(int expert_action_id, int learner_action_id, const ActionSpace& space) {
  const auto& e = space.at(expert_action_id).shares;
  const auto& l = space.at(learner_action_id).shares;
  std::vector<double> midpoint(e.size());
  for (size_t s = 0; s < e.size(); ++s) midpoint[s] = 0.5 * (e[s] + l[s]);
  return space.nearest(midpoint);
}

inline double decay_theta(double theta, double nu) { return theta * nu; }

inline int argmax_index(std::span<const double> values) {
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

struct TransferDecision {
  int action_id = 0;
  ActionSource source = ActionSource::learner;
  double log_prob = 0.0;       // eps-mixed learner log-prob of the executed action
  double learner_value = 0.0;  // V(state) under the learner
};

// One action decision. During the transfer window (t < T, mode != none) the
// pair (x, r) is always drawn from the transfer stream, whichever branch is
// taken, so action sequences across modes stay comparable under a shared
// seed. The expert branch requires x <= theta and, as a special case,
// theta == 0 never follows the expert.
inline TransferDecision transfer_select(std::span<const double> state, const PolicyNet& learner,
                                        std::span<const PolicyNet> experts,
                                        const TransferConfig& cfg, double theta_current, int64_t t,
                                        double epsilon, Rng& transfer_rng, Rng& select_rng,
                                        const ActionSpace& space) {
  const PolicyNet::Forward learner_fwd = learner.forward(state);
  TransferDecision decision;
  decision.learner_value = learner_fwd.value;

  bool follow_expert = false;
  bool use_reuse = false;
  if (t < cfg.duration_steps && cfg.mode != TransferMode::none) {
    const double x = transfer_rng.uniform();
    const double r = transfer_rng.uniform();
    follow_expert = theta_current > 0.0 && x <= theta_current;
    use_reuse = cfg.mode == TransferMode::reuse ||
                (cfg.mode == TransferMode::hybrid && r < cfg.gamma);
  }

  if (follow_expert) {
    if (experts.empty()) throw ConfigError("transfer: mode requires experts but none were given");
    const int expert_action = gpi_action(state, experts);
    if (use_reuse) {
      decision.action_id = expert_action;
      decision.source = ActionSource::expert_reuse;
    } else {
      const int learner_action = argmax_index(learner_fwd.probs);
      decision.action_id = distill_action(expert_action, learner_action, space);
      decision.source = ActionSource::distilled;
    }
    decision.log_prob = mixed_log_prob(learner_fwd.probs, decision.action_id, epsilon);
    return decision;
  }

  const ActionChoice choice = select_action(learner_fwd.probs, select_rng, epsilon);
  decision.action_id = choice.action_id;
  decision.source = choice.explored ? ActionSource::random_exploration : ActionSource::learner;
  decision.log_prob = choice.log_prob;
  return decision;
}

}  // namespace oranslice
