#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "oranslice/errors.hpp"
#include "oranslice/rng.hpp"

namespace oranslice {

enum class PolicyRole { expert, learner };

struct NetArchitecture {
  int input_dim = 0;
  std::vector<int> hidden;  // tanh layers
  int num_actions = 0;

  bool operator==(const NetArchitecture&) const = default;

  // Parameters: trunk linear layers, then the logit head, then the value
  // head. Each layer stores W row-major [out x in] followed by b[out].
  size_t param_count() const {
    size_t n = 0;
    int in = input_dim;
    for (int h : hidden) {
      n += static_cast<size_t>(h) * in + h;
      in = h;
    }
    n += static_cast<size_t>(num_actions) * in + num_actions;  // logits
    n += static_cast<size_t>(in) + 1;                          // value
    return n;
  }
};

// Dense actor-critic network: tanh trunk, categorical logit head, scalar
// value head. Forward/backward are hand-written over a flat float64
// parameter vector so updates stay deterministic and checkable against
// finite differences.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(NetArchitecture arch, PolicyRole role)
      : arch_(std::move(arch)), role_(role), params_(arch_.param_count(), 0.0) {}

  static PolicyNet zero_init(NetArchitecture arch, PolicyRole role = PolicyRole::learner) {
    return PolicyNet(std::move(arch), role);
  }

  // Uniform(-r, r) with r = 1/sqrt(fan_in) per layer.
  static PolicyNet random_init(NetArchitecture arch, Rng& rng,
                               PolicyRole role = PolicyRole::learner) {
    PolicyNet net(std::move(arch), role);
    size_t offset = 0;
    int in = net.arch_.input_dim;
    auto fill_layer = [&](int out) {
      const double range = 1.0 / std::sqrt(static_cast<double>(in));
      for (int i = 0; i < out * in; ++i) net.params_[offset++] = rng.uniform(-range, range);
      offset += out;  // biases stay zero
    };
    for (int h : net.arch_.hidden) {
      fill_layer(h);
      in = h;
    }
    fill_layer(net.arch_.num_actions);
    fill_layer(1);
    return net;
  }

  const NetArchitecture& arch() const { return arch_; }
  PolicyRole role() const { return role_; }
  void set_role(PolicyRole role) { role_ = role; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  size_t param_count() const { return params_.size(); }

  struct Forward {
    std::vector<double> logits;
    std::vector<double> probs;
    double value = 0.0;
    // caches for backward: input followed by each hidden activation
    std::vector<std::vector<double>> activations;
  };

  Forward forward(std::span<const double> state) const {
    if (static_cast<int>(state.size()) != arch_.input_dim)
      throw ConfigError("policy forward: state dimension mismatch");
    Forward f;
    f.activations.reserve(arch_.hidden.size() + 1);
    f.activations.emplace_back(state.begin(), state.end());

    size_t offset = 0;
    int in = arch_.input_dim;
    for (int h : arch_.hidden) {
      std::vector<double> a(h);
      for (int i = 0; i < h; ++i) {
        double z = params_[offset + static_cast<size_t>(h) * in + i];  // bias
        const double* w = &params_[offset + static_cast<size_t>(i) * in];
        const std::vector<double>& prev = f.activations.back();
        for (int j = 0; j < in; ++j) z += w[j] * prev[j];
        a[i] = std::tanh(z);
      }
      offset += static_cast<size_t>(h) * in + h;
      in = h;
      f.activations.push_back(std::move(a));
    }

    const std::vector<double>& top = f.activations.back();
    f.logits.resize(arch_.num_actions);
    for (int i = 0; i < arch_.num_actions; ++i) {
      double z = params_[offset + static_cast<size_t>(arch_.num_actions) * in + i];
      const double* w = &params_[offset + static_cast<size_t>(i) * in];
      for (int j = 0; j < in; ++j) z += w[j] * top[j];
      f.logits[i] = z;
    }
    offset += static_cast<size_t>(arch_.num_actions) * in + arch_.num_actions;

    {
      double z = params_[offset + in];
      const double* w = &params_[offset];
      for (int j = 0; j < in; ++j) z += w[j] * top[j];
      f.value = z;
    }

    double max_logit = f.logits[0];
    for (double l : f.logits) max_logit = std::max(max_logit, l);
    f.probs.resize(arch_.num_actions);
    double norm = 0.0;
    for (int i = 0; i < arch_.num_actions; ++i) {
      f.probs[i] = std::exp(f.logits[i] - max_logit);
      norm += f.probs[i];
    }
    for (double& p : f.probs) p /= norm;

    for (double l : f.logits)
      if (!std::isfinite(l)) throw NumericError("policy forward produced non-finite logits");
    if (!std::isfinite(f.value)) throw NumericError("policy forward produced non-finite value");
    return f;
  }

  // Accumulates d(loss)/d(params) into grad given upstream gradients on the
  // logits and the value output.
  void backward(const Forward& f, std::span<const double> dlogits, double dvalue,
                std::span<double> grad) const {
    const int num_hidden = static_cast<int>(arch_.hidden.size());
    std::vector<size_t> offsets(num_hidden + 2);
    std::vector<int> in_dims(num_hidden + 2);
    {
      size_t offset = 0;
      int in = arch_.input_dim;
      for (int l = 0; l < num_hidden; ++l) {
        offsets[l] = offset;
        in_dims[l] = in;
        offset += static_cast<size_t>(arch_.hidden[l]) * in + arch_.hidden[l];
        in = arch_.hidden[l];
      }
      offsets[num_hidden] = offset;  // logit head
      in_dims[num_hidden] = in;
      offset += static_cast<size_t>(arch_.num_actions) * in + arch_.num_actions;
      offsets[num_hidden + 1] = offset;  // value head
      in_dims[num_hidden + 1] = in;
    }

    const std::vector<double>& top = f.activations.back();
    const int top_dim = in_dims[num_hidden];
    std::vector<double> da(top_dim, 0.0);

    {
      const size_t off = offsets[num_hidden];
      for (int i = 0; i < arch_.num_actions; ++i) {
        const double g = dlogits[i];
        double* gw = &grad[off + static_cast<size_t>(i) * top_dim];
        const double* w = &params_[off + static_cast<size_t>(i) * top_dim];
        for (int j = 0; j < top_dim; ++j) {
          gw[j] += g * top[j];
          da[j] += g * w[j];
        }
        grad[off + static_cast<size_t>(arch_.num_actions) * top_dim + i] += g;
      }
    }
    {
      const size_t off = offsets[num_hidden + 1];
      const double* w = &params_[off];
      for (int j = 0; j < top_dim; ++j) {
        grad[off + j] += dvalue * top[j];
        da[j] += dvalue * w[j];
      }
      grad[off + top_dim] += dvalue;
    }

    for (int l = num_hidden - 1; l >= 0; --l) {
      const int out = arch_.hidden[l];
      const int in = in_dims[l];
      const std::vector<double>& act = f.activations[l + 1];
      const std::vector<double>& prev = f.activations[l];
      const size_t off = offsets[l];
      std::vector<double> da_prev(in, 0.0);
      for (int i = 0; i < out; ++i) {
        const double dz = da[i] * (1.0 - act[i] * act[i]);
        double* gw = &grad[off + static_cast<size_t>(i) * in];
        const double* w = &params_[off + static_cast<size_t>(i) * in];
        for (int j = 0; j < in; ++j) {
          gw[j] += dz * prev[j];
          da_prev[j] += dz * w[j];
        }
        grad[off + static_cast<size_t>(out) * in + i] += dz;
      }
      da = std::move(da_prev);
    }
  }

 private:
  NetArchitecture arch_;
  PolicyRole role_ = PolicyRole::learner;
  std::vector<double> params_;
};

struct PpoHyperparams {
  double learning_rate = 0.01;
  int batch_size = 4;  // transitions per update
  double clip_ratio = 0.2;
  double discount = 0.95;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int epochs_per_update = 3;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("ppo: learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("ppo: batch_size must be >= 1");
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw ConfigError("ppo: clip_ratio in (0,1)");
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("ppo: discount in (0,1]");
    if (epochs_per_update < 1) throw ConfigError("ppo: epochs_per_update must be >= 1");
  }
};

struct ExplorationSchedule {
  double eps0 = 0.2;
  double decay = 0.99;
  int64_t end_step = 4000;

  void validate() const {
    if (!(eps0 >= 0.0 && eps0 <= 1.0)) throw ConfigError("explore: eps0 in [0,1]");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("explore: decay in (0,1]");
    if (end_step < 0) throw ConfigError("explore: end_step must be >= 0");
  }
};

// eps(t) = eps0 * decay^t for t < end_step, 0 afterwards.
inline double exploration_rate(int64_t t, const ExplorationSchedule& schedule) {
  if (t >= schedule.end_step) return 0.0;
  return schedule.eps0 * std::pow(schedule.decay, static_cast<double>(t));
}

struct ActionChoice {
  int action_id = 0;
  double log_prob = 0.0;  // under the eps-mixed distribution
  bool explored = false;
};

// With probability eps pick uniformly, otherwise sample the policy. Exactly
// two uniforms are consumed either way so selection streams stay aligned.
// The log-prob is of the realized action under the eps-mixed distribution.
inline ActionChoice select_action(std::span<const double> probs, Rng& rng, double epsilon) {
  const int n = static_cast<int>(probs.size());
  const double branch = rng.uniform();
  const double pick = rng.uniform();
  ActionChoice choice;
  if (branch < epsilon) {
    choice.explored = true;
    choice.action_id = std::min(static_cast<int>(pick * n), n - 1);
  } else {
    double cumulative = 0.0;
    choice.action_id = n - 1;
    for (int i = 0; i < n; ++i) {
      cumulative += probs[i];
      if (pick < cumulative) {
        choice.action_id = i;
        break;
      }
    }
  }
  choice.log_prob = std::log(epsilon / n + (1.0 - epsilon) * probs[choice.action_id]);
  return choice;
}

// eps-mixed log-probability of an arbitrary action (used when the executed
// action came from an expert or a distilled recommendation).
inline double mixed_log_prob(std::span<const double> probs, int action_id, double epsilon) {
  return std::log(epsilon / probs.size() + (1.0 - epsilon) * probs[action_id]);
}

struct Transition {
  std::vector<double> state;
  int action_id = 0;
  double log_prob = 0.0;  // behavior log-prob at selection time
  double reward = 0.0;
  double value = 0.0;  // V(state) at selection time
};

struct TransitionBuffer {
  explicit TransitionBuffer(int capacity = 4) : capacity(capacity) {}

  int capacity;
  std::vector<Transition> items;
  double bootstrap_value = 0.0;  // V of the state after the last transition
  bool has_bootstrap = false;

  bool full() const { return static_cast<int>(items.size()) >= capacity; }

  void push(Transition t) { items.push_back(std::move(t)); }

  void set_bootstrap(double value) {
    bootstrap_value = value;
    has_bootstrap = true;
  }

  void clear() {
    items.clear();
    bootstrap_value = 0.0;
    has_bootstrap = false;
  }
};

struct LossReport {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

namespace detail {

// Discounted return-to-go per transition; the tail bootstraps from the
// stored value of the state following the last transition (0 if absent).
inline std::vector<double> returns_to_go(const TransitionBuffer& buffer, double discount) {
  const size_t n = buffer.items.size();
  std::vector<double> returns(n);
  double tail = buffer.has_bootstrap ? buffer.bootstrap_value : 0.0;
  for (size_t i = n; i-- > 0;) {
    tail = buffer.items[i].reward + discount * tail;
    returns[i] = tail;
  }
  return returns;
}

inline std::vector<double> advantages_of(const TransitionBuffer& buffer,
                                         const std::vector<double>& returns) {
  const size_t n = buffer.items.size();
  std::vector<double> adv(n);
  for (size_t i = 0; i < n; ++i) adv[i] = returns[i] - buffer.items[i].value;
  if (n > 1) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    for (double& a : adv) a -= mean;
  }
  return adv;
}

}  // namespace detail

// Clipped-surrogate loss over the full buffer:
//   L = -mean(min(r A, clip(r, 1-eps, 1+eps) A))
//       + value_coef * mean((G - V)^2) - entropy_coef * mean(H)
// with r the ratio of the current policy to the stored behavior log-prob.
// When grad is non-empty it receives dL/dparams (same layout as params).
inline LossReport ppo_loss(const PolicyNet& net, const TransitionBuffer& buffer,
                           const PpoHyperparams& hyper, std::span<double> grad = {}) {
  const size_t n = buffer.items.size();
  if (n == 0) throw ConfigError("ppo: empty buffer");
  const auto returns = detail::returns_to_go(buffer, hyper.discount);
  const auto advantages = detail::advantages_of(buffer, returns);
  const double inv_n = 1.0 / static_cast<double>(n);
  const int num_actions = net.arch().num_actions;

  LossReport report;
  std::vector<double> dlogits(num_actions);
  for (size_t i = 0; i < n; ++i) {
    const Transition& tr = buffer.items[i];
    const PolicyNet::Forward f = net.forward(tr.state);
    const double ratio = std::exp(std::log(f.probs[tr.action_id]) - tr.log_prob);
    const double adv = advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - hyper.clip_ratio, 1.0 + hyper.clip_ratio);
    const double surr_unclipped = ratio * adv;
    const double surr_clipped = clipped * adv;
    const bool use_unclipped = surr_unclipped <= surr_clipped;
    report.policy += -std::min(surr_unclipped, surr_clipped);

    double entropy = 0.0;
    for (int a = 0; a < num_actions; ++a)
      if (f.probs[a] > 0.0) entropy -= f.probs[a] * std::log(f.probs[a]);
    report.entropy += entropy;

    const double vdiff = f.value - returns[i];
    report.value += vdiff * vdiff;

    if (!grad.empty()) {
      // d(-surrogate)/dratio, zero when the clipped branch is saturated
      double dratio = 0.0;
      if (use_unclipped)
        dratio = -adv;
      else if (ratio > 1.0 - hyper.clip_ratio && ratio < 1.0 + hyper.clip_ratio)
        dratio = -adv;
      for (int a = 0; a < num_actions; ++a) {
        const double indicator = (a == tr.action_id) ? 1.0 : 0.0;
        double g = dratio * ratio * (indicator - f.probs[a]);  // policy term
        const double logp = f.probs[a] > 0.0 ? std::log(f.probs[a]) : 0.0;
        g += hyper.entropy_coef * f.probs[a] * (logp + entropy);  // -coef * dH
        dlogits[a] = g * inv_n;
      }
      const double dvalue = hyper.value_coef * 2.0 * vdiff * inv_n;
      net.backward(f, dlogits, dvalue, grad);
    }
  }

  report.policy *= inv_n;
  report.value *= inv_n;
  report.entropy *= inv_n;
  report.total = report.policy + hyper.value_coef * report.value - hyper.entropy_coef * report.entropy;
  if (!std::isfinite(report.total)) throw NumericError("ppo loss is non-finite");
  return report;
}

// One plain gradient-descent step per epoch on the full buffer. Returns the
// loss report of the last epoch (evaluated before its step).
inline LossReport ppo_update(PolicyNet& net, const TransitionBuffer& buffer,
                             const PpoHyperparams& hyper) {
  LossReport report;
  std::vector<double> grad(net.param_count());
  for (int epoch = 0; epoch < hyper.epochs_per_update; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    report = ppo_loss(net, buffer, hyper, grad);
    auto& params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
      params[i] -= hyper.learning_rate * grad[i];
      if (!std::isfinite(params[i])) throw NumericError("ppo update produced non-finite weights");
    }
  }
  return report;
}

}  // namespace oranslice
