#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "oranslice/errors.hpp"
#include "oranslice/transfer.hpp"

namespace oranslice {

// Round-trip-exact decimal rendering for CSV output.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MetricsParams {
  int initial_window = 100;         // K: steps averaged into initial_reward
  int convergence_window = 200;     // W: trailing moving-average width
  double convergence_fraction = 0.9;  // kappa_conv: threshold vs oracle average
};

// The four headline metrics of a run plus the action-source tally.
struct RunMetrics {
  double initial_reward = 0.0;
  double reward_variance = 0.0;
  int64_t steps_to_converge = 0;  // == total steps when not converged
  bool converged = false;
  double avg_normalized_reward = 0.0;
  std::array<int64_t, 4> action_source_counts{};  // indexed by ActionSource

  int64_t source_count(ActionSource s) const {
    return action_source_counts[static_cast<size_t>(s)];
  }
};

// Trailing moving average; entry t (0-based) covers rewards [t-W+1 .. t] and
// is only defined from t = W-1 on, earlier entries are NaN.
inline std::vector<double> trailing_moving_average(std::span<const double> values, int window) {
  std::vector<double> out(values.size(), std::nan(""));
  if (window < 1 || values.size() < static_cast<size_t>(window)) return out;
  double sum = 0.0;
  for (size_t t = 0; t < values.size(); ++t) {
    sum += values[t];
    if (t >= static_cast<size_t>(window)) sum -= values[t - window];
    if (t + 1 >= static_cast<size_t>(window)) out[t] = sum / window;
  }
  return out;
}

// Derives RunMetrics from a reward sequence. steps_to_converge is the
// 1-based step at which the trailing-W mean first reaches
// convergence_fraction * oracle_avg and never drops below it again.
inline RunMetrics compute_run_metrics(std::span<const double> rewards, double oracle_avg,
                                      const MetricsParams& params, double weight_sum = 1.0) {
  if (rewards.empty()) throw ConfigError("metrics: empty reward sequence");
  RunMetrics m;

  const size_t k = std::min<size_t>(params.initial_window, rewards.size());
  m.initial_reward = std::accumulate(rewards.begin(), rewards.begin() + k, 0.0) / k;

  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  m.reward_variance = var / rewards.size();
  m.avg_normalized_reward = mean / weight_sum;

  const double threshold = params.convergence_fraction * oracle_avg;
  const auto ma = trailing_moving_average(rewards, params.convergence_window);
  int64_t last_below = -1;
  bool any_defined = false;
  for (size_t t = 0; t < ma.size(); ++t) {
    if (std::isnan(ma[t])) continue;
    any_defined = true;
    if (ma[t] < threshold) last_below = static_cast<int64_t>(t);
  }
  if (any_defined && last_below + 1 < static_cast<int64_t>(ma.size())) {
    m.converged = true;
    m.steps_to_converge =
        std::max<int64_t>(params.convergence_window, last_below + 2);  // 1-based step
  } else {
    m.converged = false;
    m.steps_to_converge = static_cast<int64_t>(rewards.size());
  }
  return m;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) return 0.0;
  auto ranks = [](std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oranslice
