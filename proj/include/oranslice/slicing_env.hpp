#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "oranslice/action_space.hpp"
#include "oranslice/errors.hpp"
#include "oranslice/rng.hpp"
#include "oranslice/traffic.hpp"

namespace oranslice {

// Per-slice SLA constants and traffic model. c1 is the sigmoid slope (1/ms),
// c2 the acceptable-latency inflection point (ms).
struct SliceSpec {
  int slice_id = 0;
  std::string name;
  double weight = 0.0;
  double c1 = 1.0;
  double c2 = 1.0;
  TrafficModel traffic;
};

struct EnvConfig {
  std::vector<SliceSpec> slices;
  double total_capacity = 15000.0;  // bytes per 1 ms slot across all PRBs
  int window_len_slots = 100;
  double action_granularity = 0.1;
  double min_share = 0.1;
  double departure_age_factor = 2.0;
  int departure_count = 5;

  int num_slices() const { return static_cast<int>(slices.size()); }

  double weight_sum() const {
    double w = 0.0;
    for (const auto& s : slices) w += s.weight;
    return w;
  }

  void validate() const {
    if (slices.size() < 2) throw ConfigError("env: at least 2 slices required");
    if (window_len_slots < 1) throw ConfigError("env: window_len_slots must be >= 1");
    if (!(total_capacity > 0.0)) throw ConfigError("env: total_capacity must be > 0");
    if (std::abs(weight_sum() - 1.0) > 1e-9)
      throw ConfigError("env: slice weights must sum to 1");
    for (const auto& s : slices) {
      if (!(s.weight > 0.0)) throw ConfigError("env: slice weight must be > 0");
      if (!(s.c1 > 0.0) || !(s.c2 > 0.0)) throw ConfigError("env: c1 and c2 must be > 0");
      s.traffic.validate();
    }
    // Also checks min_share * S <= 1 and grid divisibility.
    ActionSpace::enumerate(num_slices(), action_granularity, min_share);
  }
};

// Per-slice traffic contribution, Sum = 1 when any demand exists.
struct StateVector {
  std::vector<double> kappa;
};

inline StateVector compute_state(std::span<const double> demands) {
  StateVector st;
  st.kappa.assign(demands.begin(), demands.end());
  double total = 0.0;
  for (double d : demands) total += d;
  if (total <= 0.0) {
    for (double& k : st.kappa) k = 0.0;
    return st;
  }
  for (double& k : st.kappa) k /= total;
  return st;
}

struct SliceKpis {
  double avg_latency_ms = 0.0;
  int64_t packets_served = 0;
  int64_t packets_pending = 0;
  int64_t bytes_served = 0;
  int64_t bytes_pending = 0;
  int64_t demand_bytes = 0;    // bytes arrived in this window
  int64_t packets_arrived = 0;
  int64_t bytes_departed = 0;  // dropped with departing users (filled by the env)
  int64_t users_departed = 0;
};

struct WindowKpis {
  std::vector<SliceKpis> slices;
  double reward = 0.0;
};

// R = sum_s w_s / (1 + exp(c1_s * (l_s - c2_s))).
inline double compute_reward(std::span<const double> latencies, std::span<const SliceSpec> slices) {
  double r = 0.0;
  for (size_t s = 0; s < slices.size(); ++s)
    r += slices[s].weight / (1.0 + std::exp(slices[s].c1 * (latencies[s] - slices[s].c2)));
  return r;
}

// Per-slot byte budget for a slice share. The epsilon absorbs the binary
// representation of grid shares (e.g. 0.7 * 15000 must floor to 10500).
inline int64_t slice_slot_budget(double share, double total_capacity) {
  return static_cast<int64_t>(std::floor(share * total_capacity + 1e-9));
}

// Queue and generator state for one slice.
struct SliceRuntime {
  std::vector<std::deque<Packet>> user_queues;  // FIFO per user
  std::vector<StreamState> streams;
  int rr_cursor = 0;

  explicit SliceRuntime(int max_users = 0) : user_queues(max_users), streams(max_users) {}

  bool has_backlog() const {
    for (const auto& q : user_queues)
      if (!q.empty()) return true;
    return false;
  }

  int64_t pending_bytes() const {
    int64_t b = 0;
    for (const auto& q : user_queues)
      for (const Packet& p : q) b += p.remaining;
    return b;
  }

  int64_t pending_packets() const {
    int64_t n = 0;
    for (const auto& q : user_queues) n += static_cast<int64_t>(q.size());
    return n;
  }
};

// Runs one slicing window of 1 ms slots: arrivals enter their user queue at
// their slot, then each slice serves round-robin across users. One head-of-
// line packet is served per visit; leftover budget rolls to the next user in
// cyclic order; partial service persists on the packet and keeps the cursor
// in place. A packet completing in slot t has latency (t - arrival_slot + 1).
// l_s averages completed-packet latencies with the ages of packets still
// pending at window end; a slice with no packets reports l_s = 0.
inline WindowKpis simulate_window(std::vector<SliceRuntime>& runtime,
                                  std::span<const std::vector<Packet>> arrivals_per_slice,
                                  const Allocation& allocation, const EnvConfig& cfg,
                                  int64_t window_start_slot) {
  const int num_slices = cfg.num_slices();
  const int window_len = cfg.window_len_slots;
  WindowKpis kpis;
  kpis.slices.resize(num_slices);

  std::vector<size_t> next_arrival(num_slices, 0);
  std::vector<double> latency_sum(num_slices, 0.0);
  std::vector<int64_t> latency_count(num_slices, 0);
  std::vector<int64_t> budgets(num_slices);
  for (int s = 0; s < num_slices; ++s)
    budgets[s] = slice_slot_budget(allocation.shares[s], cfg.total_capacity);

  for (int offset = 0; offset < window_len; ++offset) {
    const int64_t slot = window_start_slot + offset;
    for (int s = 0; s < num_slices; ++s) {
      // Enqueue this slot's arrivals (arrival lists are sorted by slot).
      auto& arrivals = arrivals_per_slice[s];
      auto& rt = runtime[s];
      auto& kp = kpis.slices[s];
      while (next_arrival[s] < arrivals.size() && arrivals[next_arrival[s]].arrival_slot <= slot) {
        const Packet& p = arrivals[next_arrival[s]];
        rt.user_queues[p.user_id].push_back(p);
        kp.demand_bytes += p.size;
        ++kp.packets_arrived;
        ++next_arrival[s];
      }

      const int num_users = static_cast<int>(rt.user_queues.size());
      int64_t budget = budgets[s];
      while (budget > 0) {
        int user = -1;
        for (int step = 0; step < num_users; ++step) {
          const int candidate = (rt.rr_cursor + step) % num_users;
          if (!rt.user_queues[candidate].empty()) {
            user = candidate;
            break;
          }
        }
        if (user < 0) break;
        Packet& pkt = rt.user_queues[user].front();
        const int64_t take = std::min(budget, pkt.remaining);
        pkt.remaining -= take;
        budget -= take;
        kp.bytes_served += take;
        if (pkt.remaining == 0) {
          latency_sum[s] += static_cast<double>(slot - pkt.arrival_slot + 1);
          ++latency_count[s];
          ++kp.packets_served;
          rt.user_queues[user].pop_front();
          rt.rr_cursor = (user + 1) % num_users;
        } else {
          rt.rr_cursor = user;  // resume the partially served packet next slot
        }
      }
    }
  }

  const int64_t window_end = window_start_slot + window_len;
  for (int s = 0; s < num_slices; ++s) {
    auto& kp = kpis.slices[s];
    for (const auto& q : runtime[s].user_queues) {
      for (const Packet& p : q) {
        latency_sum[s] += static_cast<double>(window_end - p.arrival_slot);
        ++latency_count[s];
        ++kp.packets_pending;
        kp.bytes_pending += p.remaining;
      }
    }
    kp.avg_latency_ms = latency_count[s] > 0 ? latency_sum[s] / latency_count[s] : 0.0;
  }
  return kpis;
}

// The slicing environment. One step = one slicing window: sample user
// counts, generate arrivals, schedule, apply departures, derive state and
// reward. Value semantics: copying the object snapshots the whole system,
// which is what the exhaustive-search oracle relies on.
class SlicingEnv {
 public:
  explicit SlicingEnv(EnvConfig cfg)
      : cfg_(std::move(cfg)),
        space_(ActionSpace::enumerate(cfg_.num_slices(), cfg_.action_granularity, cfg_.min_share)) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }
  const ActionSpace& action_space() const { return space_; }

  struct StepResult {
    StateVector state;
    double reward = 0.0;
    WindowKpis kpis;
  };

  // Clears all queues, reseeds every stream, then runs one warm-up window
  // under equal shares and returns its state.
  StateVector reset(uint64_t seed) {
    const int num_slices = cfg_.num_slices();
    runtime_.clear();
    traffic_rngs_.clear();
    for (int s = 0; s < num_slices; ++s) {
      runtime_.emplace_back(cfg_.slices[s].traffic.users.max);
      traffic_rngs_.emplace_back(mix_seed(seed, static_cast<uint64_t>(s)));
    }
    user_rng_.seed(mix_seed(seed, 0x75736572ULL));  // user-count stream
    current_slot_ = 0;
    ready_ = true;

    Allocation equal;
    equal.shares.assign(num_slices, 1.0 / num_slices);
    return run_window(equal).state;
  }

  StepResult step(int action_id) {
    if (!ready_) throw ConfigError("env: step called before reset");
    if (action_id < 0 || static_cast<size_t>(action_id) >= space_.size())
      throw ConfigError("env: action id out of range");
    return run_window(space_.at(action_id));
  }

  int64_t current_slot() const { return current_slot_; }

  // Total bytes still queued; used by the byte-accounting checks.
  int64_t pending_bytes() const {
    int64_t b = 0;
    for (const auto& rt : runtime_) b += rt.pending_bytes();
    return b;
  }

 private:
  StepResult run_window(const Allocation& allocation) {
    const int num_slices = cfg_.num_slices();
    std::vector<std::vector<Packet>> arrivals(num_slices);
    for (int s = 0; s < num_slices; ++s) {
      const TrafficModel& model = cfg_.slices[s].traffic;
      const int active = sample_user_count(user_rng_, model.users.mean, model.users.max);
      arrivals[s] = generate_window_arrivals(model, active, current_slot_, cfg_.window_len_slots,
                                             runtime_[s].streams, traffic_rngs_[s], s);
      std::stable_sort(arrivals[s].begin(), arrivals[s].end(),
                       [](const Packet& a, const Packet& b) { return a.arrival_slot < b.arrival_slot; });
    }

    StepResult result;
    result.kpis = simulate_window(runtime_, arrivals, allocation, cfg_, current_slot_);
    current_slot_ += cfg_.window_len_slots;
    apply_departures(result.kpis);

    std::vector<double> demands(num_slices);
    std::vector<double> latencies(num_slices);
    for (int s = 0; s < num_slices; ++s) {
      demands[s] = static_cast<double>(result.kpis.slices[s].demand_bytes);
      latencies[s] = result.kpis.slices[s].avg_latency_ms;
    }
    result.state = compute_state(demands);
    result.reward = compute_reward(latencies, cfg_.slices);
    result.kpis.reward = result.reward;
    return result;
  }

  // A user leaves when more than departure_count of its pending packets are
  // older than departure_age_factor * c2_s at window end. Its queue is
  // dropped and its stream starts over (a fresh user takes the slot).
  void apply_departures(WindowKpis& kpis) {
    for (int s = 0; s < cfg_.num_slices(); ++s) {
      const double age_limit = cfg_.departure_age_factor * cfg_.slices[s].c2;
      auto& rt = runtime_[s];
      auto& kp = kpis.slices[s];
      for (size_t u = 0; u < rt.user_queues.size(); ++u) {
        auto& queue = rt.user_queues[u];
        int stale = 0;
        for (const Packet& p : queue) {
          if (static_cast<double>(current_slot_ - p.arrival_slot) > age_limit) ++stale;
        }
        if (stale > cfg_.departure_count) {
          for (const Packet& p : queue) {
            kp.bytes_departed += p.remaining;
            --kp.packets_pending;
            kp.bytes_pending -= p.remaining;
          }
          queue.clear();
          rt.streams[u].reset();
          ++kp.users_departed;
        }
      }
    }
  }

  EnvConfig cfg_;
  ActionSpace space_;
  std::vector<SliceRuntime> runtime_;
  std::vector<Rng> traffic_rngs_;
  Rng user_rng_;
  int64_t current_slot_ = 0;
  bool ready_ = false;
};

}  // namespace oranslice
