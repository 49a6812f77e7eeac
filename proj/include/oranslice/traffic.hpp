#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "oranslice/errors.hpp"
#include "oranslice/rng.hpp"

namespace oranslice {

// One queued downlink request.
struct Packet {
  int64_t arrival_slot = 0;  // ms slot index
  int64_t size = 0;          // bytes
  int64_t remaining = 0;     // bytes still to serve
  int user_id = 0;
  int slice_id = 0;
};

struct TraceEntry {
  double time_ms = 0.0;
  int64_t size_bytes = 0;
};

// Per-user packet timeline; timestamps non-decreasing, sizes >= 1.
struct Trace {
  std::vector<TraceEntry> entries;
};

// CSV with header "time_ms,size_bytes", one packet per row.
inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("trace file not readable: " + path);
  std::string line;
  if (!std::getline(in, line)) throw TraceError("trace file empty (missing header): " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_ms,size_bytes")
    throw TraceError("trace header must be \"time_ms,size_bytes\", got \"" + line + "\" in " + path);

  Trace trace;
  int line_no = 1;
  double prev_time = -1.0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw TraceError("trace parse error at line " + std::to_string(line_no) + ": missing comma");
    TraceEntry entry;
    try {
      size_t used = 0;
      entry.time_ms = std::stod(line.substr(0, comma), &used);
      entry.size_bytes = std::stoll(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw TraceError("trace parse error at line " + std::to_string(line_no) + ": \"" + line + "\"");
    }
    if (!(entry.time_ms >= 0.0) || !std::isfinite(entry.time_ms))
      throw TraceError("trace time must be finite and >= 0 at line " + std::to_string(line_no));
    if (entry.size_bytes < 1)
      throw TraceError("trace size must be >= 1 byte at line " + std::to_string(line_no));
    if (entry.time_ms < prev_time)
      throw TraceError("trace timestamps must be non-decreasing; violation at line " +
                       std::to_string(line_no));
    prev_time = entry.time_ms;
    trace.entries.push_back(entry);
  }
  return trace;
}

// E[min(X, max)] for Pareto(shape, scale), clamp-at-max convention.
inline double clamped_pareto_mean(double shape, double scale, double max_value) {
  if (scale >= max_value) return max_value;
  return scale + scale / (shape - 1.0) * (1.0 - std::pow(scale / max_value, shape - 1.0));
}

// Finds the Pareto scale x_m such that E[min(X, max_value)] == target_mean,
// by bisection on x_m in (0, target_mean]. The clamped mean is continuous and
// strictly increasing in x_m, so the root is unique.
inline double calibrate_truncated_pareto(double shape, double target_mean, double max_value) {
  if (!(shape > 1.0)) throw CalibrationError("pareto shape must be > 1");
  if (!(target_mean > 0.0) || !(target_mean < max_value))
    throw CalibrationError("pareto calibration infeasible: mean must satisfy 0 < mean < max (mean=" +
                           std::to_string(target_mean) + ", max=" + std::to_string(max_value) + ")");
  double lo = 0.0;
  double hi = target_mean;  // E(target_mean) >= target_mean since E(x) >= x
  if (clamped_pareto_mean(shape, hi, max_value) < target_mean)
    throw CalibrationError("pareto calibration: no root in bracket");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (clamped_pareto_mean(shape, mid, max_value) < target_mean)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15 * target_mean) break;
  }
  const double scale = 0.5 * (lo + hi);
  if (std::abs(clamped_pareto_mean(shape, scale, max_value) - target_mean) > 1e-9)
    throw CalibrationError("pareto calibration did not converge to 1e-9");
  return scale;
}

// X = scale * U^(-1/shape) with U uniform (0,1], clamped at max_value.
inline double sample_truncated_pareto(Rng& rng, double shape, double scale, double max_value) {
  const double u = rng.uniform_open_closed();
  const double x = scale * std::pow(u, -1.0 / shape);
  return std::min(x, max_value);
}

// min(Poisson(mean), max).
inline int sample_user_count(Rng& rng, double mean, int max) {
  return std::min(rng.poisson(mean), max);
}

// Exact mean of min(Poisson(mean), max), by pmf summation. Test oracle helper.
inline double clamped_poisson_mean(double mean, int max) {
  double p = std::exp(-mean);
  double below_sum = 0.0;  // sum_{k<max} k p_k
  double cdf = 0.0;        // sum_{k<max} p_k
  for (int k = 0; k < max; ++k) {
    below_sum += k * p;
    cdf += p;
    p *= mean / (k + 1);
  }
  return below_sum + max * (1.0 - cdf);
}

enum class TrafficKind { video, vonr, vr_synthetic, vr_trace };

struct UserCountModel {
  double mean = 1.0;
  int max = 1;
};

// Per-slice arrival model (Table-style: interarrival + size + user count).
struct TrafficModel {
  TrafficKind kind = TrafficKind::video;
  UserCountModel users;

  // video: truncated Pareto interarrival and size
  double pareto_shape = 1.2;
  double interarrival_mean_ms = 6.0;
  double interarrival_max_ms = 12.5;
  double interarrival_scale_ms = 0.0;  // calibrated
  double size_mean_b = 100.0;
  double size_max_b = 250.0;
  double size_scale_b = 0.0;  // calibrated

  // vonr: uniform interarrival, constant size
  double uniform_min_ms = 0.0;
  double uniform_max_ms = 160.0;
  double constant_size_b = 40.0;

  // vr_synthetic: fixed frame period, truncated-Gaussian frame size
  double frame_period_ms = 13.89;
  double frame_mean_b = 4000.0;
  double frame_sigma_b = 1000.0;
  double frame_min_b = 500.0;
  double frame_max_b = 8000.0;

  // vr_trace
  std::shared_ptr<const Trace> trace;

  static TrafficModel video(double mean_ms, double max_ms, double mean_b, double max_b,
                            UserCountModel users, double shape = 1.2) {
    TrafficModel m;
    m.kind = TrafficKind::video;
    m.users = users;
    m.pareto_shape = shape;
    m.interarrival_mean_ms = mean_ms;
    m.interarrival_max_ms = max_ms;
    m.interarrival_scale_ms = calibrate_truncated_pareto(shape, mean_ms, max_ms);
    m.size_mean_b = mean_b;
    m.size_max_b = max_b;
    m.size_scale_b = calibrate_truncated_pareto(shape, mean_b, max_b);
    m.validate();
    return m;
  }

  static TrafficModel vonr(double min_ms, double max_ms, double size_b, UserCountModel users) {
    TrafficModel m;
    m.kind = TrafficKind::vonr;
    m.users = users;
    m.uniform_min_ms = min_ms;
    m.uniform_max_ms = max_ms;
    m.constant_size_b = size_b;
    m.validate();
    return m;
  }

  static TrafficModel vr_synthetic(double period_ms, double mean_b, double sigma_b, double min_b,
                                   double max_b, UserCountModel users) {
    TrafficModel m;
    m.kind = TrafficKind::vr_synthetic;
    m.users = users;
    m.frame_period_ms = period_ms;
    m.frame_mean_b = mean_b;
    m.frame_sigma_b = sigma_b;
    m.frame_min_b = min_b;
    m.frame_max_b = max_b;
    m.validate();
    return m;
  }

  static TrafficModel vr_trace(std::shared_ptr<const Trace> trace, UserCountModel users) {
    TrafficModel m;
    m.kind = TrafficKind::vr_trace;
    m.users = users;
    m.trace = std::move(trace);
    m.validate();
    return m;
  }

  void validate() const {
    if (users.max < 1) throw ConfigError("traffic: user_count.max must be >= 1");
    if (!(users.mean > 0.0)) throw ConfigError("traffic: user_count.mean must be > 0");
    switch (kind) {
      case TrafficKind::video:
        if (!(interarrival_mean_ms > 0.0) || !(size_mean_b > 0.0))
          throw ConfigError("traffic: means must be > 0");
        if (interarrival_max_ms < interarrival_mean_ms || size_max_b < size_mean_b)
          throw ConfigError("traffic: max must be >= mean for truncated distributions");
        break;
      case TrafficKind::vonr:
        if (!(uniform_max_ms > uniform_min_ms) || uniform_min_ms < 0.0)
          throw ConfigError("traffic: uniform interarrival needs 0 <= min < max");
        if (constant_size_b < 1.0) throw ConfigError("traffic: constant size must be >= 1 B");
        break;
      case TrafficKind::vr_synthetic:
        if (!(frame_period_ms > 0.0) || !(frame_mean_b > 0.0))
          throw ConfigError("traffic: frame period and mean size must be > 0");
        if (!(frame_min_b >= 1.0) || !(frame_max_b >= frame_min_b))
          throw ConfigError("traffic: frame size clip range invalid");
        break;
      case TrafficKind::vr_trace:
        if (!trace) throw ConfigError("traffic: vr_trace model requires a trace");
        break;
    }
  }
};

// Per-user generator state. Local time only advances while the user is
// active, so pausing a stream freezes its residual interarrival in place.
struct StreamState {
  double local_time_ms = 0.0;
  double next_arrival_ms = -1.0;  // < 0 until the first gap is drawn
  size_t trace_cursor = 0;
  double trace_offset_ms = 0.0;
  bool wrap_logged = false;

  void reset() { *this = StreamState{}; }
};

namespace detail {

inline double draw_interarrival(const TrafficModel& m, Rng& rng) {
  switch (m.kind) {
    case TrafficKind::video:
      return sample_truncated_pareto(rng, m.pareto_shape, m.interarrival_scale_ms,
                                     m.interarrival_max_ms);
    case TrafficKind::vonr:
      return rng.uniform(m.uniform_min_ms, m.uniform_max_ms);
    case TrafficKind::vr_synthetic:
      return m.frame_period_ms;
    case TrafficKind::vr_trace:
      break;
  }
  return 0.0;
}

inline int64_t draw_size(const TrafficModel& m, Rng& rng) {
  double size = 0.0;
  switch (m.kind) {
    case TrafficKind::video:
      size = sample_truncated_pareto(rng, m.pareto_shape, m.size_scale_b, m.size_max_b);
      break;
    case TrafficKind::vonr:
      size = m.constant_size_b;
      break;
    case TrafficKind::vr_synthetic:
      size = std::clamp(rng.normal(m.frame_mean_b, m.frame_sigma_b), m.frame_min_b, m.frame_max_b);
      break;
    case TrafficKind::vr_trace:
      break;
  }
  return std::max<int64_t>(1, std::llround(size));
}

}  // namespace detail

// Emits this window's packets for the first `active_users` streams. Stream
// state persists across windows; paused streams are left untouched.
// arrival_slot = window_start_slot + floor(local arrival time - window base).
inline std::vector<Packet> generate_window_arrivals(const TrafficModel& model, int active_users,
                                                    int64_t window_start_slot, int window_len_slots,
                                                    std::span<StreamState> streams, Rng& rng,
                                                    int slice_id) {
  if (window_len_slots < 1) throw ConfigError("window_len_slots must be >= 1");
  std::vector<Packet> packets;
  const double len = static_cast<double>(window_len_slots);
  const int n = std::min<int>(active_users, static_cast<int>(streams.size()));
  for (int u = 0; u < n; ++u) {
    StreamState& st = streams[u];
    const double window_end = st.local_time_ms + len;
    if (model.kind == TrafficKind::vr_trace) {
      const auto& entries = model.trace->entries;
      if (!entries.empty()) {
        while (true) {
          if (st.trace_cursor >= entries.size()) {
            if (!st.wrap_logged) {
              std::cerr << "[oranslice] trace exhausted for slice " << slice_id << " user " << u
                        << "; wrapping to start\n";
              st.wrap_logged = true;
            }
            st.trace_cursor = 0;
            st.trace_offset_ms += std::max(entries.back().time_ms, 1.0);
          }
          const TraceEntry& e = entries[st.trace_cursor];
          const double t = e.time_ms + st.trace_offset_ms;
          if (t >= window_end) break;
          // Entries landing before the window base (possible right after a
          // wrap) arrive at the window start.
          const double offset = std::max(0.0, t - st.local_time_ms);
          Packet p;
          p.arrival_slot = window_start_slot + static_cast<int64_t>(std::floor(offset));
          p.size = p.remaining = e.size_bytes;
          p.user_id = u;
          p.slice_id = slice_id;
          packets.push_back(p);
          ++st.trace_cursor;
        }
      }
    } else {
      if (st.next_arrival_ms < 0.0) st.next_arrival_ms = st.local_time_ms + detail::draw_interarrival(model, rng);
      while (st.next_arrival_ms < window_end) {
        Packet p;
        p.arrival_slot =
            window_start_slot + static_cast<int64_t>(std::floor(st.next_arrival_ms - st.local_time_ms));
        p.size = p.remaining = detail::draw_size(model, rng);
        p.user_id = u;
        p.slice_id = slice_id;
        packets.push_back(p);
        st.next_arrival_ms += detail::draw_interarrival(model, rng);
      }
    }
    st.local_time_ms = window_end;
  }
  return packets;
}

}  // namespace oranslice
