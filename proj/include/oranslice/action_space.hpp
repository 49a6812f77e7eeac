#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <vector>

#include "oranslice/errors.hpp"

namespace oranslice {

// A PRB share vector: one fraction of total capacity per slice, summing to 1.
struct Allocation {
  std::vector<double> shares;
};

// Squared Euclidean distance between share vectors.
inline double share_distance_sq(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

// The discrete action set: every share vector on the (min_share, granularity)
// grid with shares summing to 1, sorted ascending lexicographically. The
// position in the list is the action id.
class ActionSpace {
 public:
  static ActionSpace enumerate(int num_slices, double granularity, double min_share) {
    if (num_slices < 2) throw ConfigError("action space needs at least 2 slices");
    if (!(granularity > 0.0)) throw ConfigError("action granularity must be > 0");
    if (!(min_share >= 0.0)) throw ConfigError("min_share must be >= 0");
    const double leftover = 1.0 - num_slices * min_share;
    if (leftover < -1e-9)
      throw ConfigError("action space infeasible: min_share * num_slices > 1");
    const double steps = leftover / granularity;
    const int total_steps = static_cast<int>(std::llround(steps));
    if (std::abs(steps - total_steps) > 1e-9)
      throw ConfigError("granularity must divide (1 - num_slices * min_share) evenly");

    ActionSpace space;
    space.num_slices_ = num_slices;
    space.granularity_ = granularity;
    space.min_share_ = min_share;
    std::vector<int> ticks(num_slices, 0);
    space.emit(ticks, 0, total_steps);
    if (space.actions_.empty()) throw ConfigError("action space is empty");
    return space;
  }

  size_t size() const { return actions_.size(); }
  const Allocation& at(size_t id) const { return actions_[id]; }
  std::span<const Allocation> actions() const { return actions_; }
  int num_slices() const { return num_slices_; }

  // Nearest action to an arbitrary share vector; ties resolve to the lowest
  // action id, i.e. the lexicographically smallest allocation.
  int nearest(std::span<const double> target) const {
    int best = 0;
    double best_d = share_distance_sq(actions_[0].shares, target);
    for (size_t i = 1; i < actions_.size(); ++i) {
      const double d = share_distance_sq(actions_[i].shares, target);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  // Stable FNV-1a hash of the ordered allocation list. Stored with trained
  // policies so action ids can be checked against the space they index.
  uint64_t hash() const {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const char* s) {
      for (; *s; ++s) {
        h ^= static_cast<unsigned char>(*s);
        h *= 0x100000001B3ULL;
      }
    };
    char buf[64];
    std::snprintf(buf, sizeof(buf), "S=%d;", num_slices_);
    mix(buf);
    for (const Allocation& a : actions_) {
      for (double v : a.shares) {
        std::snprintf(buf, sizeof(buf), "%.12g,", v);
        mix(buf);
      }
      mix("|");
    }
    return h;
  }

 private:
  void emit(std::vector<int>& ticks, int pos, int remaining) {
    if (pos == num_slices_ - 1) {
      ticks[pos] = remaining;
      Allocation a;
      a.shares.resize(num_slices_);
      for (int s = 0; s < num_slices_; ++s) a.shares[s] = min_share_ + ticks[s] * granularity_;
      actions_.push_back(std::move(a));
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      ticks[pos] = k;
      emit(ticks, pos + 1, remaining - k);
    }
  }

  std::vector<Allocation> actions_;
  int num_slices_ = 0;
  double granularity_ = 0.0;
  double min_share_ = 0.0;
};

}  // namespace oranslice
