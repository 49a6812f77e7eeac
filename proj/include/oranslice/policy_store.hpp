#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oranslice/errors.hpp"
#include "oranslice/policy.hpp"

namespace oranslice {

inline constexpr int kPolicyFormatVersion = 1;

// A serializable trained policy plus the context it belongs to. Weights are
// stored as 17-significant-digit decimals, which round-trips float64 exactly.
struct PolicyRecord {
  int format_version = kPolicyFormatVersion;
  std::string context_key;
  NetArchitecture arch;
  uint64_t action_space_hash = 0;
  std::vector<double> weights;
  int64_t training_steps = 0;
  double final_avg_reward = 0.0;
  std::string created_at;
  PolicyRole role = PolicyRole::expert;

  void validate() const {
    if (weights.size() != arch.param_count())
      throw PolicyStoreError("policy record: weight count " + std::to_string(weights.size()) +
                             " does not match architecture (" +
                             std::to_string(arch.param_count()) + " expected)");
  }

  PolicyNet to_net() const {
    PolicyNet net(arch, role);
    net.params() = weights;
    return net;
  }
};

namespace detail {

inline void check_key(const std::string& key) {
  if (key.empty()) throw PolicyStoreError("policy context key must not be empty");
  if (key.front() == '/' || key.find("..") != std::string::npos)
    throw PolicyStoreError("policy context key must be a relative path without '..': " + key);
}

inline std::filesystem::path key_path(const std::filesystem::path& dir, const std::string& key) {
  check_key(key);
  return dir / (key + ".policy");
}

inline size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<size_t> row(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    size_t prev = row[0];
    row[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t cur = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
      prev = cur;
    }
  }
  return row[b.size()];
}

}  // namespace detail

// All context keys stored under dir, sorted.
inline std::vector<std::string> list_policy_keys(const std::filesystem::path& dir) {
  std::vector<std::string> keys;
  if (!std::filesystem::exists(dir)) return keys;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".policy") continue;
    std::string rel = std::filesystem::relative(entry.path(), dir).generic_string();
    rel.erase(rel.size() - std::string(".policy").size());
    keys.push_back(std::move(rel));
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// Writes one policy file under dir, via temp-file-plus-rename. Refuses to
// overwrite an existing key unless asked to.
inline std::filesystem::path save_policy(const std::filesystem::path& dir,
                                         const PolicyRecord& record, bool overwrite = false) {
  record.validate();
  const auto path = detail::key_path(dir, record.context_key);
  if (!overwrite && std::filesystem::exists(path))
    throw PolicyStoreError("policy already exists (pass overwrite to replace): " + path.string());
  std::filesystem::create_directories(path.parent_path());

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw PolicyStoreError("cannot write policy file: " + tmp);
    out << "oranslice-policy v" << record.format_version << "\n";
    out << "context_key: " << record.context_key << "\n";
    out << "role: " << (record.role == PolicyRole::expert ? "expert" : "learner") << "\n";
    out << "input_dim: " << record.arch.input_dim << "\n";
    out << "hidden:";
    for (int h : record.arch.hidden) out << ' ' << h;
    out << "\n";
    out << "num_actions: " << record.arch.num_actions << "\n";
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(record.action_space_hash));
    out << "action_space_hash: " << hash_buf << "\n";
    out << "training_steps: " << record.training_steps << "\n";
    char num_buf[64];
    std::snprintf(num_buf, sizeof(num_buf), "%.17g", record.final_avg_reward);
    out << "final_avg_reward: " << num_buf << "\n";
    out << "created_at: " << record.created_at << "\n";
    out << "weights: " << record.weights.size() << "\n";
    for (double w : record.weights) {
      std::snprintf(num_buf, sizeof(num_buf), "%.17g", w);
      out << num_buf << "\n";
    }
    if (!out) throw PolicyStoreError("write failure on policy file: " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return path;
}

// Loads and validates a policy. When expected_arch / expected_hash are given
// (the deploying run's config), mismatches are refused so stored action ids
// can never silently index a different action space.
inline PolicyRecord load_policy(const std::filesystem::path& dir, const std::string& context_key,
                                const std::optional<NetArchitecture>& expected_arch = std::nullopt,
                                std::optional<uint64_t> expected_hash = std::nullopt) {
  const auto path = detail::key_path(dir, context_key);
  if (!std::filesystem::exists(path)) {
    auto keys = list_policy_keys(dir);
    std::sort(keys.begin(), keys.end(), [&](const std::string& a, const std::string& b) {
      return detail::edit_distance(a, context_key) < detail::edit_distance(b, context_key);
    });
    std::ostringstream msg;
    msg << "policy key not found: " << context_key << " (dir " << dir.string() << ")";
    if (!keys.empty()) {
      msg << "; nearest keys:";
      for (size_t i = 0; i < std::min<size_t>(3, keys.size()); ++i) msg << ' ' << keys[i];
    } else {
      msg << "; directory has no policies";
    }
    throw PolicyStoreError(msg.str());
  }

  std::ifstream in(path);
  if (!in) throw PolicyStoreError("cannot read policy file: " + path.string());
  PolicyRecord record;
  record.role = PolicyRole::expert;

  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw PolicyStoreError("truncated policy file (" + std::string(what) + "): " + path.string());
    return line;
  };
  auto value_of = [&](const std::string& l, const char* field) {
    const std::string prefix = std::string(field) + ":";
    if (l.rfind(prefix, 0) != 0)
      throw PolicyStoreError("policy file missing field '" + std::string(field) +
                             "': " + path.string());
    std::string v = l.substr(prefix.size());
    const auto start = v.find_first_not_of(' ');
    return start == std::string::npos ? std::string() : v.substr(start);
  };

  next_line("magic");
  if (line.rfind("oranslice-policy v", 0) != 0)
    throw PolicyStoreError("not a policy file: " + path.string());
  record.format_version = std::stoi(line.substr(std::string("oranslice-policy v").size()));
  if (record.format_version != kPolicyFormatVersion)
    throw PolicyStoreError("unsupported policy format version " +
                           std::to_string(record.format_version) + " in " + path.string());

  record.context_key = value_of(next_line("context_key"), "context_key");
  const std::string role = value_of(next_line("role"), "role");
  record.role = role == "learner" ? PolicyRole::learner : PolicyRole::expert;
  record.arch.input_dim = std::stoi(value_of(next_line("input_dim"), "input_dim"));
  {
    std::istringstream hs(value_of(next_line("hidden"), "hidden"));
    int h = 0;
    while (hs >> h) record.arch.hidden.push_back(h);
  }
  record.arch.num_actions = std::stoi(value_of(next_line("num_actions"), "num_actions"));
  record.action_space_hash =
      std::stoull(value_of(next_line("action_space_hash"), "action_space_hash"), nullptr, 16);
  record.training_steps = std::stoll(value_of(next_line("training_steps"), "training_steps"));
  record.final_avg_reward = std::stod(value_of(next_line("final_avg_reward"), "final_avg_reward"));
  record.created_at = value_of(next_line("created_at"), "created_at");
  const size_t count = std::stoull(value_of(next_line("weights"), "weights"));
  record.weights.reserve(count);
  for (size_t i = 0; i < count; ++i) record.weights.push_back(std::stod(next_line("weight")));
  record.validate();

  if (expected_arch && !(record.arch == *expected_arch))
    throw PolicyStoreError("policy architecture mismatch for key " + context_key +
                           " (trained for a different network or action count)");
  if (expected_hash && record.action_space_hash != *expected_hash)
    throw PolicyStoreError("policy action-space hash mismatch for key " + context_key +
                           ": expert was trained against a different action space");
  return record;
}

// Exact-match context resolution; anything smarter is out of scope here.
inline std::string resolve_context(const std::filesystem::path& dir,
                                   const std::string& requested_key) {
  detail::check_key(requested_key);
  if (std::filesystem::exists(detail::key_path(dir, requested_key))) return requested_key;
  const auto keys = list_policy_keys(dir);
  std::ostringstream msg;
  msg << "no policy matches context '" << requested_key << "'; available keys:";
  if (keys.empty())
    msg << " (none)";
  else
    for (const auto& k : keys) msg << ' ' << k;
  throw PolicyStoreError(msg.str());
}

}  // namespace oranslice
