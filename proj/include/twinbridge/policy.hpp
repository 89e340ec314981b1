#pragma once

// Topic classification: glob rules mapping topics to tiers, and the
// allow/deny filter used by discovery.

#include <fnmatch.h>

#include <string>
#include <string_view>
#include <vector>

#include "twinbridge/envelope.hpp"
#include "twinbridge/sim_time.hpp"

namespace twinbridge {

// Shell-style glob. '*' also matches '/', so "/robot*/odom" covers every robot.
inline bool glob_match(const std::string& pattern, const std::string& text) {
  return ::fnmatch(pattern.c_str(), text.c_str(), 0) == 0;
}

inline bool glob_any(const std::vector<std::string>& patterns, const std::string& text) {
  for (const auto& p : patterns)
    if (glob_match(p, text)) return true;
  return false;
}

struct PolicyRule {
  std::string pattern;
  Tier tier;
};

class PriorityPolicy {
 public:
  PriorityPolicy() = default;
  PriorityPolicy(std::vector<PolicyRule> rules, Tier default_tier)
      : rules_(std::move(rules)), default_tier_(default_tier) {}

  // First matching rule wins.
  Tier classify(const std::string& topic) const {
    for (const auto& r : rules_)
      if (glob_match(r.pattern, topic)) return r.tier;
    return default_tier_;
  }

  void add_rule(std::string pattern, Tier tier) { rules_.push_back({std::move(pattern), tier}); }
  const std::vector<PolicyRule>& rules() const { return rules_; }
  Tier default_tier() const { return default_tier_; }
  void set_default_tier(Tier t) { default_tier_ = t; }

 private:
  std::vector<PolicyRule> rules_;
  Tier default_tier_ = Tier::Standard;
};

struct DiscoveryConfig {
  bool enabled = true;
  SimDuration period = std::chrono::milliseconds(500);
  std::vector<std::string> allow;  // empty: everything allowed
  std::vector<std::string> deny;

  void validate() const {
    if (enabled && period <= SimDuration::zero())
      throw std::invalid_argument("DiscoveryConfig: period must be > 0 when enabled");
  }

  bool admits(const std::string& topic) const {
    if (!allow.empty() && !glob_any(allow, topic)) return false;
    return !glob_any(deny, topic);
  }
};

}  // namespace twinbridge
