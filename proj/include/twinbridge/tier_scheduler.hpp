#pragma once

// Per-tier send queues and the per-tick scheduler that picks what goes on
// the wire.
//
// Each tick has a byte budget B. Every non-empty tier first gets its
// reserved share (bulk always at least the starvation guard, 5% of B). The
// rest of B goes to the highest non-empty tier. A tier sends while its head
// frame fits its credit; a tier that empties passes its unused credit down,
// a tier that stays blocked keeps it for the next tick (so frames larger
// than one tick's credit still go out eventually).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "twinbridge/envelope.hpp"

namespace twinbridge {

struct QueuedFrame {
  Envelope envelope;
  std::size_t cost = 0;  // budget bytes charged when scheduled
  SimDuration enqueued_at{0};
};

enum class SchedulerMode { Prioritized, Fifo };

class TierQueues {
 public:
  TierQueues() = default;
  TierQueues(SchedulerMode mode, std::size_t byte_limit_per_queue)
      : mode_(mode), byte_limit_(byte_limit_per_queue) {}

  SchedulerMode mode() const { return mode_; }

  // In FIFO mode every tier shares queue 0.
  std::size_t index(Tier t) const {
    return mode_ == SchedulerMode::Fifo ? 0 : static_cast<std::size_t>(t);
  }

  // Drop-oldest once the queue holds more than the byte limit. Returns the
  // frames that were dropped to make room.
  std::vector<QueuedFrame> push(QueuedFrame f) {
    const std::size_t i = index(f.envelope.tier);
    bytes_[i] += f.cost;
    queues_[i].push_back(std::move(f));
    std::vector<QueuedFrame> dropped;
    while (byte_limit_ > 0 && bytes_[i] > byte_limit_ && queues_[i].size() > 1) {
      bytes_[i] -= queues_[i].front().cost;
      dropped.push_back(std::move(queues_[i].front()));
      queues_[i].pop_front();
    }
    return dropped;
  }

  // Puts frames back at the head in their original order; no limit applies.
  void push_front(std::vector<QueuedFrame> frames) {
    for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
      const std::size_t i = index(it->envelope.tier);
      bytes_[i] += it->cost;
      queues_[i].push_front(std::move(*it));
    }
  }

  std::deque<QueuedFrame>& queue(std::size_t i) { return queues_[i]; }
  const std::deque<QueuedFrame>& queue(std::size_t i) const { return queues_[i]; }
  bool empty(std::size_t i) const { return queues_[i].empty(); }
  bool empty() const {
    return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
  }
  std::size_t bytes(std::size_t i) const { return bytes_[i]; }
  std::size_t frames() const {
    std::size_t n = 0;
    for (const auto& q : queues_) n += q.size();
    return n;
  }

  QueuedFrame pop(std::size_t i) {
    QueuedFrame f = std::move(queues_[i].front());
    queues_[i].pop_front();
    bytes_[i] -= f.cost;
    return f;
  }

 private:
  SchedulerMode mode_ = SchedulerMode::Prioritized;
  std::size_t byte_limit_ = 0;  // 0: unbounded
  std::array<std::deque<QueuedFrame>, kTierCount> queues_;
  std::array<std::size_t, kTierCount> bytes_{};
};

struct SchedulerConfig {
  std::array<double, kTierCount> shares{0.0, 0.0, 0.0};  // reserved fraction of B per tier
  double bulk_guard = 0.05;

  void validate() const {
    double sum = 0.0;
    for (double s : shares) {
      if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("SchedulerConfig: share outside [0,1]");
      sum += s;
    }
    if (sum > 1.0 + 1e-9) throw std::invalid_argument("SchedulerConfig: shares sum above 1");
    if (!(bulk_guard >= 0.0 && bulk_guard <= 1.0))
      throw std::invalid_argument("SchedulerConfig: bulk guard outside [0,1]");
  }
};

class TierScheduler {
 public:
  explicit TierScheduler(SchedulerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const SchedulerConfig& config() const { return cfg_; }

  std::vector<QueuedFrame> schedule(TierQueues& q, std::size_t budget) {
    if (budget == 0) throw std::invalid_argument("tier_scheduler: budget must be > 0");
    std::vector<QueuedFrame> out;
    if (q.mode() == SchedulerMode::Fifo) {
      drain(q, 0, static_cast<double>(budget), out);
      return out;
    }

    const double b = static_cast<double>(budget);
    std::array<double, kTierCount> reserve{};
    double reserved = 0.0;
    for (std::size_t t = 0; t < kTierCount; ++t) {
      if (q.empty(t)) continue;
      double share = cfg_.shares[t];
      if (t == static_cast<std::size_t>(Tier::Bulk)) share = std::max(share, cfg_.bulk_guard);
      reserve[t] = std::floor(share * b);
      reserved += reserve[t];
    }
    double spare = std::max(0.0, b - reserved);
    for (std::size_t t = 0; t < kTierCount; ++t) {
      const double grant = reserve[t] + spare;
      spare = drain(q, t, grant, out);
    }
    return out;
  }

  double credit(std::size_t i) const { return credit_[i]; }

 private:
  // Spends credit on queue i; returns what is left to pass down (zero if
  // the queue is still backlogged).
  double drain(TierQueues& q, std::size_t i, double grant, std::vector<QueuedFrame>& out) {
    credit_[i] += grant;
    while (!q.empty(i) && static_cast<double>(q.queue(i).front().cost) <= credit_[i]) {
      credit_[i] -= static_cast<double>(q.queue(i).front().cost);
      out.push_back(q.pop(i));
    }
    if (!q.empty(i)) return 0.0;
    const double left = credit_[i];
    credit_[i] = 0.0;
    return left;
  }

  SchedulerConfig cfg_;
  std::array<double, kTierCount> credit_{};
};

// Single-tick scheduling with no carried credit.
inline std::vector<QueuedFrame> tier_scheduler(TierQueues& queues, std::size_t budget,
                                               SchedulerConfig cfg = {}) {
  TierScheduler s(cfg);
  return s.schedule(queues, budget);
}

}  // namespace twinbridge
