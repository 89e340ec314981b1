#pragma once

// Sender-side store of recently sent envelopes, keyed by topic, used to
// answer retransmission requests.
//
// Two limits apply. Each topic keeps at most `per_topic_capacity` frames
// (its own oldest goes first). The whole buffer keeps at most
// `total_capacity` frames; when that is hit the globally oldest bulk frame
// is evicted, then standard, and critical frames only when nothing else is
// left.

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twinbridge/envelope.hpp"

namespace twinbridge {

struct ReplayConfig {
  bool enabled = true;
  std::size_t per_topic_capacity = 256;
  std::size_t total_capacity = 4096;

  void validate() const {
    if (enabled && (per_topic_capacity == 0 || total_capacity == 0))
      throw std::invalid_argument("ReplayConfig: capacities must be >= 1");
  }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const ReplayConfig& config() const { return cfg_; }

  // Frames must arrive in increasing seq order per topic.
  void store(Envelope e) {
    auto& q = topics_[e.topic];
    if (!q.empty() && e.seq <= q.back().seq)
      throw std::invalid_argument("ReplayBuffer: seq must increase per topic");
    if (q.size() == cfg_.per_topic_capacity) evict_front(e.topic);
    while (size_ >= cfg_.total_capacity) evict_global();
    auto& order = order_[static_cast<std::size_t>(e.tier)];
    order.push_back({e.topic, e.seq});
    q.push_back(std::move(e));
    ++size_;
    if (order.size() > 2 * size_ + 64) compact(order);
  }

  // Buffered frames of `topic` with seq in [from, to], flagged as replays.
  std::vector<Envelope> request_replay(const std::string& topic, std::uint64_t from, std::uint64_t to) const {
    std::vector<Envelope> out;
    if (from > to) throw std::invalid_argument("request_replay: from_seq > to_seq");
    auto it = topics_.find(topic);
    if (it == topics_.end()) return out;
    for (const auto& e : it->second) {
      if (e.seq < from) continue;
      if (e.seq > to) break;
      out.push_back(e);
      out.back().flags |= wire::kFlagReplay;
    }
    return out;
  }

  std::optional<std::uint64_t> oldest_seq(const std::string& topic) const {
    auto it = topics_.find(topic);
    if (it == topics_.end() || it->second.empty()) return std::nullopt;
    return it->second.front().seq;
  }

  std::vector<std::uint64_t> seqs(const std::string& topic) const {
    std::vector<std::uint64_t> out;
    auto it = topics_.find(topic);
    if (it != topics_.end())
      for (const auto& e : it->second) out.push_back(e.seq);
    return out;
  }

  std::size_t size() const { return size_; }
  std::size_t size(const std::string& topic) const {
    auto it = topics_.find(topic);
    return it == topics_.end() ? 0 : it->second.size();
  }
  std::uint64_t evicted() const { return evicted_; }
  std::uint64_t evicted(Tier t) const { return evicted_by_tier_[static_cast<std::size_t>(t)]; }

 private:
  struct Ref {
    std::string topic;
    std::uint64_t seq;
  };

  void evict_front(const std::string& topic) {
    auto& q = topics_[topic];
    ++evicted_by_tier_[static_cast<std::size_t>(q.front().tier)];
    q.pop_front();
    --size_;
    ++evicted_;
  }

  // Order lists may hold refs to frames already evicted through the
  // per-topic limit; those are skipped here.
  void evict_global() {
    for (std::size_t t = kTierCount; t-- > 0;) {
      auto& order = order_[t];
      while (!order.empty()) {
        Ref r = std::move(order.front());
        order.pop_front();
        auto& q = topics_[r.topic];
        if (!q.empty() && q.front().seq == r.seq) {
          evict_front(r.topic);
          return;
        }
      }
    }
    throw std::logic_error("ReplayBuffer: nothing to evict");
  }

  void compact(std::deque<Ref>& order) {
    std::erase_if(order, [this](const Ref& r) {
      const auto& q = topics_[r.topic];
      return q.empty() || r.seq < q.front().seq;
    });
  }

  ReplayConfig cfg_;
  std::map<std::string, std::deque<Envelope>> topics_;
  std::array<std::deque<Ref>, kTierCount> order_;
  std::size_t size_ = 0;
  std::uint64_t evicted_ = 0;
  std::array<std::uint64_t, kTierCount> evicted_by_tier_{};
};

}  // namespace twinbridge
