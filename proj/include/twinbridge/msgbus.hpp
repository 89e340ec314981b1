#pragma once

// In-process topic bus: named topics, typed payloads, publish/subscribe with
// bounded per-subscriber FIFO queues (drop-oldest on overflow).

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "twinbridge/sim_time.hpp"

namespace twinbridge {

enum class MessageKind : std::uint8_t {
  Pose = 0,
  Twist = 1,
  Scan2D = 2,
  PointCloud = 3,
  Command = 4,
  Blob = 5,
};

inline constexpr bool is_valid_kind(std::uint8_t v) { return v <= 5; }

inline std::string_view kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::Pose: return "Pose";
    case MessageKind::Twist: return "Twist";
    case MessageKind::Scan2D: return "Scan2D";
    case MessageKind::PointCloud: return "PointCloud";
    case MessageKind::Command: return "Command";
    case MessageKind::Blob: return "Blob";
  }
  return "?";
}

inline std::optional<MessageKind> parse_kind(std::string_view s) {
  for (std::uint8_t v = 0; v <= 5; ++v) {
    auto k = static_cast<MessageKind>(v);
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

inline constexpr std::size_t kMaxPayloadBytes = 16u * 1024u * 1024u;

enum class BusErrorCode { InvalidTopic, KindMismatch, PayloadTooLarge, NonMonotonicTime, InvalidCapacity };

class BusError : public std::runtime_error {
 public:
  BusError(BusErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  BusErrorCode code() const { return code_; }

 private:
  BusErrorCode code_;
};

// Path-like topic name: non-empty, starts with '/', no whitespace.
class TopicName {
 public:
  explicit TopicName(std::string name) : name_(std::move(name)) {
    if (!is_valid(name_)) throw BusError(BusErrorCode::InvalidTopic, "invalid topic name: '" + name_ + "'");
  }

  static bool is_valid(std::string_view s) {
    if (s.empty() || s.front() != '/') return false;
    return std::none_of(s.begin(), s.end(),
                        [](unsigned char c) { return std::isspace(c) != 0; });
  }

  const std::string& str() const { return name_; }
  friend auto operator<=>(const TopicName&, const TopicName&) = default;

 private:
  std::string name_;
};

struct Message {
  std::string topic;
  MessageKind kind = MessageKind::Blob;
  std::vector<std::uint8_t> payload;
  SimDuration publish_time{0};

  friend bool operator==(const Message&, const Message&) = default;
};

struct TopicInfo {
  std::string topic;
  MessageKind kind;
  friend auto operator<=>(const TopicInfo&, const TopicInfo&) = default;
};

// Receive side of one subscription. Single consumer.
class SubscriberQueue {
 public:
  explicit SubscriberQueue(std::string topic, std::size_t capacity)
      : topic_(std::move(topic)), capacity_(capacity) {}

  const std::string& topic() const { return topic_; }
  std::size_t capacity() const { return capacity_; }

  std::optional<Message> pop() {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return std::nullopt;
    Message m = std::move(queue_.front());
    queue_.pop_front();
    ++popped_;
    return m;
  }

  std::vector<Message> drain() {
    std::lock_guard lock(mu_);
    std::vector<Message> out(std::make_move_iterator(queue_.begin()),
                             std::make_move_iterator(queue_.end()));
    popped_ += out.size();
    queue_.clear();
    return out;
  }

  std::size_t depth() const { std::lock_guard lock(mu_); return queue_.size(); }
  std::uint64_t dropped() const { std::lock_guard lock(mu_); return dropped_; }
  std::uint64_t received() const { std::lock_guard lock(mu_); return received_; }
  std::uint64_t popped() const { std::lock_guard lock(mu_); return popped_; }

  void push(const Message& m) {
    std::lock_guard lock(mu_);
    ++received_;
    if (queue_.size() == capacity_) {
      queue_.pop_front();
      ++dropped_;
    }
    queue_.push_back(m);
  }

 private:
  std::string topic_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<Message> queue_;
  std::uint64_t dropped_ = 0;
  std::uint64_t received_ = 0;  // pushed into this queue, including later-dropped
  std::uint64_t popped_ = 0;
};

struct TopicStats {
  std::uint64_t publish_count = 0;
  std::size_t subscriber_count = 0;
  std::vector<std::size_t> queue_depths;
};

using BusStats = std::map<std::string, TopicStats>;

namespace detail {

struct TopicEntry {
  std::optional<MessageKind> kind;  // unset until advertised
  std::uint64_t publish_count = 0;
  std::vector<std::weak_ptr<SubscriberQueue>> subscribers;
};

struct BusCore {
  std::mutex mu;
  std::map<std::string, TopicEntry> topics;

  void deliver(const Message& m) {
    std::vector<std::shared_ptr<SubscriberQueue>> targets;
    {
      std::lock_guard lock(mu);
      auto& entry = topics[m.topic];
      ++entry.publish_count;
      std::erase_if(entry.subscribers, [](const auto& w) { return w.expired(); });
      for (const auto& w : entry.subscribers)
        if (auto s = w.lock()) targets.push_back(std::move(s));
    }
    for (const auto& s : targets) s->push(m);
  }
};

}  // namespace detail

class Publisher {
 public:
  const std::string& topic() const { return topic_; }
  MessageKind kind() const { return kind_; }

  // Publishes at simulated time `t`; times must be non-decreasing per publisher.
  void publish(std::vector<std::uint8_t> payload, SimDuration t) {
    if (payload.size() > kMaxPayloadBytes) {
      throw BusError(BusErrorCode::PayloadTooLarge, "payload exceeds 16 MiB on " + topic_);
    }
    if (last_time_ && t < *last_time_) {
      throw BusError(BusErrorCode::NonMonotonicTime, "publish time went backwards on " + topic_);
    }
    last_time_ = t;
    core_->deliver(Message{topic_, kind_, std::move(payload), t});
  }

 private:
  friend class MessageBus;
  Publisher(std::shared_ptr<detail::BusCore> core, std::string topic, MessageKind kind)
      : core_(std::move(core)), topic_(std::move(topic)), kind_(kind) {}

  std::shared_ptr<detail::BusCore> core_;
  std::string topic_;
  MessageKind kind_;
  std::optional<SimDuration> last_time_;
};

using Subscriber = std::shared_ptr<SubscriberQueue>;

// Cheap-to-copy handle; copies share the same bus.
class MessageBus {
 public:
  MessageBus() : core_(std::make_shared<detail::BusCore>()) {}

  Publisher advertise(const std::string& topic, MessageKind kind) {
    TopicName name(topic);
    std::lock_guard lock(core_->mu);
    auto& entry = core_->topics[name.str()];
    if (entry.kind && *entry.kind != kind) {
      throw BusError(BusErrorCode::KindMismatch,
                     "topic " + topic + " already advertised as " + std::string(kind_name(*entry.kind)));
    }
    entry.kind = kind;
    return Publisher(core_, name.str(), kind);
  }

  // Subscribing to a topic that is not advertised yet is allowed; delivery
  // starts once something publishes on it.
  Subscriber subscribe(const std::string& topic, std::size_t queue_capacity) {
    TopicName name(topic);
    if (queue_capacity < 1) throw BusError(BusErrorCode::InvalidCapacity, "queue capacity must be >= 1");
    auto q = std::make_shared<SubscriberQueue>(name.str(), queue_capacity);
    std::lock_guard lock(core_->mu);
    core_->topics[name.str()].subscribers.push_back(q);
    return q;
  }

  std::set<TopicInfo> list_topics() const {
    std::set<TopicInfo> out;
    std::lock_guard lock(core_->mu);
    for (const auto& [name, entry] : core_->topics)
      if (entry.kind) out.insert({name, *entry.kind});
    return out;
  }

  std::optional<MessageKind> kind_of(const std::string& topic) const {
    std::lock_guard lock(core_->mu);
    auto it = core_->topics.find(topic);
    if (it == core_->topics.end()) return std::nullopt;
    return it->second.kind;
  }

  BusStats stats() const {
    BusStats out;
    std::lock_guard lock(core_->mu);
    for (const auto& [name, entry] : core_->topics) {
      TopicStats s;
      s.publish_count = entry.publish_count;
      for (const auto& w : entry.subscribers) {
        if (auto q = w.lock()) {
          ++s.subscriber_count;
          s.queue_depths.push_back(q->depth());
        }
      }
      out.emplace(name, std::move(s));
    }
    return out;
  }

 private:
  std::shared_ptr<detail::BusCore> core_;
};

}  // namespace twinbridge
