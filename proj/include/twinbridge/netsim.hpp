#pragma once

// Deterministic discrete-event clock and point-to-point link simulator.
//
// A NetLink is one-directional and FIFO: packets are never reordered. The
// only impairments are latency, random loss, a bandwidth cap (serialization
// delay) and scripted disconnect windows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twinbridge/sim_time.hpp"

namespace twinbridge::netsim {

// ---------------------------------------------------------------------------
// Clock

struct FiredEvent {
  SimDuration time;
  std::uint64_t seq;
  std::string label;
};

class SimClock {
 public:
  using Action = std::function<void()>;

  SimDuration now() const { return now_; }

  std::uint64_t schedule_at(SimDuration at, std::string label, Action action) {
    if (at < now_) throw std::invalid_argument("SimClock: cannot schedule in the past");
    const std::uint64_t id = next_seq_++;
    queue_.push(Event{at, id, std::move(label), std::move(action)});
    return id;
  }

  std::uint64_t schedule_after(SimDuration delay, std::string label, Action action) {
    return schedule_at(now_ + delay, std::move(label), std::move(action));
  }

  // Fires every event with time <= now + dt in (time, insertion) order,
  // including events scheduled by the actions themselves.
  std::vector<FiredEvent> advance(SimDuration dt) {
    if (dt < SimDuration::zero()) throw std::invalid_argument("SimClock: negative advance");
    return run_until(now_ + dt);
  }

  std::vector<FiredEvent> run_until(SimDuration target) {
    std::vector<FiredEvent> fired;
    while (!queue_.empty() && queue_.top().time <= target) {
      Event ev = take_top();
      now_ = ev.time;
      fired.push_back({ev.time, ev.seq, ev.label});
      if (ev.action) ev.action();
    }
    now_ = std::max(now_, target);
    return fired;
  }

  // Same as run_until but without collecting the fired-event log.
  void run_quietly_until(SimDuration target) {
    while (!queue_.empty() && queue_.top().time <= target) {
      Event ev = take_top();
      now_ = ev.time;
      if (ev.action) ev.action();
    }
    now_ = std::max(now_, target);
  }

  std::size_t pending() const { return queue_.size(); }

 private:
  struct Event {
    SimDuration time;
    std::uint64_t seq;
    std::string label;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  // Moving out of top() is safe: only time and seq take part in ordering.
  Event take_top() {
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    return ev;
  }

  SimDuration now_{0};
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

// ---------------------------------------------------------------------------
// Conditions

// Piecewise-constant function of time. The value at t is that of the last
// breakpoint at or before t; before the first breakpoint the first value holds.
class Profile {
 public:
  Profile() = default;
  explicit Profile(double constant) : points_{{SimDuration{0}, constant}} {}
  explicit Profile(std::vector<std::pair<SimDuration, double>> points) : points_(std::move(points)) {
    if (!std::is_sorted(points_.begin(), points_.end(),
                        [](const auto& a, const auto& b) { return a.first < b.first; })) {
      throw std::invalid_argument("Profile: breakpoints must be sorted by time");
    }
  }

  double at(SimDuration t, double fallback = 0.0) const {
    if (points_.empty()) return fallback;
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](SimDuration v, const auto& p) { return v < p.first; });
    if (it == points_.begin()) return points_.front().second;
    return std::prev(it)->second;
  }

  const std::vector<std::pair<SimDuration, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<SimDuration, double>> points_;
};

struct DisconnectWindow {
  SimDuration start;
  SimDuration end;  // exclusive
};

struct NetworkConditions {
  Profile latency_s{0.0};
  Profile loss{0.0};
  std::optional<double> bandwidth_Bps;  // nullopt = unlimited
  std::vector<DisconnectWindow> disconnects;
  std::size_t packet_overhead_bytes = 0;  // per-packet header charged to serialization
  std::optional<SimDuration> max_backlog;  // transmit backlog beyond which sends are deferred

  void validate() const {
    for (const auto& [t, v] : latency_s.points())
      if (!(v >= 0.0)) throw std::invalid_argument("NetworkConditions: latency must be >= 0");
    for (const auto& [t, v] : loss.points())
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("NetworkConditions: loss must be in [0,1]");
    if (bandwidth_Bps && !(*bandwidth_Bps > 0.0))
      throw std::invalid_argument("NetworkConditions: bandwidth must be positive");
    for (std::size_t i = 0; i < disconnects.size(); ++i) {
      if (disconnects[i].end <= disconnects[i].start)
        throw std::invalid_argument("NetworkConditions: empty disconnect window");
      if (i > 0 && disconnects[i].start < disconnects[i - 1].end)
        throw std::invalid_argument("NetworkConditions: disconnect windows must be sorted and disjoint");
    }
  }

  bool disconnected(SimDuration t) const {
    return std::any_of(disconnects.begin(), disconnects.end(),
                       [t](const DisconnectWindow& w) { return t >= w.start && t < w.end; });
  }
};

// ---------------------------------------------------------------------------
// Link

enum class SendStatus { Delivered, Dropped, Deferred };

inline const char* status_name(SendStatus s) {
  switch (s) {
    case SendStatus::Delivered: return "delivered";
    case SendStatus::Dropped: return "dropped";
    case SendStatus::Deferred: return "deferred";
  }
  return "?";
}

struct SendOutcome {
  SendStatus status;
  SimDuration deliver_at{0};  // meaningful for Delivered only
};

enum class DropReason { None, Loss, Disconnected, Closed };

struct TraceEntry {
  std::uint64_t index;
  SimDuration sent_at;
  std::size_t bytes;
  SendStatus status;
  DropReason reason;
  SimDuration deliver_at;
};

struct LinkStats {
  std::uint64_t sends = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_loss = 0;
  std::uint64_t dropped_disconnect = 0;
  std::uint64_t deferred = 0;
  std::uint64_t bytes_offered = 0;    // payload bytes of accepted (non-deferred) sends
  std::uint64_t bytes_delivered = 0;
};

class NetLink {
 public:
  using Receiver = std::function<void(std::vector<std::uint8_t>)>;

  NetLink(SimClock& clock, NetworkConditions conditions, std::uint64_t seed)
      : clock_(&clock), conditions_(std::move(conditions)), rng_(seed) {
    conditions_.validate();
  }

  NetLink(const NetLink&) = delete;
  NetLink& operator=(const NetLink&) = delete;

  void set_receiver(Receiver r) { receiver_ = std::move(r); }
  const NetworkConditions& conditions() const { return conditions_; }

  // Permanently closes the link. Later sends are dropped.
  void close() { closed_ = true; }
  bool closed() const { return closed_; }

  SendOutcome send(std::vector<std::uint8_t> bytes, SimDuration t_now) {
    if (t_now != clock_->now()) throw std::invalid_argument("NetLink::send: t_now must equal clock now");
    return send(std::move(bytes));
  }

  SendOutcome send(std::vector<std::uint8_t> bytes) {
    const SimDuration now = clock_->now();
    const std::size_t size = bytes.size();
    ++stats_.sends;
    auto log = [&](SendStatus st, DropReason why, SimDuration at) {
      trace_.push_back({trace_.size(), now, size, st, why, at});
      return SendOutcome{st, at};
    };

    if (conditions_.max_backlog && tx_free_at_ - now > *conditions_.max_backlog) {
      ++stats_.deferred;
      return log(SendStatus::Deferred, DropReason::None, SimDuration{0});
    }
    // One draw per accepted send keeps the random stream aligned across
    // runs that differ only in loss probability.
    const double u = uniform_(rng_);
    stats_.bytes_offered += size;
    if (closed_) return log(SendStatus::Dropped, DropReason::Closed, SimDuration{0});
    if (conditions_.disconnected(now)) {
      ++stats_.dropped_disconnect;
      return log(SendStatus::Dropped, DropReason::Disconnected, SimDuration{0});
    }
    if (u < conditions_.loss.at(now)) {
      ++stats_.dropped_loss;
      return log(SendStatus::Dropped, DropReason::Loss, SimDuration{0});
    }

    const SimDuration start = std::max(now, tx_free_at_);
    SimDuration tx{0};
    if (conditions_.bandwidth_Bps) {
      const double wire = static_cast<double>(size + conditions_.packet_overhead_bytes);
      tx = SimDuration{static_cast<std::int64_t>(std::ceil(wire * 1e6 / *conditions_.bandwidth_Bps))};
    }
    tx_free_at_ = start + tx;
    SimDuration at = tx_free_at_ + from_seconds(conditions_.latency_s.at(now));
    at = std::max(at, last_deliver_at_);  // FIFO even when latency drops
    last_deliver_at_ = at;

    ++stats_.delivered;
    stats_.bytes_delivered += size;
    const std::uint64_t id = next_packet_id_++;
    flight_.emplace(id, std::move(bytes));
    clock_->schedule_at(at, "link-deliver", [this, id] {
      auto node = flight_.extract(id);
      if (receiver_) receiver_(std::move(node.mapped()));
    });
    return log(SendStatus::Delivered, DropReason::None, at);
  }

  // Time at which the transmitter is next idle.
  SimDuration tx_free_at() const { return std::max(tx_free_at_, clock_->now()); }
  std::size_t in_flight() const { return flight_.size(); }
  // Packets accepted but not yet delivered, in send order.
  const std::map<std::uint64_t, std::vector<std::uint8_t>>& in_flight_packets() const { return flight_; }
  const LinkStats& stats() const { return stats_; }

  // One entry per send() call, in call order.
  const std::vector<TraceEntry>& replay_trace() const { return trace_; }

  std::string trace_csv() const {
    std::ostringstream os;
    os << "index,sent_at_us,bytes,status,deliver_at_us\n";
    for (const auto& e : trace_) {
      os << e.index << ',' << e.sent_at.count() << ',' << e.bytes << ',' << status_name(e.status) << ','
         << e.deliver_at.count() << '\n';
    }
    return os.str();
  }

 private:
  SimClock* clock_;
  NetworkConditions conditions_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  Receiver receiver_;
  bool closed_ = false;
  SimDuration tx_free_at_{0};
  SimDuration last_deliver_at_{0};
  std::uint64_t next_packet_id_ = 0;
  std::map<std::uint64_t, std::vector<std::uint8_t>> flight_;
  LinkStats stats_;
  std::vector<TraceEntry> trace_;
};

}  // namespace twinbridge::netsim
