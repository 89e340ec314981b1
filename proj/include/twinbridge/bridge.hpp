#pragma once

// One side of a topic bridge. An endpoint drains topics from its local bus,
// frames them as envelopes, schedules them by tier onto an outgoing link,
// and republishes frames arriving on the incoming link to the local bus.
//
// Critical topics are made reliable when replay is enabled on both sides:
// the receiver reassembles by seq, asks for missing ranges with NACK
// control frames, and the sender answers from its replay buffer or with a
// SKIP for what it no longer has. Periodic heartbeats carry the last sent
// seq of each critical topic so that tail losses are noticed too.
//
// All duties run as events on a SimClock; nothing here is threaded.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "twinbridge/envelope.hpp"
#include "twinbridge/msgbus.hpp"
#include "twinbridge/netsim.hpp"
#include "twinbridge/policy.hpp"
#include "twinbridge/replay_buffer.hpp"
#include "twinbridge/tier_scheduler.hpp"

namespace twinbridge {

namespace control {

inline const std::string kNack = "/_bridge/nack";
inline const std::string kSkip = "/_bridge/skip";
inline const std::string kHeartbeat = "/_bridge/heartbeat";
inline const std::string kPrefix = "/_bridge/";

inline bool is_reserved(const std::string& topic) { return topic.rfind(kPrefix, 0) == 0; }

struct Range {
  std::string topic;
  std::uint64_t from;
  std::uint64_t to;  // inclusive
};

struct TopicSeq {
  std::string topic;
  std::uint64_t seq;
};

inline void put_topic(std::vector<std::uint8_t>& out, const std::string& t) {
  wire::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.size()));
  out.insert(out.end(), t.begin(), t.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  bool done() const { return at_ == b_.size(); }
  bool ok() const { return ok_; }
  template <typename T>
  T num() {
    if (!need(sizeof(T))) return 0;
    T v = wire::get_le<T>(b_, at_);
    at_ += sizeof(T);
    return v;
  }
  std::string topic() {
    const auto n = num<std::uint16_t>();
    if (!need(n)) return {};
    std::string s(reinterpret_cast<const char*>(b_.data() + at_), n);
    at_ += n;
    return s;
  }

 private:
  bool need(std::size_t n) {
    if (b_.size() - at_ < n) ok_ = false;
    return ok_;
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t at_ = 0;
  bool ok_ = true;
};

inline std::vector<std::uint8_t> encode_nack(const std::vector<Range>& ranges) {
  std::vector<std::uint8_t> out;
  for (const auto& r : ranges) {
    put_topic(out, r.topic);
    wire::put_le<std::uint64_t>(out, r.from);
    wire::put_le<std::uint64_t>(out, r.to);
  }
  return out;
}

inline std::optional<std::vector<Range>> decode_nack(const std::vector<std::uint8_t>& b) {
  Reader r(b);
  std::vector<Range> out;
  while (r.ok() && !r.done()) {
    Range x;
    x.topic = r.topic();
    x.from = r.num<std::uint64_t>();
    x.to = r.num<std::uint64_t>();
    if (r.ok()) out.push_back(std::move(x));
  }
  if (!r.ok()) return std::nullopt;
  return out;
}

// Also used for SKIP (seq = first seq still deliverable).
inline std::vector<std::uint8_t> encode_topic_seqs(const std::vector<TopicSeq>& items) {
  std::vector<std::uint8_t> out;
  for (const auto& i : items) {
    put_topic(out, i.topic);
    wire::put_le<std::uint64_t>(out, i.seq);
  }
  return out;
}

inline std::optional<std::vector<TopicSeq>> decode_topic_seqs(const std::vector<std::uint8_t>& b) {
  Reader r(b);
  std::vector<TopicSeq> out;
  while (r.ok() && !r.done()) {
    TopicSeq x;
    x.topic = r.topic();
    x.seq = r.num<std::uint64_t>();
    if (r.ok()) out.push_back(std::move(x));
  }
  if (!r.ok()) return std::nullopt;
  return out;
}

}  // namespace control

struct BridgeOptions {
  std::string name = "bridge";
  PriorityPolicy policy;
  DiscoveryConfig discovery;
  std::vector<std::string> static_topics;  // subscribed at start, discovery or not
  ReplayConfig replay;
  SchedulerMode mode = SchedulerMode::Prioritized;
  SchedulerConfig scheduler;
  SimDuration tick = std::chrono::milliseconds(10);
  std::optional<std::size_t> budget_bytes_per_tick;  // nullopt: no pacing
  std::size_t batch_size = 1;                         // envelopes per link packet
  unsigned redundancy = 0;                            // extra copies of each data packet
  std::size_t packet_overhead_bytes = 28;             // charged to the budget per packet
  std::size_t queue_byte_limit = 1u << 20;            // per tier queue, drop-oldest beyond
  std::size_t subscriber_capacity = 1000;
  SimDuration heartbeat_period = std::chrono::milliseconds(200);  // zero: off
  SimDuration nack_retry = std::chrono::milliseconds(300);
  std::size_t max_nack_ranges = 16;

  // The stand-in for a plain topic relay: one FIFO, no replay, no
  // heartbeats, no discovery.
  static BridgeOptions fifo_baseline(BridgeOptions o) {
    o.mode = SchedulerMode::Fifo;
    o.replay.enabled = false;
    o.discovery.enabled = false;
    o.heartbeat_period = SimDuration::zero();
    o.redundancy = 0;
    return o;
  }

  void validate() const {
    discovery.validate();
    replay.validate();
    scheduler.validate();
    if (tick <= SimDuration::zero()) throw std::invalid_argument("BridgeOptions: tick must be > 0");
    if (batch_size == 0) throw std::invalid_argument("BridgeOptions: batch_size must be >= 1");
    if (budget_bytes_per_tick && *budget_bytes_per_tick == 0)
      throw std::invalid_argument("BridgeOptions: budget must be > 0");
    if (subscriber_capacity == 0) throw std::invalid_argument("BridgeOptions: subscriber capacity must be >= 1");
  }
};

enum class BridgeStatus { Running, LinkClosed, Stopped };

struct EgressTopicStats {
  Tier tier = Tier::Standard;
  std::uint64_t taken = 0;          // messages pulled off the local subscription
  std::uint64_t queue_dropped = 0;  // dropped from a full tier queue before sending
  std::uint64_t frames_sent = 0;    // first transmissions
  std::uint64_t replays_sent = 0;
  std::uint64_t last_seq = 0;       // last seq assigned
  std::uint64_t last_tx_seq = 0;    // last seq transmitted or given up on
  Subscriber subscription;
  std::optional<SimDuration> subscribed_at;
};

struct IngressTopicStats {
  Tier tier = Tier::Standard;
  std::uint64_t delivered = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t gaps = 0;      // seqs found missing on arrival (non-reliable topics)
  std::uint64_t skipped = 0;   // seqs given up after the sender had no copy
  std::uint64_t nacks_sent = 0;
  std::optional<SimDuration> first_delivery;
  std::vector<double> latencies_s;
};

struct EndpointCounters {
  std::uint64_t packets_sent = 0;
  std::uint64_t bytes_sent = 0;  // link bytes including redundant copies
  std::uint64_t control_frames_sent = 0;
  std::uint64_t deferred = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t kind_conflicts = 0;
  std::uint64_t nacks_received = 0;
  std::uint64_t skips_sent = 0;
  std::uint64_t frames_received = 0;
};

class BridgeEndpoint : public std::enable_shared_from_this<BridgeEndpoint> {
 public:
  BridgeEndpoint(netsim::SimClock& clock, MessageBus bus, netsim::NetLink& tx, BridgeOptions opts)
      : clock_(&clock),
        bus_(std::move(bus)),
        tx_(&tx),
        opts_(std::move(opts)),
        replay_(opts_.replay.enabled ? opts_.replay : ReplayConfig{}),
        queues_(opts_.mode, opts_.queue_byte_limit),
        scheduler_(opts_.scheduler) {
    opts_.validate();
  }

  // Wires the incoming link and schedules the periodic duties.
  void start(netsim::NetLink* rx) {
    if (rx) {
      std::weak_ptr<BridgeEndpoint> self = weak_from_this();
      rx->set_receiver([self](std::vector<std::uint8_t> bytes) {
        if (auto s = self.lock()) s->on_packet(bytes);
      });
    }
    for (const auto& t : opts_.static_topics) subscribe_topic(t);
    schedule_tick(clock_->now());
    if (opts_.discovery.enabled) schedule_discovery(clock_->now());
    if (opts_.replay.enabled && opts_.heartbeat_period > SimDuration::zero())
      schedule_heartbeat(clock_->now() + opts_.heartbeat_period);
  }

  void shutdown() {
    if (status_ == BridgeStatus::Running) status_ = BridgeStatus::Stopped;
  }

  BridgeStatus status() const { return status_; }
  const BridgeOptions& options() const { return opts_; }
  const std::map<std::string, EgressTopicStats>& egress() const { return egress_; }
  const std::map<std::string, IngressTopicStats>& ingress() const { return ingress_stats_; }
  const EndpointCounters& counters() const { return counters_; }
  const ReplayBuffer& replay_buffer() const { return replay_; }
  const TierQueues& queues() const { return queues_; }
  bool is_subscribed(const std::string& topic) const { return egress_.count(topic) != 0; }

  // Re-enqueues buffered frames of `topic` in [from, to] with the replay
  // flag set, ahead of everything else in their tier. Returns how many
  // were still buffered.
  std::size_t request_replay(const std::string& topic, std::uint64_t from, std::uint64_t to) {
    auto frames = replay_.request_replay(topic, from, to);
    std::vector<QueuedFrame> q;
    q.reserve(frames.size());
    for (auto& e : frames) q.push_back(make_frame(std::move(e)));
    const std::size_t n = q.size();
    queues_.push_front(std::move(q));
    return n;
  }

  // Frames not yet handed to the link, including the local subscription backlog.
  std::size_t backlog() const {
    std::size_t n = queues_.frames();
    for (const auto& [t, e] : egress_) n += e.subscription->depth();
    return n;
  }

  // Seqs of `topic` waiting in the send queues (originals and replays).
  std::set<std::uint64_t> queued_seqs(const std::string& topic) const {
    std::set<std::uint64_t> out;
    for (std::size_t i = 0; i < kTierCount; ++i)
      for (const auto& f : queues_.queue(i))
        if (f.envelope.topic == topic) out.insert(f.envelope.seq);
    return out;
  }

  struct RxCursor {
    bool reliable = false;
    std::uint64_t next_expected = 1;   // reliable: everything below was delivered or skipped
    std::uint64_t last_delivered = 0;  // otherwise: highest seq delivered
    std::set<std::uint64_t> held;      // reliable: received, waiting for a gap to fill
  };

  std::optional<RxCursor> rx_cursor(const std::string& topic) const {
    auto it = rx_.find(topic);
    if (it == rx_.end()) return std::nullopt;
    RxCursor c;
    auto st = ingress_stats_.find(topic);
    c.reliable = st != ingress_stats_.end() && reliable(st->second.tier);
    c.next_expected = it->second.next_expected;
    c.last_delivered = it->second.last_delivered;
    for (const auto& [seq, e] : it->second.reorder) c.held.insert(seq);
    return c;
  }

  void subscribe_topic(const std::string& topic) {
    if (egress_.count(topic)) return;
    EgressTopicStats s;
    s.tier = opts_.policy.classify(topic);
    s.subscription = bus_.subscribe(topic, opts_.subscriber_capacity);
    s.subscribed_at = clock_->now();
    egress_.emplace(topic, std::move(s));
  }

 private:
  struct RxTopic {
    std::uint64_t next_expected = 1;  // reliable topics
    std::uint64_t last_delivered = 0;
    std::map<std::uint64_t, Envelope> reorder;
    std::optional<SimDuration> last_nack;
    std::optional<Publisher> publisher;
  };

  bool running() const { return status_ == BridgeStatus::Running; }

  void schedule_tick(SimDuration at) {
    std::weak_ptr<BridgeEndpoint> self = weak_from_this();
    clock_->schedule_at(at, opts_.name + ":tick", [self] {
      if (auto s = self.lock()) s->tick();
    });
  }

  void schedule_discovery(SimDuration at) {
    std::weak_ptr<BridgeEndpoint> self = weak_from_this();
    clock_->schedule_at(at, opts_.name + ":discovery", [self] {
      if (auto s = self.lock()) s->discover();
    });
  }

  void schedule_heartbeat(SimDuration at) {
    std::weak_ptr<BridgeEndpoint> self = weak_from_this();
    clock_->schedule_at(at, opts_.name + ":heartbeat", [self] {
      if (auto s = self.lock()) s->heartbeat();
    });
  }

  QueuedFrame make_frame(Envelope e) const {
    const double per_frame = static_cast<double>(e.encoded_size()) +
                             static_cast<double>(opts_.packet_overhead_bytes) / static_cast<double>(opts_.batch_size);
    const auto cost = static_cast<std::size_t>(std::ceil(per_frame * (1.0 + opts_.redundancy)));
    return QueuedFrame{std::move(e), cost, clock_->now()};
  }

  // ---- egress

  void tick() {
    if (!running()) return;
    if (tx_->closed()) {
      status_ = BridgeStatus::LinkClosed;
      return;
    }
    collect();
    const std::size_t control_bytes = send_control();
    std::size_t budget = 0;
    if (opts_.budget_bytes_per_tick) {
      budget = *opts_.budget_bytes_per_tick > control_bytes ? *opts_.budget_bytes_per_tick - control_bytes : 0;
    } else {
      for (std::size_t i = 0; i < kTierCount; ++i) budget += queues_.bytes(i);
    }
    if (budget > 0 && !queues_.empty()) transmit(scheduler_.schedule(queues_, budget));
    schedule_tick(clock_->now() + opts_.tick);
  }

  void collect() {
    for (auto& [topic, st] : egress_) {
      auto batch = st.subscription->drain();
      // Our own republications of peer traffic are never sent back.
      if (ingress_topics_.count(topic)) continue;
      for (auto& m : batch) {
        ++st.taken;
        Envelope e = Envelope::from_message(m, st.tier, ++st.last_seq);
        if (opts_.replay.enabled) replay_.store(e);
        for (auto& d : queues_.push(make_frame(std::move(e)))) {
          auto& ds = egress_.at(d.envelope.topic);
          ++ds.queue_dropped;
          ds.last_tx_seq = std::max(ds.last_tx_seq, d.envelope.seq);
        }
      }
    }
  }

  std::size_t send_control() {
    std::size_t used = 0;
    auto pending = std::move(control_out_);
    control_out_.clear();
    for (auto& e : pending) {
      auto bytes = encode_envelope(e);
      used += bytes.size() + opts_.packet_overhead_bytes;
      counters_.bytes_sent += bytes.size();
      ++counters_.packets_sent;
      ++counters_.control_frames_sent;
      tx_->send(std::move(bytes));
    }
    return used;
  }

  void transmit(std::vector<QueuedFrame> frames) {
    for (std::size_t start = 0; start < frames.size(); start += opts_.batch_size) {
      const std::size_t end = std::min(frames.size(), start + opts_.batch_size);
      std::vector<std::uint8_t> packet;
      for (std::size_t i = start; i < end; ++i) {
        auto b = encode_envelope(frames[i].envelope);
        packet.insert(packet.end(), b.begin(), b.end());
      }
      const auto first = tx_->send(packet);
      if (first.status == netsim::SendStatus::Deferred) {
        ++counters_.deferred;
        queues_.push_front({std::make_move_iterator(frames.begin() + static_cast<std::ptrdiff_t>(start)),
                            std::make_move_iterator(frames.end())});
        return;
      }
      ++counters_.packets_sent;
      counters_.bytes_sent += packet.size();
      for (unsigned r = 0; r < opts_.redundancy; ++r) {
        if (tx_->send(packet).status != netsim::SendStatus::Deferred) {
          ++counters_.packets_sent;
          counters_.bytes_sent += packet.size();
        }
      }
      for (std::size_t i = start; i < end; ++i) {
        const Envelope& e = frames[i].envelope;
        auto it = egress_.find(e.topic);
        if (it == egress_.end()) continue;
        if (e.is_replay()) {
          ++it->second.replays_sent;
        } else {
          ++it->second.frames_sent;
        }
        it->second.last_tx_seq = std::max(it->second.last_tx_seq, e.seq);
      }
    }
  }

  void heartbeat() {
    if (!running()) return;
    std::vector<control::TopicSeq> items;
    for (const auto& [topic, st] : egress_)
      if (st.tier == Tier::Critical && st.last_tx_seq > 0) items.push_back({topic, st.last_tx_seq});
    if (!items.empty()) queue_control(control::kHeartbeat, control::encode_topic_seqs(items));
    schedule_heartbeat(clock_->now() + opts_.heartbeat_period);
  }

  void queue_control(const std::string& topic, std::vector<std::uint8_t> payload) {
    Envelope e;
    e.tier = Tier::Critical;
    e.seq = ++control_seq_;
    e.sim_time_us = static_cast<std::uint64_t>(clock_->now().count());
    e.topic = topic;
    e.kind = MessageKind::Command;
    e.payload = std::move(payload);
    control_out_.push_back(std::move(e));
  }

  // ---- discovery

  void discover() {
    if (!running()) return;
    for (const auto& info : bus_.list_topics()) {
      if (control::is_reserved(info.topic) || ingress_topics_.count(info.topic)) continue;
      if (!opts_.discovery.admits(info.topic)) continue;
      subscribe_topic(info.topic);
    }
    schedule_discovery(clock_->now() + opts_.discovery.period);
  }

  // ---- ingress

  void on_packet(const std::vector<std::uint8_t>& bytes) {
    if (status_ == BridgeStatus::Stopped) return;
    auto decoded = decode_packet(bytes);
    if (decoded.error) ++counters_.decode_errors;
    for (auto& e : decoded.frames) {
      ++counters_.frames_received;
      if (e.topic == control::kNack) {
        on_nack(e);
      } else if (e.topic == control::kSkip) {
        on_skip(e);
      } else if (e.topic == control::kHeartbeat) {
        on_heartbeat(e);
      } else if (!control::is_reserved(e.topic)) {
        on_data(std::move(e));
      }
    }
  }

  bool reliable(Tier t) const { return t == Tier::Critical && opts_.replay.enabled; }

  void on_data(Envelope e) {
    ingress_topics_.insert(e.topic);
    auto& rx = rx_[e.topic];
    auto& st = ingress_stats_[e.topic];
    st.tier = e.tier;
    if (!reliable(e.tier)) {
      if (e.seq <= rx.last_delivered) {
        ++st.duplicates;
        return;
      }
      st.gaps += e.seq - rx.last_delivered - 1;
      rx.last_delivered = e.seq;
      deliver(e, rx, st);
      return;
    }
    if (e.seq < rx.next_expected || rx.reorder.count(e.seq)) {
      ++st.duplicates;
      return;
    }
    if (e.seq == rx.next_expected) {
      ++rx.next_expected;
      deliver(e, rx, st);
      flush(rx, st);
      return;
    }
    const std::uint64_t upto = e.seq - 1;
    const std::string topic = e.topic;
    rx.reorder.emplace(e.seq, std::move(e));
    maybe_nack(topic, rx, st, upto);
  }

  void flush(RxTopic& rx, IngressTopicStats& st) {
    while (!rx.reorder.empty() && rx.reorder.begin()->first == rx.next_expected) {
      deliver(rx.reorder.begin()->second, rx, st);
      rx.reorder.erase(rx.reorder.begin());
      ++rx.next_expected;
    }
  }

  void deliver(const Envelope& e, RxTopic& rx, IngressTopicStats& st) {
    if (!rx.publisher) {
      try {
        rx.publisher = bus_.advertise(e.topic, e.kind);
      } catch (const BusError&) {
        ++counters_.kind_conflicts;
        return;
      }
    }
    const SimDuration now = clock_->now();
    rx.publisher->publish(e.payload, now);
    ++st.delivered;
    if (!st.first_delivery) st.first_delivery = now;
    st.latencies_s.push_back(to_seconds(now - SimDuration{static_cast<std::int64_t>(e.sim_time_us)}));
  }

  // Asks for every seq in [next_expected, upto] not already held.
  void maybe_nack(const std::string& topic, RxTopic& rx, IngressTopicStats& st, std::uint64_t upto) {
    if (upto < rx.next_expected) return;
    const SimDuration now = clock_->now();
    if (rx.last_nack && now - *rx.last_nack < opts_.nack_retry) return;
    std::vector<control::Range> ranges;
    std::uint64_t cursor = rx.next_expected;
    for (auto it = rx.reorder.begin(); it != rx.reorder.end() && cursor <= upto; ++it) {
      if (it->first > cursor) ranges.push_back({topic, cursor, std::min(upto, it->first - 1)});
      cursor = std::max(cursor, it->first + 1);
      if (ranges.size() == opts_.max_nack_ranges) break;
    }
    if (cursor <= upto && ranges.size() < opts_.max_nack_ranges) ranges.push_back({topic, cursor, upto});
    if (ranges.empty()) return;
    rx.last_nack = now;
    ++st.nacks_sent;
    queue_control(control::kNack, control::encode_nack(ranges));
  }

  void on_heartbeat(const Envelope& e) {
    auto items = control::decode_topic_seqs(e.payload);
    if (!items) {
      ++counters_.decode_errors;
      return;
    }
    if (!opts_.replay.enabled) return;
    for (const auto& [topic, last] : *items) {
      auto& rx = rx_[topic];
      auto& st = ingress_stats_[topic];
      st.tier = Tier::Critical;
      ingress_topics_.insert(topic);
      maybe_nack(topic, rx, st, last);
    }
  }

  void on_skip(const Envelope& e) {
    auto items = control::decode_topic_seqs(e.payload);
    if (!items) {
      ++counters_.decode_errors;
      return;
    }
    for (const auto& [topic, first_kept] : *items) {
      auto it = rx_.find(topic);
      if (it == rx_.end()) continue;
      RxTopic& rx = it->second;
      auto& st = ingress_stats_[topic];
      if (first_kept <= rx.next_expected) continue;
      std::uint64_t held = 0;
      while (!rx.reorder.empty() && rx.reorder.begin()->first < first_kept) {
        deliver(rx.reorder.begin()->second, rx, st);
        rx.reorder.erase(rx.reorder.begin());
        ++held;
      }
      st.skipped += first_kept - rx.next_expected - held;
      rx.next_expected = first_kept;
      flush(rx, st);
    }
  }

  // Sender side of a NACK.
  void on_nack(const Envelope& e) {
    auto ranges = control::decode_nack(e.payload);
    if (!ranges) {
      ++counters_.decode_errors;
      return;
    }
    ++counters_.nacks_received;
    if (!opts_.replay.enabled) return;
    std::vector<control::TopicSeq> skips;
    for (const auto& r : *ranges) {
      if (r.from > r.to) continue;
      request_replay(r.topic, r.from, r.to);
      const auto oldest = replay_.oldest_seq(r.topic);
      if (!oldest || r.from < *oldest) skips.push_back({r.topic, oldest ? std::min(*oldest, r.to + 1) : r.to + 1});
    }
    if (!skips.empty()) {
      counters_.skips_sent += skips.size();
      queue_control(control::kSkip, control::encode_topic_seqs(skips));
    }
  }

  netsim::SimClock* clock_;
  MessageBus bus_;
  netsim::NetLink* tx_;
  BridgeOptions opts_;
  ReplayBuffer replay_;
  TierQueues queues_;
  TierScheduler scheduler_;
  BridgeStatus status_ = BridgeStatus::Running;
  std::uint64_t control_seq_ = 0;
  std::vector<Envelope> control_out_;
  std::map<std::string, EgressTopicStats> egress_;
  std::map<std::string, RxTopic> rx_;
  std::map<std::string, IngressTopicStats> ingress_stats_;
  std::set<std::string> ingress_topics_;
  EndpointCounters counters_;
};

using BridgeHandle = std::shared_ptr<BridgeEndpoint>;

// Starts an endpoint on `bus`: frames leave on `tx`, frames arriving on
// `rx` (the peer's outgoing link) are republished locally.
inline BridgeHandle run_bridge_endpoint(netsim::SimClock& clock, MessageBus bus, netsim::NetLink& tx,
                                        netsim::NetLink* rx, BridgeOptions opts) {
  auto ep = std::make_shared<BridgeEndpoint>(clock, std::move(bus), tx, std::move(opts));
  ep->start(rx);
  return ep;
}

}  // namespace twinbridge
