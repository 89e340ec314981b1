#pragma once

// Scenario execution: two sites, each with its own bus and bridge
// endpoint, joined by a pair of simulated links. Agents publish scripted
// traffic for `duration_s`, then the run continues for `drain_s` with the
// publishers stopped. Everything is driven by one SimClock, so a
// (scenario, seed) pair always produces the same report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "twinbridge/scenario.hpp"

namespace twinbridge {

// Modeled processing cost of the bridge, used for the compute metric:
// per packet and per byte, paid once to encode and once to decode.
inline constexpr double kComputePerPacket_s = 2e-6;
inline constexpr double kComputePerByte_s = 1e-9;

struct LatencySummary {
  std::size_t count = 0;
  double mean = 0.0, p50 = 0.0, p95 = 0.0, max = 0.0;  // seconds
};

// Nearest-rank percentiles.
inline LatencySummary summarize(std::vector<double> v) {
  LatencySummary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(k, 1, v.size()) - 1];
  };
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.p50 = rank(0.50);
  s.p95 = rank(0.95);
  s.max = v.back();
  return s;
}

struct TopicRow {
  std::string topic;
  Tier tier = Tier::Standard;
  char site = 'a';
  std::uint64_t published = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t buffered = 0;
  std::uint64_t duplicates = 0;
  LatencySummary latency;
  std::vector<double> latencies_s;

  bool conserved() const { return published == delivered + dropped + buffered; }
  double delivery_rate() const {
    return published ? static_cast<double>(delivered) / static_cast<double>(published) : 1.0;
  }
};

struct TierRow {
  Tier tier = Tier::Standard;
  std::uint64_t published = 0, delivered = 0, dropped = 0, buffered = 0;
  LatencySummary latency;
  double delivery_rate() const {
    return published ? static_cast<double>(delivered) / static_cast<double>(published) : 1.0;
  }
};

struct GeoRow {
  std::string name;
  geo::GeoPoint point;
  geo::SceneCoord scene;
  geo::ConversionMethod method;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  SchedulerMode mode = SchedulerMode::Prioritized;
  std::size_t agents = 0;
  double duration_s = 0.0;
  mmcf::BridgeConfig config;

  std::vector<TopicRow> topics;
  std::array<TierRow, kTierCount> tiers;

  std::uint64_t published_bytes = 0;  // payload bytes offered by the agents
  std::uint64_t link_bytes = 0;
  std::uint64_t packets = 0;
  std::uint64_t control_frames = 0;
  std::uint64_t queue_dropped = 0;
  std::uint64_t subscriber_dropped = 0;
  std::uint64_t nacks = 0;
  std::uint64_t skips = 0;
  std::uint64_t decode_errors = 0;

  mmcf::MetricBounds bounds;
  mmcf::Evaluation cost;

  std::vector<twin::SyncReport> sync;
  std::vector<GeoRow> geo;

  bool conserved() const {
    return std::all_of(topics.begin(), topics.end(), [](const TopicRow& t) { return t.conserved(); });
  }
  const TierRow& tier(Tier t) const { return tiers[static_cast<std::size_t>(t)]; }
  std::uint64_t published() const {
    std::uint64_t n = 0;
    for (const auto& t : tiers) n += t.published;
    return n;
  }
  std::uint64_t delivered() const {
    std::uint64_t n = 0;
    for (const auto& t : tiers) n += t.delivered;
    return n;
  }
};

inline const char* mode_name(SchedulerMode m) { return m == SchedulerMode::Fifo ? "fifo" : "prioritized"; }

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct Site {
  MessageBus bus;
  BridgeHandle bridge;
};

// Publishes one topic at a fixed rate with a seeded phase, chaining one
// event at a time.
struct TrafficSource {
  netsim::SimClock* clock;
  Publisher pub;
  SimDuration period;
  SimDuration stop;
  std::size_t payload_bytes;
  std::uint64_t count = 0;

  static void fire(const std::shared_ptr<TrafficSource>& s) {
    std::vector<std::uint8_t> p(s->payload_bytes, 0);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = static_cast<std::uint8_t>(k < 8 ? s->count >> (8 * k) : k);
    ++s->count;
    s->pub.publish(std::move(p), s->clock->now());
    const SimDuration next = s->clock->now() + s->period;
    if (next < s->stop) s->clock->schedule_at(next, "pub", [s] { fire(s); });
  }
};

inline mmcf::MeasuredMetrics metrics_of(const RunReport& r) {
  mmcf::MeasuredMetrics m;
  std::vector<double> all;
  for (const auto& t : r.topics) all.insert(all.end(), t.latencies_s.begin(), t.latencies_s.end());
  const auto pub = r.published(), del = r.delivered();
  if (pub > 0) {
    double sum = 0.0;
    for (double x : all) sum += x;
    m.latency_s = all.empty() ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(all.size());
    m.loss = 1.0 - static_cast<double>(del) / static_cast<double>(pub);
  }
  m.compute_s = 2.0 * (kComputePerPacket_s * static_cast<double>(r.packets) +
                       kComputePerByte_s * static_cast<double>(r.link_bytes)) /
                r.duration_s;
  m.bandwidth_Bps = static_cast<double>(r.link_bytes) / r.duration_s;
  return m;
}

}  // namespace detail

struct RunOptions {
  bool run_sync = true;
  bool run_geo = true;
  bool keep_latencies = true;
};

// Bridge traffic only; sync, geo and cost are filled in by run().
inline RunReport run_traffic(const Scenario& sc) {
  sc.validate();
  netsim::SimClock clock;
  auto ab = std::make_unique<netsim::NetLink>(clock, sc.network, mix_seed(sc.seed, 1));
  auto ba = std::make_unique<netsim::NetLink>(clock, sc.network, mix_seed(sc.seed, 2));
  detail::Site a, b;
  a.bridge = run_bridge_endpoint(clock, a.bus, *ab, ba.get(), sc.bridge_options("a"));
  b.bridge = run_bridge_endpoint(clock, b.bus, *ba, ab.get(), sc.bridge_options("b"));

  const auto topics = sc.expanded_topics();
  const SimDuration stop = from_seconds(sc.duration_s);
  for (const auto& t : topics) {
    MessageBus& bus = t.site == 'a' ? a.bus : b.bus;
    auto src = std::make_shared<detail::TrafficSource>(
        detail::TrafficSource{&clock, bus.advertise(t.name, t.kind), from_seconds(1.0 / t.rate_hz), stop,
                              t.payload_bytes});
    std::mt19937_64 rng(mix_seed(sc.seed, detail::fnv1a(t.name)));
    const SimDuration phase{
        std::uniform_int_distribution<std::int64_t>(0, std::max<std::int64_t>(0, src->period.count() - 1))(rng)};
    if (phase < stop) clock.schedule_at(phase, "pub", [src] { detail::TrafficSource::fire(src); });
  }
  clock.run_quietly_until(stop + from_seconds(sc.drain_s));

  RunReport r;
  r.scenario = sc.name;
  r.seed = sc.seed;
  r.mode = sc.mode;
  r.agents = sc.agent_count;
  r.duration_s = sc.duration_s;
  r.config = sc.config;
  for (std::size_t i = 0; i < kTierCount; ++i) r.tiers[i].tier = static_cast<Tier>(i);

  const auto stats_a = a.bus.stats();
  const auto stats_b = b.bus.stats();
  std::array<std::vector<double>, kTierCount> tier_lat;
  for (const auto& t : topics) {
    const detail::Site& src = t.site == 'a' ? a : b;
    const detail::Site& dst = t.site == 'a' ? b : a;
    const netsim::NetLink& link = t.site == 'a' ? *ab : *ba;
    const auto& bus_stats = t.site == 'a' ? stats_a : stats_b;

    TopicRow row;
    row.topic = t.name;
    row.site = t.site;
    row.tier = sc.policy.classify(t.name);
    auto ps = bus_stats.find(t.name);
    row.published = ps == bus_stats.end() ? 0 : ps->second.publish_count;
    r.published_bytes += row.published * t.payload_bytes;

    std::uint64_t last_seq = 0, sub_received = 0;
    auto eg = src.bridge->egress().find(t.name);
    if (eg != src.bridge->egress().end()) {
      last_seq = eg->second.last_seq;
      sub_received = eg->second.subscription->received();
      row.dropped += eg->second.subscription->dropped();
      row.buffered += eg->second.subscription->depth();
      r.queue_dropped += eg->second.queue_dropped;
      r.subscriber_dropped += eg->second.subscription->dropped();
    }
    row.dropped += row.published - std::min(row.published, sub_received);  // published before the bridge subscribed

    // Every place a seq can still be waiting in.
    std::set<std::uint64_t> pending = src.bridge->queued_seqs(t.name);
    for (const auto& [id, bytes] : link.in_flight_packets())
      for (const auto& e : decode_packet(bytes).frames)
        if (e.topic == t.name) pending.insert(e.seq);

    auto in = dst.bridge->ingress().find(t.name);
    auto cur = dst.bridge->rx_cursor(t.name);
    const bool reliable = cur ? cur->reliable : row.tier == Tier::Critical && sc.mode == SchedulerMode::Prioritized;
    if (in != dst.bridge->ingress().end()) {
      row.delivered = in->second.delivered;
      row.duplicates = in->second.duplicates;
      row.latencies_s = in->second.latencies_s;
      row.dropped += reliable ? in->second.skipped : in->second.gaps;
    }
    if (reliable) {
      const std::uint64_t next = cur ? cur->next_expected : 1;
      if (cur) pending.insert(cur->held.begin(), cur->held.end());
      for (auto s : src.bridge->replay_buffer().seqs(t.name)) pending.insert(s);
      std::uint64_t waiting = 0;
      for (auto s : pending)
        if (s >= next && s <= last_seq) ++waiting;
      row.buffered += waiting;
      row.dropped += (last_seq + 1 > next ? last_seq + 1 - next : 0) - waiting;
    } else {
      const std::uint64_t last = cur ? cur->last_delivered : 0;
      std::uint64_t waiting = 0;
      for (auto s : pending)
        if (s > last && s <= last_seq) ++waiting;
      row.buffered += waiting;
      row.dropped += (last_seq > last ? last_seq - last : 0) - waiting;
    }
    row.latency = summarize(row.latencies_s);

    auto& tr = r.tiers[static_cast<std::size_t>(row.tier)];
    tr.published += row.published;
    tr.delivered += row.delivered;
    tr.dropped += row.dropped;
    tr.buffered += row.buffered;
    auto& tl = tier_lat[static_cast<std::size_t>(row.tier)];
    tl.insert(tl.end(), row.latencies_s.begin(), row.latencies_s.end());
    r.topics.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < kTierCount; ++i) r.tiers[i].latency = summarize(std::move(tier_lat[i]));

  for (const auto* s : {&a, &b}) {
    const auto& c = s->bridge->counters();
    r.link_bytes += c.bytes_sent;
    r.packets += c.packets_sent;
    r.control_frames += c.control_frames_sent;
    r.decode_errors += c.decode_errors;
    r.skips += c.skips_sent;
    for (const auto& [topic, st] : s->bridge->ingress()) r.nacks += st.nacks_sent;
  }
  return r;
}

// ---------------------------------------------------------------------------
// MMCF over scenarios

inline mmcf::MeasuredMetrics measure_config(const mmcf::BridgeConfig& c, const Scenario& sc) {
  Scenario s = sc;
  s.config = c;
  s.sync.reset();
  s.geo.reset();
  try {
    return detail::metrics_of(run_traffic(s));
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(fmt::format("{}: scenario failed under {}: {}", sc.name, c.label(), e.what()));
  }
}

// Corners of the space: first and last value of every field.
inline std::vector<mmcf::BridgeConfig> probe_configs(const mmcf::ConfigSpace& space) {
  std::set<mmcf::BridgeConfig> out;
  const auto r = space.radices();
  if (space.size() == 0) return {};
  for (unsigned mask = 0; mask < 32; ++mask) {
    std::array<std::size_t, 5> d{};
    for (std::size_t k = 0; k < 5; ++k) d[k] = (mask >> k) & 1u ? r[k] - 1 : 0;
    out.insert(space.at(d));
  }
  return {out.begin(), out.end()};
}

// Bounds from a calibration pass over the probe configs. Degenerate
// ranges are widened so normalization stays defined.
inline mmcf::MetricBounds calibrate_bounds(const Scenario& sc) {
  if (sc.bounds) return *sc.bounds;
  mmcf::MetricBounds b;
  double lmin = std::numeric_limits<double>::infinity(), lmax = 0.0, pmin = 1.0, pmax = 0.0, tmax = 0.0, bmax = 0.0;
  for (const auto& c : probe_configs(sc.space)) {
    const auto m = measure_config(c, sc);
    if (std::isfinite(m.latency_s)) {
      lmin = std::min(lmin, m.latency_s);
      lmax = std::max(lmax, m.latency_s);
    }
    pmin = std::min(pmin, m.loss);
    pmax = std::max(pmax, m.loss);
    tmax = std::max(tmax, m.compute_s);
    bmax = std::max(bmax, m.bandwidth_Bps);
  }
  if (!std::isfinite(lmin)) lmin = lmax = 0.0;
  auto widen = [](double lo, double hi) { return hi - lo > 1e-9 ? hi : lo + std::max(1e-6, 0.1 * std::abs(lo)); };
  b.latency_min = lmin;
  b.latency_max = widen(lmin, lmax);
  b.loss_min = pmin;
  b.loss_max = widen(pmin, pmax);
  b.compute_max = tmax > 0.0 ? tmax : 1e-6;
  b.bandwidth_max = bmax > 0.0 ? bmax : 1.0;
  return b;
}

struct MixMember {
  Scenario scenario;
  mmcf::MetricBounds bounds;
};

struct MixRow {
  mmcf::BridgeConfig config;
  std::vector<mmcf::Evaluation> per_scenario;
  double cost = 0.0;  // mean over the mix
};

struct MixResult {
  std::vector<std::string> scenarios;
  std::vector<MixRow> rows;  // enumeration order
  mmcf::BridgeConfig best;
  double best_cost = 0.0;
  bool exhaustive = true;
  double fraction_evaluated = 1.0;
  double median_fixed_cost = 0.0;
  double improvement_over_median = 0.0;  // 1 - best/median
};

inline std::vector<MixMember> load_mix(const Scenario& sc) {
  std::vector<MixMember> mix;
  mix.push_back({sc, calibrate_bounds(sc)});
  const auto base = std::filesystem::path(sc.source).parent_path();
  for (const auto& f : sc.mix) {
    Scenario m = load_scenario(base / f);
    m.seed = sc.seed;
    mix.push_back({m, calibrate_bounds(m)});
  }
  return mix;
}

// Mean MMCF over the mix; each member is normalized by its own bounds and
// weighted by the primary scenario's weights.
inline MixResult optimize_mix(const Scenario& sc, const std::vector<MixMember>& mix,
                              const mmcf::OptimizeOptions& opt = {}) {
  MixResult res;
  for (const auto& m : mix) res.scenarios.push_back(m.scenario.name);
  std::map<mmcf::BridgeConfig, MixRow> rows;
  auto cost_of = [&](const mmcf::BridgeConfig& c) {
    auto it = rows.find(c);
    if (it != rows.end()) return it->second.cost;
    MixRow row;
    row.config = c;
    for (const auto& m : mix) row.per_scenario.push_back(mmcf::evaluate(
        c, [&](const mmcf::BridgeConfig& x) { return measure_config(x, m.scenario); }, m.bounds, sc.weights));
    double sum = 0.0;
    for (const auto& e : row.per_scenario) sum += e.cost;
    row.cost = sum / static_cast<double>(row.per_scenario.size());
    rows.emplace(c, row);
    return row.cost;
  };
  // The optimizer sees the mean cost as the latency term under unit weight.
  const mmcf::MetricBounds unit{0.0, 1.0, 0.0, 1.0, 1.0, 1.0};
  const auto r = mmcf::optimize(
      sc.space, [&](const mmcf::BridgeConfig& c) { return mmcf::MeasuredMetrics{cost_of(c), 0.0, 0.0, 0.0}; }, unit,
      {1.0, 0.0, 0.0, 0.0}, opt);
  res.best = r.best;
  res.best_cost = rows.at(r.best).cost;
  res.exhaustive = r.exhaustive;
  res.fraction_evaluated = r.fraction_evaluated;
  for (const auto& e : r.table) res.rows.push_back(rows.at(e.config));
  std::vector<double> costs;
  for (const auto& row : res.rows) costs.push_back(row.cost);
  std::sort(costs.begin(), costs.end());
  const std::size_t n = costs.size();
  res.median_fixed_cost = n % 2 ? costs[n / 2] : 0.5 * (costs[n / 2 - 1] + costs[n / 2]);
  res.improvement_over_median = res.median_fixed_cost > 0.0 ? 1.0 - res.best_cost / res.median_fixed_cost : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Full run

// One sync loop per agent; agent i is seeded with mix_seed(seed, 1000 + i).
inline std::vector<twin::SyncScenario> sync_scenarios(const Scenario& sc) {
  std::vector<twin::SyncScenario> out;
  if (!sc.sync) return out;
  const std::size_t n = std::max<std::size_t>(1, sc.agent_count);
  for (std::size_t i = 1; i <= n; ++i) {
    twin::SyncScenario s = *sc.sync;
    const auto at = s.agent.find("{i}");
    if (at != std::string::npos) s.agent.replace(at, 3, std::to_string(i));
    s.seed = mix_seed(sc.seed, 1000 + i);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<twin::SyncReport> run_sync(const Scenario& sc) {
  std::vector<twin::SyncReport> out;
  for (const auto& s : sync_scenarios(sc)) out.push_back(twin::run_sync_loop(s));
  return out;
}

inline RunReport run(const Scenario& sc, const RunOptions& opt = {}) {
  RunReport r = run_traffic(sc);
  r.bounds = sc.bounds ? *sc.bounds : mmcf::MetricBounds{};
  if (!sc.bounds && !sc.topics.empty() && sc.agent_count > 0) r.bounds = calibrate_bounds(sc);
  r.cost.config = sc.config;
  r.cost.metrics = detail::metrics_of(r);
  r.cost.normalized = mmcf::normalize(r.cost.metrics, r.bounds);
  r.cost.cost = mmcf::mmcf(r.cost.normalized, sc.weights);

  if (opt.run_sync) r.sync = run_sync(sc);

  if (opt.run_geo && sc.geo) {
    const auto& g = *sc.geo;
    double e_lo = 0, e_hi = 0, n_lo = 0, n_hi = 0;
    for (const auto& w : g.waypoints) {
      const auto d = geo::tangent_plane_offset(g.reference, w.point);
      e_lo = std::min(e_lo, d.east);
      e_hi = std::max(e_hi, d.east);
      n_lo = std::min(n_lo, d.north);
      n_hi = std::max(n_hi, d.north);
    }
    const double extent = (e_hi - e_lo) * (n_hi - n_lo);
    const geo::EarthModel earth;
    for (const auto& w : g.waypoints)
      r.geo.push_back({w.name, w.point, geo::gps_to_scene(g.reference, w.point, g.scale, earth, extent),
                       geo::select_method(extent, earth)});
  }
  if (!opt.keep_latencies)
    for (auto& t : r.topics) t.latencies_s.clear();
  return r;
}

// ---------------------------------------------------------------------------
// CSV artifacts. Fixed headers; numbers are printed with fixed precision
// so identical runs give identical bytes.

namespace csv {

inline constexpr const char* kTopicsHeader =
    "topic,tier,site,published,delivered,dropped,buffered,duplicates,delivery_rate,lat_p50_ms,lat_p95_ms,lat_max_ms";
inline constexpr const char* kTiersHeader =
    "tier,published,delivered,dropped,buffered,delivery_rate,lat_mean_ms,lat_p50_ms,lat_p95_ms,lat_max_ms";
inline constexpr const char* kSummaryHeader = "metric,value";
inline constexpr const char* kMmcfHeader =
    "config,latency_s,loss,compute_s,bandwidth_Bps,L,P,C,B,cost";
inline constexpr const char* kGeoHeader = "name,lat_deg,lon_deg,alt_m,x,y,z,method";
inline constexpr const char* kCompareHeader = "metric,a,b,delta";
inline constexpr const char* kSweepHeader =
    "agents,mode,published,delivered,delivery_rate,published_bytes,link_bytes,critical_p50_ms,critical_p95_ms,critical_max_ms,"
    "standard_p95_ms,bulk_p95_ms";

inline std::string num(double v) { return fmt::format("{:.6f}", v); }
inline std::string ms(double s) { return fmt::format("{:.3f}", s * 1000.0); }

inline std::string topics(const RunReport& r) {
  std::string out = std::string(kTopicsHeader) + "\n";
  for (const auto& t : r.topics)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", t.topic, tier_name(t.tier), t.site, t.published,
                       t.delivered, t.dropped, t.buffered, t.duplicates, num(t.delivery_rate()), ms(t.latency.p50),
                       ms(t.latency.p95), ms(t.latency.max));
  return out;
}

inline std::string tiers(const RunReport& r) {
  std::string out = std::string(kTiersHeader) + "\n";
  for (const auto& t : r.tiers)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", tier_name(t.tier), t.published, t.delivered, t.dropped,
                       t.buffered, num(t.delivery_rate()), ms(t.latency.mean), ms(t.latency.p50), ms(t.latency.p95),
                       ms(t.latency.max));
  return out;
}

inline std::string mmcf_row(const mmcf::Evaluation& e) {
  const auto& m = e.metrics;
  const auto& n = e.normalized;
  return fmt::format("{},{},{},{},{},{},{},{},{},{}\n", e.config.label(), num(m.latency_s), num(m.loss),
                     fmt::format("{:.9f}", m.compute_s), num(m.bandwidth_Bps), num(n.L), num(n.P), num(n.C), num(n.B),
                     num(e.cost));
}

// Flat name/value view used by summary.csv and compare.
inline std::vector<std::pair<std::string, std::string>> summary_items(const RunReport& r) {
  std::vector<std::pair<std::string, std::string>> v{
      {"scenario", r.scenario},
      {"seed", std::to_string(r.seed)},
      {"mode", mode_name(r.mode)},
      {"agents", std::to_string(r.agents)},
      {"config", r.config.label()},
      {"published", std::to_string(r.published())},
      {"delivered", std::to_string(r.delivered())},
  };
  for (const auto& t : r.tiers) {
    const std::string p(tier_name(t.tier));
    v.emplace_back(p + "_delivery_rate", num(t.delivery_rate()));
    v.emplace_back(p + "_lat_p50_ms", ms(t.latency.p50));
    v.emplace_back(p + "_lat_p95_ms", ms(t.latency.p95));
    v.emplace_back(p + "_lat_max_ms", ms(t.latency.max));
  }
  v.emplace_back("published_bytes", std::to_string(r.published_bytes));
  v.emplace_back("link_bytes", std::to_string(r.link_bytes));
  v.emplace_back("packets", std::to_string(r.packets));
  v.emplace_back("control_frames", std::to_string(r.control_frames));
  v.emplace_back("queue_dropped", std::to_string(r.queue_dropped));
  v.emplace_back("subscriber_dropped", std::to_string(r.subscriber_dropped));
  v.emplace_back("nacks", std::to_string(r.nacks));
  v.emplace_back("skips", std::to_string(r.skips));
  v.emplace_back("decode_errors", std::to_string(r.decode_errors));
  v.emplace_back("mmcf_clamps", std::to_string(r.cost.normalized.clamps));
  v.emplace_back("mmcf_cost", num(r.cost.cost));
  v.emplace_back("conserved", r.conserved() ? "1" : "0");
  for (std::size_t i = 0; i < r.sync.size(); ++i) {
    const auto& s = r.sync[i];
    const std::string p = fmt::format("sync{}_", i + 1);
    v.emplace_back(p + "max_steady_e_pos_m", num(s.max_steady_e_pos));
    v.emplace_back(p + "max_steady_e_rot_deg", num(geo::rad_to_deg(s.max_steady_e_rot)));
    v.emplace_back(p + "integrated_e_pos", num(s.integrated_e_pos));
    v.emplace_back(p + "bound_violations", std::to_string(s.bound_violations));
  }
  return v;
}

inline std::string summary(const RunReport& r) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& [k, v] : summary_items(r)) out += k + "," + v + "\n";
  return out;
}

inline std::string geo_rows(const RunReport& r) {
  std::string out = std::string(kGeoHeader) + "\n";
  for (const auto& g : r.geo)
    out += fmt::format("{},{:.9f},{:.9f},{:.3f},{:.6f},{:.6f},{:.6f},{}\n", g.name,
                       geo::rad_to_deg(g.point.latitude), geo::rad_to_deg(g.point.longitude), g.point.altitude,
                       g.scene.x, g.scene.y, g.scene.z,
                       g.method == geo::ConversionMethod::Haversine ? "haversine" : "tangent_plane");
  return out;
}

inline std::string mix_table(const MixResult& m) {
  std::string out = std::string(kMmcfHeader) + ",scenario\n";
  for (const auto& row : m.rows)
    for (std::size_t i = 0; i < row.per_scenario.size(); ++i) {
      std::string line = mmcf_row(row.per_scenario[i]);
      line.pop_back();
      out += line + "," + m.scenarios[i] + "\n";
    }
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace csv

// Writes topics.csv, tiers.csv, summary.csv, mmcf.csv and, when present,
// sync_<n>.csv and geo.csv. Returns the files written.
inline std::vector<std::filesystem::path> write_report(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto put = [&](const std::string& name, const std::string& text) {
    files.push_back(dir / name);
    csv::write_file(files.back(), text);
  };
  put("topics.csv", csv::topics(r));
  put("tiers.csv", csv::tiers(r));
  put("summary.csv", csv::summary(r));
  put("mmcf.csv", std::string(csv::kMmcfHeader) + "\n" + csv::mmcf_row(r.cost));
  for (std::size_t i = 0; i < r.sync.size(); ++i) put(fmt::format("sync_{}.csv", i + 1), r.sync[i].csv());
  if (!r.geo.empty()) put("geo.csv", csv::geo_rows(r));
  return files;
}

// ---------------------------------------------------------------------------
// compare and sweep

struct SummaryTable {
  std::vector<std::pair<std::string, std::string>> items;
  std::string get(const std::string& k) const {
    for (const auto& [key, v] : items)
      if (key == k) return v;
    return {};
  }
};

inline SummaryTable summary_of(const RunReport& r) { return {csv::summary_items(r)}; }

inline SummaryTable read_summary(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  if (std::filesystem::is_directory(p)) p /= "summary.csv";
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  SummaryTable t;
  std::string line;
  std::getline(in, line);
  if (line != csv::kSummaryHeader) throw std::runtime_error(p.string() + ": not a summary.csv");
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    if (c == std::string::npos) continue;
    t.items.emplace_back(line.substr(0, c), line.substr(c + 1));
  }
  return t;
}

struct DeltaRow {
  std::string metric;
  double a = 0.0, b = 0.0;
  double delta = 0.0;  // (b - a) / |a|
};

// Relative deltas of every numeric metric. Both sides must come from the
// same scenario and seed.
inline std::vector<DeltaRow> compare(const SummaryTable& a, const SummaryTable& b) {
  if (a.get("scenario") != b.get("scenario") || a.get("seed") != b.get("seed"))
    throw std::invalid_argument(fmt::format("compare: reports differ in scenario or seed ({}/{} vs {}/{})",
                                            a.get("scenario"), a.get("seed"), b.get("scenario"), b.get("seed")));
  std::vector<DeltaRow> out;
  for (const auto& [k, va] : a.items) {
    if (k == "seed" || k == "agents") continue;
    const std::string vb = b.get(k);
    char* end = nullptr;
    const double x = std::strtod(va.c_str(), &end);
    if (end == va.c_str() || *end) continue;
    const double y = std::strtod(vb.c_str(), &end);
    if (vb.empty() || *end) continue;
    DeltaRow d{k, x, y, 0.0};
    if (x != y) d.delta = x != 0.0 ? (y - x) / std::abs(x) : std::copysign(std::numeric_limits<double>::infinity(), y - x);
    out.push_back(d);
  }
  return out;
}

inline std::string compare_csv(const std::vector<DeltaRow>& rows) {
  std::string out = std::string(csv::kCompareHeader) + "\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{}\n", r.metric, csv::num(r.a), csv::num(r.b), csv::num(r.delta));
  return out;
}

struct SweepRow {
  std::size_t agents = 0;
  RunReport report;
};

inline std::vector<SweepRow> sweep_agents(const Scenario& sc, const std::vector<std::size_t>& counts,
                                          const RunOptions& opt = {}) {
  if (counts.empty()) throw std::invalid_argument("sweep: counts must be non-empty");
  if (!std::is_sorted(counts.begin(), counts.end()) ||
      std::adjacent_find(counts.begin(), counts.end()) != counts.end())
    throw std::invalid_argument("sweep: counts must be strictly ascending");
  std::vector<SweepRow> out;
  for (auto n : counts) {
    Scenario s = sc;
    s.agent_count = n;
    out.push_back({n, run(s, opt)});
  }
  return out;
}

inline std::string sweep_row(const RunReport& r) {
  const auto& c = r.tier(Tier::Critical);
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.agents, mode_name(r.mode), r.published(),
                     r.delivered(), csv::num(r.published() ? double(r.delivered()) / double(r.published()) : 1.0),
                     r.published_bytes, r.link_bytes,
                     csv::ms(c.latency.p50), csv::ms(c.latency.p95), csv::ms(c.latency.max),
                     csv::ms(r.tier(Tier::Standard).latency.p95), csv::ms(r.tier(Tier::Bulk).latency.p95));
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(csv::kSweepHeader) + "\n";
  for (const auto& r : rows) out += sweep_row(r.report);
  return out;
}

}  // namespace twinbridge
