#pragma once

// Scenario files: YAML describing the network, the agents and their
// topics, the bridge configuration, MMCF weights and config space, and the
// optional twin-sync and geo sections. Unknown keys are errors; every
// error carries file:line:column.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "twinbridge/bridge.hpp"
#include "twinbridge/geo.hpp"
#include "twinbridge/mmcf.hpp"
#include "twinbridge/twinsync.hpp"

namespace twinbridge {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TopicSpec {
  std::string name;  // "{i}" expands to the agent index, 1-based
  MessageKind kind = MessageKind::Blob;
  double rate_hz = 10.0;
  std::size_t payload_bytes = 64;
  char site = 'a';  // publishing side; the other side receives
};

struct Waypoint {
  std::string name;
  geo::GeoPoint point;
};

struct GeoSection {
  geo::GeoPoint reference;
  double scale = 1.0;
  std::vector<Waypoint> waypoints;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  double drain_s = 10.0;  // run on with publishers stopped, to flush queues and replays

  netsim::NetworkConditions network;

  std::size_t agent_count = 0;
  std::vector<TopicSpec> topics;

  PriorityPolicy policy{{}, Tier::Standard};

  mmcf::BridgeConfig config;
  SchedulerMode mode = SchedulerMode::Prioritized;
  SimDuration tick = std::chrono::milliseconds(10);
  std::optional<std::size_t> budget_bytes_per_tick;  // derived from bandwidth when unset
  std::size_t queue_byte_limit = 1u << 20;
  std::size_t subscriber_capacity = 1000;
  std::size_t packet_overhead_bytes = 28;
  SimDuration heartbeat_period = std::chrono::milliseconds(200);
  SimDuration nack_retry = std::chrono::milliseconds(300);

  mmcf::MmcfWeights weights;
  std::optional<mmcf::MetricBounds> bounds;  // calibrated when absent
  mmcf::ConfigSpace space = mmcf::default_space();
  std::vector<std::string> mix;  // further scenario files averaged by mmcf-opt

  std::optional<twin::SyncScenario> sync;
  std::optional<GeoSection> geo;

  std::string source;  // path the scenario was loaded from, empty if built in code

  // Concrete topic names, agent-major.
  std::vector<TopicSpec> expanded_topics() const {
    std::vector<TopicSpec> out;
    for (std::size_t i = 1; i <= agent_count; ++i)
      for (const auto& t : topics) {
        TopicSpec x = t;
        std::string n;
        for (std::size_t k = 0; k < t.name.size(); ++k) {
          if (t.name.compare(k, 3, "{i}") == 0) {
            n += std::to_string(i);
            k += 2;
          } else {
            n.push_back(t.name[k]);
          }
        }
        x.name = n;
        out.push_back(x);
      }
    return out;
  }

  BridgeOptions bridge_options(const std::string& side) const {
    BridgeOptions o;
    o.name = side;
    o.policy = policy;
    o.discovery.period = from_seconds(config.discovery_period_s);
    o.replay.per_topic_capacity = config.replay_depth;
    o.replay.total_capacity = std::max<std::size_t>(4096, config.replay_depth * std::max<std::size_t>(1, topics.size() * agent_count));
    o.scheduler.shares = config.shares;
    o.mode = mode;
    o.tick = tick;
    o.budget_bytes_per_tick = budget_bytes_per_tick;
    if (!o.budget_bytes_per_tick && network.bandwidth_Bps)
      o.budget_bytes_per_tick =
          std::max<std::size_t>(1, static_cast<std::size_t>(*network.bandwidth_Bps * to_seconds(tick)));
    o.batch_size = config.batch_size;
    o.redundancy = config.redundancy;
    o.packet_overhead_bytes = packet_overhead_bytes;
    o.queue_byte_limit = queue_byte_limit;
    o.subscriber_capacity = subscriber_capacity;
    o.heartbeat_period = heartbeat_period;
    o.nack_retry = nack_retry;
    for (const auto& t : expanded_topics()) o.static_topics.push_back(t.name);
    if (mode == SchedulerMode::Fifo) o = BridgeOptions::fifo_baseline(o);
    return o;
  }

  void validate() const {
    if (!(duration_s > 0.0)) throw ScenarioError("scenario: duration must be > 0");
    if (!(drain_s >= 0.0)) throw ScenarioError("scenario: drain must be >= 0");
    network.validate();
    config.validate();
    weights.validate();
    if (bounds) bounds->validate();
    std::set<std::string> names;
    for (const auto& t : expanded_topics()) {
      if (!TopicName::is_valid(t.name)) throw ScenarioError("scenario: invalid topic name: " + t.name);
      if (!names.insert(t.name).second) throw ScenarioError("scenario: topic declared twice: " + t.name);
      if (control::is_reserved(t.name)) throw ScenarioError("scenario: reserved topic: " + t.name);
      if (!(t.rate_hz > 0.0)) throw ScenarioError("scenario: rate must be > 0 for " + t.name);
    }
    bridge_options("a").validate();
    if (sync) sync->validate();
  }
};

// ---------------------------------------------------------------------------
// Loading

namespace detail {

class YamlReader {
 public:
  explicit YamlReader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const auto m = n.Mark();
    if (m.is_null()) throw ScenarioError(fmt::format("{}: {}", file_, msg));
    throw ScenarioError(fmt::format("{}:{}:{}: {}", file_, m.line + 1, m.column + 1, msg));
  }

  void require_map(const YAML::Node& n, const std::string& what, std::initializer_list<const char*> keys) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : n) {
      const auto k = kv.first.as<std::string>();
      if (!allowed.count(k)) fail(kv.first, fmt::format("unknown key '{}' in {}", k, what));
    }
  }

  template <typename T>
  T as(const YAML::Node& n, const std::string& what) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "bad value for " + what);
    }
  }

  double number(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    return as<double>(n, what);
  }

  template <typename T>
  void get(const YAML::Node& parent, const char* key, T& out) const {
    if (auto n = parent[key]) out = as<T>(n, key);
  }

  void positive(const YAML::Node& parent, const char* key, double& out, bool allow_zero = false) const {
    if (auto n = parent[key]) {
      out = number(n, key);
      if (!(allow_zero ? out >= 0.0 : out > 0.0)) fail(n, fmt::format("{} must be {} 0", key, allow_zero ? ">=" : ">"));
    }
  }

  twin::Vec3 vec3(const YAML::Node& n, const std::string& what) const {
    if (!n.IsSequence() || n.size() != 3) fail(n, what + " must be a list of 3 numbers");
    return {number(n[0], what), number(n[1], what), number(n[2], what)};
  }

  // A constant, or a list of [t_s, value] breakpoints.
  netsim::Profile profile(const YAML::Node& n, const std::string& what) const {
    if (n.IsScalar()) return netsim::Profile(number(n, what));
    if (!n.IsSequence() || n.size() == 0) fail(n, what + " must be a number or a list of [t, value]");
    std::vector<std::pair<SimDuration, double>> pts;
    for (const auto& p : n) {
      if (!p.IsSequence() || p.size() != 2) fail(p, what + " breakpoint must be [t, value]");
      pts.emplace_back(from_seconds(number(p[0], what)), number(p[1], what));
      if (pts.size() > 1 && pts.back().first < pts[pts.size() - 2].first) fail(p, what + " breakpoints must be sorted");
    }
    return netsim::Profile(std::move(pts));
  }

  Tier tier(const YAML::Node& n) const {
    auto t = parse_tier(as<std::string>(n, "tier"));
    if (!t) fail(n, "tier must be critical, standard or bulk");
    return *t;
  }

  std::array<double, 3> shares(const YAML::Node& n) const {
    if (!n.IsSequence() || n.size() != 3) fail(n, "shares must be a list of 3 fractions");
    return {number(n[0], "shares"), number(n[1], "shares"), number(n[2], "shares")};
  }

 private:
  std::string file_;
};

inline netsim::NetworkConditions parse_network(const YamlReader& r, const YAML::Node& n) {
  r.require_map(n, "network", {"latency_s", "loss", "bandwidth_Bps", "disconnects", "packet_overhead_bytes"});
  netsim::NetworkConditions c;
  if (n["latency_s"]) c.latency_s = r.profile(n["latency_s"], "latency_s");
  if (n["loss"]) c.loss = r.profile(n["loss"], "loss");
  if (auto b = n["bandwidth_Bps"]) {
    if (!(b.IsScalar() && b.as<std::string>() == "unlimited")) c.bandwidth_Bps = r.number(b, "bandwidth_Bps");
  }
  r.get(n, "packet_overhead_bytes", c.packet_overhead_bytes);
  if (auto d = n["disconnects"]) {
    if (!d.IsSequence()) r.fail(d, "disconnects must be a list of [start_s, end_s]");
    for (const auto& w : d) {
      if (!w.IsSequence() || w.size() != 2) r.fail(w, "disconnect must be [start_s, end_s]");
      c.disconnects.push_back({from_seconds(r.number(w[0], "disconnect")), from_seconds(r.number(w[1], "disconnect"))});
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(n, e.what());
  }
  return c;
}

inline twin::SyncScenario parse_sync(const YamlReader& r, const YAML::Node& n, const netsim::NetworkConditions& net,
                                     std::uint64_t seed) {
  r.require_map(n, "sync",
                {"agent", "duration_s", "step_s", "update_period_s", "mass", "diameter", "c_drag", "terrain",
                 "friction", "noise", "gains", "grid", "adaptive", "lipschitz_K", "steady_after_s", "thresholds",
                 "heading_gain", "gain_weights", "force", "yaw", "initial", "network"});
  twin::SyncScenario s;
  s.network = net;
  s.seed = seed;
  s.ctrl.grid = twin::default_gain_grid();
  r.get(n, "agent", s.agent);
  r.positive(n, "duration_s", s.duration_s);
  r.positive(n, "step_s", s.step_s);
  r.positive(n, "update_period_s", s.update_period_s);
  r.positive(n, "mass", s.params.mass);
  r.positive(n, "diameter", s.params.diameter);
  r.positive(n, "c_drag", s.params.c_drag, true);
  r.get(n, "terrain", s.terrain);
  if (auto f = n["friction"]) {
    if (!f.IsMap()) r.fail(f, "friction must map terrain to mu");
    s.params.friction.clear();
    for (const auto& kv : f) s.params.friction[kv.first.as<std::string>()] = r.number(kv.second, "friction");
  }
  if (auto z = n["noise"]) {
    r.require_map(z, "sync.noise", {"pos", "vel", "heading"});
    r.positive(z, "pos", s.noise_pos, true);
    r.positive(z, "vel", s.noise_vel, true);
    r.positive(z, "heading", s.noise_heading, true);
  }
  auto gains = [&](const YAML::Node& g) {
    if (!g.IsSequence() || g.size() != 2) r.fail(g, "gains must be [kp, kd]");
    return twin::Gains{r.number(g[0], "kp"), r.number(g[1], "kd")};
  };
  if (auto g = n["gains"]) s.ctrl.gains = gains(g);
  if (auto g = n["grid"]) {
    if (!g.IsSequence()) r.fail(g, "grid must be a list of [kp, kd]");
    s.ctrl.grid.clear();
    for (const auto& x : g) s.ctrl.grid.push_back(gains(x));
  }
  r.get(n, "adaptive", s.adaptive_gains);
  r.positive(n, "lipschitz_K", s.lipschitz_K);
  r.positive(n, "steady_after_s", s.steady_after_s, true);
  r.positive(n, "heading_gain", s.ctrl.heading_gain, true);
  if (auto t = n["thresholds"]) {
    r.require_map(t, "sync.thresholds", {"pos", "vel"});
    r.positive(t, "pos", s.ctrl.base.pos);
    r.positive(t, "vel", s.ctrl.base.vel);
  }
  if (auto w = n["gain_weights"]) {
    if (!w.IsSequence() || w.size() != 2) r.fail(w, "gain_weights must be [accuracy, energy]");
    s.gain_weights = {r.number(w[0], "accuracy"), r.number(w[1], "energy")};
  }
  if (auto f = n["force"]) {
    r.require_map(f, "sync.force", {"bias", "amplitude", "omega", "phase", "hold_s", "steps"});
    if (f["bias"]) s.force.bias = r.vec3(f["bias"], "bias");
    if (f["amplitude"]) s.force.amplitude = r.vec3(f["amplitude"], "amplitude");
    if (f["omega"]) s.force.omega = r.vec3(f["omega"], "omega");
    if (f["phase"]) s.force.phase = r.vec3(f["phase"], "phase");
    r.positive(f, "hold_s", s.force.hold_s, true);
    if (auto st = f["steps"]) {
      if (!st.IsSequence()) r.fail(st, "steps must be a list");
      for (const auto& x : st) {
        r.require_map(x, "force step", {"t", "df"});
        if (!x["t"] || !x["df"]) r.fail(x, "force step needs t and df");
        s.force.steps.push_back({r.number(x["t"], "t"), r.vec3(x["df"], "df")});
      }
    }
  }
  if (auto y = n["yaw"]) {
    r.require_map(y, "sync.yaw", {"amplitude", "omega", "hold_s"});
    if (y["amplitude"]) s.yaw.amplitude = r.number(y["amplitude"], "amplitude");
    if (y["omega"]) s.yaw.omega = r.number(y["omega"], "omega");
    r.positive(y, "hold_s", s.yaw.hold_s, true);
  }
  if (auto i = n["initial"]) {
    r.require_map(i, "sync.initial", {"p", "v", "heading"});
    if (i["p"]) s.initial.p = r.vec3(i["p"], "p");
    if (i["v"]) s.initial.v = r.vec3(i["v"], "v");
    if (i["heading"]) s.initial.heading = r.number(i["heading"], "heading");
  }
  if (auto nn = n["network"]) s.network = parse_network(r, nn);
  try {
    s.validate();
  } catch (const twin::SyncError& e) {
    r.fail(n, e.what());
  }
  return s;
}

inline GeoSection parse_geo(const YamlReader& r, const YAML::Node& n) {
  r.require_map(n, "geo", {"reference", "scale", "waypoints"});
  auto point = [&](const YAML::Node& p, const std::string& what) {
    r.require_map(p, what, {"name", "lat_deg", "lon_deg", "alt_m"});
    if (!p["lat_deg"] || !p["lon_deg"]) r.fail(p, what + " needs lat_deg and lon_deg");
    geo::GeoPoint g{geo::deg_to_rad(r.number(p["lat_deg"], "lat_deg")),
                    geo::deg_to_rad(r.number(p["lon_deg"], "lon_deg")), 0.0};
    if (p["alt_m"]) g.altitude = r.number(p["alt_m"], "alt_m");
    if (!g.valid()) r.fail(p, what + ": latitude within +-90, longitude within +-180 degrees");
    return g;
  };
  GeoSection g;
  if (!n["reference"]) r.fail(n, "geo needs a reference");
  g.reference = point(n["reference"], "geo.reference");
  r.positive(n, "scale", g.scale);
  if (auto w = n["waypoints"]) {
    if (!w.IsSequence()) r.fail(w, "waypoints must be a list");
    std::size_t k = 0;
    for (const auto& p : w) {
      ++k;
      Waypoint wp{p["name"] ? r.as<std::string>(p["name"], "name") : fmt::format("wp{}", k), point(p, "waypoint")};
      g.waypoints.push_back(wp);
    }
  }
  return g;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text, const std::string& file = "<scenario>") {
  detail::YamlReader r(file);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(fmt::format("{}:{}:{}: {}", file, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  if (!root || root.IsNull()) throw ScenarioError(file + ": empty scenario file");
  r.require_map(root, "scenario",
                {"name", "seed", "duration_s", "drain_s", "network", "agents", "policy", "bridge", "mmcf", "sync",
                 "geo"});
  Scenario s;
  s.source = file;
  r.get(root, "name", s.name);
  r.get(root, "seed", s.seed);
  if (!root["duration_s"]) r.fail(root, "duration_s is required");
  r.positive(root, "duration_s", s.duration_s);
  r.positive(root, "drain_s", s.drain_s, true);
  if (auto n = root["network"]) s.network = detail::parse_network(r, n);

  if (auto a = root["agents"]) {
    r.require_map(a, "agents", {"count", "topics"});
    r.get(a, "count", s.agent_count);
    if (auto ts = a["topics"]) {
      if (!ts.IsSequence()) r.fail(ts, "topics must be a list");
      for (const auto& t : ts) {
        r.require_map(t, "topic", {"name", "kind", "rate_hz", "payload_bytes", "site"});
        if (!t["name"]) r.fail(t, "topic needs a name");
        TopicSpec spec;
        spec.name = r.as<std::string>(t["name"], "name");
        if (auto k = t["kind"]) {
          auto kind = parse_kind(r.as<std::string>(k, "kind"));
          if (!kind) r.fail(k, "kind must be one of Pose, Twist, Scan2D, PointCloud, Command, Blob");
          spec.kind = *kind;
        }
        r.positive(t, "rate_hz", spec.rate_hz);
        r.get(t, "payload_bytes", spec.payload_bytes);
        if (auto site = t["site"]) {
          const auto v = r.as<std::string>(site, "site");
          if (v != "a" && v != "b") r.fail(site, "site must be a or b");
          spec.site = v[0];
        }
        if (!TopicName::is_valid(spec.name)) r.fail(t["name"], "invalid topic name: " + spec.name);
        s.topics.push_back(spec);
      }
    }
  }

  if (auto p = root["policy"]) {
    r.require_map(p, "policy", {"default", "rules"});
    if (p["default"]) s.policy.set_default_tier(r.tier(p["default"]));
    if (auto rules = p["rules"]) {
      if (!rules.IsSequence()) r.fail(rules, "rules must be a list");
      for (const auto& x : rules) {
        r.require_map(x, "rule", {"pattern", "tier"});
        if (!x["pattern"] || !x["tier"]) r.fail(x, "rule needs pattern and tier");
        s.policy.add_rule(r.as<std::string>(x["pattern"], "pattern"), r.tier(x["tier"]));
      }
    }
  }

  if (auto b = root["bridge"]) {
    r.require_map(b, "bridge",
                  {"mode", "redundancy", "shares", "replay_depth", "discovery_period_s", "batch_size", "tick_ms",
                   "budget_bytes_per_tick", "queue_byte_limit", "subscriber_capacity", "packet_overhead_bytes",
                   "heartbeat_ms", "nack_retry_ms"});
    if (auto m = b["mode"]) {
      const auto v = r.as<std::string>(m, "mode");
      if (v == "prioritized") s.mode = SchedulerMode::Prioritized;
      else if (v == "fifo") s.mode = SchedulerMode::Fifo;
      else r.fail(m, "mode must be prioritized or fifo");
    }
    r.get(b, "redundancy", s.config.redundancy);
    if (b["shares"]) s.config.shares = r.shares(b["shares"]);
    r.get(b, "replay_depth", s.config.replay_depth);
    r.positive(b, "discovery_period_s", s.config.discovery_period_s);
    r.get(b, "batch_size", s.config.batch_size);
    if (auto t = b["tick_ms"]) s.tick = from_seconds(r.number(t, "tick_ms") / 1000.0);
    if (auto t = b["budget_bytes_per_tick"]) s.budget_bytes_per_tick = r.as<std::size_t>(t, "budget_bytes_per_tick");
    r.get(b, "queue_byte_limit", s.queue_byte_limit);
    r.get(b, "subscriber_capacity", s.subscriber_capacity);
    r.get(b, "packet_overhead_bytes", s.packet_overhead_bytes);
    if (auto t = b["heartbeat_ms"]) s.heartbeat_period = from_seconds(r.number(t, "heartbeat_ms") / 1000.0);
    if (auto t = b["nack_retry_ms"]) s.nack_retry = from_seconds(r.number(t, "nack_retry_ms") / 1000.0);
    try {
      s.config.validate();
    } catch (const mmcf::MmcfError& e) {
      r.fail(b, e.what());
    }
  }

  if (auto m = root["mmcf"]) {
    r.require_map(m, "mmcf", {"weights", "bounds", "space", "mix"});
    if (auto w = m["weights"]) {
      if (!w.IsSequence() || w.size() != 4) r.fail(w, "weights must be [alpha, beta, gamma, delta]");
      s.weights = {r.number(w[0], "alpha"), r.number(w[1], "beta"), r.number(w[2], "gamma"), r.number(w[3], "delta")};
      try {
        s.weights.validate();
      } catch (const mmcf::MmcfError& e) {
        r.fail(w, e.what());
      }
    }
    if (auto bn = m["bounds"]) {
      r.require_map(bn, "mmcf.bounds",
                    {"latency_min", "latency_max", "loss_min", "loss_max", "compute_max", "bandwidth_max"});
      mmcf::MetricBounds mb;
      r.get(bn, "latency_min", mb.latency_min);
      r.get(bn, "latency_max", mb.latency_max);
      r.get(bn, "loss_min", mb.loss_min);
      r.get(bn, "loss_max", mb.loss_max);
      r.get(bn, "compute_max", mb.compute_max);
      r.get(bn, "bandwidth_max", mb.bandwidth_max);
      try {
        mb.validate();
      } catch (const mmcf::MmcfError& e) {
        r.fail(bn, e.what());
      }
      s.bounds = mb;
    }
    if (auto sp = m["space"]) {
      r.require_map(sp, "mmcf.space", {"redundancy", "shares", "replay_depth", "discovery_period_s", "batch_size"});
      auto list = [&](const char* key, auto& out) {
        if (auto l = sp[key]) {
          if (!l.IsSequence() || l.size() == 0) r.fail(l, fmt::format("{} must be a non-empty list", key));
          out.clear();
          for (const auto& x : l) out.push_back(r.as<typename std::decay_t<decltype(out)>::value_type>(x, key));
        }
      };
      list("redundancy", s.space.redundancy);
      list("replay_depth", s.space.replay_depth);
      list("discovery_period_s", s.space.discovery_period_s);
      list("batch_size", s.space.batch_size);
      if (auto l = sp["shares"]) {
        if (!l.IsSequence() || l.size() == 0) r.fail(l, "shares must be a non-empty list");
        s.space.shares.clear();
        for (const auto& x : l) s.space.shares.push_back(r.shares(x));
      }
      for (const auto& c : s.space.enumerate()) {
        try {
          c.validate();
        } catch (const mmcf::MmcfError& e) {
          r.fail(sp, fmt::format("{}: {}", c.label(), e.what()));
        }
      }
    }
    if (auto mx = m["mix"]) {
      if (!mx.IsSequence()) r.fail(mx, "mix must be a list of scenario files");
      for (const auto& x : mx) s.mix.push_back(r.as<std::string>(x, "mix"));
    }
  }

  if (auto sy = root["sync"]) s.sync = detail::parse_sync(r, sy, s.network, s.seed);
  if (auto g = root["geo"]) s.geo = detail::parse_geo(r, g);

  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ScenarioError(fmt::format("{}: {}", file, e.what()));
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string() + ": cannot open scenario file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

}  // namespace twinbridge
