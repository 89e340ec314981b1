#pragma once

// Multi-metric cost: latency, loss, compute and bandwidth are normalized
// against scenario bounds and combined with mission weights; optimize()
// picks the cheapest bridge configuration from a finite space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "twinbridge/sim_time.hpp"

namespace twinbridge::mmcf {

enum class MmcfErrorCode { InvalidWeights, InvalidBounds, EmptySpace, InvalidConfig };

class MmcfError : public std::runtime_error {
 public:
  MmcfError(MmcfErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  MmcfErrorCode code() const { return code_; }

 private:
  MmcfErrorCode code_;
};

struct BridgeConfig {
  unsigned redundancy = 0;                       // 0..3 extra copies per packet
  std::array<double, 3> shares{0.0, 0.0, 0.0};   // reserved fraction per tier
  std::size_t replay_depth = 256;                // per topic
  double discovery_period_s = 0.5;
  std::size_t batch_size = 1;

  void validate() const {
    if (redundancy > 3) throw MmcfError(MmcfErrorCode::InvalidConfig, "redundancy must be 0..3");
    double sum = 0.0;
    for (double s : shares) {
      if (!(s >= 0.0 && s <= 1.0)) throw MmcfError(MmcfErrorCode::InvalidConfig, "share outside [0,1]");
      sum += s;
    }
    if (sum > 1.0 + 1e-9) throw MmcfError(MmcfErrorCode::InvalidConfig, "shares sum above 1");
    if (replay_depth == 0) throw MmcfError(MmcfErrorCode::InvalidConfig, "replay depth must be >= 1");
    if (!(discovery_period_s > 0.0)) throw MmcfError(MmcfErrorCode::InvalidConfig, "discovery period must be > 0");
    if (batch_size == 0) throw MmcfError(MmcfErrorCode::InvalidConfig, "batch size must be >= 1");
  }

  auto key() const { return std::tie(redundancy, shares, replay_depth, discovery_period_s, batch_size); }
  friend bool operator==(const BridgeConfig& a, const BridgeConfig& b) { return a.key() == b.key(); }
  friend bool operator<(const BridgeConfig& a, const BridgeConfig& b) { return a.key() < b.key(); }

  std::string label() const {
    return fmt::format("r{}-s{:g}/{:g}/{:g}-d{}-p{:g}-b{}", redundancy, shares[0], shares[1], shares[2], replay_depth,
                       discovery_period_s, batch_size);
  }
};

struct MetricBounds {
  double latency_min = 0.0;  // s
  double latency_max = 0.5;
  double loss_min = 0.0;
  double loss_max = 1.0;
  double compute_max = 0.05;        // s of modeled processing per simulated s
  double bandwidth_max = 250000.0;  // bytes/s

  void validate() const {
    if (!(latency_max > latency_min) || !(loss_max > loss_min) || !(compute_max > 0.0) || !(bandwidth_max > 0.0))
      throw MmcfError(MmcfErrorCode::InvalidBounds, "MetricBounds: need l_max > l_min, p_max > p_min, tau_max, b_max > 0");
  }
};

struct MmcfWeights {
  double alpha = 0.25;  // latency
  double beta = 0.25;   // loss
  double gamma = 0.25;  // compute
  double delta = 0.25;  // bandwidth

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0 && delta >= 0.0))
      throw MmcfError(MmcfErrorCode::InvalidWeights, "MMCF weights must be >= 0");
    if (std::abs(alpha + beta + gamma + delta - 1.0) > 1e-9)
      throw MmcfError(MmcfErrorCode::InvalidWeights, "MMCF weights must sum to 1");
  }
};

struct MeasuredMetrics {
  double latency_s = 0.0;
  double loss = 0.0;
  double compute_s = 0.0;
  double bandwidth_Bps = 0.0;
  friend bool operator==(const MeasuredMetrics&, const MeasuredMetrics&) = default;
};

struct NormalizedMetrics {
  double L = 0.0, P = 0.0, C = 0.0, B = 0.0;
  unsigned clamps = 0;  // how many of the four were clamped into [0, 1]
};

namespace detail {
inline double clamp01(double v, unsigned& clamps) {
  if (v < 0.0) {
    ++clamps;
    return 0.0;
  }
  if (v > 1.0) {
    ++clamps;
    return 1.0;
  }
  return v;
}
}  // namespace detail

inline NormalizedMetrics normalize(const MeasuredMetrics& m, const MetricBounds& b) {
  b.validate();
  NormalizedMetrics n;
  n.L = detail::clamp01((m.latency_s - b.latency_min) / (b.latency_max - b.latency_min), n.clamps);
  n.P = detail::clamp01((m.loss - b.loss_min) / (b.loss_max - b.loss_min), n.clamps);
  n.C = detail::clamp01(m.compute_s / b.compute_max, n.clamps);
  n.B = detail::clamp01(m.bandwidth_Bps / b.bandwidth_max, n.clamps);
  return n;
}

inline double mmcf(const NormalizedMetrics& n, const MmcfWeights& w) {
  w.validate();
  return w.alpha * n.L + w.beta * n.P + w.gamma * n.C + w.delta * n.B;
}

inline double mmcf(const MeasuredMetrics& m, const MetricBounds& b, const MmcfWeights& w) {
  return mmcf(normalize(m, b), w);
}

// ---------------------------------------------------------------------------
// Configuration spaces

// Cartesian product of per-field candidate lists.
struct ConfigSpace {
  std::vector<unsigned> redundancy{0};
  std::vector<std::array<double, 3>> shares{{0.0, 0.0, 0.0}};
  std::vector<std::size_t> replay_depth{256};
  std::vector<double> discovery_period_s{0.5};
  std::vector<std::size_t> batch_size{1};

  std::size_t size() const {
    return redundancy.size() * shares.size() * replay_depth.size() * discovery_period_s.size() * batch_size.size();
  }

  std::array<std::size_t, 5> radices() const {
    return {redundancy.size(), shares.size(), replay_depth.size(), discovery_period_s.size(), batch_size.size()};
  }

  BridgeConfig at(std::array<std::size_t, 5> d) const {
    BridgeConfig c;
    c.redundancy = redundancy.at(d[0]);
    c.shares = shares.at(d[1]);
    c.replay_depth = replay_depth.at(d[2]);
    c.discovery_period_s = discovery_period_s.at(d[3]);
    c.batch_size = batch_size.at(d[4]);
    return c;
  }

  BridgeConfig at(std::size_t index) const {
    std::array<std::size_t, 5> d{};
    const auto r = radices();
    for (std::size_t k = 5; k-- > 0;) {
      d[k] = index % r[k];
      index /= r[k];
    }
    return at(d);
  }

  std::vector<BridgeConfig> enumerate() const {
    std::vector<BridgeConfig> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i));
    return out;
  }
};

struct Evaluation {
  BridgeConfig config;
  MeasuredMetrics metrics;
  NormalizedMetrics normalized;
  double cost = 0.0;
};

using Evaluator = std::function<MeasuredMetrics(const BridgeConfig&)>;

struct OptimizeOptions {
  std::size_t exhaustive_limit = 10000;
  std::size_t search_budget = 2000;  // evaluations for local search
  std::uint64_t seed = 1;
};

struct OptimizeResult {
  BridgeConfig best;
  double cost = 0.0;
  bool exhaustive = true;
  std::size_t evaluated = 0;
  double fraction_evaluated = 1.0;
  std::vector<Evaluation> table;  // every evaluated config, in evaluation order
};

namespace detail {
// Lower cost wins, equal cost goes to the smaller config.
inline bool better(const Evaluation& a, const Evaluation& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  return a.config < b.config;
}
}  // namespace detail

inline Evaluation evaluate(const BridgeConfig& c, const Evaluator& eval, const MetricBounds& b, const MmcfWeights& w) {
  Evaluation e;
  e.config = c;
  e.metrics = eval(c);
  e.normalized = normalize(e.metrics, b);
  e.cost = mmcf(e.normalized, w);
  return e;
}

// Exhaustive over spaces up to `exhaustive_limit` configs; beyond that a
// seeded hill-climb with random restarts over single-field moves, capped
// at `search_budget` evaluations.
inline OptimizeResult optimize(const ConfigSpace& space, const Evaluator& eval, const MetricBounds& bounds,
                               const MmcfWeights& weights, const OptimizeOptions& opt = {}) {
  weights.validate();
  bounds.validate();
  const std::size_t n = space.size();
  if (n == 0) throw MmcfError(MmcfErrorCode::EmptySpace, "optimize: empty configuration space");
  OptimizeResult r;

  auto consider = [&](const Evaluation& e) {
    if (r.table.empty() || detail::better(e, Evaluation{r.best, {}, {}, r.cost})) {
      r.best = e.config;
      r.cost = e.cost;
    }
    r.table.push_back(e);
  };

  if (n <= opt.exhaustive_limit) {
    for (std::size_t i = 0; i < n; ++i) consider(evaluate(space.at(i), eval, bounds, weights));
    r.exhaustive = true;
    r.evaluated = n;
    r.fraction_evaluated = 1.0;
    return r;
  }

  r.exhaustive = false;
  const auto radix = space.radices();
  std::map<std::array<std::size_t, 5>, double> seen;
  std::mt19937_64 rng(opt.seed);
  auto cost_of = [&](const std::array<std::size_t, 5>& d) {
    auto it = seen.find(d);
    if (it != seen.end()) return it->second;
    Evaluation e = evaluate(space.at(d), eval, bounds, weights);
    seen.emplace(d, e.cost);
    consider(e);
    return e.cost;
  };
  const std::size_t budget = std::min(opt.search_budget, n);
  while (seen.size() < budget) {
    std::array<std::size_t, 5> cur{};
    for (std::size_t k = 0; k < 5; ++k) cur[k] = std::uniform_int_distribution<std::size_t>(0, radix[k] - 1)(rng);
    double c = cost_of(cur);
    bool improved = true;
    while (improved && seen.size() < budget) {
      improved = false;
      for (std::size_t k = 0; k < 5 && seen.size() < budget; ++k) {
        for (int step : {-1, 1}) {
          if ((step < 0 && cur[k] == 0) || (step > 0 && cur[k] + 1 >= radix[k])) continue;
          auto nb = cur;
          nb[k] = static_cast<std::size_t>(static_cast<long>(nb[k]) + step);
          const double nc = cost_of(nb);
          if (nc < c) {
            cur = nb;
            c = nc;
            improved = true;
          }
        }
      }
    }
  }
  r.evaluated = seen.size();
  r.fraction_evaluated = static_cast<double>(r.evaluated) / static_cast<double>(n);
  return r;
}

// 4 redundancy levels x 2 batch sizes x 3 replay depths.
inline ConfigSpace default_space() {
  ConfigSpace s;
  s.redundancy = {0, 1, 2, 3};
  s.shares = {{0.3, 0.2, 0.05}};
  s.replay_depth = {16, 64, 256};
  s.discovery_period_s = {0.5};
  s.batch_size = {1, 4};
  return s;
}

}  // namespace twinbridge::mmcf
