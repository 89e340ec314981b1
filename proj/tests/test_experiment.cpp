#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "testing.hpp"
#include "twinbridge/experiment.hpp"

using namespace twinbridge;
namespace fs = std::filesystem;

namespace {

Scenario small(const std::string& file) {
  Scenario s = load_scenario(tbtest::scenario_path(file));
  s.sync.reset();
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("twinbridge_test_" + name);
  fs::remove_all(d);
  return d;
}

std::string error_of(const std::string& yaml) {
  try {
    parse_scenario(yaml, "t.yaml");
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Scenario, ShippedFilesLoad) {
  for (const auto& e : fs::directory_iterator(TWINBRIDGE_SCENARIO_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(load_scenario(e.path())) << e.path();
  }
  const Scenario d = load_scenario(tbtest::scenario_path("default.yaml"));
  EXPECT_EQ(d.agent_count, 2u);
  EXPECT_EQ(d.expanded_topics().size(), 8u);
  EXPECT_EQ(d.expanded_topics()[4].name, "/robot2/state");
  EXPECT_EQ(d.policy.classify("/robot2/cmd"), Tier::Critical);
  EXPECT_EQ(d.policy.classify("/robot2/scan"), Tier::Bulk);
  EXPECT_EQ(d.network.latency_s.at(SimDuration{0}), 0.1);
  ASSERT_TRUE(d.sync);
  EXPECT_EQ(d.sync->params.diameter, 0.5);
  EXPECT_EQ(d.sync->ctrl.grid.size(), 9u);
  ASSERT_TRUE(d.geo);
  EXPECT_EQ(d.geo->waypoints.size(), 3u);
  const Scenario l = load_scenario(tbtest::scenario_path("latency200.yaml"));
  EXPECT_EQ(l.network.latency_s.at(from_seconds(25)), 0.2);
}

TEST(Scenario, DiagnosticsCarryLines) {
  EXPECT_EQ(error_of("name: x\nduration_s: 5\nbogus: 1\n"), "t.yaml:3:1: unknown key 'bogus' in scenario");
  EXPECT_EQ(error_of("duration_s: 5\npolicy:\n  rules:\n    - {pattern: /a, tier: urgent}\n"),
            "t.yaml:4:27: tier must be critical, standard or bulk");
  EXPECT_EQ(error_of("duration_s: 5\nmmcf:\n  weights: [0.5, 0.5, 0.5, 0]\n"),
            "t.yaml:3:12: MMCF weights must sum to 1");
  EXPECT_EQ(error_of("duration_s: -1\n"), "t.yaml:1:13: duration_s must be > 0");
  EXPECT_EQ(error_of("name: x\n"), "t.yaml:1:1: duration_s is required");
  EXPECT_NE(error_of("duration_s: [1, 2\n").find("t.yaml:"), std::string::npos);
  EXPECT_EQ(error_of("duration_s: 5\nnetwork:\n  loss: 1.5\n"), "t.yaml:3:3: NetworkConditions: loss must be in [0,1]");
  EXPECT_EQ(error_of("duration_s: 5\nagents:\n  count: 1\n  topics:\n    - {name: a/b}\n"),
            "t.yaml:5:14: invalid topic name: a/b");
  EXPECT_EQ(error_of("duration_s: 5\nbridge:\n  redundancy: 7\n"), "t.yaml:3:3: redundancy must be 0..3");
  EXPECT_EQ(error_of("duration_s: 5\nsync:\n  terrain: lava\n"), "t.yaml:3:3: unknown terrain class: lava");
  EXPECT_EQ(error_of("duration_s: 5\nagents:\n  count: 2\n  topics:\n    - {name: /same}\n"),
            "t.yaml: scenario: topic declared twice: /same");
  EXPECT_EQ(error_of(""), "t.yaml: empty scenario file");
}

TEST(Run, EmptyScenarioHasNoTraffic) {
  const RunReport r = run(load_scenario(tbtest::scenario_path("empty.yaml")));
  EXPECT_TRUE(r.topics.empty());
  EXPECT_EQ(r.published(), 0u);
  EXPECT_EQ(r.delivered(), 0u);
  EXPECT_EQ(r.published_bytes, 0u);
  EXPECT_TRUE(r.conserved());
}

TEST(Run, ZeroImpairmentDeliversEverything) {
  Scenario s = small("default.yaml");
  s.network = {};
  s.duration_s = 10;
  const RunReport r = run(s);
  EXPECT_GT(r.published(), 0u);
  EXPECT_EQ(r.delivered(), r.published());
  for (const auto& t : r.topics) {
    EXPECT_EQ(t.dropped, 0u) << t.topic;
    EXPECT_EQ(t.buffered, 0u) << t.topic;
  }
  EXPECT_EQ(measure_config(s.config, s).loss, 0.0);
}

// Mid-run snapshot, drop-heavy and FIFO variants: every message is
// accounted for as delivered, dropped or still buffered.
TEST(Run, ConservationPerTopic) {
  for (const char* f : {"default.yaml", "loss25.yaml", "sweep.yaml", "disconnect.yaml", "agents20.yaml"}) {
    for (bool fifo : {false, true}) {
      for (double drain : {0.0, 10.0}) {
        Scenario s = small(f);
        s.drain_s = drain;
        if (fifo) s.mode = SchedulerMode::Fifo;
        const RunReport r = run_traffic(s);
        for (const auto& t : r.topics) {
          EXPECT_LE(t.delivered, t.published);
          EXPECT_TRUE(t.conserved()) << f << " " << t.topic << " fifo=" << fifo << " drain=" << drain << ": "
                                     << t.published << " != " << t.delivered << " + " << t.dropped << " + "
                                     << t.buffered;
        }
      }
    }
  }
  // cut inside the outage: plenty still buffered
  Scenario s = small("disconnect.yaml");
  s.duration_s = 40;
  s.drain_s = 0;
  const RunReport r = run_traffic(s);
  EXPECT_GT(r.tier(Tier::Critical).buffered, 100u);
  EXPECT_TRUE(r.conserved());
}

TEST(Run, CsvArtifactsAreDeterministic) {
  const Scenario s = load_scenario(tbtest::scenario_path("default.yaml"));
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  const auto files = write_report(run(s), a);
  write_report(run(s), b);
  ASSERT_EQ(files.size(), 7u);
  for (const auto& f : files) EXPECT_EQ(slurp(f), slurp(b / f.filename())) << f;
  EXPECT_EQ(slurp(a / "topics.csv").substr(0, std::string(csv::kTopicsHeader).size()), csv::kTopicsHeader);

  Scenario t = s;
  t.seed = 2;
  t.sync->seed = 2;
  const fs::path c = temp_dir("det_c");
  write_report(run(t), c);
  EXPECT_NE(slurp(a / "topics.csv"), slurp(c / "topics.csv"));
}

TEST(Run, GeoRows) {
  const RunReport r = run(load_scenario(tbtest::scenario_path("default.yaml")));
  ASSERT_EQ(r.geo.size(), 3u);
  EXPECT_EQ(r.geo[0].method, geo::ConversionMethod::TangentPlane);
  // 0.0002 deg of latitude north, 0.0002 deg of longitude east
  EXPECT_NEAR(r.geo[0].scene.z, 6371000.0 * geo::deg_to_rad(0.0002), 1e-6);
  EXPECT_GT(r.geo[0].scene.x, 16.0);
  EXPECT_NEAR(r.geo[2].scene.y, 1.0, 1e-12);
}

TEST(Run, PriorityAndReplayOnSweep) {
  Scenario s = small("sweep.yaml");
  const RunReport pr = run_traffic(s);
  s.mode = SchedulerMode::Fifo;
  const RunReport ff = run_traffic(s);
  EXPECT_LT(pr.tier(Tier::Critical).latency.p95, ff.tier(Tier::Critical).latency.p95);
  EXPECT_EQ(pr.tier(Tier::Critical).delivery_rate(), 1.0);
}

TEST(Compare, IdenticalIsZero) {
  const RunReport r = run_traffic(small("loss25.yaml"));
  for (const auto& d : compare(summary_of(r), summary_of(r))) EXPECT_EQ(d.delta, 0.0) << d.metric;
  Scenario other = small("loss25.yaml");
  other.seed = 7;
  EXPECT_THROW(compare(summary_of(r), summary_of(run_traffic(other))), std::invalid_argument);
}

// Deltas match ratios recomputed by hand from the two summary files.
TEST(Compare, MatchesRatiosFromCsv) {
  Scenario s = small("sweep.yaml");
  s.agent_count = 5;
  const fs::path a = temp_dir("cmp_a"), b = temp_dir("cmp_b");
  write_report(run(s), a);
  s.mode = SchedulerMode::Fifo;
  write_report(run(s), b);
  const auto rows = compare(read_summary(a), read_summary(b));
  const auto ca = tbtest::read_csv((a / "summary.csv").string()), cb = tbtest::read_csv((b / "summary.csv").string());
  std::size_t checked = 0;
  for (const auto& d : rows) {
    for (std::size_t i = 1; i < ca.size(); ++i) {
      if (ca[i][0] != d.metric) continue;
      const double x = std::stod(ca[i][1]), y = std::stod(cb[i][1]);
      ASSERT_EQ(cb[i][0], d.metric);
      if (x != 0.0) {
        EXPECT_DOUBLE_EQ(d.delta, (y - x) / std::abs(x)) << d.metric;
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 15u);
  // FIFO is slower on the critical tier
  for (const auto& d : rows)
    if (d.metric == "critical_lat_p95_ms") {
      EXPECT_GT(d.delta, 0.0);
    }
}

TEST(Compare, OneSignedWhenStrictlyBetter) {
  SummaryTable a{{{"scenario", "x"}, {"seed", "1"}, {"p95", "2.0"}, {"loss", "0.5"}}};
  SummaryTable b{{{"scenario", "x"}, {"seed", "1"}, {"p95", "1.0"}, {"loss", "0.25"}}};
  const auto rows = compare(a, b);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].delta, -0.5);
  EXPECT_EQ(rows[1].delta, -0.5);
}

TEST(Sweep, SingleCountAndComposition) {
  Scenario s = small("sweep.yaml");
  s.duration_s = 10;
  const auto one = sweep_agents(s, {1});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].report.agents, 1u);

  const auto rows = sweep_agents(s, {2, 3, 5});
  ASSERT_EQ(rows.size(), 3u);
  std::string independent = std::string(csv::kSweepHeader) + "\n";
  for (std::size_t n : {2, 3, 5}) {
    Scenario t = s;
    t.agent_count = n;
    independent += sweep_row(run(t));
  }
  EXPECT_EQ(sweep_csv(rows), independent);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_GE(rows[i].report.published_bytes, rows[i - 1].report.published_bytes);
  EXPECT_THROW(sweep_agents(s, {}), std::invalid_argument);
  EXPECT_THROW(sweep_agents(s, {3, 2}), std::invalid_argument);
}

TEST(MeasureConfig, DeterministicAndRedundancyHelps) {
  Scenario s = small("loss25.yaml");
  s.duration_s = 15;
  mmcf::BridgeConfig c = s.config;
  EXPECT_EQ(measure_config(c, s), measure_config(c, s));
  mmcf::MeasuredMetrics prev = measure_config(c, s);
  for (unsigned r = 1; r <= 3; ++r) {
    c.redundancy = r;
    const auto m = measure_config(c, s);
    EXPECT_LE(m.loss, prev.loss) << r;
    EXPECT_GE(m.bandwidth_Bps, prev.bandwidth_Bps) << r;
    prev = m;
  }
}

// optimize() against an independent exhaustive evaluation on the
// 24-config space.
TEST(MmcfOpt, MatchesExhaustiveOracle) {
  Scenario s = small("mmcf.yaml");
  ASSERT_EQ(s.space.size(), 24u);
  const auto bounds = calibrate_bounds(s);
  const auto r = mmcf::optimize(
      s.space, [&](const mmcf::BridgeConfig& c) { return measure_config(c, s); }, bounds, s.weights);

  const auto& w = s.weights;
  std::optional<mmcf::BridgeConfig> best;
  double best_cost = 0.0;
  for (unsigned red : {0u, 1u, 2u, 3u})
    for (std::size_t depth : {16u, 64u, 256u})
      for (std::size_t batch : {1u, 4u}) {
        mmcf::BridgeConfig c;
        c.redundancy = red;
        c.shares = {0.3, 0.2, 0.05};
        c.replay_depth = depth;
        c.discovery_period_s = 0.5;
        c.batch_size = batch;
        const auto m = measure_config(c, s);
        auto clamp = [](double v) { return v < 0 ? 0.0 : v > 1 ? 1.0 : v; };
        const double cost =
            w.alpha * clamp((m.latency_s - bounds.latency_min) / (bounds.latency_max - bounds.latency_min)) +
            w.beta * clamp((m.loss - bounds.loss_min) / (bounds.loss_max - bounds.loss_min)) +
            w.gamma * clamp(m.compute_s / bounds.compute_max) + w.delta * clamp(m.bandwidth_Bps / bounds.bandwidth_max);
        if (!best || cost < best_cost || (cost == best_cost && c < *best)) {
          best = c;
          best_cost = cost;
        }
      }
  EXPECT_EQ(r.best, *best);
  EXPECT_DOUBLE_EQ(r.cost, best_cost);
}

TEST(MmcfOpt, MixNeverWorseThanAnyFixedConfig) {
  Scenario s = load_scenario(tbtest::scenario_path("mmcf.yaml"));
  const auto mix = load_mix(s);
  ASSERT_EQ(mix.size(), 3u);
  const auto res = optimize_mix(s, mix);
  ASSERT_EQ(res.rows.size(), 24u);
  for (const auto& row : res.rows) EXPECT_LE(res.best_cost, row.cost) << row.config.label();
  EXPECT_GE(res.improvement_over_median, 0.0);
  EXPECT_EQ(csv::mix_table(res).substr(0, 10), "config,lat");
}
