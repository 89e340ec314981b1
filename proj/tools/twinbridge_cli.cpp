// twinbridge: run scenarios, compare reports, sweep agent counts and
// search bridge configurations.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "twinbridge/experiment.hpp"

namespace fs = std::filesystem;
using namespace twinbridge;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool baseline = false;
};

Scenario load(const std::string& path, const Common& c) {
  Scenario s = load_scenario(path);
  if (c.seed) {
    s.seed = *c.seed;
    if (s.sync) s.sync->seed = *c.seed;
  }
  if (c.baseline) s.mode = SchedulerMode::Fifo;
  return s;
}

void print_report(const RunReport& r, const fs::path& dir) {
  fmt::print("{} seed={} mode={} agents={}\n", r.scenario, r.seed, mode_name(r.mode), r.agents);
  fmt::print("  {:<9} {:>9} {:>9} {:>8} {:>10} {:>10} {:>10}\n", "tier", "published", "delivered", "rate", "p50_ms",
             "p95_ms", "max_ms");
  for (const auto& t : r.tiers)
    fmt::print("  {:<9} {:>9} {:>9} {:>8.4f} {:>10.3f} {:>10.3f} {:>10.3f}\n", tier_name(t.tier), t.published,
               t.delivered, t.delivery_rate(), t.latency.p50 * 1e3, t.latency.p95 * 1e3, t.latency.max * 1e3);
  fmt::print("  link bytes {}  packets {}  mmcf {:.4f} ({} clamped)  conserved {}\n", r.link_bytes, r.packets,
             r.cost.cost, r.cost.normalized.clamps, r.conserved() ? "yes" : "NO");
  for (std::size_t i = 0; i < r.sync.size(); ++i) {
    const auto& s = r.sync[i];
    fmt::print("  sync {}: max steady |e_pos| {:.4f} m, |e_rot| {:.3f} deg, bound violations {}\n", i + 1,
               s.max_steady_e_pos, geo::rad_to_deg(s.max_steady_e_rot), s.bound_violations);
  }
  fmt::print("  wrote {}\n", dir.string());
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string cell = text.substr(start, end - start);
    std::size_t used = 0;
    const unsigned long v = std::stoul(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("bad count: " + cell);
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic bridge and twin-sync experiments"};
  app.require_subcommand(1);
  Common common;
  std::string scenario_path, a_path, b_path, counts_text = "2,3,5";

  auto add_common = [&](CLI::App* sub, bool with_baseline) {
    sub->add_option("--seed", common.seed, "Override the scenario seed");
    sub->add_option("--out-dir", common.out_dir, "Directory for CSV artifacts");
    if (with_baseline) sub->add_flag("--baseline", common.baseline, "FIFO bridge: no priorities, replay or discovery");
  };

  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);
  add_common(run_cmd, true);

  auto* cmp_cmd = app.add_subcommand("compare", "Relative deltas between two run outputs");
  cmp_cmd->add_option("a", a_path, "Run directory or summary.csv")->required()->check(CLI::ExistingPath);
  cmp_cmd->add_option("b", b_path, "Run directory or summary.csv")->required()->check(CLI::ExistingPath);
  cmp_cmd->add_option("--out-dir", common.out_dir, "Directory for compare.csv");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario for several agent counts");
  sweep_cmd->add_option("--counts", counts_text, "Comma-separated ascending agent counts");
  sweep_cmd->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);
  add_common(sweep_cmd, true);

  auto* opt_cmd = app.add_subcommand("mmcf-opt", "Search the scenario's configuration space");
  opt_cmd->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);
  add_common(opt_cmd, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out(common.out_dir);
    if (*run_cmd) {
      const Scenario sc = load(scenario_path, common);
      const RunReport r = run(sc);
      write_report(r, out);
      print_report(r, out);
    } else if (*cmp_cmd) {
      const auto rows = compare(read_summary(a_path), read_summary(b_path));
      fs::create_directories(out);
      csv::write_file(out / "compare.csv", compare_csv(rows));
      for (const auto& d : rows) fmt::print("{:<28} {:>14.6f} {:>14.6f} {:>+10.4f}\n", d.metric, d.a, d.b, d.delta);
      fmt::print("wrote {}\n", (out / "compare.csv").string());
    } else if (*sweep_cmd) {
      const Scenario sc = load(scenario_path, common);
      const auto rows = sweep_agents(sc, parse_counts(counts_text));
      for (const auto& row : rows) write_report(row.report, out / fmt::format("agents_{}", row.agents));
      fs::create_directories(out);
      csv::write_file(out / "sweep.csv", sweep_csv(rows));
      std::cout << sweep_csv(rows);
    } else if (*opt_cmd) {
      const Scenario sc = load(scenario_path, common);
      const auto mix = load_mix(sc);
      const auto res = optimize_mix(sc, mix);
      fs::create_directories(out);
      csv::write_file(out / "mmcf_table.csv", csv::mix_table(res));
      fmt::print("scenarios: {}\n", fmt::join(res.scenarios, ", "));
      fmt::print("configs evaluated: {} ({}, {:.1f}% of space)\n", res.rows.size(),
                 res.exhaustive ? "exhaustive" : "local search", 100.0 * res.fraction_evaluated);
      fmt::print("best {} mean cost {:.6f}; median fixed {:.6f}; improvement {:.1f}%\n", res.best.label(),
                 res.best_cost, res.median_fixed_cost, 100.0 * res.improvement_over_median);
      fmt::print("wrote {}\n", (out / "mmcf_table.csv").string());
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
