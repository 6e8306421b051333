#include <algorithm>
#include <cmath>
#include <random>

#include "fieldsync/field_sim.hpp"

namespace fieldsync::sim {

namespace {

Schema generated_schema() {
  Schema s;
  s.schema_id = "survey";
  s.version = 1;
  s.fields.push_back({"reading", FieldKind::kNumeric, "percent", true, NumericRange{0.0, 100.0}});
  s.fields.push_back({"note", FieldKind::kText, std::nullopt, false, std::nullopt});
  return s;
}

// Disjoint, sorted intervals inside [0, limit).
std::vector<Interval> random_windows(std::mt19937_64& rng, std::int64_t limit, int max_windows) {
  std::vector<Interval> out;
  if (limit < 2) return out;
  std::uniform_int_distribution<int> count(0, max_windows);
  std::uniform_int_distribution<std::int64_t> at(0, limit - 1);
  std::vector<std::int64_t> cuts;
  for (int i = count(rng) * 2; i > 0; --i) cuts.push_back(at(rng));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); i += 2) out.push_back({cuts[i], cuts[i + 1]});
  return out;
}

}  // namespace

Scenario generate_scenario(std::uint64_t seed, const GeneratorLimits& limits) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  Scenario s;
  s.name = "generated-" + std::to_string(seed);
  s.seed = seed;
  s.epoch = *parse_rfc3339("2024-06-01T08:00:00Z");
  s.grid.origin_lat = uniform(-60.0, 60.0);
  s.grid.origin_lon = uniform(-170.0, 170.0);
  s.grid.cell_size_m = 20.0;
  s.grid.rows = 10;
  s.grid.cols = 10;
  s.grid.target_per_cell = 2;
  s.schema = generated_schema();
  s.edge.position = {100.0, 100.0};
  s.edge.range_m = uniform(30.0, 90.0);
  s.edge_sync_interval = uniform_int(1, 6);

  const std::int64_t settle = 2 * s.edge_sync_interval + 2;
  const std::int64_t min_ticks = settle + 10;
  const std::int64_t max_ticks = std::max(min_ticks, limits.max_ticks);
  s.ticks = uniform_int(min_ticks, max_ticks);
  const std::int64_t settle_start = s.ticks - settle;

  s.cloud_uptime = random_windows(rng, settle_start, 4);
  s.cloud_uptime.push_back({settle_start, s.ticks});

  const int device_count = static_cast<int>(uniform_int(1, std::max(1, limits.max_devices)));
  int records_left = static_cast<int>(uniform_int(0, std::max(0, limits.max_records)));
  for (int d = 0; d < device_count; ++d) {
    DevicePlan plan;
    plan.device_id = "dev" + std::to_string(d + 1);
    plan.author = "surveyor" + std::to_string(d + 1);
    plan.team = d % 2 == 0 ? "north" : "south";

    // Wander the grid, then park at the edge for the settle window.
    std::int64_t tick = 0;
    while (tick < settle_start) {
      plan.waypoints.push_back({tick, {uniform(0.0, s.grid.width_m()), uniform(0.0, s.grid.height_m())}});
      tick += uniform_int(5, 40);
    }
    if (!plan.waypoints.empty() && plan.waypoints.back().tick == settle_start) plan.waypoints.pop_back();
    plan.waypoints.push_back({settle_start, s.edge.position});

    const int share = d + 1 == device_count ? records_left
                                             : static_cast<int>(uniform_int(0, records_left));
    records_left -= share;
    for (int i = 0; i < share; ++i) {
      EntryEvent e;
      e.tick = uniform_int(0, settle_start - 1);
      e.values = {{"reading", std::round(uniform(0.0, 100.0) * 10.0) / 10.0}};
      if (uniform_int(0, 3) == 0) e.values["note"] = "obs " + std::to_string(i);
      plan.entries.push_back(std::move(e));
    }
    std::stable_sort(plan.entries.begin(), plan.entries.end(),
                     [](const EntryEvent& a, const EntryEvent& b) { return a.tick < b.tick; });
    plan.cloud_links = random_windows(rng, settle_start, 2);
    s.devices.push_back(std::move(plan));
  }
  return s;
}

}  // namespace fieldsync::sim
