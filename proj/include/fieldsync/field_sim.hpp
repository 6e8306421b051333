#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fieldsync/field_model.hpp"
#include "fieldsync/geo_analytics.hpp"
#include "fieldsync/sync_engine.hpp"

namespace fieldsync::sim {

// Half-open tick interval [start, end).
struct Interval {
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool contains(std::int64_t tick) const { return tick >= start && tick < end; }
};

struct Waypoint {
  std::int64_t tick = 0;
  geo::LocalPoint position;
};

struct EntryEvent {
  std::int64_t tick = 0;
  nlohmann::json values = nlohmann::json::object();
};

struct DevicePlan {
  std::string device_id;
  std::string author;
  std::string team;
  std::vector<Waypoint> waypoints;  // strictly increasing ticks
  std::vector<EntryEvent> entries;
  std::vector<Interval> cloud_links;  // direct device <-> cloud windows

  geo::LocalPoint position_at(std::int64_t tick) const;
};

struct EdgeSite {
  geo::LocalPoint position;
  double range_m = 100.0;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::int64_t ticks = 1;
  Timestamp epoch{};
  geo::GridSpec grid;
  Schema schema;
  std::vector<DevicePlan> devices;
  EdgeSite edge;
  std::vector<Interval> cloud_uptime;
  std::int64_t edge_sync_interval = 3;

  bool cloud_up(std::int64_t tick) const;
};

// Errors: MalformedScenario (with a location), InvalidInterval, UnknownField.
Scenario load_scenario(std::string_view document);
nlohmann::json scenario_to_json(const Scenario& scenario);

inline constexpr std::string_view kEdgeStoreId = "edge";
inline constexpr std::string_view kCloudStoreId = "cloud";

// ---------------------------------------------------------------------------
// Trace

struct EnterEvent {
  std::int64_t tick = 0;
  std::string device;
  RecordId record_id;
};

struct SyncEvent {
  std::int64_t tick = 0;
  std::string a;  // initiating store
  std::string b;  // peer store
  std::vector<RecordId> pushed_ids;
  std::vector<RecordId> pulled_ids;
};

struct PromoteEvent {
  std::int64_t tick = 0;
  std::string store;
  RecordId record_id;
  FreshnessState state = FreshnessState::kUnsynced;
};

using TraceEvent = std::variant<EnterEvent, SyncEvent, PromoteEvent>;

std::int64_t event_tick(const TraceEvent& event);

struct Trace {
  std::vector<TraceEvent> events;

  // JSON lines, one event per line.
  std::string to_jsonl() const;
  static Trace from_jsonl(std::string_view text);
};

// ---------------------------------------------------------------------------
// Simulation

struct Straggler {
  std::string store_id;
  std::vector<RecordId> missing;
};

struct ConvergenceReport {
  bool converged = false;               // every store holds the same id set
  bool devices_edge_converged = false;  // the same, ignoring the cloud
  std::size_t total_records = 0;
  std::size_t cloud_records = 0;
  std::vector<Straggler> stragglers;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario);

  // Advances one tick; ticks must be stepped in order from 0.
  void step(std::int64_t tick);
  std::int64_t next_tick() const { return next_tick_; }

  const Scenario& scenario() const { return scenario_; }
  const std::vector<Replica>& devices() const { return devices_; }
  const Replica& edge() const { return edge_; }
  const Replica& cloud() const { return cloud_; }
  const Trace& trace() const { return trace_; }
  geo::LocalPoint device_position(std::size_t index) const { return positions_.at(index); }

  ConvergenceReport convergence() const;

 private:
  void session(Replica& local, Replica& peer, std::int64_t tick);

  Scenario scenario_;
  std::vector<Replica> devices_;
  Replica edge_;
  Replica cloud_;
  std::vector<geo::LocalPoint> positions_;
  std::vector<std::int64_t> counters_;
  std::vector<std::vector<const EntryEvent*>> entries_by_tick_;  // per device, indexed by tick
  Trace trace_;
  std::int64_t next_tick_ = 0;
};

struct RunResult {
  std::vector<Replica> devices;
  Replica edge{Tier::kEdge, std::string(kEdgeStoreId)};
  Replica cloud{Tier::kCloud, std::string(kCloudStoreId)};
  Trace trace;
  ConvergenceReport report;
};

RunResult run(const Scenario& scenario);

struct Violation {
  std::int64_t tick = 0;
  std::string property;  // "monotonicity", "unique_ids", "exactly_once"
  std::string detail;
};

struct PropertyReport {
  bool monotonic = true;
  bool unique_ids = true;
  bool exactly_once = true;
  std::vector<Violation> violations;  // in trace order
  std::map<std::string, std::set<RecordId>> holdings;  // store -> ids, replayed from the trace

  bool ok() const { return violations.empty(); }
  const Violation* first() const { return violations.empty() ? nullptr : &violations.front(); }
};

PropertyReport check_trace(const Trace& trace);

// ---------------------------------------------------------------------------
// Random scenarios for property and acceptance runs.

struct GeneratorLimits {
  int max_devices = 5;
  std::int64_t max_ticks = 500;
  int max_records = 200;
};

// Every generated scenario ends with a full-connectivity epoch of at least
// 2 * edge_sync_interval + 2 ticks: all devices parked at the edge, cloud up.
Scenario generate_scenario(std::uint64_t seed, const GeneratorLimits& limits = {});

}  // namespace fieldsync::sim
