#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fieldsync/field_sim.hpp"
#include "support.hpp"

using namespace fieldsync;
using namespace fieldsync::sim;
using nlohmann::json;

namespace {

// One device parked on the edge, which sits at the origin with a 50 m radio.
json base_doc() {
  return {{"name", "unit"},
          {"seed", 1},
          {"ticks", 20},
          {"epoch", "2024-06-01T08:00:00Z"},
          {"grid",
           {{"origin_lat", 40.0}, {"origin_lon", -105.0}, {"cell_size_m", 50.0}, {"rows", 4}, {"cols", 4},
            {"target_per_cell", 1}}},
          {"schema", json::parse(testing::kScorchSchemaDoc)},
          {"edge", {{"x_m", 0.0}, {"y_m", 0.0}, {"range_m", 50.0}}},
          {"edge_sync_interval", 3},
          {"cloud_uptime", json::array()},
          {"devices",
           json::array({{{"device_id", "dev"},
                         {"waypoints", json::array({json::array({0, 0, 0})})},
                         {"entries", json::array()}}})}};
}

json entry(int tick, double scorch) { return {{"tick", tick}, {"values", {{"scorch", scorch}}}}; }

ErrorCode load_error(const json& doc) {
  try {
    load_scenario(doc.dump());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("scenario loaded");
  return ErrorCode::kIoError;
}

std::vector<const SyncEvent*> syncs_between(const Trace& t, std::string_view a, std::string_view b) {
  std::vector<const SyncEvent*> out;
  for (const auto& e : t.events) {
    if (const auto* s = std::get_if<SyncEvent>(&e); s && s->a == a && s->b == b) out.push_back(s);
  }
  return out;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("scenario loading errors") {
  CHECK_NOTHROW(load_scenario(base_doc().dump()));

  json overlap = base_doc();
  overlap["cloud_uptime"] = json::array({json::array({2, 8}), json::array({6, 10})});
  CHECK(load_error(overlap) == ErrorCode::kInvalidInterval);

  json beyond = base_doc();
  beyond["cloud_uptime"] = json::array({json::array({2, 21})});
  CHECK(load_error(beyond) == ErrorCode::kInvalidInterval);

  json unknown = base_doc();
  unknown["devices"][0]["entries"] = json::array({{{"tick", 1}, {"values", {{"smoke", 3}}}}});
  CHECK(load_error(unknown) == ErrorCode::kUnknownField);

  json zero = base_doc();
  zero["ticks"] = 0;
  CHECK(load_error(zero) == ErrorCode::kMalformedScenario);

  json backwards = base_doc();
  backwards["devices"][0]["waypoints"] = json::array({json::array({5, 0, 0}), json::array({5, 1, 1})});
  CHECK(load_error(backwards) == ErrorCode::kMalformedScenario);

  json late = base_doc();
  late["devices"][0]["entries"] = json::array({entry(25, 1)});
  CHECK(load_error(late) == ErrorCode::kMalformedScenario);

  json bad_value = base_doc();
  bad_value["devices"][0]["entries"] = json::array({entry(1, 140)});
  try {
    load_scenario(bad_value.dump());
    FAIL("expected MalformedScenario");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedScenario);
    CHECK(std::string(e.what()).find("devices[0].entries[0]") != std::string::npos);
  }

  json reserved = base_doc();
  reserved["devices"][0]["device_id"] = "edge";
  CHECK(load_error(reserved) == ErrorCode::kMalformedScenario);

  CHECK_THROWS_AS(load_scenario("{not json"), Error);
}

TEST_CASE("bundled scorch-demo scenario") {
  const Scenario s = load_scenario(read_text(std::filesystem::path(FIELDSYNC_TEST_SCENARIO_DIR) / "scorch-demo.json"));
  CHECK(s.devices.size() == 2);
  CHECK(s.grid.rows == 5);
  CHECK(s.grid.cols == 5);
  CHECK(s.edge.range_m == 100.0);

  const RunResult r = run(s);
  CHECK(r.report.converged);
  CHECK(r.report.stragglers.empty());
  CHECK(r.report.total_records == 14);
  CHECK(check_trace(r.trace).ok());
  CHECK(r.report.to_text().rfind("converged: true\n", 0) == 0);

  // The scenario round-trips through its own document form.
  const Scenario again = load_scenario(scenario_to_json(s).dump());
  CHECK(run(again).trace.to_jsonl() == r.trace.to_jsonl());
}

TEST_CASE("a record turns EDGE_CACHED on the tick its device reaches the edge") {
  json doc = base_doc();
  doc["devices"][0]["waypoints"] = json::array({json::array({0, 500, 0}), json::array({5, 0, 0})});
  doc["devices"][0]["entries"] = json::array({entry(2, 40)});
  Simulation sim(load_scenario(doc.dump()));
  const RecordId id("dev", 0);
  for (std::int64_t t = 0; t < 7; ++t) {
    sim.step(t);
    const auto state = sim.devices()[0].ledger.state(id);
    if (t < 2) {
      CHECK_FALSE(state);
    } else if (t < 5) {
      CHECK(state == FreshnessState::kUnsynced);
    } else {
      CHECK(state == FreshnessState::kEdgeCached);
    }
  }
  CHECK_THROWS_AS(sim.step(3), Error);
}

TEST_CASE("edge to cloud sync waits for the first interval tick inside uptime") {
  json doc = base_doc();
  doc["cloud_uptime"] = json::array({json::array({8, 20})});
  doc["devices"][0]["entries"] = json::array({entry(0, 40)});
  Simulation sim(load_scenario(doc.dump()));
  const RecordId id("dev", 0);
  for (std::int64_t t = 0; t < 12; ++t) {
    sim.step(t);
    if (t < 9) CHECK(sim.edge().ledger.state(id) == FreshnessState::kEdgeCached);
    if (t >= 9) CHECK(sim.edge().ledger.state(id) == FreshnessState::kRemote);
  }
  const auto up = syncs_between(sim.trace(), "edge", "cloud");
  REQUIRE(up.size() == 1);
  CHECK(up[0]->tick == 9);
  CHECK(up[0]->pushed_ids == std::vector<RecordId>{id});
  CHECK(sim.cloud().store.contains(id));
}

TEST_CASE("no entries under full connectivity yields only empty sync events") {
  json doc = base_doc();
  doc["cloud_uptime"] = json::array({json::array({0, 20})});
  doc["devices"][0]["cloud_links"] = json::array({json::array({0, 20})});
  const RunResult r = run(load_scenario(doc.dump()));
  REQUIRE_FALSE(r.trace.events.empty());
  for (const auto& e : r.trace.events) {
    const auto* s = std::get_if<SyncEvent>(&e);
    REQUIRE(s != nullptr);
    CHECK(s->pushed_ids.empty());
    CHECK(s->pulled_ids.empty());
  }
  CHECK(r.report.converged);
}

TEST_CASE("zero connectivity keeps each device's own records") {
  json doc = base_doc();
  json devices = json::array();
  for (int d = 0; d < 3; ++d) {
    json entries = json::array();
    for (int k = 0; k <= d; ++k) entries.push_back(entry(k * 3 + 1, 10 * k));
    devices.push_back({{"device_id", "far" + std::to_string(d)},
                       {"waypoints", json::array({json::array({0, 1000 + 100 * d, 1000})})},
                       {"entries", entries}});
  }
  doc["devices"] = devices;
  const RunResult r = run(load_scenario(doc.dump()));
  for (std::size_t d = 0; d < 3; ++d) {
    std::set<RecordId> own;
    for (std::uint64_t k = 0; k <= d; ++k) own.insert(RecordId("far" + std::to_string(d), k));
    CHECK(r.devices[d].store.ids() == own);
  }
  CHECK(r.edge.store.size() == 0);
  CHECK_FALSE(r.report.converged);
}

TEST_CASE("a cloud that never comes up misses everything") {
  json doc = base_doc();
  doc["devices"][0]["entries"] = json::array({entry(1, 10), entry(2, 20), entry(3, 30)});
  doc["devices"].push_back({{"device_id", "dev2"},
                            {"waypoints", json::array({json::array({0, 10, 10})})},
                            {"entries", json::array({entry(4, 5)})}});
  const RunResult r = run(load_scenario(doc.dump()));
  CHECK(r.report.devices_edge_converged);
  CHECK_FALSE(r.report.converged);
  CHECK(r.report.total_records == 4);
  CHECK(r.report.cloud_records == 0);
  bool cloud_listed = false;
  for (const auto& s : r.report.stragglers) {
    if (s.store_id == "cloud") {
      cloud_listed = true;
      CHECK(s.missing.size() == 4);
    } else {
      CHECK(s.missing.empty());
    }
  }
  CHECK(cloud_listed);
  CHECK(r.report.to_json()["converged"] == false);
}

TEST_CASE("trace checks") {
  CHECK(check_trace(Trace{}).ok());

  const RecordId id("dev", 0);
  Trace downgrade;
  downgrade.events = {EnterEvent{1, "dev", id}, PromoteEvent{2, "dev", id, FreshnessState::kEdgeCached},
                      PromoteEvent{4, "dev", id, FreshnessState::kUnsynced}};
  const PropertyReport bad = check_trace(downgrade);
  REQUIRE_FALSE(bad.ok());
  CHECK_FALSE(bad.monotonic);
  CHECK(bad.first()->property == "monotonicity");
  CHECK(bad.first()->tick == 4);

  Trace dup;
  dup.events = {EnterEvent{1, "dev", id}, EnterEvent{2, "dev", id}};
  CHECK_FALSE(check_trace(dup).unique_ids);

  Trace twice;
  twice.events = {EnterEvent{1, "dev", id}, SyncEvent{2, "dev", "edge", {id}, {}},
                  SyncEvent{3, "dev", "edge", {id}, {}}};
  const PropertyReport again = check_trace(twice);
  CHECK_FALSE(again.exactly_once);
  CHECK(again.first()->tick == 3);

  Trace phantom;
  phantom.events = {SyncEvent{2, "dev", "edge", {id}, {}}};
  CHECK_FALSE(check_trace(phantom).exactly_once);
}

TEST_CASE("trace JSON lines round trip") {
  const RunResult r = run(generate_scenario(99, {3, 120, 40}));
  const std::string text = r.trace.to_jsonl();
  CHECK(Trace::from_jsonl(text).to_jsonl() == text);
  const auto first = json::parse(text.substr(0, text.find('\n')));
  CHECK(first.contains("event"));
  CHECK(first.contains("tick"));
  CHECK_THROWS_AS(Trace::from_jsonl("{\"event\":\"NOPE\",\"tick\":0}\n"), Error);
}

TEST_CASE("property: generated scenarios are deterministic and converge") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Scenario s = generate_scenario(seed, {5, 200, 60});
    CHECK(s.ticks <= 200);
    const RunResult a = run(s);
    const RunResult b = run(s);
    CHECK(a.trace.to_jsonl() == b.trace.to_jsonl());
    CHECK(a.report.converged);

    const PropertyReport p = check_trace(a.trace);
    CHECK(p.ok());
    // Replaying the trace reproduces the final stores.
    for (const auto& d : a.devices) CHECK(p.holdings.at(d.store.store_id()) == d.store.ids());
    CHECK(p.holdings.at("edge") == a.edge.store.ids());
    CHECK(p.holdings.at("cloud") == a.cloud.store.ids());

    // Ticks never go backwards.
    std::int64_t last = 0;
    for (const auto& e : a.trace.events) {
      CHECK(event_tick(e) >= last);
      last = event_tick(e);
    }
  }
}
