#include "fieldsync/field_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fieldsync::sim {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kMalformedScenario, where, what);
}

template <typename T>
T get_as(const json& doc, const char* key, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end()) malformed(where.empty() ? key : where + "." + key, "missing");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(where.empty() ? key : where + "." + key, "wrong type");
  }
}

std::vector<Interval> parse_intervals(const json& doc, const std::string& where, std::int64_t ticks) {
  if (!doc.is_array()) malformed(where, "expected a list of [start, end] pairs");
  std::vector<Interval> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string loc = where + "[" + std::to_string(i) + "]";
    const json& pair = doc[i];
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
      malformed(loc, "expected [start, end]");
    }
    Interval iv{pair[0].get<std::int64_t>(), pair[1].get<std::int64_t>()};
    if (iv.start < 0 || iv.end > ticks || iv.start >= iv.end) {
      throw Error(ErrorCode::kInvalidInterval, loc, "must satisfy 0 <= start < end <= ticks");
    }
    out.push_back(iv);
  }
  std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].start < out[i - 1].end) throw Error(ErrorCode::kInvalidInterval, where, "intervals overlap");
  }
  return out;
}

json intervals_json(const std::vector<Interval>& ivs) {
  json out = json::array();
  for (const auto& iv : ivs) out.push_back({iv.start, iv.end});
  return out;
}

bool in_any(const std::vector<Interval>& ivs, std::int64_t tick) {
  return std::any_of(ivs.begin(), ivs.end(), [tick](const Interval& iv) { return iv.contains(tick); });
}

Timestamp tick_time(const Scenario& s, std::int64_t tick) { return s.epoch + std::chrono::seconds(tick); }

RecordDraft entry_draft(const Scenario& s, const DevicePlan& plan, RecordId id, std::int64_t tick,
                        geo::LocalPoint where, const json& values) {
  RecordDraft d;
  d.id = std::move(id);
  d.schema_id = s.schema.schema_id;
  d.schema_version = s.schema.version;
  d.timestamp = tick_time(s, tick);
  const GeoPoint geo = geo::local_unproject(where, s.grid);
  d.lat = geo.lat;
  d.lon = geo.lon;
  d.author = plan.author;
  d.team = plan.team;
  d.source = RecordSource::kManual;
  for (const auto& [k, v] : values.items()) d.values.emplace(k, v);
  return d;
}

}  // namespace

geo::LocalPoint DevicePlan::position_at(std::int64_t tick) const {
  if (waypoints.empty()) return {};
  if (tick <= waypoints.front().tick) return waypoints.front().position;
  if (tick >= waypoints.back().tick) return waypoints.back().position;
  auto next = std::upper_bound(waypoints.begin(), waypoints.end(), tick,
                               [](std::int64_t t, const Waypoint& w) { return t < w.tick; });
  auto prev = next - 1;
  const double f = static_cast<double>(tick - prev->tick) / static_cast<double>(next->tick - prev->tick);
  return {prev->position.x_m + f * (next->position.x_m - prev->position.x_m),
          prev->position.y_m + f * (next->position.y_m - prev->position.y_m)};
}

bool Scenario::cloud_up(std::int64_t tick) const { return in_any(cloud_uptime, tick); }

Scenario load_scenario(std::string_view document) {
  json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded()) malformed("", "not valid JSON");
  if (!doc.is_object()) malformed("", "expected an object");

  Scenario s;
  s.name = doc.value("name", std::string("scenario"));
  s.seed = get_as<std::uint64_t>(doc, "seed", "");
  s.ticks = get_as<std::int64_t>(doc, "ticks", "");
  if (s.ticks < 1) malformed("ticks", "must be >= 1");
  const auto epoch = parse_rfc3339(doc.value("epoch", std::string("2024-01-01T00:00:00Z")));
  if (!epoch) malformed("epoch", "expected RFC 3339 timestamp");
  s.epoch = *epoch;

  if (!doc.contains("grid")) malformed("grid", "missing");
  try {
    s.grid = geo::grid_from_json(doc.at("grid"));
  } catch (const Error& e) {
    malformed("grid", e.what());
  }
  if (!doc.contains("schema")) malformed("schema", "missing");
  try {
    s.schema = parse_schema(doc.at("schema").dump());
  } catch (const Error& e) {
    malformed("schema", e.what());
  }

  const json& edge = doc.contains("edge") ? doc.at("edge") : json::object();
  s.edge.position = {get_as<double>(edge, "x_m", "edge"), get_as<double>(edge, "y_m", "edge")};
  s.edge.range_m = get_as<double>(edge, "range_m", "edge");
  if (!(s.edge.range_m >= 0.0)) malformed("edge.range_m", "must be >= 0");

  s.cloud_uptime = parse_intervals(doc.value("cloud_uptime", json::array()), "cloud_uptime", s.ticks);
  s.edge_sync_interval = get_as<std::int64_t>(doc, "edge_sync_interval", "");
  if (s.edge_sync_interval < 1) malformed("edge_sync_interval", "must be >= 1");

  if (!doc.contains("devices") || !doc.at("devices").is_array()) malformed("devices", "expected a list");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.at("devices").size(); ++i) {
    const json& d = doc.at("devices")[i];
    const std::string where = "devices[" + std::to_string(i) + "]";
    if (!d.is_object()) malformed(where, "expected object");
    DevicePlan plan;
    plan.device_id = get_as<std::string>(d, "device_id", where);
    if (!RecordId::valid_device_id(plan.device_id) || plan.device_id == kEdgeStoreId ||
        plan.device_id == kCloudStoreId) {
      malformed(where + ".device_id", "invalid or reserved device id");
    }
    if (!ids.insert(plan.device_id).second) malformed(where + ".device_id", "duplicate device id");
    plan.author = d.value("author", plan.device_id);
    plan.team = d.value("team", std::string());

    const json& wps = d.contains("waypoints") ? d.at("waypoints") : json::array();
    if (!wps.is_array()) malformed(where + ".waypoints", "expected list");
    for (std::size_t w = 0; w < wps.size(); ++w) {
      const json& wp = wps[w];
      const std::string loc = where + ".waypoints[" + std::to_string(w) + "]";
      if (!wp.is_array() || wp.size() != 3 || !wp[0].is_number_integer() || !wp[1].is_number() || !wp[2].is_number()) {
        malformed(loc, "expected [tick, x_m, y_m]");
      }
      Waypoint p{wp[0].get<std::int64_t>(), {wp[1].get<double>(), wp[2].get<double>()}};
      if (!plan.waypoints.empty() && p.tick <= plan.waypoints.back().tick) malformed(loc, "ticks must increase");
      plan.waypoints.push_back(p);
    }
    if (plan.waypoints.empty()) malformed(where + ".waypoints", "at least one waypoint required");

    const json& entries = d.contains("entries") ? d.at("entries") : json::array();
    if (!entries.is_array()) malformed(where + ".entries", "expected list");
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const std::string loc = where + ".entries[" + std::to_string(e) + "]";
      EntryEvent ev;
      ev.tick = get_as<std::int64_t>(entries[e], "tick", loc);
      if (ev.tick < 0 || ev.tick >= s.ticks) malformed(loc + ".tick", "outside [0, ticks)");
      if (!entries[e].contains("values") || !entries[e].at("values").is_object()) malformed(loc + ".values", "expected object");
      ev.values = entries[e].at("values");
      for (const auto& [k, v] : ev.values.items()) {
        if (s.schema.find(k) == nullptr) throw Error(ErrorCode::kUnknownField, k, loc);
      }
      // Probe-validate now so that a bad entry fails the load, not the run.
      try {
        validate_record(s.schema, entry_draft(s, plan, RecordId(plan.device_id, 0), ev.tick,
                                              plan.waypoints.front().position, ev.values));
      } catch (const Error& err) {
        if (err.code() == ErrorCode::kBadCoordinate) continue;
        malformed(loc, err.what());
      }
      plan.entries.push_back(std::move(ev));
    }
    std::stable_sort(plan.entries.begin(), plan.entries.end(),
                     [](const EntryEvent& a, const EntryEvent& b) { return a.tick < b.tick; });

    plan.cloud_links = parse_intervals(d.value("cloud_links", json::array()), where + ".cloud_links", s.ticks);
    s.devices.push_back(std::move(plan));
  }
  return s;
}

json scenario_to_json(const Scenario& s) {
  json devices = json::array();
  for (const auto& d : s.devices) {
    json wps = json::array();
    for (const auto& w : d.waypoints) wps.push_back({w.tick, w.position.x_m, w.position.y_m});
    json entries = json::array();
    for (const auto& e : d.entries) entries.push_back({{"tick", e.tick}, {"values", e.values}});
    devices.push_back({{"device_id", d.device_id},
                       {"author", d.author},
                       {"team", d.team},
                       {"waypoints", std::move(wps)},
                       {"entries", std::move(entries)},
                       {"cloud_links", intervals_json(d.cloud_links)}});
  }
  return {{"name", s.name},
          {"seed", s.seed},
          {"ticks", s.ticks},
          {"epoch", format_rfc3339(s.epoch)},
          {"grid", geo::grid_to_json(s.grid)},
          {"schema", schema_to_json(s.schema)},
          {"edge", {{"x_m", s.edge.position.x_m}, {"y_m", s.edge.position.y_m}, {"range_m", s.edge.range_m}}},
          {"cloud_uptime", intervals_json(s.cloud_uptime)},
          {"edge_sync_interval", s.edge_sync_interval},
          {"devices", std::move(devices)}};
}

// ---------------------------------------------------------------------------
// Trace

std::int64_t event_tick(const TraceEvent& event) {
  return std::visit([](const auto& e) { return e.tick; }, event);
}

namespace {

json ids_json(const std::vector<RecordId>& ids) {
  json out = json::array();
  for (const auto& id : ids) out.push_back(id.canonical());
  return out;
}

std::vector<RecordId> ids_from(const json& arr) {
  std::vector<RecordId> out;
  for (const auto& v : arr) out.push_back(RecordId::parse(v.get<std::string>()));
  return out;
}

}  // namespace

std::string Trace::to_jsonl() const {
  std::string out;
  for (const auto& event : events) {
    json j = std::visit(
        [](const auto& e) -> json {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, EnterEvent>) {
            return {{"event", "ENTER"}, {"tick", e.tick}, {"device", e.device}, {"record_id", e.record_id.canonical()}};
          } else if constexpr (std::is_same_v<T, SyncEvent>) {
            return {{"event", "SYNC"},
                    {"tick", e.tick},
                    {"a", e.a},
                    {"b", e.b},
                    {"pushed", e.pushed_ids.size()},
                    {"pulled", e.pulled_ids.size()},
                    {"pushed_ids", ids_json(e.pushed_ids)},
                    {"pulled_ids", ids_json(e.pulled_ids)}};
          } else {
            return {{"event", "PROMOTE"},
                    {"tick", e.tick},
                    {"store", e.store},
                    {"record_id", e.record_id.canonical()},
                    {"state", std::string(to_string(e.state))}};
          }
        },
        event);
    out += j.dump();
    out += '\n';
  }
  return out;
}

Trace Trace::from_jsonl(std::string_view text) {
  Trace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kMalformedDocument, where, "not a JSON object");
    try {
      const std::string kind = j.at("event").get<std::string>();
      const auto tick = j.at("tick").get<std::int64_t>();
      if (kind == "ENTER") {
        trace.events.emplace_back(
            EnterEvent{tick, j.at("device").get<std::string>(), RecordId::parse(j.at("record_id").get<std::string>())});
      } else if (kind == "SYNC") {
        trace.events.emplace_back(SyncEvent{tick, j.at("a").get<std::string>(), j.at("b").get<std::string>(),
                                            ids_from(j.at("pushed_ids")), ids_from(j.at("pulled_ids"))});
      } else if (kind == "PROMOTE") {
        auto state = parse_freshness(j.at("state").get<std::string>());
        if (!state) throw Error(ErrorCode::kMalformedDocument, where, "unknown state");
        trace.events.emplace_back(PromoteEvent{tick, j.at("store").get<std::string>(),
                                               RecordId::parse(j.at("record_id").get<std::string>()), *state});
      } else {
        throw Error(ErrorCode::kMalformedDocument, where, "unknown event " + kind);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedDocument, where, e.what());
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(Scenario scenario)
    : scenario_(std::move(scenario)),
      edge_(Tier::kEdge, std::string(kEdgeStoreId)),
      cloud_(Tier::kCloud, std::string(kCloudStoreId)) {
  for (const auto& plan : scenario_.devices) {
    devices_.emplace_back(Tier::kDevice, plan.device_id);
    positions_.push_back(plan.position_at(0));
    counters_.push_back(-1);
    entries_by_tick_.emplace_back();
  }
  for (std::size_t i = 0; i < scenario_.devices.size(); ++i) {
    for (const auto& e : scenario_.devices[i].entries) entries_by_tick_[i].push_back(&e);
  }
}

void Simulation::session(Replica& local, Replica& peer, std::int64_t tick) {
  LocalPeer remote(peer);
  const SyncReport report = sync_session(local, remote);
  trace_.events.emplace_back(SyncEvent{tick, local.store.store_id(), peer.store.store_id(), report.pushed_ids,
                                       report.pulled_ids});
  for (const auto& [id, state] : report.arrived) {
    trace_.events.emplace_back(PromoteEvent{tick, local.store.store_id(), id, state});
  }
  for (const auto& [id, state] : report.promoted) {
    trace_.events.emplace_back(PromoteEvent{tick, local.store.store_id(), id, state});
  }
}

void Simulation::step(std::int64_t tick) {
  if (tick != next_tick_ || tick < 0 || tick >= scenario_.ticks) {
    throw Error(ErrorCode::kOutOfRange, "tick", "expected tick " + std::to_string(next_tick_));
  }
  const std::size_t n = devices_.size();

  // (1) move
  for (std::size_t i = 0; i < n; ++i) positions_[i] = scenario_.devices[i].position_at(tick);

  // (2) data entry
  for (std::size_t i = 0; i < n; ++i) {
    const DevicePlan& plan = scenario_.devices[i];
    for (const EntryEvent* e : entries_by_tick_[i]) {
      if (e->tick != tick) continue;
      RecordId id = next_record_id(plan.device_id, counters_[i]);
      const Record record =
          validate_record(scenario_.schema, entry_draft(scenario_, plan, id, tick, positions_[i], e->values));
      insert_local(devices_[i].store, devices_[i].ledger, record);
      counters_[i] = static_cast<std::int64_t>(id.counter());
      trace_.events.emplace_back(EnterEvent{tick, plan.device_id, id});
    }
  }

  // (3) device <-> edge within radio range
  for (std::size_t i = 0; i < n; ++i) {
    const double dist = std::hypot(positions_[i].x_m - scenario_.edge.position.x_m,
                                   positions_[i].y_m - scenario_.edge.position.y_m);
    if (dist <= scenario_.edge.range_m) session(devices_[i], edge_, tick);
  }

  // (4) edge <-> cloud on the relay cadence
  const bool cloud_up = scenario_.cloud_up(tick);
  if (cloud_up && tick % scenario_.edge_sync_interval == 0) session(edge_, cloud_, tick);

  // (5) direct device <-> cloud links
  if (cloud_up) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in_any(scenario_.devices[i].cloud_links, tick)) session(devices_[i], cloud_, tick);
    }
  }
  ++next_tick_;
}

ConvergenceReport Simulation::convergence() const {
  ConvergenceReport report;
  std::set<RecordId> all;
  std::vector<std::pair<std::string, std::set<RecordId>>> sets;
  for (const auto& d : devices_) sets.emplace_back(d.store.store_id(), d.store.ids());
  sets.emplace_back(edge_.store.store_id(), edge_.store.ids());
  sets.emplace_back(cloud_.store.store_id(), cloud_.store.ids());
  for (const auto& [id, s] : sets) all.insert(s.begin(), s.end());

  std::set<RecordId> without_cloud;
  for (std::size_t i = 0; i + 1 < sets.size(); ++i) without_cloud.insert(sets[i].second.begin(), sets[i].second.end());

  report.total_records = all.size();
  report.cloud_records = cloud_.store.size();
  report.devices_edge_converged = true;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& [store, ids] = sets[i];
    Straggler s{store, {}};
    std::set_difference(all.begin(), all.end(), ids.begin(), ids.end(), std::back_inserter(s.missing));
    if (i + 1 < sets.size() && ids != without_cloud) report.devices_edge_converged = false;
    if (!s.missing.empty()) report.stragglers.push_back(std::move(s));
  }
  report.converged = report.stragglers.empty();
  return report;
}

json ConvergenceReport::to_json() const {
  json strag = json::array();
  for (const auto& s : stragglers) {
    json missing = json::array();
    for (const auto& id : s.missing) missing.push_back(id.canonical());
    strag.push_back({{"store", s.store_id}, {"missing", std::move(missing)}});
  }
  return {{"converged", converged},
          {"devices_edge_converged", devices_edge_converged},
          {"total_records", total_records},
          {"cloud_records", cloud_records},
          {"stragglers", std::move(strag)}};
}

std::string ConvergenceReport::to_text() const {
  std::ostringstream os;
  os << "converged: " << (converged ? "true" : "false") << "\n";
  os << "devices_edge_converged: " << (devices_edge_converged ? "true" : "false") << "\n";
  os << "records: " << total_records << "\n";
  os << "cloud_records: " << cloud_records << "\n";
  os << "stragglers: " << stragglers.size() << "\n";
  for (const auto& s : stragglers) os << "  " << s.store_id << " missing " << s.missing.size() << "\n";
  return os.str();
}

RunResult run(const Scenario& scenario) {
  Simulation sim(scenario);
  for (std::int64_t t = 0; t < scenario.ticks; ++t) sim.step(t);
  RunResult out;
  out.devices = sim.devices();
  out.edge = sim.edge();
  out.cloud = sim.cloud();
  out.trace = sim.trace();
  out.report = sim.convergence();
  return out;
}

// ---------------------------------------------------------------------------
// Trace properties

PropertyReport check_trace(const Trace& trace) {
  PropertyReport report;
  std::map<std::pair<std::string, RecordId>, FreshnessState> states;
  std::set<RecordId> entered;
  auto& holds = report.holdings;

  auto violate = [&](std::int64_t tick, const char* property, std::string detail) {
    report.violations.push_back({tick, property, std::move(detail)});
    if (std::string_view(property) == "monotonicity") report.monotonic = false;
    if (std::string_view(property) == "unique_ids") report.unique_ids = false;
    if (std::string_view(property) == "exactly_once") report.exactly_once = false;
  };
  auto deliver = [&](std::int64_t tick, const std::string& from, const std::string& to, const RecordId& id) {
    if (holds[from].count(id) == 0) {
      violate(tick, "exactly_once", from + " delivered " + id.canonical() + " it does not hold");
    }
    if (!holds[to].insert(id).second) {
      violate(tick, "exactly_once", id.canonical() + " delivered to " + to + " more than once");
    }
  };

  for (const auto& event : trace.events) {
    if (const auto* e = std::get_if<EnterEvent>(&event)) {
      if (!entered.insert(e->record_id).second) {
        violate(e->tick, "unique_ids", "duplicate record id " + e->record_id.canonical());
      }
      holds[e->device].insert(e->record_id);
      states[{e->device, e->record_id}] = FreshnessState::kUnsynced;
    } else if (const auto* s = std::get_if<SyncEvent>(&event)) {
      for (const auto& id : s->pushed_ids) deliver(s->tick, s->a, s->b, id);
      for (const auto& id : s->pulled_ids) deliver(s->tick, s->b, s->a, id);
    } else if (const auto* p = std::get_if<PromoteEvent>(&event)) {
      auto [it, inserted] = states.try_emplace({p->store, p->record_id}, p->state);
      if (!inserted) {
        if (p->state < it->second) {
          violate(p->tick, "monotonicity",
                  p->store + " " + p->record_id.canonical() + " " + std::string(to_string(it->second)) + " -> " +
                      std::string(to_string(p->state)));
        }
        it->second = std::max(it->second, p->state);
      }
    }
  }
  return report;
}

}  // namespace fieldsync::sim
