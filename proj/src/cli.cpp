#include "fieldsync/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fieldsync/blob_store.hpp"
#include "fieldsync/field_sim.hpp"
#include "fieldsync/geo_analytics.hpp"
#include "fieldsync/http_peer.hpp"
#include "fieldsync/persistent_log.hpp"
#include "fieldsync/sync_engine.hpp"
#include "fieldsync/tier_service.hpp"
#include "fieldsync/view_geometry.hpp"

namespace fieldsync::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kConfigHelp =
    "Configuration is resolved per setting: command-line flag, then the FIELDSYNC_* environment\n"
    "variable, then the JSON config file (--config / FIELDSYNC_CONFIG). Config keys: device_id,\n"
    "data_dir, edge_url, cloud_url, schema, grid, tier. Relative paths in the config file are\n"
    "resolved against the file's directory.\n"
    "Exit codes: 0 ok, 2 validation or configuration error, 3 peer offline, 4 service failure.";

struct GlobalFlags {
  std::string config;
  std::string data_dir;
  std::string device_id;
  std::string edge_url;
  std::string cloud_url;
  std::string schema;
  std::string grid;
  std::string tier;
  bool json = false;
};

struct CliConfig {
  std::string device_id;
  fs::path data_dir;
  std::optional<std::string> edge_url;
  std::optional<std::string> cloud_url;
  std::optional<geo::GridSpec> grid;
  std::optional<fs::path> schema_path;
  Tier tier = Tier::kDevice;

  const geo::GridSpec& require_grid() const {
    if (!grid) throw Error(ErrorCode::kConfigError, "grid", "no grid configured");
    return *grid;
  }
  Schema load_schema() const {
    if (!schema_path) throw Error(ErrorCode::kConfigError, "schema", "no schema configured");
    auto text = read_file(*schema_path);
    if (!text) throw Error(ErrorCode::kIoError, schema_path->string(), "cannot read schema");
    return parse_schema(*text);
  }
};

// Exit-code classification for library errors.
int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kPeerUnreachable:
      return kExitOffline;
    case ErrorCode::kIoError:
      return kExitService;
    default:
      return kExitUsage;
  }
}

std::string read_text(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw Error(ErrorCode::kIoError, path.string(), "cannot read file");
  return *text;
}

geo::GridSpec grid_from_value(const json& value, const fs::path& base) {
  if (value.is_string()) {
    const fs::path p = base / value.get<std::string>();
    json doc = json::parse(read_text(p), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::kConfigError, "grid", p.string() + " is not JSON");
    return geo::grid_from_json(doc);
  }
  return geo::grid_from_json(value);
}

CliConfig resolve_config(const GlobalFlags& flags) {
  CliConfig cfg;
  json file = json::object();
  fs::path base = fs::current_path();
  if (!flags.config.empty()) {
    const fs::path path = flags.config;
    file = json::parse(read_text(path), nullptr, false);
    if (file.is_discarded() || !file.is_object()) {
      throw Error(ErrorCode::kConfigError, path.string(), "config is not a JSON object");
    }
    base = fs::absolute(path).parent_path();
  }
  auto file_string = [&](const char* key) -> std::optional<std::string> {
    auto it = file.find(key);
    if (it == file.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::kConfigError, key, "expected a string");
    return it->get<std::string>();
  };
  auto pick = [&](const std::string& flag, const char* key) -> std::optional<std::string> {
    if (!flag.empty()) return flag;
    return file_string(key);
  };
  auto pick_path = [&](const std::string& flag, const char* key) -> std::optional<fs::path> {
    if (!flag.empty()) return fs::path(flag);
    if (auto v = file_string(key)) return base / *v;
    return std::nullopt;
  };

  cfg.device_id = pick(flags.device_id, "device_id").value_or("");
  cfg.data_dir = pick_path(flags.data_dir, "data_dir").value_or(fs::path());
  cfg.edge_url = pick(flags.edge_url, "edge_url");
  cfg.cloud_url = pick(flags.cloud_url, "cloud_url");
  cfg.schema_path = pick_path(flags.schema, "schema");
  if (!flags.grid.empty()) {
    cfg.grid = grid_from_value(json(flags.grid), fs::current_path());
  } else if (file.contains("grid")) {
    cfg.grid = grid_from_value(file.at("grid"), base);
  }
  if (auto tier = pick(flags.tier, "tier")) {
    auto parsed = parse_tier(*tier);
    if (!parsed) throw Error(ErrorCode::kConfigError, "tier", "expected device, edge or cloud");
    cfg.tier = *parsed;
  }
  return cfg;
}

void require_store(const CliConfig& cfg) {
  if (cfg.data_dir.empty()) throw Error(ErrorCode::kConfigError, "data_dir", "no data directory configured");
  if (cfg.device_id.empty()) throw Error(ErrorCode::kConfigError, "device_id", "no device id configured");
  if (!RecordId::valid_device_id(cfg.device_id)) throw Error(ErrorCode::kInvalidDeviceId, cfg.device_id);
}

DurableReplica open_store(const CliConfig& cfg) {
  require_store(cfg);
  return DurableReplica(cfg.data_dir, cfg.tier, cfg.device_id);
}

std::vector<Record> all_records(const DurableReplica& store) {
  const auto span = store.replica().store.records();
  return {span.begin(), span.end()};
}

std::optional<double> parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::vector<double> parse_number_list(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto v = parse_double(part);
    if (!v) throw Error(ErrorCode::kConfigError, what, "expected numbers, got \"" + text + "\"");
    out.push_back(*v);
  }
  if (out.size() != expected) {
    throw Error(ErrorCode::kConfigError, what, "expected " + std::to_string(expected) + " comma-separated numbers");
  }
  return out;
}

// Turns "field=value" into a JSON value shaped for the field's kind. Values
// the schema does not describe pass through as strings and fail validation.
json field_value(const Schema& schema, const std::string& field, const std::string& raw, BlobStore& blobs) {
  const FieldSpec* spec = schema.find(field);
  if (spec == nullptr) return raw;
  switch (spec->kind) {
    case FieldKind::kNumeric:
      if (auto v = parse_double(raw)) return *v;
      return raw;
    case FieldKind::kGps: {
      auto v = parse_number_list(raw, 2, field.c_str());
      return {{"lat", v[0]}, {"lon", v[1]}};
    }
    case FieldKind::kImage:
      if (!raw.empty() && raw.front() == '@') return blobs.stage(read_text(raw.substr(1)));
      return raw;
    case FieldKind::kText:
    case FieldKind::kTime:
      return raw;
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Commands

struct CollectArgs {
  std::vector<std::string> assignments;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<std::string> images;
  std::string time;
  std::string author;
  std::string team;
  std::string source = "manual";
};

int cmd_collect(const CliConfig& cfg, const CollectArgs& args, bool as_json, std::ostream& out) {
  const Schema schema = cfg.load_schema();
  DurableReplica durable = open_store(cfg);
  BlobStore blobs(cfg.data_dir / "blobs");
  Replica& replica = durable.replica();

  std::int64_t last = -1;
  for (const Record& r : replica.store.records()) {
    if (r.id().device_id() == cfg.device_id) last = std::max(last, static_cast<std::int64_t>(r.id().counter()));
  }

  RecordDraft draft;
  draft.id = next_record_id(cfg.device_id, last);
  draft.schema_id = schema.schema_id;
  draft.schema_version = schema.version;
  if (args.time.empty()) {
    draft.timestamp = std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
  } else {
    auto ts = parse_rfc3339(args.time);
    if (!ts) throw Error(ErrorCode::kTypeMismatch, "time", "expected RFC 3339 timestamp");
    draft.timestamp = *ts;
  }
  draft.lat = args.lat;
  draft.lon = args.lon;
  draft.author = args.author.empty() ? cfg.device_id : args.author;
  draft.team = args.team;
  auto source = parse_record_source(args.source);
  if (!source) throw Error(ErrorCode::kConfigError, "source", "expected manual, sensor or archival");
  draft.source = *source;

  for (const std::string& a : args.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kMalformedDocument, a, "expected field=value");
    }
    const std::string field = a.substr(0, eq);
    draft.values[field] = field_value(schema, field, a.substr(eq + 1), blobs);
  }
  for (const std::string& path : args.images) draft.image_refs.push_back(blobs.stage(read_text(path)));

  const Record record = validate_record(schema, draft);
  const Record batch[] = {record};
  replica.sink->append(batch);
  insert_local(replica.store, replica.ledger, record);
  durable.save_meta();

  const FreshnessState state = *replica.ledger.state(record.id());
  if (as_json) {
    out << json{{"id", record.id().canonical()}, {"state", std::string(to_string(state))}}.dump() << "\n";
  } else {
    out << record.id().canonical() << " " << to_string(state) << "\n";
  }
  return kExitOk;
}

int cmd_sync(const CliConfig& cfg, const std::string& peer_name, double timeout_s, bool as_json,
             std::ostream& out, std::ostream& err) {
  const std::optional<std::string>& url = peer_name == "edge" ? cfg.edge_url : cfg.cloud_url;
  if (!url) throw Error(ErrorCode::kConfigError, peer_name + "_url", "no URL configured for peer " + peer_name);
  DurableReplica durable = open_store(cfg);
  BlobStore blobs(cfg.data_dir / "blobs");
  HttpPeer peer(*url, std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0)));

  SyncReport report;
  try {
    report = sync_session(durable.replica(), peer);
  } catch (const Error& e) {
    durable.save_meta();
    if (e.code() == ErrorCode::kPeerUnreachable) {
      err << "offline: data cached locally\n";
      return kExitOffline;
    }
    throw;
  }
  durable.save_meta();
  std::set<std::string> uploaded;
  try {
    relay_blobs(durable.replica(), blobs, peer, uploaded);
  } catch (const Error& e) {
    err << "blob upload deferred: " << e.what() << "\n";
  }

  if (as_json) {
    json promoted = json::array();
    for (const auto& [id, state] : report.promoted) {
      promoted.push_back({{"id", id.canonical()}, {"state", std::string(to_string(state))}});
    }
    out << json{{"peer", report.peer}, {"pushed", report.pushed}, {"pulled", report.pulled}, {"promoted", promoted}}
               .dump()
        << "\n";
    return kExitOk;
  }
  out << "pushed " << report.pushed << ", pulled " << report.pulled;
  if (!report.promoted.empty()) {
    // All promotions of one session land on the peer tier's state.
    const FreshnessState top = std::max_element(report.promoted.begin(), report.promoted.end(),
                                                [](const auto& a, const auto& b) { return a.second < b.second; })
                                   ->second;
    out << ", promoted " << report.promoted.size() << "→" << to_string(top);
  }
  out << "\n";
  return kExitOk;
}

int cmd_status(const CliConfig& cfg, bool as_json, std::ostream& out) {
  DurableReplica durable = open_store(cfg);
  const Replica& replica = durable.replica();
  if (as_json) {
    json rows = json::array();
    for (const Record& r : replica.store.records()) {
      const ColorClass color = classify_freshness(replica.ledger, r.id());
      rows.push_back({{"id", r.id().canonical()},
                      {"state", std::string(to_string(*replica.ledger.state(r.id())))},
                      {"color", std::string(to_string(color))},
                      {"ts", format_rfc3339(r.timestamp())}});
    }
    out << json{{"store_id", replica.store.store_id()}, {"records", std::move(rows)}}.dump() << "\n";
    return kExitOk;
  }

  std::size_t id_width = 2;
  for (const Record& r : replica.store.records()) id_width = std::max(id_width, r.id().canonical().size());
  std::size_t counts[3] = {0, 0, 0};
  std::ostringstream body;
  for (const Record& r : replica.store.records()) {
    const ColorClass color = classify_freshness(replica.ledger, r.id());
    ++counts[static_cast<int>(color)];
    body << color_letter(color) << "  " << std::left << std::setw(static_cast<int>(id_width)) << r.id().canonical()
         << "  " << std::setw(11) << to_string(*replica.ledger.state(r.id())) << "  " << format_rfc3339(r.timestamp())
         << "\n";
  }
  out << "store " << replica.store.store_id() << ": " << replica.store.size() << " records, R " << counts[0] << ", G "
      << counts[1] << ", B " << counts[2] << "\n";
  out << body.str();
  return kExitOk;
}

int cmd_coverage(const CliConfig& cfg, bool as_json, std::ostream& out) {
  const geo::GridSpec& grid = cfg.require_grid();
  DurableReplica durable = open_store(cfg);
  const auto counts = geo::coverage(durable.replica().store.records(), grid);
  if (as_json) {
    out << geo::coverage_to_json(counts, grid).dump() << "\n";
  } else {
    out << geo::coverage_to_text(counts, grid);
  }
  return kExitOk;
}

int cmd_missing(const CliConfig& cfg, bool as_json, std::ostream& out) {
  const geo::GridSpec& grid = cfg.require_grid();
  DurableReplica durable = open_store(cfg);
  const auto cells = geo::missing_cells(geo::coverage(durable.replica().store.records(), grid));
  if (as_json) {
    out << geo::missing_to_json(cells).dump() << "\n";
  } else {
    out << geo::missing_to_text(cells);
  }
  return kExitOk;
}

int cmd_anomalies(const CliConfig& cfg, const geo::AnomalyParams& params, bool as_json, std::ostream& out) {
  const geo::GridSpec& grid = cfg.require_grid();
  const Schema schema = cfg.load_schema();
  DurableReplica durable = open_store(cfg);
  const auto found = geo::detect_anomalies(durable.replica().store.records(), grid, schema, params);
  if (as_json) {
    out << geo::anomalies_to_json(found).dump() << "\n";
  } else {
    out << geo::anomalies_to_text(found);
  }
  return kExitOk;
}

struct ServeArgs {
  std::string tier;
  std::string service_config;
  std::string bind;
  std::string upstream;
  double interval_s = 0.0;
};

int cmd_serve(const CliConfig& cfg, const GlobalFlags& flags, const ServeArgs& args, std::ostream& out,
              std::ostream& err) {
  ServiceConfig sc;
  if (!args.service_config.empty()) sc = parse_service_config(read_text(args.service_config));
  if (!args.tier.empty()) {
    auto tier = parse_tier(args.tier);
    if (!tier) throw Error(ErrorCode::kConfigError, "tier", "expected edge or cloud");
    sc.tier = *tier;
  }
  if (!args.bind.empty()) {
    const auto colon = args.bind.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kConfigError, "bind", "expected host:port");
    sc.host = args.bind.substr(0, colon);
    auto port = parse_double(args.bind.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) throw Error(ErrorCode::kConfigError, "bind", "bad port");
    sc.port = static_cast<int>(*port);
  }
  if (!args.upstream.empty()) sc.upstream = args.upstream;
  if (args.interval_s > 0) {
    sc.upstream_sync_interval = std::chrono::milliseconds(static_cast<long long>(args.interval_s * 1000.0));
  }
  if (!flags.data_dir.empty() || sc.data_dir.empty()) sc.data_dir = cfg.data_dir;
  if (!sc.schema_path && cfg.schema_path) sc.schema_path = cfg.schema_path;
  sc.validate();

  // Signals are taken synchronously by this thread; block them before any
  // worker thread exists so the workers inherit the mask.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &stop_signals, &previous);
  struct RestoreMask {
    const sigset_t* mask;
    ~RestoreMask() { pthread_sigmask(SIG_SETMASK, mask, nullptr); }
  } restore{&previous};

  TierService service(sc);
  TierServer server(service);
  int port = 0;
  try {
    port = server.bind(sc.host, sc.port);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitService;
  }
  std::unique_ptr<UpstreamRelay> relay;
  if (sc.upstream) {
    relay = std::make_unique<UpstreamRelay>(service, std::make_unique<HttpPeer>(*sc.upstream));
    relay->start(sc.upstream_sync_interval);
  }
  server.start();
  out << "serving " << to_string(sc.tier) << " on " << sc.host << ":" << port << std::endl;

  int sig = 0;
  sigwait(&stop_signals, &sig);
  if (relay) relay->stop();
  server.stop();
  return kExitOk;
}

fs::path resolve_scenario(const std::string& arg) {
  const fs::path given = arg;
  if (fs::exists(given)) return given;
  const fs::path bundled = fs::path(FIELDSYNC_SCENARIO_DIR) / given.filename();
  if (fs::exists(bundled)) return bundled;
  if (!given.has_extension() && fs::exists(fs::path(bundled) += ".json")) return fs::path(bundled) += ".json";
  throw Error(ErrorCode::kIoError, arg, "scenario not found");
}

// Writes one replica as a CLI data directory with a ready config.json.
void dump_replica(const Replica& replica, const sim::Scenario& scenario, const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw Error(ErrorCode::kConfigError, dir.string(), "dump target exists and is not empty");
  }
  {
    DurableReplica durable(dir, replica.store.tier(), replica.store.store_id());
    const auto records = replica.store.records();
    durable.log().append(records);
    for (const Record& r : records) durable.replica().store.add(r);
    durable.replica().ledger = replica.ledger;
    durable.replica().cursors = replica.cursors;
    durable.save_meta();
  }
  write_file_atomic(dir / "schema.json", serialize_schema(scenario.schema) + "\n");
  const json config = {{"device_id", replica.store.store_id()},
                       {"tier", std::string(to_string(replica.store.tier()))},
                       {"data_dir", "."},
                       {"schema", "schema.json"},
                       {"grid", geo::grid_to_json(scenario.grid)}};
  write_file_atomic(dir / "config.json", config.dump(2) + "\n");
}

struct SimulateArgs {
  std::string scenario;
  std::string trace_path;
  std::string dump_dir;
  bool check = false;
};

int cmd_simulate(const SimulateArgs& args, bool as_json, std::ostream& out) {
  const sim::Scenario scenario = sim::load_scenario(read_text(resolve_scenario(args.scenario)));
  const sim::RunResult result = sim::run(scenario);

  if (!args.trace_path.empty()) write_file_atomic(args.trace_path, result.trace.to_jsonl());
  if (!args.dump_dir.empty()) {
    const fs::path root = args.dump_dir;
    for (const Replica& d : result.devices) dump_replica(d, scenario, root / d.store.store_id());
    dump_replica(result.edge, scenario, root / result.edge.store.store_id());
    dump_replica(result.cloud, scenario, root / result.cloud.store.store_id());
  }

  std::optional<sim::PropertyReport> props;
  if (args.check) props = sim::check_trace(result.trace);

  if (as_json) {
    json doc = result.report.to_json();
    if (props) {
      doc["properties"] = {{"monotonic", props->monotonic},
                           {"unique_ids", props->unique_ids},
                           {"exactly_once", props->exactly_once},
                           {"violations", props->violations.size()}};
    }
    out << doc.dump() << "\n";
  } else {
    out << result.report.to_text();
    if (props) {
      out << "properties: " << (props->ok() ? "ok" : "violated") << "\n";
      if (const auto* v = props->first()) out << "  first violation at tick " << v->tick << ": " << v->property << " " << v->detail << "\n";
    }
  }
  return props && !props->ok() ? kExitUsage : kExitOk;
}

struct RenderArgs {
  std::string viewer;
  std::string field;
  std::optional<double> lo;
  std::optional<double> hi;
  std::string viewport = "100,100";
  double meters_per_unit = 1.0;
  std::string out_path;
};

int cmd_renderplan(const CliConfig& cfg, const RenderArgs& args, std::ostream& out) {
  const geo::GridSpec& grid = cfg.require_grid();
  const auto v = parse_number_list(args.viewer, 4, "viewer");
  view::ViewerPose pose;
  pose.position = {v[0], v[1]};
  pose.heading = v[2];
  pose.fov = v[3];
  pose.validate();

  view::RenderPlanOptions options;
  const auto vp = parse_number_list(args.viewport, 2, "viewport");
  options.viewport = {vp[0], vp[1]};
  options.viewport.validate();
  if (!(args.meters_per_unit > 0)) throw Error(ErrorCode::kConfigError, "meters-per-unit", "must be positive");
  options.meters_per_unit = args.meters_per_unit;
  options.hud.field = args.field;

  std::optional<NumericRange> range;
  if (cfg.schema_path) {
    const Schema schema = cfg.load_schema();
    const FieldSpec* spec = schema.find(args.field);
    if (spec == nullptr) throw Error(ErrorCode::kUnknownField, args.field);
    if (spec->kind != FieldKind::kNumeric) throw Error(ErrorCode::kNonNumericField, args.field);
    range = spec->numeric_range;
  }
  options.hud.lo = args.lo ? *args.lo : range ? range->min : 0.0;
  options.hud.hi = args.hi ? *args.hi : range ? range->max : 1.0;
  if (!(options.hud.hi > options.hud.lo)) throw Error(ErrorCode::kConfigError, "range", "hi must exceed lo");

  DurableReplica durable = open_store(cfg);
  const auto records = all_records(durable);
  const view::RenderPlan plan = view::build_render_plan(records, pose, grid, options);
  const std::string doc = view::render_plan_to_json(plan).dump(2) + "\n";
  if (args.out_path.empty()) {
    out << doc;
  } else {
    write_file_atomic(args.out_path, doc);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fieldsync: offline-first field data collection, sync and analysis"};
  app.footer(kConfigHelp);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config, "JSON config file")->envname("FIELDSYNC_CONFIG");
  app.add_option("--data-dir", flags.data_dir, "Local store directory")->envname("FIELDSYNC_DATA_DIR");
  app.add_option("--device-id", flags.device_id, "Device id for new records")->envname("FIELDSYNC_DEVICE_ID");
  app.add_option("--edge-url", flags.edge_url, "Edge service base URL")->envname("FIELDSYNC_EDGE_URL");
  app.add_option("--cloud-url", flags.cloud_url, "Cloud service base URL")->envname("FIELDSYNC_CLOUD_URL");
  app.add_option("--schema", flags.schema, "Schema JSON file")->envname("FIELDSYNC_SCHEMA");
  app.add_option("--grid", flags.grid, "Grid JSON file")->envname("FIELDSYNC_GRID");
  app.add_option("--tier", flags.tier, "Tier of the local store (default device)")->envname("FIELDSYNC_TIER");
  app.add_flag("--json", flags.json, "Print reports as JSON");

  CollectArgs collect;
  auto* c_collect = app.add_subcommand("collect", "Record an observation locally");
  c_collect->add_option("values", collect.assignments, "field=value pairs; image fields take @path")->required();
  c_collect->add_option("--lat", collect.lat, "Latitude")->required();
  c_collect->add_option("--lon", collect.lon, "Longitude")->required();
  c_collect->add_option("--image", collect.images, "Image file to hash, stage and attach");
  c_collect->add_option("--time", collect.time, "RFC 3339 timestamp (default now)");
  c_collect->add_option("--author", collect.author, "Author (default device id)");
  c_collect->add_option("--team", collect.team, "Team");
  c_collect->add_option("--source", collect.source, "manual, sensor or archival");

  std::string peer_name;
  double timeout_s = 3.0;
  auto* c_sync = app.add_subcommand("sync", "Run one sync session with a peer");
  c_sync->add_option("--peer", peer_name, "edge or cloud")->required()->check(CLI::IsMember({"edge", "cloud"}));
  c_sync->add_option("--timeout", timeout_s, "Connection timeout in seconds");

  auto* c_status = app.add_subcommand("status", "List local records with freshness");
  auto* c_coverage = app.add_subcommand("coverage", "Per-cell record counts");
  auto* c_missing = app.add_subcommand("missing", "Cells with no records");

  geo::AnomalyParams anomaly;
  auto* c_anomalies = app.add_subcommand("anomalies", "Flag spatial outliers");
  c_anomalies->add_option("--field", anomaly.field, "Numeric field")->required();
  c_anomalies->add_option("--threshold", anomaly.z_threshold, "Robust z threshold");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run an edge or cloud tier service");
  c_serve->add_option("--tier", serve.tier, "edge or cloud");
  c_serve->add_option("--service-config", serve.service_config, "Service config JSON");
  c_serve->add_option("--bind", serve.bind, "host:port");
  c_serve->add_option("--upstream", serve.upstream, "Upstream (cloud) base URL for an edge");
  c_serve->add_option("--interval", serve.interval_s, "Upstream sync interval in seconds");

  SimulateArgs simulate;
  auto* c_simulate = app.add_subcommand("simulate", "Run a field scenario and report convergence");
  c_simulate->add_option("scenario", simulate.scenario, "Scenario file or bundled scenario name")->required();
  c_simulate->add_option("--trace", simulate.trace_path, "Write the event trace as JSON lines");
  c_simulate->add_option("--dump-dir", simulate.dump_dir, "Write every final store as a data directory");
  c_simulate->add_flag("--check", simulate.check, "Verify trace properties");

  RenderArgs render;
  auto* c_render = app.add_subcommand("renderplan", "Export wedge and HUD geometry as JSON");
  c_render->add_option("--viewer", render.viewer, "x,y,heading,fov (meters, radians)")->required();
  c_render->add_option("--field", render.field, "Numeric field to colour by")->required();
  c_render->add_option("--lo", render.lo, "Colormap low value (default schema range)");
  c_render->add_option("--hi", render.hi, "Colormap high value (default schema range)");
  c_render->add_option("--viewport", render.viewport, "width,height in screen units");
  c_render->add_option("--meters-per-unit", render.meters_per_unit, "Ground meters per screen unit");
  c_render->add_option("--out", render.out_path, "Output file (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_simulate->parsed()) return cmd_simulate(simulate, flags.json, out);
    const CliConfig cfg = resolve_config(flags);
    if (c_collect->parsed()) return cmd_collect(cfg, collect, flags.json, out);
    if (c_sync->parsed()) return cmd_sync(cfg, peer_name, timeout_s, flags.json, out, err);
    if (c_status->parsed()) return cmd_status(cfg, flags.json, out);
    if (c_coverage->parsed()) return cmd_coverage(cfg, flags.json, out);
    if (c_missing->parsed()) return cmd_missing(cfg, flags.json, out);
    if (c_anomalies->parsed()) return cmd_anomalies(cfg, anomaly, flags.json, out);
    if (c_serve->parsed()) return cmd_serve(cfg, flags, serve, out, err);
    if (c_render->parsed()) return cmd_renderplan(cfg, render, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitService;
  }
  return kExitUsage;
}

}  // namespace fieldsync::cli
