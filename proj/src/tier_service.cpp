#include "fieldsync/tier_service.hpp"

#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace fieldsync {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void ServiceConfig::validate() const {
  if (tier == Tier::kDevice) throw Error(ErrorCode::kConfigError, "tier", "service tier must be edge or cloud");
  if (tier == Tier::kEdge && !upstream) throw Error(ErrorCode::kConfigError, "upstream", "edge tier requires an upstream cloud URL");
  if (tier == Tier::kCloud && upstream) throw Error(ErrorCode::kConfigError, "upstream", "cloud tier must not have an upstream");
  if (data_dir.empty()) throw Error(ErrorCode::kConfigError, "data_dir", "required");
  if (port < 0 || port > 65535) throw Error(ErrorCode::kConfigError, "bind", "port out of range");
  if (upstream_sync_interval.count() <= 0) throw Error(ErrorCode::kConfigError, "upstream_sync_interval", "must be positive");
}

ServiceConfig parse_service_config(std::string_view document) {
  json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::kConfigError, "", "config is not a JSON object");
  ServiceConfig cfg;
  try {
    if (doc.contains("tier")) {
      auto tier = parse_tier(doc.at("tier").get<std::string>());
      if (!tier) throw Error(ErrorCode::kConfigError, "tier", "expected edge or cloud");
      cfg.tier = *tier;
    }
    if (doc.contains("bind")) {
      const std::string bind = doc.at("bind").get<std::string>();
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::kConfigError, "bind", "expected host:port");
      cfg.host = bind.substr(0, colon);
      cfg.port = std::stoi(bind.substr(colon + 1));
    }
    if (doc.contains("data_dir")) cfg.data_dir = doc.at("data_dir").get<std::string>();
    if (doc.contains("upstream") && !doc.at("upstream").is_null()) cfg.upstream = doc.at("upstream").get<std::string>();
    if (doc.contains("upstream_sync_interval_s")) {
      cfg.upstream_sync_interval =
          std::chrono::milliseconds(static_cast<long long>(doc.at("upstream_sync_interval_s").get<double>() * 1000.0));
    }
    if (doc.contains("schema") && !doc.at("schema").is_null()) cfg.schema_path = doc.at("schema").get<std::string>();
    if (doc.contains("fsync")) cfg.fsync_writes = doc.at("fsync").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, "", e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::kConfigError, "bind", e.what());
  }
  if (const char* dir = std::getenv("FIELDSYNC_DATA_DIR"); dir != nullptr && *dir != '\0') cfg.data_dir = dir;
  return cfg;
}

// ---------------------------------------------------------------------------
// Documents

std::string delta_document(const Delta& delta) {
  json records = json::array();
  for (const Record& r : delta.records) records.push_back(record_to_json(r));
  return json{{"records", std::move(records)}, {"cursor", delta.cursor}}.dump();
}

std::string ack_document(const PushAck& ack) {
  json accepted = json::array();
  json known = json::array();
  for (const auto& id : ack.accepted_ids) accepted.push_back(id.canonical());
  for (const auto& id : ack.known_ids) known.push_back(id.canonical());
  return json{{"accepted_ids", std::move(accepted)}, {"known_ids", std::move(known)}}.dump();
}

namespace {

// Service diagnostics go to stderr so they never mix with report output.
spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> log = [] {
    auto existing = spdlog::get("fieldsync");
    return existing ? existing : spdlog::stderr_logger_mt("fieldsync");
  }();
  return *log;
}

HttpResponse error_response(int status, const Error& e) {
  json body = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (e.code() == ErrorCode::kPayloadConflict) {
    body["id"] = e.subject();
  } else {
    body["field"] = e.subject();
  }
  return {status, body.dump()};
}

HttpResponse plain_error(int status, std::string_view code, const std::string& message) {
  return {status, json{{"error", code}, {"message", message}}.dump()};
}

std::string now_rfc3339() {
  return format_rfc3339(std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now()));
}

std::string default_store_id(Tier tier) { return random_store_id(to_string(tier)); }

}  // namespace

// ---------------------------------------------------------------------------
// TierService

TierService::TierService(ServiceConfig config)
    : config_((config.validate(), std::move(config))),
      durable_(config_.data_dir, config_.tier, default_store_id(config_.tier), config_.fsync_writes),
      blobs_(config_.data_dir / "blobs") {
  if (config_.schema_path) {
    auto text = read_file(*config_.schema_path);
    if (!text) throw Error(ErrorCode::kConfigError, "schema", "cannot read " + config_.schema_path->string());
    schema_ = parse_schema(*text);
    schema_document_ = std::move(*text);
  }
  const auto& rec = durable_.log().recovery();
  if (rec.truncated_bytes > 0) {
    logger().warn("truncated {} torn bytes from {}", rec.truncated_bytes,
                 PersistentLog::log_path(config_.data_dir).string());
  }
}

HttpResponse TierService::get_schema() const {
  if (!schema_document_) return plain_error(404, "NotFound", "no schema configured");
  return {200, *schema_document_};
}

HttpResponse TierService::post_records(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("records") || !doc.at("records").is_array()) {
    return plain_error(400, "MalformedDocument", "expected {\"records\":[...]}");
  }
  std::vector<Record> batch;
  batch.reserve(doc.at("records").size());
  for (const json& item : doc.at("records")) {
    RecordDraft draft;
    try {
      draft = draft_from_json(item);
    } catch (const Error& e) {
      return error_response(400, e);
    }
    try {
      batch.push_back(schema_ ? validate_record(*schema_, draft) : check_record(draft));
    } catch (const Error& e) {
      return error_response(422, e);
    }
  }
  try {
    PushAck ack;
    {
      std::unique_lock lock(guard_);
      ack = accept_push(durable_.replica(), batch);
    }
    return {200, ack_document(ack)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kPayloadConflict) return error_response(409, e);
    return error_response(500, e);
  }
}

HttpResponse TierService::get_records(std::optional<std::string_view> after) const {
  std::uint64_t from = 0;
  if (after) {
    const auto* first = after->data();
    const auto* last = first + after->size();
    auto [ptr, ec] = std::from_chars(first, last, from);
    if (after->empty() || ec != std::errc{} || ptr != last) {
      return plain_error(400, "MalformedDocument", "after must be a non-negative integer");
    }
  }
  std::shared_lock lock(guard_);
  return {200, delta_document(delta_since(durable_.replica().store, {durable_.replica().store.store_id(), from}))};
}

HttpResponse TierService::put_blob(std::string_view hash, std::string_view bytes) {
  try {
    const bool added = blobs_.put(hash, bytes);
    return {200, json{{"hash", hash}, {"stored", added}}.dump()};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformedDocument) return error_response(400, e);
    return error_response(500, e);
  }
}

HttpResponse TierService::get_blob(std::string_view hash) const {
  auto bytes = blobs_.get(hash);
  if (!bytes) return plain_error(404, "NotFound", "unknown blob");
  return {200, std::move(*bytes), "application/octet-stream"};
}

HttpResponse TierService::healthz() const {
  json body;
  {
    std::shared_lock lock(guard_);
    const auto& store = durable_.replica().store;
    body = {{"tier", std::string(to_string(store.tier()))},
            {"store_id", store.store_id()},
            {"records", store.size()},
            {"max_seq", store.max_seq()}};
  }
  if (config_.tier == Tier::kEdge) {
    std::lock_guard lock(health_mu_);
    body["last_upstream_sync"] = last_upstream_sync_ ? json(*last_upstream_sync_) : json(nullptr);
    body["upstream_error"] = last_upstream_error_ ? json(*last_upstream_error_) : json(nullptr);
  }
  return {200, body.dump()};
}

std::optional<SyncReport> TierService::sync_upstream(SyncPeer& upstream) {
  std::lock_guard serial(upstream_mu_);
  try {
    SyncReport report = sync_session(durable_.replica(), upstream, &guard_);
    {
      std::shared_lock lock(guard_);
      relay_blobs(durable_.replica(), blobs_, upstream, uploaded_blobs_);
      durable_.save_meta();
    }
    std::lock_guard lock(health_mu_);
    last_upstream_sync_ = now_rfc3339();
    last_upstream_error_.reset();
    if (report.pushed + report.pulled > 0) {
      logger().info("upstream sync with {}: pushed {}, pulled {}", report.peer, report.pushed, report.pulled);
    }
    return report;
  } catch (const Error& e) {
    logger().warn("upstream sync failed: {}", e.what());
    std::lock_guard lock(health_mu_);
    last_upstream_error_ = e.what();
    return std::nullopt;
  }
}

std::size_t TierService::record_count() const {
  std::shared_lock lock(guard_);
  return durable_.replica().store.size();
}

Delta TierService::dump() const {
  std::shared_lock lock(guard_);
  return delta_since(durable_.replica().store, {durable_.replica().store.store_id(), 0});
}

std::optional<FreshnessState> TierService::freshness(const RecordId& id) const {
  std::shared_lock lock(guard_);
  return durable_.replica().ledger.state(id);
}

void TierService::crash_after(std::uint64_t bytes) {
  std::unique_lock lock(guard_);
  durable_.log().crash_after(bytes);
}

// ---------------------------------------------------------------------------
// TierServer

struct TierServer::Impl {
  explicit Impl(TierService& s) : service(s) {}

  TierService& service;
  httplib::Server server;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

TierServer::TierServer(TierService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;
  // The library default adds SO_REUSEPORT, which lets a second service share
  // a busy port instead of failing to bind.
  srv.set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.Get("/schema", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.get_schema()); });
  srv.Get("/records", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> after;
    if (req.has_param("after")) after = req.get_param_value("after");
    reply(res, svc.get_records(after ? std::optional<std::string_view>(*after) : std::nullopt));
  });
  srv.Post("/records", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.post_records(req.body));
  });
  srv.Put(R"(/blobs/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.put_blob(req.matches[1].str(), req.body));
  });
  srv.Get(R"(/blobs/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_blob(req.matches[1].str()));
  });
  srv.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.healthz()); });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    reply(res, plain_error(500, "Internal", message));
  });
}

TierServer::~TierServer() { stop(); }

int TierServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIoError, host + ":" + std::to_string(port), "bind failed");
  return bound;
}

void TierServer::run() { impl_->server.listen_after_bind(); }

void TierServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void TierServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

// ---------------------------------------------------------------------------
// UpstreamRelay

struct UpstreamRelay::Impl {
  TierService& service;
  std::unique_ptr<SyncPeer> upstream;
  std::mutex mu;
  std::condition_variable_any cv;
  std::jthread worker;
};

UpstreamRelay::UpstreamRelay(TierService& service, std::unique_ptr<SyncPeer> upstream)
    : impl_(new Impl{service, std::move(upstream), {}, {}, {}}) {}

UpstreamRelay::~UpstreamRelay() { stop(); }

std::optional<SyncReport> UpstreamRelay::run_once() { return impl_->service.sync_upstream(*impl_->upstream); }

void UpstreamRelay::start(std::chrono::milliseconds interval) {
  impl_->worker = std::jthread([this, interval](std::stop_token stop) {
    while (!stop.stop_requested()) {
      run_once();
      std::unique_lock lock(impl_->mu);
      impl_->cv.wait_for(lock, stop, interval, [] { return false; });
    }
  });
}

void UpstreamRelay::stop() {
  if (impl_ && impl_->worker.joinable()) {
    impl_->worker.request_stop();
    impl_->worker.join();
  }
}

}  // namespace fieldsync
