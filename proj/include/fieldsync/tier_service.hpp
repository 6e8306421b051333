#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "fieldsync/blob_store.hpp"
#include "fieldsync/persistent_log.hpp"
#include "fieldsync/sync_engine.hpp"

namespace fieldsync {

struct ServiceConfig {
  Tier tier = Tier::kCloud;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir;
  std::optional<std::string> upstream;
  std::chrono::milliseconds upstream_sync_interval{5000};
  std::optional<std::filesystem::path> schema_path;
  bool fsync_writes = false;

  // Throws ConfigError: edge without upstream, cloud with one, device tier,
  // empty data_dir.
  void validate() const;
};

// Reads the JSON config document. Keys: tier, bind ("host:port"), data_dir,
// upstream, upstream_sync_interval_s, schema, fsync. FIELDSYNC_DATA_DIR in
// the environment overrides data_dir.
ServiceConfig parse_service_config(std::string_view document);

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// {"records":[...],"cursor":N}
std::string delta_document(const Delta& delta);
// {"accepted_ids":[...],"known_ids":[...]}
std::string ack_document(const PushAck& ack);

/// Transport-independent edge/cloud service: every HTTP endpoint is a method
/// here so it can be exercised without a socket.
class TierService {
 public:
  explicit TierService(ServiceConfig config);

  const ServiceConfig& config() const { return config_; }

  HttpResponse get_schema() const;
  HttpResponse post_records(std::string_view body);
  // `after` is the raw query parameter; absent means 0.
  HttpResponse get_records(std::optional<std::string_view> after) const;
  HttpResponse put_blob(std::string_view hash, std::string_view bytes);
  HttpResponse get_blob(std::string_view hash) const;
  HttpResponse healthz() const;

  // One upstream session plus blob relay; never throws. Returns the report
  // on success.
  std::optional<SyncReport> sync_upstream(SyncPeer& upstream);

  // Snapshot accessors for tests and tooling.
  std::size_t record_count() const;
  Delta dump() const;
  std::optional<FreshnessState> freshness(const RecordId& id) const;

  // Test hook: the log write that crosses `bytes` more bytes fails as if the
  // process died mid-write. The service must be discarded afterwards.
  void crash_after(std::uint64_t bytes);

 private:
  ServiceConfig config_;
  std::optional<std::string> schema_document_;
  std::optional<Schema> schema_;
  DurableReplica durable_;
  BlobStore blobs_;
  mutable std::shared_mutex guard_;

  std::mutex upstream_mu_;
  std::set<std::string> uploaded_blobs_;
  mutable std::mutex health_mu_;
  std::optional<std::string> last_upstream_sync_;
  std::optional<std::string> last_upstream_error_;
};

/// HTTP/1.1 front end for a TierService.
class TierServer {
 public:
  explicit TierServer(TierService& service);
  ~TierServer();

  // Binds host:port (port 0 picks a free port). Returns the bound port or
  // throws IoError.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  void run();
  // Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Periodic edge -> cloud relay. Each interval runs one sync session against
/// the upstream peer; failures are recorded in /healthz and retried.
class UpstreamRelay {
 public:
  UpstreamRelay(TierService& service, std::unique_ptr<SyncPeer> upstream);
  ~UpstreamRelay();

  std::optional<SyncReport> run_once();
  void start(std::chrono::milliseconds interval);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fieldsync
