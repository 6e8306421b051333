#pragma once

#include <stdlib.h>

#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldsync/field_model.hpp"
#include "fieldsync/geo_analytics.hpp"
#include "fieldsync/tier_service.hpp"

namespace testing {

using namespace fieldsync;

inline constexpr const char* kScorchSchemaDoc = R"({
  "schema_id": "scorch-survey",
  "version": 1,
  "fields": [
    {"name": "scorch", "kind": "numeric", "unit": "percent", "required": true, "numeric_range": [0, 100]},
    {"name": "note", "kind": "text", "required": false},
    {"name": "site_photo", "kind": "image", "required": false}
  ]
})";

inline const Schema& scorch_schema() {
  static const Schema schema = parse_schema(kScorchSchemaDoc);
  return schema;
}

inline Timestamp at_seconds(std::int64_t s) {
  return *parse_rfc3339("2024-06-01T08:00:00Z") + std::chrono::seconds(s);
}

inline RecordDraft scorch_draft(const std::string& device, std::uint64_t counter, double scorch,
                                double lat = 40.0, double lon = -105.0, std::int64_t second = 0) {
  RecordDraft d;
  d.id = RecordId(device, counter);
  d.schema_id = "scorch-survey";
  d.schema_version = 1;
  d.timestamp = at_seconds(second);
  d.lat = lat;
  d.lon = lon;
  d.author = device;
  d.team = "teamA";
  d.values["scorch"] = scorch;
  return d;
}

inline Record scorch_record(const std::string& device, std::uint64_t counter, double scorch,
                            double lat = 40.0, double lon = -105.0, std::int64_t second = 0) {
  return validate_record(scorch_schema(), scorch_draft(device, counter, scorch, lat, lon, second));
}

// Record placed at grid-local meters (x, y).
inline Record record_at(const geo::GridSpec& grid, const std::string& device, std::uint64_t counter,
                        double x, double y, double scorch = 50.0, std::int64_t second = 0) {
  const GeoPoint p = geo::local_unproject({x, y}, grid);
  return scorch_record(device, counter, scorch, p.lat, p.lon, second);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "fieldsync-test-XXXXXX").string();
    path_ = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// A running service on an ephemeral local port.
struct LiveService {
  explicit LiveService(ServiceConfig config) : service(std::move(config)), server(service) {
    port = server.bind("127.0.0.1", 0);
    server.start();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  TierService service;
  TierServer server;
  int port = 0;
};

}  // namespace testing
