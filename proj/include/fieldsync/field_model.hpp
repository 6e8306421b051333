#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fieldsync/error.hpp"
#include "fieldsync/timestamp.hpp"

namespace fieldsync {

enum class FieldKind { kNumeric, kText, kTime, kGps, kImage };

std::string_view to_string(FieldKind kind);
std::optional<FieldKind> parse_field_kind(std::string_view text);

struct NumericRange {
  double min = 0.0;
  double max = 0.0;

  bool contains(double v) const { return v >= min && v <= max; }
  friend bool operator==(const NumericRange&, const NumericRange&) = default;
};

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kText;
  std::optional<std::string> unit;
  bool required = false;
  std::optional<NumericRange> numeric_range;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

/// A named, versioned list of typed fields. Drives form generation on the
/// clients and record validation everywhere.
struct Schema {
  std::string schema_id;
  int version = 1;
  std::vector<FieldSpec> fields;

  const FieldSpec* find(std::string_view name) const;

  friend bool operator==(const Schema&, const Schema&) = default;
};

Schema parse_schema(std::string_view document);
std::string serialize_schema(const Schema& schema);
nlohmann::json schema_to_json(const Schema& schema);

/// Device-scoped record identity. Canonical text form is "device_id/counter".
class RecordId {
 public:
  RecordId() = default;
  RecordId(std::string device_id, std::uint64_t counter);

  const std::string& device_id() const { return device_id_; }
  std::uint64_t counter() const { return counter_; }
  std::string canonical() const;

  static RecordId parse(std::string_view text);
  static bool valid_device_id(std::string_view device_id);

  friend auto operator<=>(const RecordId&, const RecordId&) = default;
  friend bool operator==(const RecordId&, const RecordId&) = default;

 private:
  std::string device_id_;
  std::uint64_t counter_ = 0;
};

/// Returns RecordId(device_id, last_counter + 1); pass -1 for a device with
/// no records yet.
RecordId next_record_id(std::string_view device_id, std::int64_t last_counter);

enum class RecordSource { kManual, kSensor, kArchival };
std::string_view to_string(RecordSource source);
std::optional<RecordSource> parse_record_source(std::string_view text);

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Text, time (canonical RFC 3339) and image (sha-256 hex) values are all
// carried as strings; the schema says which one a field is.
using FieldValue = std::variant<double, std::string, GeoPoint>;

/// Unvalidated record as it arrives from a form, a CLI or the wire.
struct RecordDraft {
  RecordId id;
  std::string schema_id;
  int schema_version = 1;
  Timestamp timestamp{};
  double lat = 0.0;
  double lon = 0.0;
  std::string author;
  std::string team;
  RecordSource source = RecordSource::kManual;
  std::map<std::string, nlohmann::json> values;
  std::vector<std::string> image_refs;
};

class Record {
 public:
  const RecordId& id() const { return id_; }
  const std::string& schema_id() const { return schema_id_; }
  int schema_version() const { return schema_version_; }
  Timestamp timestamp() const { return timestamp_; }
  double lat() const { return lat_; }
  double lon() const { return lon_; }
  const std::string& author() const { return author_; }
  const std::string& team() const { return team_; }
  RecordSource source() const { return source_; }
  const std::map<std::string, FieldValue>& values() const { return values_; }
  const std::vector<std::string>& image_refs() const { return image_refs_; }

  const FieldValue* value(std::string_view field) const;
  std::optional<double> numeric(std::string_view field) const;

  friend bool operator==(const Record&, const Record&) = default;

 private:
  friend Record check_record(const RecordDraft& draft);
  friend Record validate_record(const Schema& schema, const RecordDraft& draft);

  Record() = default;

  RecordId id_;
  std::string schema_id_;
  int schema_version_ = 1;
  Timestamp timestamp_{};
  double lat_ = 0.0;
  double lon_ = 0.0;
  std::string author_;
  std::string team_;
  RecordSource source_ = RecordSource::kManual;
  std::map<std::string, FieldValue> values_;
  std::vector<std::string> image_refs_;
};

// Schema-free checks only: coordinates, finite numbers, well-formed image
// refs, JSON value shapes. Used by tiers that hold no schema.
Record check_record(const RecordDraft& draft);

// Full validation against `schema`. Time values are canonicalized to UTC.
Record validate_record(const Schema& schema, const RecordDraft& draft);

RecordDraft to_draft(const Record& record);

nlohmann::json record_to_json(const Record& record);
RecordDraft draft_from_json(const nlohmann::json& doc);
Record record_from_json(const nlohmann::json& doc);

// Bytes compared for payload conflicts and byte-level dumps.
std::string canonical_bytes(const Record& record);

bool is_sha256_hex(std::string_view text);

enum class FreshnessState : std::uint8_t { kUnsynced = 0, kEdgeCached = 1, kRemote = 2 };

std::string_view to_string(FreshnessState state);
std::optional<FreshnessState> parse_freshness(std::string_view text);

}  // namespace fieldsync
