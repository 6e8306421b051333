#include "fieldsync/field_model.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace fieldsync {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedDocument: return "MalformedDocument";
    case ErrorCode::kInvalidSchema: return "InvalidSchema";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kBadCoordinate: return "BadCoordinate";
    case ErrorCode::kInvalidDeviceId: return "InvalidDeviceId";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kPayloadConflict: return "PayloadConflict";
    case ErrorCode::kUnknownRecord: return "UnknownRecord";
    case ErrorCode::kPeerUnreachable: return "PeerUnreachable";
    case ErrorCode::kUnknownField: return "UnknownField";
    case ErrorCode::kNonNumericField: return "NonNumericField";
    case ErrorCode::kMissingValue: return "MissingValue";
    case ErrorCode::kDegenerate: return "Degenerate";
    case ErrorCode::kMalformedScenario: return "MalformedScenario";
    case ErrorCode::kInvalidInterval: return "InvalidInterval";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string error_message(ErrorCode code, const std::string& subject, const std::string& detail) {
  std::string msg(to_string(code));
  if (!subject.empty()) msg += " " + subject;
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Error::Error(ErrorCode code, std::string subject, const std::string& detail)
    : std::runtime_error(error_message(code, subject, detail)),
      code_(code),
      subject_(std::move(subject)) {}

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::kNumeric: return "numeric";
    case FieldKind::kText: return "text";
    case FieldKind::kTime: return "time";
    case FieldKind::kGps: return "gps";
    case FieldKind::kImage: return "image";
  }
  return "text";
}

std::optional<FieldKind> parse_field_kind(std::string_view text) {
  if (text == "numeric") return FieldKind::kNumeric;
  if (text == "text") return FieldKind::kText;
  if (text == "time") return FieldKind::kTime;
  if (text == "gps") return FieldKind::kGps;
  if (text == "image") return FieldKind::kImage;
  return std::nullopt;
}

std::string_view to_string(RecordSource source) {
  switch (source) {
    case RecordSource::kManual: return "manual";
    case RecordSource::kSensor: return "sensor";
    case RecordSource::kArchival: return "archival";
  }
  return "manual";
}

std::optional<RecordSource> parse_record_source(std::string_view text) {
  if (text == "manual") return RecordSource::kManual;
  if (text == "sensor") return RecordSource::kSensor;
  if (text == "archival") return RecordSource::kArchival;
  return std::nullopt;
}

std::string_view to_string(FreshnessState state) {
  switch (state) {
    case FreshnessState::kUnsynced: return "UNSYNCED";
    case FreshnessState::kEdgeCached: return "EDGE_CACHED";
    case FreshnessState::kRemote: return "REMOTE";
  }
  return "UNSYNCED";
}

std::optional<FreshnessState> parse_freshness(std::string_view text) {
  if (text == "UNSYNCED") return FreshnessState::kUnsynced;
  if (text == "EDGE_CACHED") return FreshnessState::kEdgeCached;
  if (text == "REMOTE") return FreshnessState::kRemote;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Schema

const FieldSpec* Schema::find(std::string_view name) const {
  for (const auto& f : fields) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

namespace {

const json& require_key(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kMalformedDocument, where.empty() ? key : where + "." + key, "missing");
  }
  return *it;
}

FieldSpec parse_field_spec(const json& f, std::size_t index) {
  if (!f.is_object()) {
    throw Error(ErrorCode::kMalformedDocument, "fields[" + std::to_string(index) + "]",
                "expected object");
  }
  const std::string where = "fields[" + std::to_string(index) + "]";
  const json& name = require_key(f, "name", where);
  if (!name.is_string()) throw Error(ErrorCode::kMalformedDocument, where + ".name", "expected string");

  FieldSpec spec;
  spec.name = name.get<std::string>();
  if (spec.name.empty()) throw Error(ErrorCode::kInvalidSchema, where, "empty field name");

  const json& kind = require_key(f, "kind", where);
  if (!kind.is_string()) throw Error(ErrorCode::kMalformedDocument, spec.name, "kind must be a string");
  auto parsed_kind = parse_field_kind(kind.get<std::string>());
  if (!parsed_kind) {
    throw Error(ErrorCode::kInvalidSchema, spec.name, "unknown kind \"" + kind.get<std::string>() + "\"");
  }
  spec.kind = *parsed_kind;

  const json& required = require_key(f, "required", where);
  if (!required.is_boolean()) throw Error(ErrorCode::kMalformedDocument, spec.name, "required must be a boolean");
  spec.required = required.get<bool>();

  if (auto it = f.find("unit"); it != f.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::kMalformedDocument, spec.name, "unit must be a string");
    spec.unit = it->get<std::string>();
  }

  if (auto it = f.find("numeric_range"); it != f.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
      throw Error(ErrorCode::kInvalidSchema, spec.name, "numeric_range must be [min, max]");
    }
    if (spec.kind != FieldKind::kNumeric) {
      throw Error(ErrorCode::kInvalidSchema, spec.name, "numeric_range on a non-numeric field");
    }
    NumericRange range{(*it)[0].get<double>(), (*it)[1].get<double>()};
    if (!std::isfinite(range.min) || !std::isfinite(range.max) || range.min > range.max) {
      throw Error(ErrorCode::kInvalidSchema, spec.name, "bad range");
    }
    spec.numeric_range = range;
  }
  return spec;
}

}  // namespace

Schema parse_schema(std::string_view document) {
  json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedDocument, "", "not valid JSON");
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedDocument, "", "expected an object");

  Schema schema;
  const json& id = require_key(doc, "schema_id", "");
  if (!id.is_string()) throw Error(ErrorCode::kMalformedDocument, "schema_id", "expected string");
  schema.schema_id = id.get<std::string>();

  const json& version = require_key(doc, "version", "");
  if (!version.is_number_integer()) throw Error(ErrorCode::kMalformedDocument, "version", "expected integer");
  if (version.get<long long>() < 1) throw Error(ErrorCode::kInvalidSchema, "version", "must be >= 1");
  schema.version = version.get<int>();

  const json& fields = require_key(doc, "fields", "");
  if (!fields.is_array()) throw Error(ErrorCode::kMalformedDocument, "fields", "expected array");
  if (fields.empty()) throw Error(ErrorCode::kInvalidSchema, "fields", "at least one field required");

  std::set<std::string> seen;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    FieldSpec spec = parse_field_spec(fields[i], i);
    if (!seen.insert(spec.name).second) {
      throw Error(ErrorCode::kInvalidSchema, spec.name, "duplicate field name");
    }
    schema.fields.push_back(std::move(spec));
  }
  return schema;
}

json schema_to_json(const Schema& schema) {
  json fields = json::array();
  for (const auto& f : schema.fields) {
    json j = {{"name", f.name}, {"kind", std::string(to_string(f.kind))}, {"required", f.required}};
    if (f.unit) j["unit"] = *f.unit;
    if (f.numeric_range) j["numeric_range"] = {f.numeric_range->min, f.numeric_range->max};
    fields.push_back(std::move(j));
  }
  return {{"schema_id", schema.schema_id}, {"version", schema.version}, {"fields", std::move(fields)}};
}

std::string serialize_schema(const Schema& schema) { return schema_to_json(schema).dump(); }

// ---------------------------------------------------------------------------
// RecordId

RecordId::RecordId(std::string device_id, std::uint64_t counter)
    : device_id_(std::move(device_id)), counter_(counter) {
  if (!valid_device_id(device_id_)) throw Error(ErrorCode::kInvalidDeviceId, device_id_);
}

bool RecordId::valid_device_id(std::string_view device_id) {
  return !device_id.empty() && device_id.find('/') == std::string_view::npos;
}

std::string RecordId::canonical() const { return device_id_ + "/" + std::to_string(counter_); }

RecordId RecordId::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 == text.size()) {
    throw Error(ErrorCode::kMalformedDocument, std::string(text), "record id must be device_id/counter");
  }
  std::uint64_t counter = 0;
  for (char c : text.substr(slash + 1)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw Error(ErrorCode::kMalformedDocument, std::string(text), "counter must be a non-negative integer");
    }
    counter = counter * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return RecordId(std::string(text.substr(0, slash)), counter);
}

RecordId next_record_id(std::string_view device_id, std::int64_t last_counter) {
  if (!RecordId::valid_device_id(device_id)) throw Error(ErrorCode::kInvalidDeviceId, std::string(device_id));
  if (last_counter < -1) {
    throw Error(ErrorCode::kOutOfRange, "last_counter", "must be >= -1");
  }
  return RecordId(std::string(device_id), static_cast<std::uint64_t>(last_counter + 1));
}

// ---------------------------------------------------------------------------
// Record

bool is_sha256_hex(std::string_view text) {
  if (text.size() != 64) return false;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

const FieldValue* Record::value(std::string_view field) const {
  auto it = values_.find(std::string(field));
  return it == values_.end() ? nullptr : &it->second;
}

std::optional<double> Record::numeric(std::string_view field) const {
  const FieldValue* v = value(field);
  if (v == nullptr) return std::nullopt;
  if (const double* d = std::get_if<double>(v)) return *d;
  return std::nullopt;
}

namespace {

void check_coordinate(double lat, double lon, const std::string& prefix) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
    throw Error(ErrorCode::kBadCoordinate, prefix + "lat", format_number(lat) + " not in [-90, 90]");
  }
  if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) {
    throw Error(ErrorCode::kBadCoordinate, prefix + "lon", format_number(lon) + " not in [-180, 180]");
  }
}

std::optional<GeoPoint> geo_from_json(const json& v) {
  if (!v.is_object()) return std::nullopt;
  auto lat = v.find("lat");
  auto lon = v.find("lon");
  if (lat == v.end() || lon == v.end() || !lat->is_number() || !lon->is_number() || v.size() != 2) {
    return std::nullopt;
  }
  return GeoPoint{lat->get<double>(), lon->get<double>()};
}

// Shape-only conversion used when no schema is available.
FieldValue infer_value(const std::string& name, const json& v) {
  if (v.is_number()) {
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorCode::kTypeMismatch, name, "numeric value must be finite");
    return d;
  }
  if (v.is_string()) return v.get<std::string>();
  if (auto geo = geo_from_json(v)) {
    check_coordinate(geo->lat, geo->lon, name + ".");
    return *geo;
  }
  throw Error(ErrorCode::kTypeMismatch, name, "unsupported value shape");
}

FieldValue typed_value(const FieldSpec& spec, const json& v) {
  const std::string expected = "expected " + std::string(to_string(spec.kind));
  switch (spec.kind) {
    case FieldKind::kNumeric: {
      if (!v.is_number()) throw Error(ErrorCode::kTypeMismatch, spec.name, expected);
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw Error(ErrorCode::kTypeMismatch, spec.name, "numeric value must be finite");
      if (spec.numeric_range && !spec.numeric_range->contains(d)) {
        throw Error(ErrorCode::kOutOfRange, spec.name,
                    format_number(d) + " not in [" + format_number(spec.numeric_range->min) + ", " +
                        format_number(spec.numeric_range->max) + "]");
      }
      return d;
    }
    case FieldKind::kText:
      if (!v.is_string()) throw Error(ErrorCode::kTypeMismatch, spec.name, expected);
      return v.get<std::string>();
    case FieldKind::kTime: {
      if (!v.is_string()) throw Error(ErrorCode::kTypeMismatch, spec.name, expected);
      auto ts = parse_rfc3339(v.get<std::string>());
      if (!ts) throw Error(ErrorCode::kTypeMismatch, spec.name, expected + " (RFC 3339)");
      return format_rfc3339(*ts);
    }
    case FieldKind::kGps: {
      auto geo = geo_from_json(v);
      if (!geo) throw Error(ErrorCode::kTypeMismatch, spec.name, expected + " ({lat, lon})");
      check_coordinate(geo->lat, geo->lon, spec.name + ".");
      return *geo;
    }
    case FieldKind::kImage:
      if (!v.is_string() || !is_sha256_hex(v.get<std::string>())) {
        throw Error(ErrorCode::kTypeMismatch, spec.name, expected + " (sha-256 hex)");
      }
      return v.get<std::string>();
  }
  throw Error(ErrorCode::kTypeMismatch, spec.name, expected);
}

}  // namespace

Record check_record(const RecordDraft& draft) {
  if (!RecordId::valid_device_id(draft.id.device_id())) {
    throw Error(ErrorCode::kInvalidDeviceId, draft.id.device_id());
  }
  check_coordinate(draft.lat, draft.lon, "");
  for (const auto& ref : draft.image_refs) {
    if (!is_sha256_hex(ref)) throw Error(ErrorCode::kMalformedDocument, "image_refs", "bad hash \"" + ref + "\"");
  }
  Record r;
  r.id_ = draft.id;
  r.schema_id_ = draft.schema_id;
  r.schema_version_ = draft.schema_version;
  r.timestamp_ = draft.timestamp;
  r.lat_ = draft.lat;
  r.lon_ = draft.lon;
  r.author_ = draft.author;
  r.team_ = draft.team;
  r.source_ = draft.source;
  r.image_refs_ = draft.image_refs;
  for (const auto& [name, v] : draft.values) r.values_.emplace(name, infer_value(name, v));
  return r;
}

Record validate_record(const Schema& schema, const RecordDraft& draft) {
  if (draft.schema_id != schema.schema_id || draft.schema_version != schema.version) {
    throw Error(ErrorCode::kSchemaMismatch, draft.schema_id,
                "record targets " + draft.schema_id + " v" + std::to_string(draft.schema_version) +
                    ", schema is " + schema.schema_id + " v" + std::to_string(schema.version));
  }
  for (const auto& [name, v] : draft.values) {
    if (schema.find(name) == nullptr) throw Error(ErrorCode::kUnknownField, name, "not in schema");
  }
  Record r = check_record(draft);
  r.values_.clear();
  for (const auto& spec : schema.fields) {
    auto it = draft.values.find(spec.name);
    if (it == draft.values.end() || it->second.is_null()) {
      if (spec.required) throw Error(ErrorCode::kMissingField, spec.name);
      continue;
    }
    r.values_.emplace(spec.name, typed_value(spec, it->second));
  }
  return r;
}

namespace {

json value_to_json(const FieldValue& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, GeoPoint>) {
          return {{"lat", x.lat}, {"lon", x.lon}};
        } else {
          return x;
        }
      },
      v);
}

}  // namespace

RecordDraft to_draft(const Record& record) {
  RecordDraft d;
  d.id = record.id();
  d.schema_id = record.schema_id();
  d.schema_version = record.schema_version();
  d.timestamp = record.timestamp();
  d.lat = record.lat();
  d.lon = record.lon();
  d.author = record.author();
  d.team = record.team();
  d.source = record.source();
  for (const auto& [name, v] : record.values()) d.values.emplace(name, value_to_json(v));
  d.image_refs = record.image_refs();
  return d;
}

json record_to_json(const Record& record) {
  json values = json::object();
  for (const auto& [name, v] : record.values()) values[name] = value_to_json(v);
  return {{"id", record.id().canonical()},
          {"schema_id", record.schema_id()},
          {"schema_version", record.schema_version()},
          {"ts", format_rfc3339(record.timestamp())},
          {"lat", record.lat()},
          {"lon", record.lon()},
          {"author", record.author()},
          {"team", record.team()},
          {"source", std::string(to_string(record.source()))},
          {"values", std::move(values)},
          {"image_refs", record.image_refs()}};
}

RecordDraft draft_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedDocument, "record", "expected object");
  auto str = [&](const char* key) {
    const json& v = require_key(doc, key, "");
    if (!v.is_string()) throw Error(ErrorCode::kMalformedDocument, key, "expected string");
    return v.get<std::string>();
  };
  auto num = [&](const char* key) {
    const json& v = require_key(doc, key, "");
    if (!v.is_number()) throw Error(ErrorCode::kMalformedDocument, key, "expected number");
    return v.get<double>();
  };

  RecordDraft d;
  d.id = RecordId::parse(str("id"));
  d.schema_id = str("schema_id");
  const json& version = require_key(doc, "schema_version", "");
  if (!version.is_number_integer()) throw Error(ErrorCode::kMalformedDocument, "schema_version", "expected integer");
  d.schema_version = version.get<int>();
  auto ts = parse_rfc3339(str("ts"));
  if (!ts) throw Error(ErrorCode::kMalformedDocument, "ts", "expected RFC 3339 timestamp");
  d.timestamp = *ts;
  d.lat = num("lat");
  d.lon = num("lon");
  d.author = str("author");
  d.team = str("team");
  auto source = parse_record_source(str("source"));
  if (!source) throw Error(ErrorCode::kMalformedDocument, "source", "expected manual|sensor|archival");
  d.source = *source;

  const json& values = require_key(doc, "values", "");
  if (!values.is_object()) throw Error(ErrorCode::kMalformedDocument, "values", "expected object");
  for (const auto& [k, v] : values.items()) d.values.emplace(k, v);

  if (auto it = doc.find("image_refs"); it != doc.end()) {
    if (!it->is_array()) throw Error(ErrorCode::kMalformedDocument, "image_refs", "expected array");
    for (const auto& ref : *it) {
      if (!ref.is_string()) throw Error(ErrorCode::kMalformedDocument, "image_refs", "expected strings");
      d.image_refs.push_back(ref.get<std::string>());
    }
  }
  return d;
}

Record record_from_json(const json& doc) { return check_record(draft_from_json(doc)); }

std::string canonical_bytes(const Record& record) { return record_to_json(record).dump(); }

}  // namespace fieldsync
