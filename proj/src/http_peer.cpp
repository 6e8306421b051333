#include "fieldsync/http_peer.hpp"

#include <httplib.h>

namespace fieldsync {

using nlohmann::json;

struct HttpPeer::Impl {
  explicit Impl(const std::string& url) : client(url) {}
  httplib::Client client;
};

HttpPeer::HttpPeer(const std::string& base_url, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(base_url)), base_url_(base_url) {
  if (!impl_->client.is_valid()) throw Error(ErrorCode::kConfigError, base_url, "unsupported peer URL");
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  impl_->client.set_connection_timeout(secs, usecs);
  impl_->client.set_read_timeout(secs, usecs);
  impl_->client.set_write_timeout(secs, usecs);
}

HttpPeer::~HttpPeer() = default;

namespace {

[[noreturn]] void unreachable(const std::string& url, const httplib::Result& res) {
  throw Error(ErrorCode::kPeerUnreachable, url, httplib::to_string(res.error()));
}

json parse_body(const std::string& url, const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedDocument, url, "peer returned invalid JSON");
  return doc;
}

ErrorCode code_from_name(std::string_view name) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::kIoError); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::kMalformedDocument;
}

[[noreturn]] void rethrow_server_error(const std::string& url, const httplib::Result& res) {
  json doc = json::parse(res->body, nullptr, false);
  if (doc.is_object() && doc.contains("error")) {
    const ErrorCode code = code_from_name(doc.value("error", ""));
    std::string subject = code == ErrorCode::kPayloadConflict ? doc.value("id", "") : doc.value("field", "");
    throw Error(code, subject, "rejected by " + url);
  }
  throw Error(ErrorCode::kMalformedDocument, url, "HTTP " + std::to_string(res->status));
}

// Shape errors in a peer document surface as MalformedDocument.
template <typename F>
auto decoding(const std::string& url, F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedDocument, url, e.what());
  }
}

}  // namespace

void HttpPeer::fetch_identity() {
  if (store_id_ && tier_) return;
  auto res = impl_->client.Get("/healthz");
  if (!res) unreachable(base_url_, res);
  if (res->status != 200) throw Error(ErrorCode::kPeerUnreachable, base_url_, "healthz returned " + std::to_string(res->status));
  json doc = parse_body(base_url_, res->body);
  auto tier = parse_tier(doc.value("tier", ""));
  if (!tier || !doc.contains("store_id")) throw Error(ErrorCode::kMalformedDocument, base_url_, "bad healthz document");
  tier_ = *tier;
  store_id_ = decoding(base_url_, [&] { return doc.at("store_id").get<std::string>(); });
}

std::string HttpPeer::store_id() {
  fetch_identity();
  return *store_id_;
}

Tier HttpPeer::tier() {
  fetch_identity();
  return *tier_;
}

PushAck HttpPeer::push(std::span<const Record> batch) {
  json records = json::array();
  for (const Record& r : batch) records.push_back(record_to_json(r));
  auto res = impl_->client.Post("/records", json{{"records", std::move(records)}}.dump(), "application/json");
  if (!res) unreachable(base_url_, res);
  if (res->status != 200) rethrow_server_error(base_url_, res);
  json doc = parse_body(base_url_, res->body);
  return decoding(base_url_, [&] {
    PushAck ack;
    for (const auto& id : doc.at("accepted_ids")) ack.accepted_ids.push_back(RecordId::parse(id.get<std::string>()));
    for (const auto& id : doc.at("known_ids")) ack.known_ids.push_back(RecordId::parse(id.get<std::string>()));
    return ack;
  });
}

Delta HttpPeer::pull(std::uint64_t after) {
  auto res = impl_->client.Get("/records?after=" + std::to_string(after));
  if (!res) unreachable(base_url_, res);
  if (res->status != 200) rethrow_server_error(base_url_, res);
  json doc = parse_body(base_url_, res->body);
  return decoding(base_url_, [&] {
    Delta delta;
    delta.cursor = doc.at("cursor").get<std::uint64_t>();
    for (const auto& r : doc.at("records")) delta.records.push_back(record_from_json(r));
    return delta;
  });
}

bool HttpPeer::put_blob(const std::string& hash, const std::string& bytes) {
  auto res = impl_->client.Put("/blobs/" + hash, bytes, "application/octet-stream");
  if (!res) unreachable(base_url_, res);
  if (res->status != 200) rethrow_server_error(base_url_, res);
  return true;
}

std::optional<std::string> HttpPeer::get_blob(const std::string& hash) {
  auto res = impl_->client.Get("/blobs/" + hash);
  if (!res) unreachable(base_url_, res);
  if (res->status == 404) return std::nullopt;
  if (res->status != 200) rethrow_server_error(base_url_, res);
  return res->body;
}

std::optional<std::string> HttpPeer::get_schema() {
  auto res = impl_->client.Get("/schema");
  if (!res) unreachable(base_url_, res);
  if (res->status == 404) return std::nullopt;
  if (res->status != 200) rethrow_server_error(base_url_, res);
  return res->body;
}

}  // namespace fieldsync
