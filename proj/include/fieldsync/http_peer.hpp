#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "fieldsync/field_model.hpp"
#include "fieldsync/sync_engine.hpp"

namespace fieldsync {

/// SyncPeer speaking the tier-service HTTP API. Connection failures raise
/// PeerUnreachable; 409 raises PayloadConflict; 422 rethrows the server's
/// validation error.
class HttpPeer : public SyncPeer {
 public:
  explicit HttpPeer(const std::string& base_url,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));
  ~HttpPeer() override;

  std::string store_id() override;
  Tier tier() override;
  PushAck push(std::span<const Record> batch) override;
  Delta pull(std::uint64_t after) override;
  bool put_blob(const std::string& hash, const std::string& bytes) override;

  std::optional<std::string> get_blob(const std::string& hash);
  std::optional<std::string> get_schema();

 private:
  void fetch_identity();

  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string base_url_;
  std::optional<std::string> store_id_;
  std::optional<Tier> tier_;
};

}  // namespace fieldsync
