#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "fieldsync/sync_engine.hpp"

namespace fieldsync {

// Lowercase hex SHA-256, 64 characters.
std::string sha256_hex(std::string_view bytes);

/// Content-addressed blob directory: one file per digest.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path dir);

  // Throws MalformedDocument when `hash` is not a digest or does not match
  // the bytes. Returns true when the blob was new.
  bool put(std::string_view hash, std::string_view bytes);
  std::optional<std::string> get(std::string_view hash) const;
  bool contains(std::string_view hash) const;

  // Hashes `bytes`, stores them, returns the digest.
  std::string stage(std::string_view bytes);

 private:
  std::filesystem::path path_for(std::string_view hash) const;
  std::filesystem::path dir_;
};

// Sends every blob referenced by `replica` records that `blobs` holds and
// that is not yet in `uploaded`. Failures are left for the next call.
// Returns the number of blobs sent.
std::size_t relay_blobs(const Replica& replica, const BlobStore& blobs, SyncPeer& peer,
                        std::set<std::string>& uploaded);

}  // namespace fieldsync
