#include "fieldsync/blob_store.hpp"

#include <openssl/evp.h>

#include <memory>

#include "fieldsync/persistent_log.hpp"

namespace fieldsync {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(ErrorCode::kIoError, "sha256", "digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

BlobStore::BlobStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIoError, dir_.string(), ec.message());
}

fs::path BlobStore::path_for(std::string_view hash) const { return dir_ / std::string(hash); }

bool BlobStore::contains(std::string_view hash) const {
  return is_sha256_hex(hash) && fs::exists(path_for(hash));
}

bool BlobStore::put(std::string_view hash, std::string_view bytes) {
  if (!is_sha256_hex(hash)) throw Error(ErrorCode::kMalformedDocument, std::string(hash), "not a sha-256 hex digest");
  const std::string actual = sha256_hex(bytes);
  if (actual != hash) {
    throw Error(ErrorCode::kMalformedDocument, std::string(hash), "content digests to " + actual);
  }
  if (contains(hash)) return false;
  write_file_atomic(path_for(hash), std::string(bytes));
  return true;
}

std::optional<std::string> BlobStore::get(std::string_view hash) const {
  if (!is_sha256_hex(hash)) return std::nullopt;
  return read_file(path_for(hash));
}

std::string BlobStore::stage(std::string_view bytes) {
  std::string hash = sha256_hex(bytes);
  put(hash, bytes);
  return hash;
}

std::size_t relay_blobs(const Replica& replica, const BlobStore& blobs, SyncPeer& peer,
                        std::set<std::string>& uploaded) {
  std::size_t sent = 0;
  for (const Record& r : replica.store.records()) {
    // Image fields carry their digest as a string value; any value that looks
    // like a digest and is held locally is worth sending.
    std::vector<std::string> refs = r.image_refs();
    for (const auto& [name, v] : r.values()) {
      if (const auto* s = std::get_if<std::string>(&v); s != nullptr && is_sha256_hex(*s)) refs.push_back(*s);
    }
    for (const std::string& hash : refs) {
      if (uploaded.count(hash) != 0) continue;
      auto bytes = blobs.get(hash);
      if (!bytes) continue;
      try {
        if (!peer.put_blob(hash, *bytes)) continue;
      } catch (const Error&) {
        return sent;
      }
      uploaded.insert(hash);
      ++sent;
    }
  }
  return sent;
}

}  // namespace fieldsync
