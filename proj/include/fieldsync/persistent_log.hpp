#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fieldsync/sync_engine.hpp"

namespace fieldsync {

// Raised by the crash-injection hook after the byte budget is exhausted.
struct SimulatedCrash : std::runtime_error {
  SimulatedCrash() : std::runtime_error("simulated crash") {}
};

/// Append-only record log. Each entry is
///   u32 payload length (LE) | u32 crc32 of payload (LE) | payload
/// where payload is the record's canonical JSON. A side index file holds one
/// "seq<TAB>id" line per entry and is rebuilt from the log on open.
class PersistentLog : public RecordSink {
 public:
  struct Recovery {
    std::vector<Record> records;
    std::uint64_t valid_bytes = 0;
    std::uint64_t truncated_bytes = 0;
  };

  // Replays `dir`/records.log, truncating any torn tail, and opens it for
  // appending. Creates the directory if needed.
  explicit PersistentLog(std::filesystem::path dir, bool fsync_writes = false);
  ~PersistentLog() override;

  PersistentLog(const PersistentLog&) = delete;
  PersistentLog& operator=(const PersistentLog&) = delete;

  const Recovery& recovery() const { return recovery_; }
  std::uint64_t size_bytes() const { return size_bytes_; }
  std::uint64_t entries() const { return entries_; }

  void append(std::span<const Record> records) override;

  // Test hook: allow only `bytes` more bytes to reach the log file, then
  // throw SimulatedCrash from the append that crosses the budget.
  void crash_after(std::uint64_t bytes) { crash_budget_ = bytes; }

  static std::filesystem::path log_path(const std::filesystem::path& dir) { return dir / "records.log"; }
  static std::filesystem::path index_path(const std::filesystem::path& dir) { return dir / "records.idx"; }

  // Encodes one entry; exposed for tests that build logs by hand.
  static std::string encode_entry(const Record& record);

 private:
  void write_all(const std::string& bytes);

  std::filesystem::path dir_;
  bool fsync_writes_;
  int fd_ = -1;
  int index_fd_ = -1;
  std::uint64_t size_bytes_ = 0;
  std::uint64_t entries_ = 0;
  std::optional<std::uint64_t> crash_budget_;
  Recovery recovery_;
};

// Writes `bytes` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::optional<std::string> read_file(const std::filesystem::path& path);

/// A replica whose store lives in a PersistentLog and whose ledger, cursors
/// and identity live in small JSON files beside it.
class DurableReplica {
 public:
  // `store_id` is used the first time the directory is initialised; later
  // opens keep the persisted id.
  DurableReplica(std::filesystem::path dir, Tier tier, const std::string& store_id,
                 bool fsync_writes = false);

  Replica& replica() { return replica_; }
  const Replica& replica() const { return replica_; }
  PersistentLog& log() { return log_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Persists ledger and cursors.
  void save_meta() const;

 private:
  std::filesystem::path dir_;
  PersistentLog log_;
  Replica replica_;
};

std::string random_store_id(std::string_view prefix);

}  // namespace fieldsync
