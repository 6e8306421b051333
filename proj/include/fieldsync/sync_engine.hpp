#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fieldsync/field_model.hpp"

namespace fieldsync {

enum class Tier { kDevice, kEdge, kCloud };

std::string_view to_string(Tier tier);
std::optional<Tier> parse_tier(std::string_view text);

// Freshness a record has on a replica of `tier` purely by being held there.
FreshnessState implied_state(Tier tier);

/// Append-only record set with a store-local insertion sequence. Sequence
/// numbers start at 1 and are dense; a RecordId maps to one payload forever.
class TierStore {
 public:
  TierStore(Tier tier, std::string store_id);

  Tier tier() const { return tier_; }
  const std::string& store_id() const { return store_id_; }

  std::size_t size() const { return log_.size(); }
  std::uint64_t next_seq() const { return log_.size() + 1; }
  std::uint64_t max_seq() const { return log_.size(); }

  bool contains(const RecordId& id) const { return seq_.count(id) != 0; }
  const Record* find(const RecordId& id) const;
  std::optional<std::uint64_t> seq_of(const RecordId& id) const;

  // Records in insertion order; element i carries seq i + 1.
  std::span<const Record> records() const { return log_; }
  std::set<RecordId> ids() const;

  // Throws PayloadConflict when `record.id()` is held with another payload.
  // Returns true when the record was new.
  bool add(const Record& record);

  // Throws PayloadConflict if `record` would conflict, without mutating.
  void check_compatible(const Record& record) const;

 private:
  Tier tier_;
  std::string store_id_;
  std::vector<Record> log_;
  std::map<RecordId, std::uint64_t> seq_;
};

struct SyncCursor {
  std::string peer_store_id;
  std::uint64_t last_seq_seen = 0;
};

struct Delta {
  std::vector<Record> records;
  std::uint64_t cursor = 0;
};

/// Per-viewer freshness of every record the replica knows. States only rise.
class FreshnessLedger {
 public:
  std::optional<FreshnessState> state(const RecordId& id) const;

  // Sets the state when absent or lower; returns true when it changed.
  bool raise(const RecordId& id, FreshnessState state);

  bool contains(const RecordId& id) const { return entries_.count(id) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<RecordId, FreshnessState>& entries() const { return entries_; }

 private:
  std::map<RecordId, FreshnessState> entries_;
};

enum class ColorClass { kRed, kGreen, kBlue };
std::string_view to_string(ColorClass color);
char color_letter(ColorClass color);

// Throws UnknownRecord when `id` has no ledger entry.
ColorClass classify_freshness(const FreshnessLedger& ledger, const RecordId& id);

// Local insert; no-op for an identical payload already present. Device-tier
// inserts start UNSYNCED. Returns true when the record was new.
bool insert_local(TierStore& store, FreshnessLedger& ledger, const Record& record);

Delta delta_since(const TierStore& store, const SyncCursor& cursor);

// Set union. The batch is checked for conflicts before any mutation, so a
// PayloadConflict leaves the store untouched.
std::vector<RecordId> merge(TierStore& store, std::span<const Record> batch);

// Durable side of a replica; called with newly added records before they
// become visible in memory.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void append(std::span<const Record> records) = 0;
};

struct PeerCursors {
  std::uint64_t pushed_through = 0;  // local seq already delivered to the peer
  std::uint64_t pulled_through = 0;  // peer seq already received
};

/// One tier's replication state: its store, its own freshness view and the
/// cursors it keeps for each peer it talks to.
struct Replica {
  Replica(Tier tier, std::string store_id) : store(tier, std::move(store_id)) {}

  TierStore store;
  FreshnessLedger ledger;
  std::map<std::string, PeerCursors> cursors;
  RecordSink* sink = nullptr;
};

// Merges `batch` into the replica (through its sink) and records arrivals in
// its ledger at `arrival_state` or the tier's implied state, whichever is
// higher. Returns the ids that were new.
std::vector<RecordId> absorb(Replica& replica, std::span<const Record> batch,
                             FreshnessState arrival_state);

struct PushAck {
  std::vector<RecordId> accepted_ids;
  std::vector<RecordId> known_ids;
};

/// The far side of a sync session, in-process or over HTTP.
class SyncPeer {
 public:
  virtual ~SyncPeer() = default;
  virtual std::string store_id() = 0;
  virtual Tier tier() = 0;
  virtual PushAck push(std::span<const Record> batch) = 0;
  virtual Delta pull(std::uint64_t after) = 0;

  // Blob transfer is optional; peers without a blob store accept nothing.
  virtual bool put_blob(const std::string& /*hash*/, const std::string& /*bytes*/) { return false; }
};

/// In-process peer around another replica. Shares the replica's mutex when
/// one is given.
class LocalPeer : public SyncPeer {
 public:
  explicit LocalPeer(Replica& replica, std::shared_mutex* guard = nullptr)
      : replica_(replica), guard_(guard) {}

  std::string store_id() override { return replica_.store.store_id(); }
  Tier tier() override { return replica_.store.tier(); }
  PushAck push(std::span<const Record> batch) override;
  Delta pull(std::uint64_t after) override;

 private:
  Replica& replica_;
  std::shared_mutex* guard_;
};

// Applies a pushed batch on the receiving replica: merge plus ack lists.
// Duplicates land in known_ids; both lists count as acknowledgment.
PushAck accept_push(Replica& receiver, std::span<const Record> batch);

struct SyncReport {
  std::string peer;
  std::size_t pushed = 0;
  std::size_t pulled = 0;
  std::vector<RecordId> pushed_ids;
  std::vector<RecordId> pulled_ids;
  std::vector<std::pair<RecordId, FreshnessState>> promoted;
  std::vector<std::pair<RecordId, FreshnessState>> arrived;
  std::int64_t duration_ticks = 0;
};

// Push local delta, then pull and merge the peer's delta, promoting every
// acknowledged record to the peer tier's implied state. `guard`, when given,
// is held exclusively around each local leg and released across peer calls.
// Throws PeerUnreachable before any change if the peer cannot be contacted.
SyncReport sync_session(Replica& local, SyncPeer& peer, std::shared_mutex* guard = nullptr);

}  // namespace fieldsync
