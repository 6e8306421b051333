#include "fieldsync/sync_engine.hpp"

#include <algorithm>
#include <mutex>

namespace fieldsync {

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::kDevice: return "device";
    case Tier::kEdge: return "edge";
    case Tier::kCloud: return "cloud";
  }
  return "device";
}

std::optional<Tier> parse_tier(std::string_view text) {
  if (text == "device") return Tier::kDevice;
  if (text == "edge") return Tier::kEdge;
  if (text == "cloud") return Tier::kCloud;
  return std::nullopt;
}

FreshnessState implied_state(Tier tier) {
  switch (tier) {
    case Tier::kDevice: return FreshnessState::kUnsynced;
    case Tier::kEdge: return FreshnessState::kEdgeCached;
    case Tier::kCloud: return FreshnessState::kRemote;
  }
  return FreshnessState::kUnsynced;
}

// ---------------------------------------------------------------------------
// TierStore

TierStore::TierStore(Tier tier, std::string store_id) : tier_(tier), store_id_(std::move(store_id)) {}

const Record* TierStore::find(const RecordId& id) const {
  auto it = seq_.find(id);
  return it == seq_.end() ? nullptr : &log_[it->second - 1];
}

std::optional<std::uint64_t> TierStore::seq_of(const RecordId& id) const {
  auto it = seq_.find(id);
  if (it == seq_.end()) return std::nullopt;
  return it->second;
}

std::set<RecordId> TierStore::ids() const {
  std::set<RecordId> out;
  for (const auto& [id, seq] : seq_) out.insert(id);
  return out;
}

void TierStore::check_compatible(const Record& record) const {
  const Record* held = find(record.id());
  if (held != nullptr && !(*held == record)) {
    throw Error(ErrorCode::kPayloadConflict, record.id().canonical(), "same id, different payload");
  }
}

bool TierStore::add(const Record& record) {
  check_compatible(record);
  if (contains(record.id())) return false;
  log_.push_back(record);
  seq_.emplace(record.id(), log_.size());
  return true;
}

// ---------------------------------------------------------------------------
// Ledger

std::optional<FreshnessState> FreshnessLedger::state(const RecordId& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool FreshnessLedger::raise(const RecordId& id, FreshnessState state) {
  auto [it, inserted] = entries_.try_emplace(id, state);
  if (inserted) return true;
  if (it->second < state) {
    it->second = state;
    return true;
  }
  return false;
}

std::string_view to_string(ColorClass color) {
  switch (color) {
    case ColorClass::kRed: return "red";
    case ColorClass::kGreen: return "green";
    case ColorClass::kBlue: return "blue";
  }
  return "red";
}

char color_letter(ColorClass color) {
  switch (color) {
    case ColorClass::kRed: return 'R';
    case ColorClass::kGreen: return 'G';
    case ColorClass::kBlue: return 'B';
  }
  return 'R';
}

ColorClass classify_freshness(const FreshnessLedger& ledger, const RecordId& id) {
  auto state = ledger.state(id);
  if (!state) throw Error(ErrorCode::kUnknownRecord, id.canonical());
  switch (*state) {
    case FreshnessState::kUnsynced: return ColorClass::kRed;
    case FreshnessState::kEdgeCached: return ColorClass::kGreen;
    case FreshnessState::kRemote: return ColorClass::kBlue;
  }
  return ColorClass::kRed;
}

// ---------------------------------------------------------------------------
// Operations

bool insert_local(TierStore& store, FreshnessLedger& ledger, const Record& record) {
  const bool added = store.add(record);
  if (added) ledger.raise(record.id(), implied_state(store.tier()));
  return added;
}

Delta delta_since(const TierStore& store, const SyncCursor& cursor) {
  Delta out;
  out.cursor = cursor.last_seq_seen;
  const auto records = store.records();
  if (cursor.last_seq_seen >= records.size()) return out;
  out.records.assign(records.begin() + static_cast<std::ptrdiff_t>(cursor.last_seq_seen), records.end());
  out.cursor = store.max_seq();
  return out;
}

namespace {

// Ids in `batch` the store does not yet hold, in batch order without
// repeats. Throws PayloadConflict against the store or within the batch.
std::vector<const Record*> fresh_records(const TierStore& store, std::span<const Record> batch) {
  std::vector<const Record*> fresh;
  std::map<RecordId, const Record*> pending;
  for (const Record& r : batch) {
    store.check_compatible(r);
    if (store.contains(r.id())) continue;
    auto [it, inserted] = pending.try_emplace(r.id(), &r);
    if (!inserted) {
      if (!(*it->second == r)) {
        throw Error(ErrorCode::kPayloadConflict, r.id().canonical(), "same id, different payload");
      }
      continue;
    }
    fresh.push_back(&r);
  }
  return fresh;
}

}  // namespace

std::vector<RecordId> merge(TierStore& store, std::span<const Record> batch) {
  std::vector<RecordId> added;
  for (const Record* r : fresh_records(store, batch)) {
    store.add(*r);
    added.push_back(r->id());
  }
  return added;
}

std::vector<RecordId> absorb(Replica& replica, std::span<const Record> batch, FreshnessState arrival_state) {
  const auto fresh = fresh_records(replica.store, batch);
  if (fresh.empty()) return {};
  if (replica.sink != nullptr) {
    std::vector<Record> copies;
    copies.reserve(fresh.size());
    for (const Record* r : fresh) copies.push_back(*r);
    replica.sink->append(copies);
  }
  const FreshnessState state = std::max(arrival_state, implied_state(replica.store.tier()));
  std::vector<RecordId> added;
  added.reserve(fresh.size());
  for (const Record* r : fresh) {
    replica.store.add(*r);
    replica.ledger.raise(r->id(), state);
    added.push_back(r->id());
  }
  return added;
}

PushAck accept_push(Replica& receiver, std::span<const Record> batch) {
  PushAck ack;
  ack.accepted_ids = absorb(receiver, batch, implied_state(receiver.store.tier()));
  std::set<RecordId> accepted(ack.accepted_ids.begin(), ack.accepted_ids.end());
  std::set<RecordId> listed;
  for (const Record& r : batch) {
    if (accepted.count(r.id()) == 0 && listed.insert(r.id()).second) ack.known_ids.push_back(r.id());
  }
  return ack;
}

PushAck LocalPeer::push(std::span<const Record> batch) {
  if (guard_ == nullptr) return accept_push(replica_, batch);
  std::unique_lock lock(*guard_);
  return accept_push(replica_, batch);
}

Delta LocalPeer::pull(std::uint64_t after) {
  if (guard_ == nullptr) return delta_since(replica_.store, {replica_.store.store_id(), after});
  std::shared_lock lock(*guard_);
  return delta_since(replica_.store, {replica_.store.store_id(), after});
}

namespace {

template <typename Fn>
auto with_guard(std::shared_mutex* guard, Fn&& fn) {
  if (guard == nullptr) return fn();
  std::unique_lock lock(*guard);
  return fn();
}

}  // namespace

SyncReport sync_session(Replica& local, SyncPeer& peer, std::shared_mutex* guard) {
  SyncReport report;
  report.peer = peer.store_id();
  const Tier peer_tier = peer.tier();
  const FreshnessState acked_state = implied_state(peer_tier);

  // Push leg.
  Delta outgoing = with_guard(guard, [&] {
    const PeerCursors& cur = local.cursors[report.peer];
    return delta_since(local.store, {report.peer, cur.pushed_through});
  });
  if (!outgoing.records.empty()) {
    PushAck ack = peer.push(outgoing.records);
    with_guard(guard, [&] {
      for (const auto* ids : {&ack.accepted_ids, &ack.known_ids}) {
        for (const RecordId& id : *ids) {
          if (local.ledger.contains(id) && local.ledger.raise(id, acked_state)) {
            report.promoted.emplace_back(id, acked_state);
          }
        }
      }
      auto& cur = local.cursors[report.peer];
      cur.pushed_through = std::max(cur.pushed_through, outgoing.cursor);
      return 0;
    });
    report.pushed_ids = std::move(ack.accepted_ids);
    report.pushed = report.pushed_ids.size();
  }

  // Pull leg.
  const std::uint64_t after = with_guard(guard, [&] { return local.cursors[report.peer].pulled_through; });
  Delta incoming = peer.pull(after);
  with_guard(guard, [&] {
    const std::uint64_t before = local.store.max_seq();
    report.pulled_ids = absorb(local, incoming.records, acked_state);
    report.pulled = report.pulled_ids.size();
    std::set<RecordId> fresh(report.pulled_ids.begin(), report.pulled_ids.end());
    for (const RecordId& id : report.pulled_ids) report.arrived.emplace_back(id, *local.ledger.state(id));
    for (const Record& r : incoming.records) {
      if (fresh.count(r.id()) == 0 && local.ledger.raise(r.id(), acked_state)) {
        report.promoted.emplace_back(r.id(), acked_state);
      }
    }
    auto& cur = local.cursors[report.peer];
    cur.pulled_through = std::max(cur.pulled_through, incoming.cursor);
    // Records just pulled came from the peer; skip echoing them back.
    if (before == cur.pushed_through) cur.pushed_through = local.store.max_seq();
    return 0;
  });
  return report;
}

}  // namespace fieldsync
