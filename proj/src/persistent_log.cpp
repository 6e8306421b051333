#include "fieldsync/persistent_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace fieldsync {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kHeaderBytes = 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

[[noreturn]] void throw_errno(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::kIoError, path.string(), what + ": " + std::strerror(errno));
}

void write_fd(int fd, std::string_view bytes, const fs::path& path) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write", path);
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string index_line(std::uint64_t seq, const RecordId& id) {
  return std::to_string(seq) + "\t" + id.canonical() + "\n";
}

}  // namespace

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, tmp.string(), "cannot open for writing");
    out << bytes;
    if (!out) throw Error(ErrorCode::kIoError, tmp.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, path.string(), ec.message());
}

std::string PersistentLog::encode_entry(const Record& record) {
  const std::string payload = canonical_bytes(record);
  std::string out;
  out.reserve(kHeaderBytes + payload.size());
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  put_u32(out, crc_of(payload));
  out += payload;
  return out;
}

PersistentLog::PersistentLog(fs::path dir, bool fsync_writes) : dir_(std::move(dir)), fsync_writes_(fsync_writes) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIoError, dir_.string(), ec.message());

  const fs::path path = log_path(dir_);
  const std::string bytes = read_file(path).value_or(std::string{});

  // Replay until the first entry that is short, fails its checksum or does
  // not decode; everything from there on is a torn write.
  std::size_t pos = 0;
  std::string index;
  while (pos + kHeaderBytes <= bytes.size()) {
    const std::uint32_t len = get_u32(bytes, pos);
    const std::uint32_t crc = get_u32(bytes, pos + 4);
    if (pos + kHeaderBytes + len > bytes.size()) break;
    const std::string_view payload(bytes.data() + pos + kHeaderBytes, len);
    if (crc_of(payload) != crc) break;
    json doc = json::parse(payload, nullptr, false);
    if (doc.is_discarded()) break;
    try {
      recovery_.records.push_back(record_from_json(doc));
    } catch (const Error&) {
      break;
    }
    index += index_line(recovery_.records.size(), recovery_.records.back().id());
    pos += kHeaderBytes + len;
  }
  recovery_.valid_bytes = pos;
  recovery_.truncated_bytes = bytes.size() - pos;

  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("open", path);
  if (recovery_.truncated_bytes > 0) {
    if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) throw_errno("ftruncate", path);
    if (fsync_writes_) ::fsync(fd_);
  }
  size_bytes_ = pos;
  entries_ = recovery_.records.size();

  write_file_atomic(index_path(dir_), index);
  index_fd_ = ::open(index_path(dir_).c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (index_fd_ < 0) throw_errno("open", index_path(dir_));
}

PersistentLog::~PersistentLog() {
  if (fd_ >= 0) ::close(fd_);
  if (index_fd_ >= 0) ::close(index_fd_);
}

void PersistentLog::write_all(const std::string& bytes) {
  if (crash_budget_) {
    if (bytes.size() > *crash_budget_) {
      write_fd(fd_, std::string_view(bytes).substr(0, *crash_budget_), log_path(dir_));
      size_bytes_ += *crash_budget_;
      crash_budget_ = 0;
      throw SimulatedCrash();
    }
    *crash_budget_ -= bytes.size();
  }
  write_fd(fd_, bytes, log_path(dir_));
  size_bytes_ += bytes.size();
}

void PersistentLog::append(std::span<const Record> records) {
  if (records.empty()) return;
  std::string buf;
  std::string index;
  std::uint64_t seq = entries_;
  for (const Record& r : records) {
    buf += encode_entry(r);
    index += index_line(++seq, r.id());
  }
  write_all(buf);
  if (fsync_writes_ && ::fsync(fd_) != 0) throw_errno("fsync", log_path(dir_));
  entries_ = seq;
  write_fd(index_fd_, index, index_path(dir_));
}

// ---------------------------------------------------------------------------

std::string random_store_id(std::string_view prefix) {
  std::random_device rd;
  std::uniform_int_distribution<unsigned> hex(0, 15);
  std::string id(prefix);
  id += '-';
  for (int i = 0; i < 12; ++i) id += "0123456789abcdef"[hex(rd)];
  return id;
}

namespace {

std::string load_store_id(const fs::path& dir, const std::string& fallback) {
  const fs::path path = dir / "store_id";
  if (auto text = read_file(path)) {
    std::string id = *text;
    while (!id.empty() && (id.back() == '\n' || id.back() == ' ')) id.pop_back();
    if (!id.empty()) return id;
  }
  write_file_atomic(path, fallback + "\n");
  return fallback;
}

}  // namespace

DurableReplica::DurableReplica(fs::path dir, Tier tier, const std::string& store_id, bool fsync_writes)
    : dir_(std::move(dir)),
      log_(dir_, fsync_writes),
      replica_(tier, load_store_id(dir_, store_id)) {
  for (const Record& r : log_.recovery().records) replica_.store.add(r);

  if (auto text = read_file(dir_ / "ledger.json")) {
    json doc = json::parse(*text, nullptr, false);
    if (doc.is_object()) {
      for (const auto& [id, state] : doc.items()) {
        if (!state.is_string()) continue;
        auto parsed = parse_freshness(state.get<std::string>());
        const RecordId rid = RecordId::parse(id);
        if (parsed && replica_.store.contains(rid)) replica_.ledger.raise(rid, *parsed);
      }
    }
  }
  // Records whose ledger entry was lost with a crash fall back to the
  // state their tier implies.
  for (const Record& r : replica_.store.records()) replica_.ledger.raise(r.id(), implied_state(tier));

  if (auto text = read_file(dir_ / "cursors.json")) {
    json doc = json::parse(*text, nullptr, false);
    if (doc.is_object()) {
      for (const auto& [peer, c] : doc.items()) {
        PeerCursors cur;
        cur.pushed_through = std::min<std::uint64_t>(c.value("pushed_through", 0ULL), replica_.store.max_seq());
        cur.pulled_through = c.value("pulled_through", 0ULL);
        replica_.cursors[peer] = cur;
      }
    }
  }
  replica_.sink = &log_;
}

void DurableReplica::save_meta() const {
  json ledger = json::object();
  for (const auto& [id, state] : replica_.ledger.entries()) ledger[id.canonical()] = std::string(to_string(state));
  write_file_atomic(dir_ / "ledger.json", ledger.dump(1) + "\n");

  json cursors = json::object();
  for (const auto& [peer, c] : replica_.cursors) {
    cursors[peer] = {{"pushed_through", c.pushed_through}, {"pulled_through", c.pulled_through}};
  }
  write_file_atomic(dir_ / "cursors.json", cursors.dump(1) + "\n");
}

}  // namespace fieldsync
