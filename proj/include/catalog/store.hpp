#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "catalog/catalog.hpp"
#include "catalog/model.hpp"

namespace catalog {

using SequenceNumber = std::uint64_t;

// Highest applied sequence number per origin. 0 means nothing applied.
using CursorMap = std::map<SiteId, SequenceNumber>;

struct Snapshot {
  CursorMap as_of;
  std::vector<VersionedRow> rows;  // sorted by (origin ordinal, seq)
  Sha256 digest{};
};

// Layout: "CATSNAP1", as_of count(u32) {SiteId, seq(u64)}, row count(u64)
// {subject(u8), seq(u64), row(bytes)}, digest(32).
Bytes encode_snapshot(const Snapshot& snap);
// Throws Decode on malformed input and DigestMismatch if the rows do not hash to the trailer.
Snapshot decode_snapshot(ByteView bytes);

// Durable steps reported to StoreOptions::on_durable, after the step is on disk.
enum class DurableEvent { LogRecord, RemoteBatch, Cursors, SnapshotFile, LogRewrite };

struct StoreOptions {
  std::filesystem::path root;  // empty: memory only, nothing persisted
  std::function<Timestamp()> clock = now_utc;
  bool fsync = false;
  std::uint64_t retention = 100'000;  // ops kept per origin regardless of peer acks
  std::function<void(DurableEvent)> on_durable;
  std::function<void()> on_snapshot;  // runs while take_snapshot holds the Data read lock
};

// Per-site catalog engine with deferred updates:
//   write_local   -> Buffer + Last_operations (durable local log)
//   apply_buffer  -> folds Last_operations into Data, drains them to the replication log
//   apply_remote  -> remote partitions of Data, appended to per-origin logs
// Buffer writes never wait on Data-side work.
class Store {
 public:
  // Recovers from `options.root` (snapshot + log replay) or creates it.
  // Throws CorruptLog, SiteMismatch, Io.
  static std::unique_ptr<Store> open(StoreOptions options, SiteId site);
  static std::unique_ptr<Store> in_memory(SiteId site, std::function<Timestamp()> clock = now_utc);

  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const SiteId& site() const noexcept { return site_; }
  const std::filesystem::path& root() const noexcept { return opts_.root; }

  // Makes an origin scannable before any of its ops arrive.
  void register_origin(const SiteId& origin);
  std::vector<SiteId> known_origins() const;

  // For Delete only the key fields (and origin) of `row` are used.
  SequenceNumber write_local(OpKind kind, const Row& row);
  std::size_t apply_buffer();

  std::vector<OperationRecord> scan_partition(const SiteId& origin, SequenceNumber after,
                                              std::size_t limit = SIZE_MAX) const;
  std::vector<OperationRecord> scan_partition(const std::string& origin_id, SequenceNumber after,
                                              std::size_t limit = SIZE_MAX) const;

  // Returns the new cursor of every origin present in the batch.
  CursorMap apply_remote(std::span<const OperationRecord> ops);

  Snapshot take_snapshot() const;
  void install_snapshot(const Snapshot& snap);

  Sha256 checksum_data() const;
  CursorMap cursors() const;
  SequenceNumber cursor(const std::string& origin_id) const;
  SequenceNumber local_high_water() const;  // last seq handed out by write_local
  std::size_t queue_depth() const;

  // Persists a snapshot of Data and drops log records every listed peer has
  // acknowledged, keeping at least `retention` records per origin.
  void compact(const std::vector<std::string>& peer_ids);
  void note_ack(const std::string& peer_id, const SiteId& origin, SequenceNumber after);
  SequenceNumber prune_floor(const SiteId& origin) const;

  Partition buffer() const;
  std::vector<OperationRecord> last_operations() const;

  template <class F>
  decltype(auto) read(F&& f) const {
    std::shared_lock lock(data_mu_);
    return f(static_cast<const Catalog&>(data_));
  }

  // Data with the local partition replaced by Buffer (read-your-writes view).
  Catalog pending_view() const;

 private:
  struct OriginLog {
    SequenceNumber floor = 0;  // records <= floor are pruned
    std::vector<OperationRecord> ops;
    int fd = -1;
    SequenceNumber high() const noexcept { return floor + ops.size(); }
  };

  Store(StoreOptions options, SiteId site);
  void recover();
  void load_site_file();
  OriginLog& log_for(const SiteId& origin);
  const OriginLog* find_log(const SiteId& origin) const;
  const SiteId* resolve_origin(const std::string& id) const;
  void check_origin(const SiteId& origin);
  void append(OriginLog& log, const SiteId& origin, ByteView records);
  void write_cursors_file(const std::string& snapshot_hex, SequenceNumber applied);
  std::string write_snapshot_file(const Snapshot& snap);
  void rewrite_log(OriginLog& log, const SiteId& origin);
  void checkpoint_locked(const CursorMap& prune_to);
  CursorMap cursors_locked() const;
  void durable(DurableEvent e) const;

  StoreOptions opts_;
  SiteId site_;

  std::mutex apply_mu_;  // serializes apply_buffer

  mutable std::mutex buffer_mu_;
  int local_fd_ = -1;
  Partition buffer_;
  std::vector<OperationRecord> last_ops_;
  SequenceNumber next_seq_ = 0;

  mutable std::shared_mutex data_mu_;
  Catalog data_;
  std::map<SiteId, OriginLog> logs_;
  SequenceNumber applied_ = 0;
  std::string snapshot_hex_;
  std::map<std::string, std::map<SiteId, SequenceNumber>> acks_;
};

// Encodes an op as a log record: u32 length, canonical op, u32 CRC32 of the op bytes.
void append_log_record(Bytes& out, const OperationRecord& op);

// Parses one record from the front of `in`. Returns bytes consumed, or 0 when
// the record is incomplete. Throws CorruptLog on CRC mismatch or bad body.
std::size_t parse_log_record(ByteView in, OperationRecord& op);

}  // namespace catalog
