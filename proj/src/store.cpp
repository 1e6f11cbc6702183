#include "catalog/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "catalog/error.hpp"

namespace catalog {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSnapMagic = "CATSNAP1";
constexpr std::uint32_t kMaxRecord = 64u << 20;

[[noreturn]] void io_fail(const std::string& what) {
  fail(Errc::Io, what + ": " + std::strerror(errno));
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) io_fail("cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_all(int fd, ByteView data, const std::string& what) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("write " + what);
    }
    off += static_cast<std::size_t>(n);
  }
}

int open_append(const fs::path& p) {
  int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) io_fail("open " + p.string());
  return fd;
}

// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const fs::path& p, ByteView data, bool sync) {
  fs::path tmp = p;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_fail("open " + tmp.string());
  try {
    write_all(fd, data, tmp.string());
    if (sync && ::fsync(fd) != 0) io_fail("fsync " + tmp.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), p.c_str()) != 0) io_fail("rename " + tmp.string());
}

fs::path log_path(const fs::path& root, const SiteId& origin) {
  return root / "log" / (std::to_string(origin.ordinal) + ".oplog");
}

Bytes key_bytes(const Row& row) {
  return std::visit([](const auto& r) { return encode_key(RowTraits<std::decay_t<decltype(r)>>::key(r)); },
                    row);
}

}  // namespace

// --- record and snapshot formats ---

void append_log_record(Bytes& out, const OperationRecord& op) {
  Encoder body;
  encode(body, op);
  const Bytes& b = body.buffer();
  std::uint8_t hdr[4];
  put_u32_be(hdr, static_cast<std::uint32_t>(b.size()));
  out.insert(out.end(), hdr, hdr + 4);
  out.insert(out.end(), b.begin(), b.end());
  put_u32_be(hdr, crc32(b));
  out.insert(out.end(), hdr, hdr + 4);
}

std::size_t parse_log_record(ByteView in, OperationRecord& op) {
  if (in.size() < 4) return 0;
  std::uint32_t len = get_u32_be(in.data());
  if (len > kMaxRecord) fail(Errc::CorruptLog, "log record length " + std::to_string(len) + " exceeds cap");
  if (in.size() < 8 + static_cast<std::size_t>(len)) return 0;
  ByteView body = in.subspan(4, len);
  if (crc32(body) != get_u32_be(in.data() + 4 + len)) fail(Errc::CorruptLog, "log record CRC mismatch");
  try {
    op = canonical_decode<OperationRecord>(body);
  } catch (const Error& e) {
    fail(Errc::CorruptLog, std::string("undecodable log record: ") + e.what());
  }
  return 8 + len;
}

Bytes encode_snapshot(const Snapshot& snap) {
  Encoder e;
  e.raw(as_bytes(kSnapMagic));
  e.u32(static_cast<std::uint32_t>(snap.as_of.size()));
  for (const auto& [origin, seq] : snap.as_of) {
    encode(e, origin);
    e.u64(seq);
  }
  e.u64(snap.rows.size());
  Encoder row;
  for (const auto& r : snap.rows) {
    e.u8(static_cast<std::uint8_t>(r.row.index()));
    e.u64(r.seq);
    row = Encoder{};
    encode(row, r.row);
    e.bytes(row.buffer());
  }
  e.raw(snap.digest);
  return e.take();
}

Snapshot decode_snapshot(ByteView bytes) {
  Decoder d(bytes);
  ByteView magic = d.raw(kSnapMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kSnapMagic.begin())) fail(Errc::Decode, "not a snapshot");
  Snapshot snap;
  std::uint32_t n = d.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    SiteId origin;
    decode(d, origin);
    snap.as_of[origin] = d.u64();
  }
  std::uint64_t rows = d.u64();
  if (rows > d.remaining()) fail(Errc::Decode, "row count exceeds input");
  snap.rows.reserve(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    std::uint8_t subject = d.u8();
    if (subject > 4) fail(Errc::Decode, "bad subject in snapshot");
    std::uint64_t seq = d.u64();
    Bytes body = d.bytes();
    snap.rows.push_back({decode_row(static_cast<Subject>(subject), body), seq});
  }
  ByteView digest = d.raw(32);
  d.expect_end();
  std::copy(digest.begin(), digest.end(), snap.digest.begin());
  if (digest_rows(snap.rows) != snap.digest) fail(Errc::DigestMismatch, "snapshot rows do not match digest");
  return snap;
}

// --- lifecycle ---

Store::Store(StoreOptions options, SiteId site) : opts_(std::move(options)), site_(std::move(site)) {
  validate_site_token(site_.id);
  if (!opts_.clock) opts_.clock = now_utc;
  buffer_.origin = site_;
}

Store::~Store() {
  if (local_fd_ >= 0) ::close(local_fd_);
  for (auto& [origin, log] : logs_) {
    if (log.fd >= 0) ::close(log.fd);
  }
}

std::unique_ptr<Store> Store::open(StoreOptions options, SiteId site) {
  std::unique_ptr<Store> store(new Store(std::move(options), std::move(site)));
  store->recover();
  return store;
}

std::unique_ptr<Store> Store::in_memory(SiteId site, std::function<Timestamp()> clock) {
  StoreOptions opts;
  opts.clock = std::move(clock);
  return open(std::move(opts), std::move(site));
}

void Store::durable(DurableEvent e) const {
  if (opts_.on_durable) opts_.on_durable(e);
}

void Store::load_site_file() {
  fs::path p = opts_.root / "site";
  if (fs::exists(p)) {
    Bytes raw = read_file(p);
    std::istringstream in(std::string(raw.begin(), raw.end()));
    SiteId stored;
    if (!(in >> stored.ordinal >> stored.id)) fail(Errc::CorruptLog, "malformed site file " + p.string());
    if (stored != site_) {
      fail(Errc::SiteMismatch, "store at " + opts_.root.string() + " belongs to site " + stored.id + " (" +
                                   std::to_string(stored.ordinal) + "), not " + site_.id + " (" +
                                   std::to_string(site_.ordinal) + ")");
    }
    return;
  }
  std::string line = std::to_string(site_.ordinal) + " " + site_.id + "\n";
  write_file_atomic(p, as_bytes(line), opts_.fsync);
}

void Store::recover() {
  logs_[site_];
  if (opts_.root.empty()) return;

  std::error_code ec;
  fs::create_directories(opts_.root / "log", ec);
  fs::create_directories(opts_.root / "snap", ec);
  if (ec) fail(Errc::Io, "cannot create store directories under " + opts_.root.string());
  load_site_file();

  // cursors: snapshot name, local applied mark, registered origins
  SequenceNumber applied_mark = 0;
  fs::path cursors_path = opts_.root / "cursors";
  if (fs::exists(cursors_path)) {
    Bytes raw = read_file(cursors_path);
    std::istringstream in(std::string(raw.begin(), raw.end()));
    std::string tag;
    while (in >> tag) {
      if (tag == "snapshot") {
        in >> snapshot_hex_;
        if (snapshot_hex_ == "-") snapshot_hex_.clear();
      } else if (tag == "applied") {
        in >> applied_mark;
      } else if (tag == "origin") {
        SiteId o;
        in >> o.ordinal >> o.id;
        check_origin(o);
        logs_[o];
      } else {
        fail(Errc::CorruptLog, "unknown cursors entry '" + tag + "'");
      }
      if (!in) fail(Errc::CorruptLog, "malformed cursors file");
    }
  }

  CursorMap as_of;
  if (!snapshot_hex_.empty()) {
    fs::path sp = opts_.root / "snap" / (snapshot_hex_ + ".snap");
    if (!fs::exists(sp)) fail(Errc::CorruptLog, "missing snapshot " + sp.string());
    Snapshot snap;
    try {
      snap = decode_snapshot(read_file(sp));
    } catch (const Error& e) {
      fail(Errc::CorruptLog, "bad snapshot " + sp.string() + ": " + e.what());
    }
    if (to_hex(snap.digest) != snapshot_hex_) fail(Errc::CorruptLog, "snapshot name does not match digest");
    for (const auto& r : snap.rows) data_.put(r.row, r.seq);
    for (const auto& [origin, seq] : snap.as_of) {
      check_origin(origin);
      OriginLog& log = logs_[origin];
      log.floor = seq;
      as_of[origin] = seq;
    }
    if (const Partition* local = data_.find(site_)) buffer_ = *local;
  }
  buffer_.origin = site_;
  auto base_of = [&](const SiteId& o) {
    auto it = as_of.find(o);
    return it == as_of.end() ? SequenceNumber{0} : it->second;
  };
  applied_ = std::max(applied_mark, base_of(site_));

  // Drop leftovers of interrupted atomic writes and stale snapshots.
  for (const auto& dir : {opts_.root / "log", opts_.root / "snap"}) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const fs::path& p = entry.path();
      bool stale_snap = p.extension() == ".snap" && p.stem().string() != snapshot_hex_;
      if (p.extension() == ".tmp" || stale_snap) fs::remove(p, ec);
    }
  }

  SequenceNumber local_last = applied_;
  bool local_seen = false;
  for (const auto& entry : fs::directory_iterator(opts_.root / "log")) {
    const fs::path& p = entry.path();
    if (p.extension() != ".oplog") continue;
    std::uint32_t ordinal = 0;
    try {
      ordinal = static_cast<std::uint32_t>(std::stoul(p.stem().string()));
    } catch (...) {
      fail(Errc::CorruptLog, "unexpected log file " + p.string());
    }

    Bytes raw = read_file(p);
    std::vector<OperationRecord> records;
    std::size_t off = 0;
    while (off < raw.size()) {
      OperationRecord op;
      std::size_t n = parse_log_record(ByteView(raw).subspan(off), op);
      if (n == 0) break;  // torn tail from an interrupted append
      if (op.origin.ordinal != ordinal) fail(Errc::CorruptLog, "record from another origin in " + p.string());
      if (!records.empty() && (op.origin != records.front().origin || op.seq != records.back().seq + 1)) {
        fail(Errc::CorruptLog, "non-contiguous sequence in " + p.string());
      }
      records.push_back(std::move(op));
      off += n;
    }
    if (off < raw.size()) fs::resize_file(p, off);
    if (records.empty()) continue;

    const SiteId origin = records.front().origin;
    check_origin(origin);
    const bool local = origin == site_;
    if (origin.id == site_.id && !local) fail(Errc::CorruptLog, "log for " + origin.id + " has wrong ordinal");
    SequenceNumber base = base_of(origin);
    if (records.front().seq > base + 1) fail(Errc::CorruptLog, "log gap after snapshot in " + p.string());

    OriginLog& log = logs_[origin];
    if (records.back().seq < base) {
      log.floor = base;  // rewrite after a checkpoint never happened; snapshot covers all of it
      continue;
    }
    log.floor = records.front().seq - 1;
    for (auto& op : records) {
      if (local) {
        if (op.seq > base) apply_to(buffer_, op);
        if (op.seq <= applied_) {
          if (op.seq > base) data_.apply(op);
          log.ops.push_back(std::move(op));
        } else {
          last_ops_.push_back(std::move(op));
        }
      } else {
        if (op.seq > base) data_.apply(op);
        log.ops.push_back(std::move(op));
      }
    }
    if (local) {
      local_seen = true;
      local_last = std::max(local_last, records.back().seq);
    }
  }

  OriginLog& local_log = logs_[site_];
  if (!local_seen) local_log.floor = applied_;
  if (local_log.high() != applied_) fail(Errc::CorruptLog, "applied mark beyond local log");
  next_seq_ = local_last;
  local_fd_ = open_append(log_path(opts_.root, site_));
}

// --- origins ---

void Store::check_origin(const SiteId& origin) {
  validate_site_token(origin.id);
  for (const auto& [known, log] : logs_) {
    if (known == origin) return;
    if (known.id == origin.id || known.ordinal == origin.ordinal) {
      fail(Errc::InvalidArgument, "origin " + origin.id + "/" + std::to_string(origin.ordinal) +
                                      " conflicts with known " + known.id + "/" + std::to_string(known.ordinal));
    }
  }
}

void Store::register_origin(const SiteId& origin) {
  std::unique_lock lock(data_mu_);
  check_origin(origin);
  logs_[origin];
}

std::vector<SiteId> Store::known_origins() const {
  std::shared_lock lock(data_mu_);
  std::vector<SiteId> out;
  for (const auto& [origin, log] : logs_) out.push_back(origin);
  return out;
}

Store::OriginLog& Store::log_for(const SiteId& origin) {
  check_origin(origin);
  return logs_[origin];
}

const Store::OriginLog* Store::find_log(const SiteId& origin) const {
  auto it = logs_.find(origin);
  return it == logs_.end() ? nullptr : &it->second;
}

const SiteId* Store::resolve_origin(const std::string& id) const {
  for (const auto& [origin, log] : logs_) {
    if (origin.id == id) return &origin;
  }
  return nullptr;
}

// --- write path ---

SequenceNumber Store::write_local(OpKind kind, const Row& row) {
  const SiteId& owner = origin_of(row);
  if (owner != site_) {
    fail(Errc::OwnershipViolation,
         "site " + site_.id + " cannot write a " + std::string(to_string(subject_of(row))) + " row owned by " + owner.id);
  }
  Bytes payload = kind == OpKind::Delete ? key_bytes(row) : canonical_encode(row);
  if (kind != OpKind::Delete) {
    try {
      decode_row(subject_of(row), payload);
    } catch (const Error& e) {
      fail(Errc::InvalidArgument, std::string("invalid row: ") + e.what());
    }
  }

  std::lock_guard lock(buffer_mu_);
  bool exists = buffer_.contains(row);
  if (kind == OpKind::Insert && exists) fail(Errc::DuplicateKey, "row already exists");
  if (kind != OpKind::Insert && !exists) fail(Errc::UnknownKey, "no such row");

  OperationRecord op{site_, next_seq_ + 1, kind, subject_of(row), std::move(payload), opts_.clock()};
  if (local_fd_ >= 0) {
    Bytes rec;
    append_log_record(rec, op);
    write_all(local_fd_, rec, "local log");
    if (opts_.fsync && ::fsync(local_fd_) != 0) io_fail("fsync local log");
    durable(DurableEvent::LogRecord);
  }
  apply_to(buffer_, op);
  last_ops_.push_back(std::move(op));
  return ++next_seq_;
}

std::size_t Store::apply_buffer() {
  std::lock_guard serial(apply_mu_);
  std::vector<OperationRecord> ops;
  {
    std::lock_guard lock(buffer_mu_);
    ops.swap(last_ops_);
  }
  if (ops.empty()) return 0;

  std::unique_lock lock(data_mu_);
  SequenceNumber applied = ops.back().seq;
  if (!opts_.root.empty()) {
    try {
      write_cursors_file(snapshot_hex_, applied);
    } catch (...) {
      std::lock_guard relock(buffer_mu_);
      last_ops_.insert(last_ops_.begin(), std::make_move_iterator(ops.begin()),
                       std::make_move_iterator(ops.end()));
      throw;
    }
    durable(DurableEvent::Cursors);
  }
  OriginLog& log = logs_[site_];
  for (auto& op : ops) {
    data_.apply(op);
    log.ops.push_back(std::move(op));
  }
  applied_ = applied;
  return ops.size();
}

// --- replication surface ---

std::vector<OperationRecord> Store::scan_partition(const SiteId& origin, SequenceNumber after,
                                                   std::size_t limit) const {
  std::shared_lock lock(data_mu_);
  const OriginLog* log = find_log(origin);
  if (log == nullptr) fail(Errc::UnknownOrigin, "unknown origin " + origin.id);
  if (after >= log->high()) return {};
  if (after < log->floor) {
    fail(Errc::GapDetected, "ops " + std::to_string(after + 1) + ".." + std::to_string(log->floor) + " of " +
                                origin.id + " were pruned");
  }
  auto first = log->ops.begin() + static_cast<std::ptrdiff_t>(after - log->floor);
  auto count = std::min<std::size_t>(limit, static_cast<std::size_t>(log->ops.end() - first));
  return std::vector<OperationRecord>(first, first + static_cast<std::ptrdiff_t>(count));
}

std::vector<OperationRecord> Store::scan_partition(const std::string& origin_id, SequenceNumber after,
                                                   std::size_t limit) const {
  SiteId origin;
  {
    std::shared_lock lock(data_mu_);
    const SiteId* o = resolve_origin(origin_id);
    if (o == nullptr) fail(Errc::UnknownOrigin, "unknown origin " + origin_id);
    origin = *o;
  }
  return scan_partition(origin, after, limit);
}

CursorMap Store::apply_remote(std::span<const OperationRecord> ops) {
  // Group per origin, keeping arrival order.
  std::map<SiteId, std::vector<const OperationRecord*>> groups;
  for (const auto& op : ops) {
    if (op.origin == site_ || op.origin.id == site_.id) {
      fail(Errc::OriginIsSelf, "remote batch carries ops of the local site " + site_.id);
    }
    groups[op.origin].push_back(&op);
  }

  std::unique_lock lock(data_mu_);
  struct Accepted {
    SiteId origin;
    std::vector<const OperationRecord*> ops;
    Bytes records;
  };
  std::vector<Accepted> accepted;
  for (const auto& [origin, list] : groups) {
    check_origin(origin);
    const OriginLog* log = find_log(origin);
    SequenceNumber high = log ? log->high() : 0;
    Accepted a{origin, {}, {}};
    for (const OperationRecord* op : list) {
      if (op->seq <= high) continue;  // already applied
      if (op->seq != high + 1) {
        fail(Errc::OutOfOrder, "origin " + origin.id + ": expected seq " + std::to_string(high + 1) + ", got " +
                                   std::to_string(op->seq));
      }
      if (op->kind != OpKind::Delete) {
        Row row = decode_row(op->subject, op->payload);
        if (origin_of(row) != origin) fail(Errc::OwnershipViolation, "row owner differs from op origin");
      } else {
        Partition probe;
        probe.contains(op->subject, op->payload);  // validates the key encoding
      }
      a.ops.push_back(op);
      ++high;
    }
    if (!a.ops.empty()) accepted.push_back(std::move(a));
  }

  if (!opts_.root.empty()) {
    for (auto& a : accepted) {
      for (const OperationRecord* op : a.ops) append_log_record(a.records, *op);
      append(log_for(a.origin), a.origin, a.records);
    }
    if (!accepted.empty()) durable(DurableEvent::RemoteBatch);
  }

  CursorMap advanced;
  for (auto& a : accepted) {
    OriginLog& log = log_for(a.origin);
    for (const OperationRecord* op : a.ops) {
      data_.apply(*op);
      log.ops.push_back(*op);
    }
  }
  for (const auto& [origin, list] : groups) advanced[origin] = logs_[origin].high();
  return advanced;
}

void Store::append(OriginLog& log, const SiteId& origin, ByteView records) {
  if (log.fd < 0) log.fd = open_append(log_path(opts_.root, origin));
  write_all(log.fd, records, "log of " + origin.id);
  if (opts_.fsync && ::fsync(log.fd) != 0) io_fail("fsync log");
}

// --- snapshots ---

Snapshot Store::take_snapshot() const {
  Snapshot snap;
  {
    std::shared_lock lock(data_mu_);
    if (opts_.on_snapshot) opts_.on_snapshot();
    snap.as_of = cursors_locked();
    snap.rows = data_.sorted_rows();
  }
  snap.digest = digest_rows(snap.rows);
  return snap;
}

void Store::install_snapshot(const Snapshot& snap) {
  if (digest_rows(snap.rows) != snap.digest) fail(Errc::DigestMismatch, "snapshot rows do not match digest");
  std::map<SiteId, Partition> parts;
  for (const auto& r : snap.rows) {
    const SiteId& origin = origin_of(r.row);
    auto it = snap.as_of.find(origin);
    if (it == snap.as_of.end() || r.seq > it->second || r.seq == 0) {
      fail(Errc::DigestMismatch, "snapshot row of " + origin.id + " outside its as_of");
    }
    Partition& p = parts[origin];
    p.origin = origin;
    std::visit([&](const auto& row) {
      using R = std::decay_t<decltype(row)>;
      p.table<R>().insert_or_assign(RowTraits<R>::key(row), Versioned<R>{row, r.seq});
    }, r.row);
  }

  std::lock_guard block(buffer_mu_);
  std::unique_lock lock(data_mu_);
  CursorMap prune_to;
  for (const auto& [origin, seq] : snap.as_of) {
    if (origin.id == site_.id) continue;
    OriginLog& log = log_for(origin);
    if (seq <= log.high()) continue;
    auto it = parts.find(origin);
    if (it != parts.end()) {
      data_.replace(std::move(it->second));
    } else {
      data_.erase(origin);
    }
    log.floor = seq;
    log.ops.clear();
    prune_to[origin] = seq;
  }
  checkpoint_locked(prune_to);
}

Sha256 Store::checksum_data() const {
  std::vector<VersionedRow> rows;
  {
    std::shared_lock lock(data_mu_);
    rows = data_.sorted_rows();
  }
  return digest_rows(rows);
}

CursorMap Store::cursors_locked() const {
  CursorMap out;
  for (const auto& [origin, log] : logs_) out[origin] = log.high();
  return out;
}

CursorMap Store::cursors() const {
  std::shared_lock lock(data_mu_);
  return cursors_locked();
}

SequenceNumber Store::cursor(const std::string& origin_id) const {
  std::shared_lock lock(data_mu_);
  const SiteId* o = resolve_origin(origin_id);
  return o ? logs_.at(*o).high() : 0;
}

SequenceNumber Store::local_high_water() const {
  std::lock_guard lock(buffer_mu_);
  return next_seq_;
}

std::size_t Store::queue_depth() const {
  std::lock_guard lock(buffer_mu_);
  return last_ops_.size();
}

Partition Store::buffer() const {
  std::lock_guard lock(buffer_mu_);
  return buffer_;
}

std::vector<OperationRecord> Store::last_operations() const {
  std::lock_guard lock(buffer_mu_);
  return last_ops_;
}

Catalog Store::pending_view() const {
  Catalog view = read([](const Catalog& c) { return c; });
  Partition buf = buffer();
  if (buf.empty()) {
    view.erase(site_);
  } else {
    view.replace(std::move(buf));
  }
  return view;
}

// --- persistence of checkpoints ---

void Store::write_cursors_file(const std::string& snapshot_hex, SequenceNumber applied) {
  std::ostringstream out;
  out << "snapshot " << (snapshot_hex.empty() ? "-" : snapshot_hex) << "\n";
  out << "applied " << applied << "\n";
  for (const auto& [origin, log] : logs_) out << "origin " << origin.ordinal << " " << origin.id << "\n";
  std::string s = out.str();
  write_file_atomic(opts_.root / "cursors", as_bytes(s), opts_.fsync);
}

std::string Store::write_snapshot_file(const Snapshot& snap) {
  std::string hex = to_hex(snap.digest);
  write_file_atomic(opts_.root / "snap" / (hex + ".snap"), encode_snapshot(snap), opts_.fsync);
  durable(DurableEvent::SnapshotFile);
  return hex;
}

void Store::rewrite_log(OriginLog& log, const SiteId& origin) {
  Bytes records;
  for (const auto& op : log.ops) append_log_record(records, op);
  if (origin == site_) {
    for (const auto& op : last_ops_) append_log_record(records, op);
    if (local_fd_ >= 0) ::close(local_fd_);
    local_fd_ = -1;
  } else if (log.fd >= 0) {
    ::close(log.fd);
    log.fd = -1;
  }
  write_file_atomic(log_path(opts_.root, origin), records, opts_.fsync);
  if (origin == site_) local_fd_ = open_append(log_path(opts_.root, origin));
  durable(DurableEvent::LogRewrite);
}

// Caller holds buffer_mu_ and data_mu_ exclusively.
void Store::checkpoint_locked(const CursorMap& prune_to) {
  for (const auto& [origin, limit] : prune_to) {
    OriginLog& log = logs_[origin];
    if (limit <= log.floor) continue;
    auto drop = std::min<SequenceNumber>(limit - log.floor, log.ops.size());
    log.ops.erase(log.ops.begin(), log.ops.begin() + static_cast<std::ptrdiff_t>(drop));
    log.floor = limit;
  }
  if (opts_.root.empty()) return;

  Snapshot snap;
  snap.as_of = cursors_locked();
  snap.rows = data_.sorted_rows();
  snap.digest = digest_rows(snap.rows);
  std::string old = snapshot_hex_;
  std::string hex = write_snapshot_file(snap);
  write_cursors_file(hex, applied_);
  snapshot_hex_ = hex;
  durable(DurableEvent::Cursors);
  for (const auto& [origin, limit] : prune_to) rewrite_log(logs_[origin], origin);
  if (!old.empty() && old != hex) {
    std::error_code ec;
    fs::remove(opts_.root / "snap" / (old + ".snap"), ec);
  }
}

void Store::note_ack(const std::string& peer_id, const SiteId& origin, SequenceNumber after) {
  std::unique_lock lock(data_mu_);
  auto& seq = acks_[peer_id][origin];
  seq = std::max(seq, after);
}

SequenceNumber Store::prune_floor(const SiteId& origin) const {
  std::shared_lock lock(data_mu_);
  const OriginLog* log = find_log(origin);
  return log ? log->floor : 0;
}

void Store::compact(const std::vector<std::string>& peer_ids) {
  std::lock_guard block(buffer_mu_);
  std::unique_lock lock(data_mu_);
  CursorMap prune_to;
  for (const auto& [origin, log] : logs_) {
    SequenceNumber high = log.high();
    SequenceNumber limit = high > opts_.retention ? high - opts_.retention : 0;
    for (const auto& peer : peer_ids) {
      if (peer == origin.id) continue;
      SequenceNumber ack = 0;
      if (auto p = acks_.find(peer); p != acks_.end()) {
        if (auto a = p->second.find(origin); a != p->second.end()) ack = a->second;
      }
      limit = std::min(limit, ack);
    }
    if (limit > log.floor) prune_to[origin] = limit;
  }
  checkpoint_locked(prune_to);
}

}  // namespace catalog
