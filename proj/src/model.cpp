#include "catalog/model.hpp"

#include <chrono>
#include <charconv>
#include <numeric>

#include "catalog/error.hpp"

namespace catalog {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyName: return "EMPTY_NAME";
    case Errc::IllegalCharacter: return "ILLEGAL_CHARACTER";
    case Errc::TooLong: return "TOO_LONG";
    case Errc::InvalidArgument: return "INVALID_ARGUMENT";
    case Errc::Decode: return "DECODE";
    case Errc::Io: return "IO";
    case Errc::CorruptLog: return "CORRUPT_LOG";
    case Errc::SiteMismatch: return "SITE_MISMATCH";
    case Errc::OwnershipViolation: return "OWNERSHIP_VIOLATION";
    case Errc::UnknownKey: return "UNKNOWN_KEY";
    case Errc::DuplicateKey: return "DUPLICATE_KEY";
    case Errc::UnknownOrigin: return "UNKNOWN_ORIGIN";
    case Errc::GapDetected: return "GAP_DETECTED";
    case Errc::OutOfOrder: return "OUT_OF_ORDER";
    case Errc::OriginIsSelf: return "ORIGIN_IS_SELF";
    case Errc::DigestMismatch: return "DIGEST_MISMATCH";
    case Errc::ConnectionRefused: return "CONNECTION_REFUSED";
    case Errc::VersionMismatch: return "VERSION";
    case Errc::FederationMismatch: return "FEDERATION";
    case Errc::HandshakeTimeout: return "HANDSHAKE_TIMEOUT";
    case Errc::Timeout: return "TIMEOUT";
    case Errc::FrameTooLarge: return "FRAME_TOO_LARGE";
    case Errc::ProtocolError: return "PROTOCOL";
    case Errc::UnknownSite: return "UNKNOWN_SITE";
    case Errc::UnknownCluster: return "UNKNOWN_CLUSTER";
    case Errc::EmptyPath: return "EMPTY_PATH";
    case Errc::UnknownToken: return "UNKNOWN_TOKEN";
    case Errc::NotFound: return "NOT_FOUND";
  }
  return "UNKNOWN";
}

Timestamp now_utc() {
  using namespace std::chrono;
  return {duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()};
}

namespace {

bool lfn_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
         c == '_' || c == '-';
}

// Turns validation failures inside a decoder into decode errors.
template <class F>
auto as_decode(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::Decode) throw;
    fail(Errc::Decode, e.what());
  }
}

StorageClass storage_from_byte(std::uint8_t b) {
  if (b > 1) fail(Errc::Decode, "bad storage class " + std::to_string(b));
  return static_cast<StorageClass>(b);
}

}  // namespace

LogicalFileName validate_lfn(std::string_view raw) {
  if (raw.empty()) fail(Errc::EmptyName, "logical file name is empty");
  if (raw.size() > kMaxLfnLength) {
    fail(Errc::TooLong, "logical file name exceeds 255 bytes (" + std::to_string(raw.size()) + ")");
  }
  for (char c : raw) {
    if (!lfn_char(c)) {
      fail(Errc::IllegalCharacter, "illegal character in logical file name '" + std::string(raw) + "'");
    }
  }
  return LogicalFileName(std::string(raw));
}

void validate_site_token(std::string_view token) {
  if (token.empty()) fail(Errc::InvalidArgument, "empty site id");
  if (token.size() > 64) fail(Errc::InvalidArgument, "site id longer than 64 bytes");
  for (char c : token) {
    if (!lfn_char(c) || c == '.') {
      fail(Errc::InvalidArgument, "illegal character in site id '" + std::string(token) + "'");
    }
  }
}

std::string_view to_string(StorageClass s) noexcept { return s == StorageClass::Disk ? "disk" : "tape"; }

StorageClass parse_storage(std::string_view s) {
  if (s == "disk" || s == "Disk" || s == "DISK") return StorageClass::Disk;
  if (s == "tape" || s == "Tape" || s == "TAPE") return StorageClass::Tape;
  fail(Errc::InvalidArgument, "storage must be disk or tape, got '" + std::string(s) + "'");
}

Cost::Cost(std::uint64_t num, std::uint64_t den) {
  if (den == 0) fail(Errc::InvalidArgument, "cost denominator is zero");
  std::uint64_t g = std::gcd(num, den);
  if (g == 0) g = 1;
  num_ = num / g;
  den_ = den / g;
  if (num_ == 0) den_ = 1;
}

Cost Cost::scaled(std::uint64_t num, std::uint64_t den) const {
  if (num == 0 || den == 0) fail(Errc::InvalidArgument, "scale factor must be positive");
  unsigned __int128 n = static_cast<unsigned __int128>(num_) * num;
  unsigned __int128 d = static_cast<unsigned __int128>(den_) * den;
  unsigned __int128 a = n, b = d;
  while (b != 0) {
    auto t = a % b;
    a = b;
    b = t;
  }
  if (a != 0) {
    n /= a;
    d /= a;
  }
  if (n > UINT64_MAX || d > UINT64_MAX) fail(Errc::InvalidArgument, "scaled cost overflows");
  return Cost(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d));
}

std::strong_ordering Cost::operator<=>(const Cost& o) const {
  unsigned __int128 l = static_cast<unsigned __int128>(num_) * o.den_;
  unsigned __int128 r = static_cast<unsigned __int128>(o.num_) * den_;
  return l <=> r;
}

std::string Cost::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Cost Cost::parse(std::string_view s) {
  auto parse_u64 = [&](std::string_view t) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || p != t.data() + t.size()) {
      fail(Errc::InvalidArgument, "bad cost '" + std::string(s) + "'");
    }
    return v;
  };
  auto slash = s.find('/');
  if (slash == std::string_view::npos) return Cost(parse_u64(s), 1);
  return Cost(parse_u64(s.substr(0, slash)), parse_u64(s.substr(slash + 1)));
}

std::string_view to_string(Subject s) noexcept {
  switch (s) {
    case Subject::Files: return "files";
    case Subject::Hosts: return "hosts";
    case Subject::Clusters: return "clusters";
    case Subject::Sites: return "sites";
    case Subject::Costs: return "costs";
  }
  return "?";
}

Subject parse_subject(std::string_view s) {
  for (auto v : {Subject::Files, Subject::Hosts, Subject::Clusters, Subject::Sites, Subject::Costs}) {
    if (to_string(v) == s) return v;
  }
  fail(Errc::InvalidArgument, "unknown subject '" + std::string(s) + "'");
}

std::string_view to_string(OpKind k) noexcept {
  switch (k) {
    case OpKind::Insert: return "insert";
    case OpKind::Update: return "update";
    case OpKind::Delete: return "delete";
  }
  return "?";
}

Subject subject_of(const Row& row) noexcept { return static_cast<Subject>(row.index()); }

const SiteId& origin_of(const Row& row) noexcept {
  return std::visit(
      [](const auto& r) -> const SiteId& {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, FileRecord> || std::is_same_v<T, HostRecord>) return r.origin;
        else if constexpr (std::is_same_v<T, ClusterRecord> || std::is_same_v<T, SiteRecord>) return r.site;
        else return r.from;
      },
      row);
}

// --- encoding ---

void encode(Encoder& e, const SiteId& v) {
  e.str(v.id);
  e.u32(v.ordinal);
}

void encode(Encoder& e, const FileRecord& v) {
  e.str(v.lfn.str());
  e.str(v.host);
  e.str(v.path);
  e.u8(static_cast<std::uint8_t>(v.storage));
  e.str(v.production);
  e.u64(v.size_bytes);
  e.i64(v.created_at.micros);
  encode(e, v.origin);
}

void encode(Encoder& e, const HostRecord& v) {
  e.str(v.hostname);
  e.str(v.cluster);
  e.u8(static_cast<std::uint8_t>(v.storage));
  encode(e, v.origin);
}

void encode(Encoder& e, const ClusterRecord& v) {
  e.str(v.name);
  encode(e, v.site);
}

void encode(Encoder& e, const SiteRecord& v) { encode(e, v.site); }

void encode(Encoder& e, const CostRecord& v) {
  encode(e, v.from);
  encode(e, v.to);
  e.u64(v.cost.num());
  e.u64(v.cost.den());
}

void encode(Encoder& e, const Row& v) {
  std::visit([&](const auto& r) { encode(e, r); }, v);
}

void encode(Encoder& e, const OperationRecord& v) {
  encode(e, v.origin);
  e.u64(v.seq);
  e.u8(static_cast<std::uint8_t>(v.kind));
  e.u8(static_cast<std::uint8_t>(v.subject));
  e.bytes(v.payload);
  e.i64(v.committed_at.micros);
}

void decode(Decoder& d, SiteId& v) {
  v.id = d.str();
  v.ordinal = d.u32();
  as_decode([&] { validate_site_token(v.id); });
}

namespace {
std::string nonempty(Decoder& d, const char* what) {
  std::string s = d.str();
  if (s.empty()) fail(Errc::Decode, std::string("empty ") + what);
  return s;
}
}  // namespace

void decode(Decoder& d, FileRecord& v) {
  std::string lfn = d.str();
  v.lfn = as_decode([&] { return validate_lfn(lfn); });
  v.host = nonempty(d, "host");
  v.path = d.str();
  if (v.path.empty() || v.path.front() != '/') fail(Errc::Decode, "physical path must be absolute");
  v.storage = storage_from_byte(d.u8());
  v.production = d.str();
  v.size_bytes = d.u64();
  v.created_at.micros = d.i64();
  decode(d, v.origin);
}

void decode(Decoder& d, HostRecord& v) {
  v.hostname = nonempty(d, "hostname");
  v.cluster = nonempty(d, "cluster");
  v.storage = storage_from_byte(d.u8());
  decode(d, v.origin);
}

void decode(Decoder& d, ClusterRecord& v) {
  v.name = nonempty(d, "cluster name");
  decode(d, v.site);
}

void decode(Decoder& d, SiteRecord& v) { decode(d, v.site); }

void decode(Decoder& d, CostRecord& v) {
  decode(d, v.from);
  decode(d, v.to);
  std::uint64_t num = d.u64();
  std::uint64_t den = d.u64();
  if (den == 0) fail(Errc::Decode, "zero cost denominator");
  Cost c(num, den);
  // Non-reduced input would give two encodings for one value.
  if (c.num() != num || c.den() != den) fail(Errc::Decode, "cost not in lowest terms");
  v.cost = c;
}

void decode(Decoder& d, OperationRecord& v) {
  decode(d, v.origin);
  v.seq = d.u64();
  if (v.seq == 0) fail(Errc::Decode, "operation sequence 0");
  std::uint8_t kind = d.u8();
  if (kind > 2) fail(Errc::Decode, "bad operation kind " + std::to_string(kind));
  v.kind = static_cast<OpKind>(kind);
  std::uint8_t subject = d.u8();
  if (subject > 4) fail(Errc::Decode, "bad subject " + std::to_string(subject));
  v.subject = static_cast<Subject>(subject);
  v.payload = d.bytes();
  v.committed_at.micros = d.i64();
}

Row decode_row(Subject subject, ByteView bytes) {
  switch (subject) {
    case Subject::Files: return canonical_decode<FileRecord>(bytes);
    case Subject::Hosts: return canonical_decode<HostRecord>(bytes);
    case Subject::Clusters: return canonical_decode<ClusterRecord>(bytes);
    case Subject::Sites: return canonical_decode<SiteRecord>(bytes);
    case Subject::Costs: return canonical_decode<CostRecord>(bytes);
  }
  fail(Errc::Decode, "bad subject");
}

Bytes encode_key(const FileKey& k) {
  Encoder e;
  e.str(std::get<0>(k));
  e.str(std::get<1>(k));
  e.str(std::get<2>(k));
  return e.take();
}

Bytes encode_key(const std::string& k) {
  Encoder e;
  e.str(k);
  return e.take();
}

Bytes encode_key(const CostKey& k) {
  Encoder e;
  e.str(k.first);
  e.str(k.second);
  return e.take();
}

template <>
FileKey decode_key<FileKey>(ByteView bytes) {
  Decoder d(bytes);
  FileKey k{d.str(), d.str(), d.str()};
  d.expect_end();
  return k;
}

template <>
std::string decode_key<std::string>(ByteView bytes) {
  Decoder d(bytes);
  std::string k = d.str();
  d.expect_end();
  return k;
}

template <>
CostKey decode_key<CostKey>(ByteView bytes) {
  Decoder d(bytes);
  std::string from = d.str();
  std::string to = d.str();
  d.expect_end();
  return {std::move(from), std::move(to)};
}

// --- topology ---

void Topology::add_site(const SiteId& site) {
  validate_site_token(site.id);
  for (const auto& [id, existing] : sites_) {
    if (id != site.id && existing.ordinal == site.ordinal) {
      fail(Errc::InvalidArgument, "ordinal " + std::to_string(site.ordinal) + " already used by " + id);
    }
  }
  if (auto it = sites_.find(site.id); it != sites_.end() && it->second.ordinal != site.ordinal) {
    fail(Errc::InvalidArgument, "site " + site.id + " already registered with another ordinal");
  }
  sites_[site.id] = site;
}

void Topology::add_cluster(const std::string& name, const std::string& site_id) {
  if (name.empty()) fail(Errc::InvalidArgument, "empty cluster name");
  if (!sites_.contains(site_id)) fail(Errc::UnknownSite, "unknown site " + site_id);
  if (auto it = clusters_.find(name); it != clusters_.end() && it->second != site_id) {
    fail(Errc::InvalidArgument, "cluster " + name + " already belongs to " + it->second);
  }
  clusters_[name] = site_id;
}

void Topology::add_host(const std::string& hostname, const std::string& cluster, StorageClass storage) {
  if (hostname.empty()) fail(Errc::InvalidArgument, "empty hostname");
  if (!clusters_.contains(cluster)) fail(Errc::UnknownCluster, "unknown cluster " + cluster);
  hosts_[hostname] = Host{hostname, cluster, storage};
}

void Topology::set_cost(const std::string& from, const std::string& to, Cost cost) {
  if (!sites_.contains(from)) fail(Errc::UnknownSite, "unknown site " + from);
  if (!sites_.contains(to)) fail(Errc::UnknownSite, "unknown site " + to);
  if (from == to && cost != Cost{}) fail(Errc::InvalidArgument, "cost from a site to itself must be 0");
  costs_[{from, to}] = cost;
}

std::optional<std::string> Topology::site_of_host(const std::string& hostname) const {
  auto h = hosts_.find(hostname);
  if (h == hosts_.end()) return std::nullopt;
  auto c = clusters_.find(h->second.cluster);
  if (c == clusters_.end()) return std::nullopt;
  return c->second;
}

std::optional<Cost> Topology::cost(const std::string& from, const std::string& to) const {
  if (from == to) return Cost{};
  auto it = costs_.find({from, to});
  if (it == costs_.end()) return std::nullopt;
  return it->second;
}

bool Topology::costs_complete() const {
  for (const auto& [a, sa] : sites_) {
    for (const auto& [b, sb] : sites_) {
      if (!cost(a, b)) return false;
    }
  }
  return true;
}

bool Topology::referentially_intact() const {
  for (const auto& [name, site] : clusters_) {
    if (!sites_.contains(site)) return false;
  }
  for (const auto& [name, host] : hosts_) {
    if (!clusters_.contains(host.cluster)) return false;
  }
  for (const auto& [key, cost] : costs_) {
    if (!sites_.contains(key.first) || !sites_.contains(key.second)) return false;
  }
  return true;
}

}  // namespace catalog
