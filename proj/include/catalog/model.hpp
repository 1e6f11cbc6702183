#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "catalog/codec.hpp"

namespace catalog {

inline constexpr std::size_t kMaxLfnLength = 255;

// Microseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t micros = 0;
  auto operator<=>(const Timestamp&) const = default;
};

Timestamp now_utc();

class LogicalFileName {
 public:
  LogicalFileName() = default;

  const std::string& str() const noexcept { return name_; }
  auto operator<=>(const LogicalFileName&) const = default;

 private:
  friend LogicalFileName validate_lfn(std::string_view raw);
  explicit LogicalFileName(std::string name) : name_(std::move(name)) {}
  std::string name_;
};

// Accepts [A-Za-z0-9._-]{1,255}. Throws EmptyName / IllegalCharacter / TooLong.
LogicalFileName validate_lfn(std::string_view raw);

struct SiteId {
  std::string id;
  std::uint32_t ordinal = 0;

  bool operator==(const SiteId&) const = default;
  auto operator<=>(const SiteId& o) const {
    return std::tie(ordinal, id) <=> std::tie(o.ordinal, o.id);
  }
};

// Site tokens share the LFN charset minus '.', at most 64 bytes.
void validate_site_token(std::string_view token);

enum class StorageClass : std::uint8_t { Disk = 0, Tape = 1 };

std::string_view to_string(StorageClass s) noexcept;
StorageClass parse_storage(std::string_view s);

// Non-negative rational, always stored reduced with den > 0. Comparison is exact.
class Cost {
 public:
  Cost() = default;
  Cost(std::uint64_t num, std::uint64_t den);

  std::uint64_t num() const noexcept { return num_; }
  std::uint64_t den() const noexcept { return den_; }

  Cost scaled(std::uint64_t num, std::uint64_t den) const;
  std::string str() const;
  static Cost parse(std::string_view s);

  bool operator==(const Cost&) const = default;
  std::strong_ordering operator<=>(const Cost& o) const;

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

// Catalog rows. Each row carries (or implies) the site that owns it.

struct FileRecord {
  LogicalFileName lfn;
  std::string host;
  std::string path;
  StorageClass storage = StorageClass::Disk;
  std::string production;
  std::uint64_t size_bytes = 0;
  Timestamp created_at;
  SiteId origin;

  bool operator==(const FileRecord&) const = default;
};

struct HostRecord {
  std::string hostname;
  std::string cluster;
  StorageClass storage = StorageClass::Disk;
  SiteId origin;

  bool operator==(const HostRecord&) const = default;
};

struct ClusterRecord {
  std::string name;
  SiteId site;

  bool operator==(const ClusterRecord&) const = default;
};

struct SiteRecord {
  SiteId site;

  bool operator==(const SiteRecord&) const = default;
};

struct CostRecord {
  SiteId from;
  SiteId to;
  Cost cost;

  bool operator==(const CostRecord&) const = default;
};

// Variant index doubles as the on-wire subject tag.
enum class Subject : std::uint8_t { Files = 0, Hosts = 1, Clusters = 2, Sites = 3, Costs = 4 };

using Row = std::variant<FileRecord, HostRecord, ClusterRecord, SiteRecord, CostRecord>;

std::string_view to_string(Subject s) noexcept;
Subject parse_subject(std::string_view s);
Subject subject_of(const Row& row) noexcept;
const SiteId& origin_of(const Row& row) noexcept;

enum class OpKind : std::uint8_t { Insert = 0, Update = 1, Delete = 2 };

std::string_view to_string(OpKind k) noexcept;

// A captured change. Payload is the canonical row for Insert/Update and the
// canonical primary key for Delete.
struct OperationRecord {
  SiteId origin;
  std::uint64_t seq = 0;
  OpKind kind = OpKind::Insert;
  Subject subject = Subject::Files;
  Bytes payload;
  Timestamp committed_at;

  bool operator==(const OperationRecord&) const = default;
};

// Primary keys.
using FileKey = std::tuple<std::string, std::string, std::string>;  // lfn, host, path
using CostKey = std::pair<std::string, std::string>;                // from, to

template <class R>
struct RowTraits;

template <>
struct RowTraits<FileRecord> {
  using Key = FileKey;
  static constexpr Subject subject = Subject::Files;
  static Key key(const FileRecord& r) { return {r.lfn.str(), r.host, r.path}; }
};
template <>
struct RowTraits<HostRecord> {
  using Key = std::string;
  static constexpr Subject subject = Subject::Hosts;
  static Key key(const HostRecord& r) { return r.hostname; }
};
template <>
struct RowTraits<ClusterRecord> {
  using Key = std::string;
  static constexpr Subject subject = Subject::Clusters;
  static Key key(const ClusterRecord& r) { return r.name; }
};
template <>
struct RowTraits<SiteRecord> {
  using Key = std::string;
  static constexpr Subject subject = Subject::Sites;
  static Key key(const SiteRecord& r) { return r.site.id; }
};
template <>
struct RowTraits<CostRecord> {
  using Key = CostKey;
  static constexpr Subject subject = Subject::Costs;
  static Key key(const CostRecord& r) { return {r.from.id, r.to.id}; }
};

// Canonical encoding. Integers are big-endian fixed width, strings are
// u32-length-prefixed UTF-8, enums are one byte. Field order:
//   SiteId          id, ordinal(u32)
//   FileRecord      lfn, host, path, storage, production, size_bytes(u64),
//                   created_at(i64), origin
//   HostRecord      hostname, cluster, storage, origin
//   ClusterRecord   name, site
//   SiteRecord      site
//   CostRecord      from, to, cost.num(u64), cost.den(u64)
//   OperationRecord origin, seq(u64), kind, subject, payload(bytes), committed_at(i64)
void encode(Encoder& e, const SiteId& v);
void encode(Encoder& e, const FileRecord& v);
void encode(Encoder& e, const HostRecord& v);
void encode(Encoder& e, const ClusterRecord& v);
void encode(Encoder& e, const SiteRecord& v);
void encode(Encoder& e, const CostRecord& v);
void encode(Encoder& e, const Row& v);
void encode(Encoder& e, const OperationRecord& v);

void decode(Decoder& d, SiteId& v);
void decode(Decoder& d, FileRecord& v);
void decode(Decoder& d, HostRecord& v);
void decode(Decoder& d, ClusterRecord& v);
void decode(Decoder& d, SiteRecord& v);
void decode(Decoder& d, CostRecord& v);
void decode(Decoder& d, OperationRecord& v);

template <class T>
Bytes canonical_encode(const T& value) {
  Encoder e;
  encode(e, value);
  return e.take();
}

// Decodes a full buffer; trailing bytes are a decode error.
template <class T>
T canonical_decode(ByteView bytes) {
  Decoder d(bytes);
  T value{};
  decode(d, value);
  d.expect_end();
  return value;
}

Row decode_row(Subject subject, ByteView bytes);

Bytes encode_key(const FileKey& k);
Bytes encode_key(const std::string& k);
Bytes encode_key(const CostKey& k);

template <class K>
K decode_key(ByteView bytes);

// Registered topology with referential integrity host -> cluster -> site.
// Link costs default to 0 on the diagonal; off-diagonal entries must be set.
class Topology {
 public:
  struct Host {
    std::string hostname;
    std::string cluster;
    StorageClass storage = StorageClass::Disk;
  };

  void add_site(const SiteId& site);
  void add_cluster(const std::string& name, const std::string& site_id);
  void add_host(const std::string& hostname, const std::string& cluster, StorageClass storage);
  void set_cost(const std::string& from, const std::string& to, Cost cost);

  bool has_site(const std::string& id) const { return sites_.contains(id); }
  bool has_cluster(const std::string& name) const { return clusters_.contains(name); }
  std::optional<std::string> site_of_host(const std::string& hostname) const;
  std::optional<Cost> cost(const std::string& from, const std::string& to) const;
  bool costs_complete() const;

  const std::map<std::string, SiteId>& sites() const { return sites_; }
  const std::map<std::string, std::string>& clusters() const { return clusters_; }
  const std::map<std::string, Host>& hosts() const { return hosts_; }

  // Every host's cluster and every cluster's site exist.
  bool referentially_intact() const;

 private:
  std::map<std::string, SiteId> sites_;
  std::map<std::string, std::string> clusters_;  // cluster -> site id
  std::map<std::string, Host> hosts_;
  std::map<CostKey, Cost> costs_;
};

}  // namespace catalog
