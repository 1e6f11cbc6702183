#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "catalog/digest.hpp"
#include "catalog/model.hpp"

namespace catalog {

// A row together with the sequence number of the operation that last wrote it.
template <class R>
struct Versioned {
  R row;
  std::uint64_t seq = 0;
  bool operator==(const Versioned&) const = default;
};

// All rows owned by one origin site.
struct Partition {
  SiteId origin;
  std::map<FileKey, Versioned<FileRecord>> files;
  std::map<std::string, Versioned<HostRecord>> hosts;
  std::map<std::string, Versioned<ClusterRecord>> clusters;
  std::map<std::string, Versioned<SiteRecord>> sites;
  std::map<CostKey, Versioned<CostRecord>> costs;

  template <class R>
  auto& table() {
    if constexpr (std::is_same_v<R, FileRecord>) return files;
    else if constexpr (std::is_same_v<R, HostRecord>) return hosts;
    else if constexpr (std::is_same_v<R, ClusterRecord>) return clusters;
    else if constexpr (std::is_same_v<R, SiteRecord>) return sites;
    else return costs;
  }
  template <class R>
  const auto& table() const {
    return const_cast<Partition*>(this)->table<R>();
  }

  std::size_t size() const noexcept {
    return files.size() + hosts.size() + clusters.size() + sites.size() + costs.size();
  }
  bool empty() const noexcept { return size() == 0; }

  // True when a row with this subject and encoded key exists.
  bool contains(Subject subject, ByteView key) const;
  bool contains(const Row& row) const;

  bool operator==(const Partition&) const = default;
};

struct VersionedRow {
  Row row;
  std::uint64_t seq = 0;
  bool operator==(const VersionedRow&) const = default;
};

// Rows sorted by (origin ordinal, seq); the order that digests are computed in.
std::vector<VersionedRow> sorted_rows(const Partition& p);

// Folds an operation into a partition. Insert and Update replace the row
// under its key; Delete of an absent key is a no-op.
void apply_to(Partition& p, const OperationRecord& op);

// Data table view across every origin partition.
class Catalog {
 public:
  Partition& partition(const SiteId& origin);
  const Partition* find(const SiteId& origin) const;
  const Partition* find(const std::string& origin_id) const;
  const std::map<SiteId, Partition>& partitions() const noexcept { return parts_; }

  void apply(const OperationRecord& op) { apply_to(partition(op.origin), op); }
  void put(const Row& row, std::uint64_t seq);
  void replace(Partition p);
  void erase(const SiteId& origin) { parts_.erase(origin); }

  std::size_t row_count() const noexcept;
  std::vector<VersionedRow> sorted_rows() const;

  bool operator==(const Catalog&) const = default;

 private:
  std::map<SiteId, Partition> parts_;
};

// SHA-256 over (origin, seq, subject, row) for each row in (origin ordinal, seq) order.
Sha256 digest_rows(const std::vector<VersionedRow>& sorted);
Sha256 digest(const Catalog& c);
Sha256 digest(const Partition& p);

}  // namespace catalog
