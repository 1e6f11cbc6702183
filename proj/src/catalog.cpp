#include "catalog/catalog.hpp"

#include <algorithm>

#include "catalog/error.hpp"

namespace catalog {

namespace {

template <class R>
void put_row(Partition& p, const R& row, std::uint64_t seq) {
  p.table<R>().insert_or_assign(RowTraits<R>::key(row), Versioned<R>{row, seq});
}

template <class R>
void erase_key(Partition& p, ByteView key) {
  p.table<R>().erase(decode_key<typename RowTraits<R>::Key>(key));
}

template <class R>
bool has_key(const Partition& p, ByteView key) {
  return p.table<R>().contains(decode_key<typename RowTraits<R>::Key>(key));
}

template <class R, class Out>
void collect(const Partition& p, Out& out) {
  for (const auto& [key, v] : p.table<R>()) out.push_back(VersionedRow{Row{v.row}, v.seq});
}

}  // namespace

bool Partition::contains(Subject subject, ByteView key) const {
  switch (subject) {
    case Subject::Files: return has_key<FileRecord>(*this, key);
    case Subject::Hosts: return has_key<HostRecord>(*this, key);
    case Subject::Clusters: return has_key<ClusterRecord>(*this, key);
    case Subject::Sites: return has_key<SiteRecord>(*this, key);
    case Subject::Costs: return has_key<CostRecord>(*this, key);
  }
  return false;
}

bool Partition::contains(const Row& row) const {
  return std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        return table<R>().contains(RowTraits<R>::key(r));
      },
      row);
}

void apply_to(Partition& p, const OperationRecord& op) {
  if (op.kind == OpKind::Delete) {
    switch (op.subject) {
      case Subject::Files: erase_key<FileRecord>(p, op.payload); break;
      case Subject::Hosts: erase_key<HostRecord>(p, op.payload); break;
      case Subject::Clusters: erase_key<ClusterRecord>(p, op.payload); break;
      case Subject::Sites: erase_key<SiteRecord>(p, op.payload); break;
      case Subject::Costs: erase_key<CostRecord>(p, op.payload); break;
    }
    return;
  }
  Row row = decode_row(op.subject, op.payload);
  if (origin_of(row) != op.origin) {
    fail(Errc::OwnershipViolation, "operation from " + op.origin.id + " carries a row owned by " +
                                       origin_of(row).id);
  }
  std::visit([&](const auto& r) { put_row(p, r, op.seq); }, row);
}

std::vector<VersionedRow> sorted_rows(const Partition& p) {
  std::vector<VersionedRow> out;
  out.reserve(p.size());
  collect<FileRecord>(p, out);
  collect<HostRecord>(p, out);
  collect<ClusterRecord>(p, out);
  collect<SiteRecord>(p, out);
  collect<CostRecord>(p, out);
  std::sort(out.begin(), out.end(), [](const VersionedRow& a, const VersionedRow& b) {
    if (a.seq != b.seq) return a.seq < b.seq;
    return a.row.index() < b.row.index();
  });
  return out;
}

Partition& Catalog::partition(const SiteId& origin) {
  auto [it, inserted] = parts_.try_emplace(origin);
  if (inserted) it->second.origin = origin;
  return it->second;
}

const Partition* Catalog::find(const SiteId& origin) const {
  auto it = parts_.find(origin);
  return it == parts_.end() ? nullptr : &it->second;
}

const Partition* Catalog::find(const std::string& origin_id) const {
  for (const auto& [site, part] : parts_) {
    if (site.id == origin_id) return &part;
  }
  return nullptr;
}

void Catalog::put(const Row& row, std::uint64_t seq) {
  Partition& p = partition(origin_of(row));
  std::visit([&](const auto& r) { put_row(p, r, seq); }, row);
}

void Catalog::replace(Partition p) {
  SiteId origin = p.origin;
  parts_.insert_or_assign(origin, std::move(p));
}

std::size_t Catalog::row_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [site, part] : parts_) n += part.size();
  return n;
}

std::vector<VersionedRow> Catalog::sorted_rows() const {
  std::vector<VersionedRow> out;
  out.reserve(row_count());
  // parts_ is ordered by (ordinal, id) already.
  for (const auto& [site, part] : parts_) {
    auto rows = catalog::sorted_rows(part);
    std::move(rows.begin(), rows.end(), std::back_inserter(out));
  }
  return out;
}

Sha256 digest_rows(const std::vector<VersionedRow>& sorted) {
  Sha256Builder h;
  Encoder e;
  for (const auto& r : sorted) {
    e = Encoder{};
    encode(e, origin_of(r.row));
    e.u64(r.seq);
    e.u8(static_cast<std::uint8_t>(r.row.index()));
    Encoder body;
    encode(body, r.row);
    e.bytes(body.buffer());
    h.update(e.buffer());
  }
  return h.finish();
}

Sha256 digest(const Catalog& c) { return digest_rows(c.sorted_rows()); }

Sha256 digest(const Partition& p) { return digest_rows(sorted_rows(p)); }

}  // namespace catalog
