#include "catalog/resolver.hpp"

#include <filesystem>

#include "catalog/error.hpp"

namespace catalog {

std::string_view to_string(ReservedWord w) noexcept {
  switch (w) {
    case ReservedWord::LocalDisk: return "DB_LOCAL_DISK";
    case ReservedWord::Closest: return "DB_CLOSEST";
    case ReservedWord::Any: return "DB_ANY";
  }
  return "?";
}

SearchPath parse_search_path(std::string_view raw) {
  if (raw.empty()) fail(Errc::EmptyPath, "search path is empty");
  SearchPath out;
  std::size_t start = 0;
  while (true) {
    std::size_t end = raw.find(':', start);
    std::string_view tok = raw.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!tok.empty() && tok.front() == '/') {
      out.push_back(LocalDir{std::string(tok)});
    } else if (tok == "DB_LOCAL_DISK") {
      out.push_back(ReservedWord::LocalDisk);
    } else if (tok == "DB_CLOSEST") {
      out.push_back(ReservedWord::Closest);
    } else if (tok == "DB_ANY") {
      out.push_back(ReservedWord::Any);
    } else {
      fail(Errc::UnknownToken, "search path element '" + std::string(tok) + "' is neither an absolute directory nor a reserved word");
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

Resolution resolve(const LogicalFileName& lfn, const SearchPath& path, const Catalog& catalog,
                   const std::string& site) {
  auto hit = [&](const ReplicaView& r) {
    return Resolution{lfn.str(), r.path, Resolution::Source::Catalog, r};
  };
  // A site the catalog has not heard of yet has no local or closest replicas.
  bool site_known = topology_of(catalog).has_site(site);
  for (const SearchElement& el : path) {
    if (const auto* dir = std::get_if<LocalDir>(&el)) {
      std::filesystem::path p = std::filesystem::path(dir->path) / lfn.str();
      std::error_code ec;
      if (std::filesystem::exists(p, ec)) return Resolution{lfn.str(), p.string(), Resolution::Source::Directory, {}};
      continue;
    }
    switch (std::get<ReservedWord>(el)) {
      case ReservedWord::LocalDisk:
        if (!site_known) break;
        if (auto r = find_local_disk_replica(catalog, lfn, site)) return hit(*r);
        break;
      case ReservedWord::Closest:
        if (!site_known) break;
        if (auto r = find_closest_replica(catalog, lfn, site)) return hit(r->replica);
        break;
      case ReservedWord::Any:
        if (auto all = find_replicas(catalog, lfn); !all.empty()) return hit(all.front());
        break;
    }
  }
  fail(Errc::NotFound, "no element of the search path resolves " + lfn.str());
}

}  // namespace catalog
