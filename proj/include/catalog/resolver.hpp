#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "catalog/query.hpp"

namespace catalog {

inline constexpr const char* kSearchPathEnv = "CATALOG_SEARCH_PATH";

enum class ReservedWord { LocalDisk, Closest, Any };

std::string_view to_string(ReservedWord w) noexcept;  // DB_LOCAL_DISK, DB_CLOSEST, DB_ANY

struct LocalDir {
  std::string path;
  bool operator==(const LocalDir&) const = default;
};

using SearchElement = std::variant<LocalDir, ReservedWord>;
using SearchPath = std::vector<SearchElement>;

// Colon separated; '/'-prefixed tokens are directories, the rest must be
// reserved words. Throws EmptyPath / UnknownToken.
SearchPath parse_search_path(std::string_view raw);

struct Resolution {
  enum class Source { Directory, Catalog };
  std::string lfn;
  std::string physical_path;
  Source source = Source::Directory;
  std::optional<ReplicaView> replica;
  bool operator==(const Resolution&) const = default;
};

// First element that yields a hit wins. Throws NotFound.
Resolution resolve(const LogicalFileName& lfn, const SearchPath& path, const Catalog& catalog,
                   const std::string& site);

}  // namespace catalog
