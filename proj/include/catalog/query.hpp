#pragma once

#include <optional>
#include <string>
#include <vector>

#include "catalog/catalog.hpp"
#include "catalog/model.hpp"

namespace catalog {

struct ReplicaView {
  std::string lfn;
  std::string host;
  std::string path;
  StorageClass storage = StorageClass::Disk;
  std::string site;  // host -> cluster -> site; empty when the host is not registered
  SiteId origin;
  bool operator==(const ReplicaView&) const = default;
};

struct CostedReplica {
  ReplicaView replica;
  Cost cost;
  bool operator==(const CostedReplica&) const = default;
};

// Topology assembled from the replicated site, cluster, host and cost rows of
// every partition. Rows whose parent is missing are left out.
Topology topology_of(const Catalog& c);

// Results are ordered by (host, path, origin).
std::vector<ReplicaView> find_replicas(const Catalog& c, const LogicalFileName& lfn);
std::vector<ReplicaView> find_disk_replicas(const Catalog& c, const LogicalFileName& lfn);
// Smallest (host, path) among disk replicas at `site`. Throws UnknownSite.
std::optional<ReplicaView> find_local_disk_replica(const Catalog& c, const LogicalFileName& lfn,
                                                   const std::string& site);
// Sorted, duplicate free. Throw UnknownSite / UnknownCluster / InvalidArgument (empty tag).
std::vector<std::string> list_files_at_site(const Catalog& c, const std::string& site);
std::vector<Topology::Host> list_hosts_in_cluster(const Catalog& c, const std::string& cluster);
std::vector<std::string> list_files_by_production(const Catalog& c, const std::string& tag);
// argmin of cost(from_site, replica site); ties prefer Disk, then (host, path).
// Replicas without a known site or link cost are not candidates. Throws UnknownSite.
std::optional<CostedReplica> find_closest_replica(const Catalog& c, const LogicalFileName& lfn,
                                                  const std::string& from_site);

// --- output ---

enum class OutputFormat { Tsv, Json };

// One line per record, '\n' terminated. JSON lines keep the field order of the struct.
std::string format(const std::vector<ReplicaView>& rows, OutputFormat f);
std::string format(const std::optional<ReplicaView>& row, OutputFormat f);
std::string format(const std::optional<CostedReplica>& row, OutputFormat f);
std::string format(const std::vector<Topology::Host>& hosts, OutputFormat f);
std::string format_names(const std::vector<std::string>& names, OutputFormat f, const char* field = "lfn");

}  // namespace catalog
