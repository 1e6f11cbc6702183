#include "catalog/query.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "catalog/error.hpp"

namespace catalog {

namespace {

using Json = nlohmann::ordered_json;

std::string dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

bool by_location(const ReplicaView& a, const ReplicaView& b) {
  return std::tie(a.host, a.path, a.origin) < std::tie(b.host, b.path, b.origin);
}

template <class F>
void each_file(const Catalog& c, F&& f) {
  for (const auto& [origin, part] : c.partitions()) {
    for (const auto& [key, v] : part.files) f(v.row);
  }
}

ReplicaView view_of(const FileRecord& r, const Topology& topo) {
  return {r.lfn.str(), r.host, r.path, r.storage, topo.site_of_host(r.host).value_or(""), r.origin};
}

void require_site(const Topology& topo, const std::string& site) {
  if (!topo.has_site(site)) fail(Errc::UnknownSite, "unknown site " + site);
}

}  // namespace

Topology topology_of(const Catalog& c) {
  Topology topo;
  auto lenient = [](auto&& f) {
    try {
      f();
    } catch (const Error&) {
    }
  };
  for (const auto& [origin, part] : c.partitions()) {
    lenient([&] { topo.add_site(origin); });
    for (const auto& [k, v] : part.sites) lenient([&] { topo.add_site(v.row.site); });
  }
  for (const auto& [origin, part] : c.partitions()) {
    for (const auto& [k, v] : part.clusters) lenient([&] { topo.add_cluster(v.row.name, v.row.site.id); });
  }
  for (const auto& [origin, part] : c.partitions()) {
    for (const auto& [k, v] : part.hosts) lenient([&] { topo.add_host(v.row.hostname, v.row.cluster, v.row.storage); });
    for (const auto& [k, v] : part.costs) lenient([&] { topo.set_cost(v.row.from.id, v.row.to.id, v.row.cost); });
  }
  return topo;
}

std::vector<ReplicaView> find_replicas(const Catalog& c, const LogicalFileName& lfn) {
  Topology topo = topology_of(c);
  std::vector<ReplicaView> out;
  each_file(c, [&](const FileRecord& r) {
    if (r.lfn == lfn) out.push_back(view_of(r, topo));
  });
  std::sort(out.begin(), out.end(), by_location);
  return out;
}

std::vector<ReplicaView> find_disk_replicas(const Catalog& c, const LogicalFileName& lfn) {
  auto all = find_replicas(c, lfn);
  std::erase_if(all, [](const ReplicaView& r) { return r.storage != StorageClass::Disk; });
  return all;
}

std::optional<ReplicaView> find_local_disk_replica(const Catalog& c, const LogicalFileName& lfn,
                                                   const std::string& site) {
  require_site(topology_of(c), site);
  for (auto& r : find_disk_replicas(c, lfn)) {
    if (r.site == site) return r;
  }
  return std::nullopt;
}

std::vector<std::string> list_files_at_site(const Catalog& c, const std::string& site) {
  Topology topo = topology_of(c);
  require_site(topo, site);
  std::set<std::string> names;
  each_file(c, [&](const FileRecord& r) {
    if (topo.site_of_host(r.host) == site) names.insert(r.lfn.str());
  });
  return {names.begin(), names.end()};
}

std::vector<Topology::Host> list_hosts_in_cluster(const Catalog& c, const std::string& cluster) {
  Topology topo = topology_of(c);
  if (!topo.has_cluster(cluster)) fail(Errc::UnknownCluster, "unknown cluster " + cluster);
  std::vector<Topology::Host> out;
  for (const auto& [name, host] : topo.hosts()) {
    if (host.cluster == cluster) out.push_back(host);
  }
  return out;
}

std::vector<std::string> list_files_by_production(const Catalog& c, const std::string& tag) {
  if (tag.empty()) fail(Errc::InvalidArgument, "empty production tag");
  std::set<std::string> names;
  each_file(c, [&](const FileRecord& r) {
    if (r.production == tag) names.insert(r.lfn.str());
  });
  return {names.begin(), names.end()};
}

std::optional<CostedReplica> find_closest_replica(const Catalog& c, const LogicalFileName& lfn,
                                                  const std::string& from_site) {
  Topology topo = topology_of(c);
  require_site(topo, from_site);
  std::optional<CostedReplica> best;
  each_file(c, [&](const FileRecord& r) {
    if (r.lfn != lfn) return;
    ReplicaView v = view_of(r, topo);
    if (v.site.empty()) return;
    auto cost = topo.cost(from_site, v.site);
    if (!cost) return;
    CostedReplica cand{std::move(v), *cost};
    auto rank = [](const CostedReplica& x) {
      return std::make_tuple(x.cost, x.replica.storage, std::cref(x.replica.host), std::cref(x.replica.path),
                             std::cref(x.replica.origin));
    };
    if (!best || rank(cand) < rank(*best)) best = std::move(cand);
  });
  return best;
}

// --- output ---

namespace {

Json to_json(const ReplicaView& r) {
  Json j;
  j["lfn"] = r.lfn;
  j["host"] = r.host;
  j["path"] = r.path;
  j["storage"] = std::string(to_string(r.storage));
  j["site"] = r.site;
  j["origin"] = r.origin.id;
  return j;
}

std::string tsv(const ReplicaView& r) {
  return r.lfn + '\t' + r.host + '\t' + r.path + '\t' + std::string(to_string(r.storage)) + '\t' +
         (r.site.empty() ? "-" : r.site) + '\t' + r.origin.id;
}

}  // namespace

std::string format(const std::vector<ReplicaView>& rows, OutputFormat f) {
  std::string out;
  for (const auto& r : rows) out += (f == OutputFormat::Tsv ? tsv(r) : dump(to_json(r))) + '\n';
  return out;
}

std::string format(const std::optional<ReplicaView>& row, OutputFormat f) {
  return row ? format(std::vector{*row}, f) : std::string();
}

std::string format(const std::optional<CostedReplica>& row, OutputFormat f) {
  if (!row) return {};
  if (f == OutputFormat::Tsv) return tsv(row->replica) + '\t' + row->cost.str() + '\n';
  Json j = to_json(row->replica);
  j["cost"] = row->cost.str();
  return dump(j) + '\n';
}

std::string format(const std::vector<Topology::Host>& hosts, OutputFormat f) {
  std::string out;
  for (const auto& h : hosts) {
    if (f == OutputFormat::Tsv) {
      out += h.hostname + '\t' + h.cluster + '\t' + std::string(to_string(h.storage)) + '\n';
    } else {
      Json j;
      j["hostname"] = h.hostname;
      j["cluster"] = h.cluster;
      j["storage"] = std::string(to_string(h.storage));
      out += dump(j) + '\n';
    }
  }
  return out;
}

std::string format_names(const std::vector<std::string>& names, OutputFormat f, const char* field) {
  std::string out;
  for (const auto& n : names) {
    if (f == OutputFormat::Tsv) {
      out += n + '\n';
    } else {
      Json j;
      j[field] = n;
      out += dump(j) + '\n';
    }
  }
  return out;
}

}  // namespace catalog
