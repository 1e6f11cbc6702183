#include "catalog/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "catalog/error.hpp"
#include "catalog/query.hpp"
#include "catalog/replication.hpp"
#include "catalog/resolver.hpp"
#include "catalog/store.hpp"
#include "catalog/tcp.hpp"

namespace catalog::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::chrono::nanoseconds parse_duration(std::string_view text) {
  std::size_t digits = 0;
  while (digits < text.size() && text[digits] >= '0' && text[digits] <= '9') ++digits;
  if (digits == 0 || digits > 12) fail(Errc::InvalidArgument, "bad duration '" + std::string(text) + "'");
  std::int64_t n = std::stoll(std::string(text.substr(0, digits)));
  std::string_view unit = text.substr(digits);
  std::chrono::nanoseconds d;
  if (unit.empty() || unit == "s") {
    d = std::chrono::seconds(n);
  } else if (unit == "ms") {
    d = std::chrono::milliseconds(n);
  } else if (unit == "m") {
    d = std::chrono::minutes(n);
  } else if (unit == "h") {
    d = std::chrono::hours(n);
  } else {
    fail(Errc::InvalidArgument, "bad duration unit in '" + std::string(text) + "'");
  }
  return d;
}

namespace {

constexpr const char* kHomeEnv = "CATALOG_HOME";
constexpr const char* kFederationEnv = "CATALOG_FEDERATION";
constexpr std::uint16_t kDefaultPort = 7474;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

[[noreturn]] void usage(const std::string& msg) { fail(Errc::InvalidArgument, msg); }

std::string trim(std::string s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(s[i])) ++i;
  return s.substr(i);
}

std::map<std::string, std::string> load_conf(const fs::path& path) {
  static const std::set<std::string> keys{"home",      "site", "ordinal", "federation", "search_path",
                                          "tick",      "port", "bind",    "backoff_max", "format"};
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot read " + path.string());
  std::map<std::string, std::string> conf;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) usage(where + "expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (!keys.contains(key)) usage(where + "unknown key '" + key + "'");
    conf[key] = trim(line.substr(eq + 1));
  }
  return conf;
}

std::uint32_t parse_u32(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used == s.size() && v <= UINT32_MAX) return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
  }
  usage(std::string("bad ") + what + " '" + s + "'");
}

// Advisory lock on the store root: shared for readers, exclusive for writers.
class HomeLock {
 public:
  HomeLock(const fs::path& home, bool exclusive) {
    std::error_code ec;
    fs::create_directories(home, ec);
    fd_ = ::open((home / "lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(Errc::Io, "cannot open lock file in " + home.string());
    while (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        fail(Errc::Io, "cannot lock " + home.string());
      }
    }
  }
  ~HomeLock() { ::close(fd_); }
  HomeLock(const HomeLock&) = delete;
  HomeLock& operator=(const HomeLock&) = delete;

 private:
  int fd_ = -1;
};

// Global flags as parsed; the Settings below layer env and catalog.conf under them.
struct Flags {
  std::string home, site, ordinal, federation, config, format, search_path;
  bool include_pending = false;
};

class Settings {
 public:
  Settings(const Flags& flags, const Env& env) : flags_(flags), env_(env) {
    fs::path conf_path;
    if (!flags.config.empty()) {
      conf_path = flags.config;
    } else {
      std::string home = !flags.home.empty() ? flags.home : env(kHomeEnv).value_or("");
      if (!home.empty() && fs::exists(fs::path(home) / "catalog.conf")) {
        conf_path = fs::path(home) / "catalog.conf";
      } else if (fs::exists("catalog.conf")) {
        conf_path = "catalog.conf";
      }
    }
    if (!conf_path.empty()) conf_ = load_conf(conf_path);

    std::string home = pick(flags.home, kHomeEnv, "home").value_or("");
    if (home.empty()) usage("no catalog home: pass --home or set CATALOG_HOME");
    home_ = home;

    std::string fmt = pick(flags.format, nullptr, "format").value_or("tsv");
    if (fmt == "tsv") {
      format_ = OutputFormat::Tsv;
    } else if (fmt == "json") {
      format_ = OutputFormat::Json;
    } else {
      usage("unknown format '" + fmt + "'");
    }
  }

  // flag > env > catalog.conf
  std::optional<std::string> pick(const std::string& flag, const char* env_name, const char* conf_key) const {
    if (!flag.empty()) return flag;
    if (env_name != nullptr) {
      if (auto v = env_(env_name)) return v;
    }
    if (auto it = conf_.find(conf_key); it != conf_.end() && !it->second.empty()) return it->second;
    return std::nullopt;
  }

  const fs::path& home() const { return home_; }
  OutputFormat format() const { return format_; }
  bool include_pending() const { return flags_.include_pending; }
  const Flags& flags() const { return flags_; }

  const FederationConfig* federation() {
    if (!federation_) {
      auto path = pick(flags_.federation, kFederationEnv, "federation");
      if (!path) return nullptr;
      federation_ = load_federation(*path);
    }
    return &*federation_;
  }

  FederationConfig& require_federation() {
    if (federation() == nullptr) usage("no federation config: pass --federation or set CATALOG_FEDERATION");
    return *federation_;
  }

  // The site file wins; otherwise --site with an ordinal from the flags, the
  // config file, or the federation entry.
  SiteId identity() {
    fs::path site_file = home_ / "site";
    if (fs::exists(site_file)) {
      std::ifstream in(site_file);
      SiteId stored;
      if (!(in >> stored.ordinal >> stored.id)) fail(Errc::CorruptLog, "malformed site file " + site_file.string());
      if (auto s = pick(flags_.site, nullptr, "site"); s && *s != stored.id) {
        fail(Errc::SiteMismatch, "store at " + home_.string() + " belongs to site " + stored.id + ", not " + *s);
      }
      return stored;
    }
    auto site = pick(flags_.site, nullptr, "site");
    if (!site) usage("no store at " + home_.string() + ": pass --site to create one");
    validate_site_token(*site);
    if (auto ord = pick(flags_.ordinal, nullptr, "ordinal")) return SiteId{*site, parse_u32(*ord, "ordinal")};
    if (const FederationConfig* fed = federation()) {
      if (const Peer* p = fed->find(*site)) return p->site;
    }
    usage("no ordinal for site " + *site + ": pass --ordinal or list the site in the federation");
  }

  std::unique_ptr<Store> open_store() {
    StoreOptions o;
    o.root = home_;
    return Store::open(std::move(o), identity());
  }

 private:
  Flags flags_;
  const Env& env_;
  std::map<std::string, std::string> conf_;
  fs::path home_;
  OutputFormat format_ = OutputFormat::Tsv;
  std::optional<FederationConfig> federation_;
};

// The peer list for `self`; the federation must list it under the same ordinal.
std::vector<Peer> peers_for(const FederationConfig& fed, const SiteId& self) {
  const Peer* me = fed.find(self.id);
  if (me == nullptr) usage("site " + self.id + " is not in the federation config");
  if (me->site.ordinal != self.ordinal) {
    usage("site " + self.id + " has ordinal " + std::to_string(me->site.ordinal) + " in the federation, " +
          std::to_string(self.ordinal) + " in the store");
  }
  return fed.peers_of(self.id);
}

template <class F>
decltype(auto) with_view(const Store& store, bool pending, F&& f) {
  if (pending) return f(static_cast<const Catalog&>(store.pending_view()));
  return store.read(std::forward<F>(f));
}

// --- status file: one JSON object per peer ---

json report_json(const SyncReport& r, std::uint32_t failures) {
  json j;
  j["peer"] = r.peer.id;
  j["outcome"] = std::string(to_string(r.outcome));
  j["pulled"] = r.total_pulled();
  j["records"] = r.records_transferred;
  j["frames"] = r.frames;
  j["bytes"] = r.bytes;
  j["duration_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(r.duration).count();
  j["failures"] = failures;
  j["error"] = r.error;
  j["at_us"] = now_utc().micros;
  return j;
}

void write_status(const fs::path& home, const std::vector<json>& rows) {
  fs::path tmp = home / "status.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& r : rows) out << r.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    if (!out) fail(Errc::Io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, home / "status", ec);
  if (ec) fail(Errc::Io, "cannot replace status file: " + ec.message());
}

std::vector<json> read_status(const fs::path& home) {
  std::vector<json> rows;
  std::ifstream in(home / "status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (!j.is_discarded()) rows.push_back(std::move(j));
  }
  return rows;
}

// Size and mtime of every persisted file; changes when another process wrote.
std::string disk_stamp(const fs::path& home) {
  std::vector<std::string> parts;
  auto add = [&](const fs::path& p) {
    std::error_code ec;
    auto size = fs::file_size(p, ec);
    if (ec) return;
    auto mtime = fs::last_write_time(p, ec).time_since_epoch().count();
    parts.push_back(p.string() + ":" + std::to_string(size) + ":" + std::to_string(mtime));
  };
  for (const char* sub : {"log", "snap"}) {
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(home / sub, ec)) add(e.path());
  }
  add(home / "cursors");
  std::sort(parts.begin(), parts.end());
  std::string s;
  for (const auto& p : parts) s += p + "\n";
  return s;
}

std::string tsv_or_dash(const std::string& s) { return s.empty() ? "-" : s; }

// --- commands ---

struct FileArgs {
  std::string lfn, host, path, storage = "disk", production;
  std::uint64_t size = 0;
};

int cmd_add_file(Settings& s, const FileArgs& a, std::ostream& out) {
  FileRecord r;
  r.lfn = validate_lfn(a.lfn);
  if (a.host.empty()) usage("--host must not be empty");
  if (a.path.empty()) usage("--path must not be empty");
  r.host = a.host;
  r.path = a.path;
  try {
    r.storage = parse_storage(a.storage);
  } catch (const Error& e) {
    usage(e.what());
  }
  r.production = a.production;
  r.size_bytes = a.size;
  r.created_at = now_utc();
  HomeLock lock(s.home(), true);
  auto store = s.open_store();
  r.origin = store->site();
  out << store->write_local(OpKind::Insert, r) << '\n';
  return kOk;
}

int cmd_delete_file(Settings& s, const FileArgs& a, std::ostream& out) {
  FileRecord r;
  r.lfn = validate_lfn(a.lfn);
  r.host = a.host;
  r.path = a.path;
  HomeLock lock(s.home(), true);
  auto store = s.open_store();
  r.origin = store->site();
  out << store->write_local(OpKind::Delete, r) << '\n';
  return kOk;
}

struct QueryArgs {
  std::string kind, arg, site;
};

int cmd_query(Settings& s, const QueryArgs& q, std::ostream& out) {
  HomeLock lock(s.home(), false);
  auto store = s.open_store();
  const OutputFormat f = s.format();
  const std::string here = q.site.empty() ? store->site().id : q.site;
  std::string text = with_view(*store, s.include_pending(), [&](const Catalog& c) -> std::string {
    if (q.kind == "replicas") return format(find_replicas(c, validate_lfn(q.arg)), f);
    if (q.kind == "disk") return format(find_disk_replicas(c, validate_lfn(q.arg)), f);
    if (q.kind == "local") return format(find_local_disk_replica(c, validate_lfn(q.arg), here), f);
    if (q.kind == "closest") return format(find_closest_replica(c, validate_lfn(q.arg), here), f);
    if (q.kind == "site") return format_names(list_files_at_site(c, q.arg), f);
    if (q.kind == "cluster") return format(list_hosts_in_cluster(c, q.arg), f);
    return format_names(list_files_by_production(c, q.arg), f);
  });
  out << text;
  return text.empty() ? kEmpty : kOk;
}

int cmd_resolve(Settings& s, const std::string& lfn, const std::string& site, std::ostream& out) {
  auto raw = s.pick(s.flags().search_path, kSearchPathEnv, "search_path");
  if (!raw) fail(Errc::EmptyPath, "no search path: pass --search-path or set CATALOG_SEARCH_PATH");
  SearchPath path = parse_search_path(*raw);
  LogicalFileName name = validate_lfn(lfn);
  HomeLock lock(s.home(), false);
  auto store = s.open_store();
  const std::string here = site.empty() ? store->site().id : site;
  Resolution r = with_view(*store, s.include_pending(), [&](const Catalog& c) { return resolve(name, path, c, here); });
  const char* source = r.source == Resolution::Source::Directory ? "directory" : "catalog";
  if (s.format() == OutputFormat::Tsv) {
    out << r.physical_path << '\t' << source << '\n';
  } else {
    json j;
    j["lfn"] = r.lfn;
    j["path"] = r.physical_path;
    j["source"] = source;
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  return kOk;
}

void print_reports(const std::vector<SyncReport>& reports, OutputFormat f, std::ostream& out) {
  for (const auto& r : reports) {
    if (f == OutputFormat::Json) {
      out << report_json(r, r.ok() ? 0 : 1).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    } else {
      out << r.peer.id << '\t' << to_string(r.outcome) << '\t' << r.total_pulled() << '\t' << r.records_transferred
          << '\t' << tsv_or_dash(r.error) << '\n';
    }
  }
}

int cmd_sync_now(Settings& s, std::ostream& out, std::ostream& err) {
  HomeLock lock(s.home(), true);
  auto store = s.open_store();
  std::size_t applied = store->apply_buffer();
  const FederationConfig* fed = s.federation();
  if (fed == nullptr) {
    err << "sync-now: no federation config, applied " << applied << " buffered ops only\n";
    return kOk;
  }
  TcpTransport transport;
  auto reports = sync_round(*store, transport, peers_for(*fed, store->site()), fed->digest);
  std::vector<json> rows;
  for (const auto& r : reports) rows.push_back(report_json(r, r.ok() ? 0 : 1));
  write_status(s.home(), rows);
  print_reports(reports, s.format(), out);
  bool all_ok = std::all_of(reports.begin(), reports.end(), [](const SyncReport& r) { return r.ok(); });
  return all_ok ? kOk : kFailure;
}

int cmd_add_site(Settings& s, const std::string& from, std::ostream& out) {
  FederationConfig& fed = s.require_federation();
  HomeLock lock(s.home(), true);
  auto store = s.open_store();
  peers_for(fed, store->site());
  const Peer* donor = fed.find(from);
  if (donor == nullptr) usage("donor " + from + " is not in the federation config");
  if (donor->site == store->site()) usage("a site cannot bootstrap from itself");
  if (store->local_high_water() != 0 || store->read([](const Catalog& c) { return c.row_count(); }) != 0) {
    usage("store at " + s.home().string() + " is not empty");
  }
  TcpTransport transport;
  BootstrapReport b = bootstrap_from(*store, transport, *donor, fed.digest);
  write_status(s.home(), {report_json(b.final_sync, 0)});
  if (s.format() == OutputFormat::Json) {
    json j;
    j["donor"] = donor->site.id;
    j["snapshot_rows"] = b.snapshot_rows;
    j["catchup_rounds"] = b.catchup_rounds;
    j["catchup_ops"] = b.catchup_ops;
    j["final_pulled"] = b.final_sync.total_pulled();
    out << j.dump() << '\n';
  } else {
    out << "donor\t" << donor->site.id << "\nsnapshot_rows\t" << b.snapshot_rows << "\ncatchup_rounds\t"
        << b.catchup_rounds << "\ncatchup_ops\t" << b.catchup_ops << "\nfinal_pulled\t"
        << b.final_sync.total_pulled() << '\n';
  }
  return kOk;
}

int cmd_fsck(Settings& s, std::ostream& out) {
  HomeLock lock(s.home(), false);
  auto store = s.open_store();
  std::vector<std::vector<std::string>> findings;
  store->read([&](const Catalog& c) {
    Topology topo = topology_of(c);
    std::set<std::string> clusters;
    for (const auto& [origin, p] : c.partitions()) {
      for (const auto& [name, v] : p.clusters) {
        clusters.insert(name);
        if (!topo.has_site(v.row.site.id)) findings.push_back({"dangling-site", name, v.row.site.id});
      }
    }
    for (const auto& [origin, p] : c.partitions()) {
      for (const auto& [name, v] : p.hosts) {
        if (!clusters.contains(v.row.cluster)) findings.push_back({"dangling-cluster", name, v.row.cluster});
      }
      for (const auto& [key, v] : p.files) {
        if (!topo.site_of_host(v.row.host)) {
          findings.push_back({"dangling-host", v.row.lfn.str(), v.row.host, v.row.path, origin.id});
        }
      }
    }
  });
  std::size_t pending = store->queue_depth();
  if (pending == 0) {
    auto data = store->read([&](const Catalog& c) {
      const Partition* p = c.find(store->site());
      return p ? sorted_rows(*p) : std::vector<VersionedRow>{};
    });
    if (sorted_rows(store->buffer()) != data) findings.push_back({"divergence", store->site().id});
  }
  for (const auto& f : findings) {
    if (s.format() == OutputFormat::Json) {
      static const std::map<std::string, std::vector<const char*>> fields{
          {"dangling-site", {"cluster", "site"}},
          {"dangling-cluster", {"host", "cluster"}},
          {"dangling-host", {"lfn", "host", "path", "origin"}},
          {"divergence", {"site"}}};
      json j;
      j["check"] = f[0];
      const auto& names = fields.at(f[0]);
      for (std::size_t i = 1; i < f.size(); ++i) j[names[i - 1]] = f[i];
      out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    } else {
      for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "\t" : "") << f[i];
      out << '\n';
    }
  }
  return findings.empty() ? kOk : kEmpty;
}

int cmd_status(Settings& s, std::ostream& out) {
  HomeLock lock(s.home(), false);
  auto store = s.open_store();
  auto status = read_status(s.home());
  if (s.format() == OutputFormat::Json) {
    json j;
    j["site"] = store->site().id;
    j["ordinal"] = store->site().ordinal;
    j["high_water"] = store->local_high_water();
    j["queue_depth"] = store->queue_depth();
    json cursors = json::object();
    for (const auto& [origin, seq] : store->cursors()) cursors[origin.id] = seq;
    j["cursors"] = cursors;
    j["peers"] = status;
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    return kOk;
  }
  out << "site\t" << store->site().id << '\t' << store->site().ordinal << '\n';
  out << "high_water\t" << store->local_high_water() << '\n';
  out << "queue_depth\t" << store->queue_depth() << '\n';
  for (const auto& [origin, seq] : store->cursors()) {
    out << "cursor\t" << origin.id << '\t' << origin.ordinal << '\t' << seq << '\n';
  }
  for (const auto& r : status) {
    out << "peer\t" << r.value("peer", "?") << '\t' << r.value("outcome", "?") << '\t' << r.value("pulled", 0) << '\t'
        << r.value("failures", 0) << '\t' << tsv_or_dash(r.value("error", "")) << '\n';
  }
  return kOk;
}

struct TopologyArgs {
  std::string kind, name, cluster, storage = "disk", value;
  bool remove = false;
};

int cmd_topology(Settings& s, const TopologyArgs& t, std::ostream& out) {
  HomeLock lock(s.home(), true);
  auto store = s.open_store();
  const SiteId& self = store->site();
  Row row;
  if (t.kind == "site") {
    row = SiteRecord{self};
  } else if (t.kind == "cluster") {
    validate_site_token(t.name);
    row = ClusterRecord{t.name, self};
  } else if (t.kind == "host") {
    if (t.name.empty()) usage("host name must not be empty");
    if (!t.remove && t.cluster.empty()) usage("--cluster is required");
    StorageClass st = StorageClass::Disk;
    try {
      st = parse_storage(t.storage);
    } catch (const Error& e) {
      usage(e.what());
    }
    row = HostRecord{t.name, t.cluster, st, self};
  } else {
    Topology topo = topology_of(store->pending_view());
    std::optional<SiteId> to;
    if (auto it = topo.sites().find(t.name); it != topo.sites().end()) to = it->second;
    if (!to && s.federation() != nullptr) {
      if (const Peer* p = s.federation()->find(t.name)) to = p->site;
    }
    if (!to) fail(Errc::UnknownSite, "unknown site " + t.name);
    Cost cost;
    if (!t.remove) {
      try {
        cost = Cost::parse(t.value);
      } catch (const Error& e) {
        usage(e.what());
      }
    }
    row = CostRecord{self, *to, cost};
  }
  SequenceNumber seq;
  if (t.remove) {
    seq = store->write_local(OpKind::Delete, row);
  } else {
    try {
      seq = store->write_local(OpKind::Insert, row);
    } catch (const Error& e) {
      if (e.code() != Errc::DuplicateKey) throw;
      seq = store->write_local(OpKind::Update, row);
    }
  }
  out << seq << '\n';
  return kOk;
}

struct ServeArgs {
  std::string tick, port, backoff_max, bind;
};

int cmd_serve(Settings& s, const ServeArgs& a, std::ostream& err) {
  FederationConfig& fed = s.require_federation();
  RetryPolicy policy;
  policy.interval = parse_duration(s.pick(a.tick, nullptr, "tick").value_or("30s"));
  policy.max_backoff = parse_duration(s.pick(a.backoff_max, nullptr, "backoff_max").value_or("10m"));
  std::string bind = s.pick(a.bind, nullptr, "bind").value_or("127.0.0.1");

  std::shared_ptr<Store> current;
  std::string stamp;
  {
    HomeLock lock(s.home(), true);
    current = s.open_store();
    stamp = disk_stamp(s.home());
  }
  std::vector<Peer> peers = peers_for(fed, current->site());
  std::uint16_t port = kDefaultPort;
  if (auto p = s.pick(a.port, nullptr, "port")) {
    std::uint32_t v = parse_u32(*p, "port");
    if (v > 65535) usage("bad port " + *p);
    port = static_cast<std::uint16_t>(v);
  } else {
    port = parse_endpoint(fed.find(current->site().id)->address).second;
  }

  std::mutex current_mu;
  SyncServer server(
      [&] {
        std::lock_guard l(current_mu);
        return current;
      },
      fed.digest);
  server.start(port, bind);
  TcpTransport transport;
  Scheduler scheduler(*current, transport, peers, fed.digest, policy);
  err << "serve: " << current->site().id << " listening on " << bind << ':' << server.port() << ", " << peers.size()
      << " peers\n";

  g_stop = false;
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  struct sigaction old_int {}, old_term {};
  ::sigaction(SIGINT, &sa, &old_int);
  ::sigaction(SIGTERM, &sa, &old_term);

  std::uint64_t ticks = 0;
  int rc = kOk;
  auto guard = [&](const std::function<void()>& body) {
    HomeLock lock(s.home(), true);
    if (disk_stamp(s.home()) != stamp) {
      // Another process wrote to the store since the last tick.
      std::shared_ptr<Store> fresh = s.open_store();
      scheduler.rebind(*fresh);
      std::lock_guard l(current_mu);
      current = std::move(fresh);
    }
    body();
    if (++ticks % 120 == 0) {
      std::vector<std::string> ids;
      for (const auto& p : peers) ids.push_back(p.site.id);
      current->compact(ids);
    }
    std::vector<json> rows;
    for (const auto& ps : scheduler.peers()) {
      if (ps.last_report) rows.push_back(report_json(*ps.last_report, ps.consecutive_failures));
    }
    write_status(s.home(), rows);
    stamp = disk_stamp(s.home());
  };
  auto on_tick = [&](const std::vector<SyncReport>& reports) {
    for (const auto& r : reports) {
      if (!r.ok()) err << "serve: sync with " << r.peer.id << ' ' << to_string(r.outcome) << ": " << r.error << '\n';
    }
  };
  try {
    scheduler.run(g_stop, on_tick, guard);
  } catch (const Error& e) {
    err << "E:" << errc_name(e.code()) << ':' << e.what() << '\n';
    rc = kFailure;
  }
  ::sigaction(SIGINT, &old_int, nullptr);
  ::sigaction(SIGTERM, &old_term, nullptr);
  server.stop();
  err << "serve: stopped\n";
  return rc;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::NotFound:
    case Errc::UnknownKey:
      return kEmpty;
    case Errc::EmptyName:
    case Errc::IllegalCharacter:
    case Errc::TooLong:
    case Errc::InvalidArgument:
    case Errc::EmptyPath:
    case Errc::UnknownToken:
    case Errc::UnknownSite:
    case Errc::UnknownCluster:
      return kUsage;
    default:
      return kFailure;
  }
}

// Input validation failures share the USAGE token; the rest keep their own.
std::string_view token_for(Errc code) {
  switch (code) {
    case Errc::EmptyName:
    case Errc::IllegalCharacter:
    case Errc::TooLong:
    case Errc::InvalidArgument:
    case Errc::EmptyPath:
    case Errc::UnknownToken:
      return "USAGE";
    default:
      return errc_name(code);
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Env& env) {
  CLI::App app{"Replicated file catalog", "catalog"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Flags flags;
  app.add_option("--home", flags.home, "Store directory (CATALOG_HOME)");
  app.add_option("--site", flags.site, "Site id when creating a store");
  app.add_option("--ordinal", flags.ordinal, "Site ordinal when creating a store");
  app.add_option("--federation", flags.federation, "Federation config (CATALOG_FEDERATION)");
  app.add_option("--config", flags.config, "catalog.conf to read");
  app.add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"tsv", "json"}));
  app.add_flag("--include-pending", flags.include_pending, "Read through unapplied local writes");

  FileArgs fa;
  auto* add = app.add_subcommand("add-file", "Register a replica owned by this site");
  add->add_option("--lfn", fa.lfn)->required();
  add->add_option("--host", fa.host)->required();
  add->add_option("--path", fa.path)->required();
  add->add_option("--storage", fa.storage, "disk or tape");
  add->add_option("--production", fa.production);
  add->add_option("--size", fa.size);

  auto* del = app.add_subcommand("delete-file", "Remove a replica owned by this site");
  del->add_option("--lfn", fa.lfn)->required();
  del->add_option("--host", fa.host)->required();
  del->add_option("--path", fa.path)->required();

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "Catalog queries");
  query->require_subcommand(1);
  for (const char* kind : {"replicas", "disk", "local", "closest"}) {
    auto* q = query->add_subcommand(kind);
    q->add_option("lfn", qa.arg)->required();
    if (std::string_view(kind) == "local") q->add_option("--site", qa.site, "Defaults to this site");
    if (std::string_view(kind) == "closest") q->add_option("--from", qa.site, "Defaults to this site");
  }
  query->add_subcommand("site")->add_option("site", qa.arg)->required();
  query->add_subcommand("cluster")->add_option("cluster", qa.arg)->required();
  query->add_subcommand("production")->add_option("tag", qa.arg)->required();

  std::string resolve_lfn, resolve_site;
  auto* res = app.add_subcommand("resolve", "Walk the search path for a logical file name");
  res->add_option("lfn", resolve_lfn)->required();
  res->add_option("--search-path", flags.search_path, "Overrides CATALOG_SEARCH_PATH");
  res->add_option("--site", resolve_site, "Defaults to this site");

  auto* sync = app.add_subcommand("sync-now", "Apply buffered writes and pull from every peer once");

  std::string donor;
  auto* add_site = app.add_subcommand("add-site", "Bootstrap this (empty) store from a peer");
  add_site->add_option("--from", donor)->required();

  auto* fsck = app.add_subcommand("fsck", "Lint the local store");
  auto* status = app.add_subcommand("status", "Cursors, queue depth and last sync results");

  TopologyArgs ta;
  auto* topo = app.add_subcommand("topology", "Maintain this site's topology rows");
  topo->require_subcommand(1);
  auto* t_site = topo->add_subcommand("site", "Register this site");
  t_site->add_flag("--delete", ta.remove);
  auto* t_cluster = topo->add_subcommand("cluster");
  t_cluster->add_option("name", ta.name)->required();
  t_cluster->add_flag("--delete", ta.remove);
  auto* t_host = topo->add_subcommand("host");
  t_host->add_option("name", ta.name)->required();
  t_host->add_option("--cluster", ta.cluster);
  t_host->add_option("--storage", ta.storage, "disk or tape");
  t_host->add_flag("--delete", ta.remove);
  auto* t_cost = topo->add_subcommand("cost", "Link cost from this site");
  t_cost->add_option("to", ta.name)->required();
  t_cost->add_option("value", ta.value);
  t_cost->add_flag("--delete", ta.remove);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the sync server and scheduler until signalled");
  serve->add_option("--tick", sa.tick, "Sync interval (default 30s)");
  serve->add_option("--port", sa.port, "Listen port (default from the federation, else 7474)");
  serve->add_option("--backoff-max", sa.backoff_max, "Retry backoff cap (default 10m)");
  serve->add_option("--bind", sa.bind, "Listen address (default 127.0.0.1)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "E:USAGE:" << one_line(e.what()) << '\n';
    return kUsage;
  }

  try {
    Settings s(flags, env);
    if (add->parsed()) return cmd_add_file(s, fa, out);
    if (del->parsed()) return cmd_delete_file(s, fa, out);
    if (query->parsed()) {
      qa.kind = query->get_subcommands().front()->get_name();
      return cmd_query(s, qa, out);
    }
    if (res->parsed()) return cmd_resolve(s, resolve_lfn, resolve_site, out);
    if (sync->parsed()) return cmd_sync_now(s, out, err);
    if (add_site->parsed()) return cmd_add_site(s, donor, out);
    if (fsck->parsed()) return cmd_fsck(s, out);
    if (status->parsed()) return cmd_status(s, out);
    if (topo->parsed()) {
      ta.kind = topo->get_subcommands().front()->get_name();
      if (ta.kind == "cost" && !ta.remove && ta.value.empty()) usage("cost value required");
      return cmd_topology(s, ta, out);
    }
    if (serve->parsed()) return cmd_serve(s, sa, err);
  } catch (const Error& e) {
    err << "E:" << token_for(e.code()) << ':' << one_line(e.what()) << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "E:INTERNAL:" << one_line(e.what()) << '\n';
    return kFailure;
  }
  err << "E:USAGE:no command\n";
  return kUsage;
}

}  // namespace catalog::cli
