#include "catalog/replication.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "catalog/error.hpp"
#include "catalog/tcp.hpp"

namespace catalog {

std::string_view to_string(SyncOutcome o) noexcept {
  switch (o) {
    case SyncOutcome::Success: return "Success";
    case SyncOutcome::Unreachable: return "Unreachable";
    case SyncOutcome::ProtocolError: return "ProtocolError";
    case SyncOutcome::GapNeedsSnapshot: return "GapNeedsSnapshot";
  }
  return "?";
}

std::uint64_t SyncReport::total_pulled() const {
  std::uint64_t n = 0;
  for (const auto& [origin, count] : ops_pulled) n += count;
  return n;
}

std::chrono::nanoseconds RetryPolicy::delay(std::uint32_t failures) const {
  if (failures <= 1) return interval;
  auto d = interval;
  for (std::uint32_t i = 1; i < failures && d < max_backoff; ++i) d *= 2;
  return std::min(d, std::max(max_backoff, interval));
}

namespace {

SyncOutcome outcome_for(Errc code) {
  switch (code) {
    case Errc::ConnectionRefused:
    case Errc::Timeout:
    case Errc::HandshakeTimeout:
      return SyncOutcome::Unreachable;
    case Errc::GapDetected:
      return SyncOutcome::GapNeedsSnapshot;
    default:
      return SyncOutcome::ProtocolError;
  }
}

Session open_session(Store& store, Transport& transport, const Peer& peer, const Sha256& federation,
                     const SyncOptions& options) {
  Session s(transport.connect(peer.site.id, peer.address), store.site(), federation, options.handshake_timeout);
  s.set_timeout(options.timeout);
  if (s.peer_site() != peer.site.id) {
    s.close();
    fail(Errc::ProtocolError, "peer at " + peer.address + " identifies as " + s.peer_site() + ", expected " +
                                  peer.site.id);
  }
  return s;
}

}  // namespace

SyncReport sync_with_peer(Store& store, Transport& transport, const Peer& peer, const Sha256& federation,
                          const SyncOptions& options) {
  SyncReport report;
  report.peer = peer.site;
  auto start = transport.now();
  std::optional<Session> session;
  try {
    session.emplace(open_session(store, transport, peer, federation, options));
    CursorMap remote = session->request_cursors();
    for (const auto& [origin, high] : remote) {
      if (origin.id == store.site().id) continue;
      std::uint64_t& pulled = report.ops_pulled[origin];
      SequenceNumber local = store.cursor(origin.id);
      if (high <= local) continue;
      report.frames += session->request_delta(origin, local, options.max_batch, [&](std::vector<OperationRecord>& ops) {
        report.records_transferred += ops.size();
        SequenceNumber before = store.cursor(origin.id);
        CursorMap after = store.apply_remote(ops);
        auto it = after.find(origin);
        if (it != after.end() && it->second > before) pulled += it->second - before;
      });
    }
    report.bytes = session->bytes_received();
    session->close();
  } catch (const Error& e) {
    report.outcome = outcome_for(e.code());
    report.error = std::string(errc_name(e.code())) + ": " + e.what();
    if (session) {
      report.bytes = session->bytes_received();
      session->close();
    }
  }
  report.duration = transport.now() - start;
  return report;
}

std::vector<SyncReport> sync_round(Store& store, Transport& transport, const std::vector<Peer>& peers,
                                   const Sha256& federation, const SyncOptions& options) {
  std::vector<SyncReport> reports;
  reports.reserve(peers.size());
  for (const Peer& p : peers) reports.push_back(sync_with_peer(store, transport, p, federation, options));
  return reports;
}

BootstrapReport bootstrap_from(Store& store, Transport& transport, const Peer& peer, const Sha256& federation,
                               const SyncOptions& options) {
  BootstrapReport out;
  {
    Session s = open_session(store, transport, peer, federation, options);
    Snapshot snap = s.request_snapshot();
    s.close();
    out.snapshot_rows = snap.rows.size();
    out.snapshot_as_of = snap.as_of;
    store.install_snapshot(snap);
  }

  auto must = [&](SyncReport r) {
    if (!r.ok()) {
      Errc code = r.outcome == SyncOutcome::Unreachable        ? Errc::ConnectionRefused
                  : r.outcome == SyncOutcome::GapNeedsSnapshot ? Errc::GapDetected
                                                               : Errc::ProtocolError;
      fail(code, "bootstrap catch-up from " + peer.site.id + " failed: " + r.error);
    }
    return r;
  };

  while (out.catchup_rounds < options.max_catchup_rounds) {
    SyncReport r = must(sync_with_peer(store, transport, peer, federation, options));
    ++out.catchup_rounds;
    out.catchup_ops += r.total_pulled();
    if (r.total_pulled() < options.catchup_threshold) break;
  }
  out.final_sync = must(sync_with_peer(store, transport, peer, federation, options));
  return out;
}

// --- scheduler ---

Scheduler::Scheduler(Store& store, Transport& transport, std::vector<Peer> peers, Sha256 federation,
                     RetryPolicy policy, SyncOptions options)
    : store_(&store), transport_(transport), federation_(federation), policy_(policy), options_(options) {
  if (policy_.interval <= std::chrono::nanoseconds::zero()) fail(Errc::InvalidArgument, "tick interval must be positive");
  for (auto& p : peers) {
    if (p.site.id == store.site().id) continue;
    peers_.push_back(PeerState{std::move(p), 0, std::chrono::nanoseconds{0}, std::nullopt, std::nullopt});
  }
}

void Scheduler::rebind(Store& store) {
  if (store.site() != store_->site()) fail(Errc::SiteMismatch, "scheduler rebound to another site");
  store_ = &store;
}

std::vector<SyncReport> Scheduler::tick(std::chrono::nanoseconds now) {
  store_->apply_buffer();
  std::vector<SyncReport> reports;
  for (auto& ps : peers_) {
    if (now < ps.next_due) continue;
    SyncReport r = sync_with_peer(*store_, transport_, ps.peer, federation_, options_);
    if (r.ok()) {
      ps.consecutive_failures = 0;
      ps.last_success = now;
    } else {
      ++ps.consecutive_failures;
    }
    ps.next_due = now + policy_.delay(ps.consecutive_failures);
    ps.last_report = r;
    reports.push_back(std::move(r));
  }
  return reports;
}

void Scheduler::run(const std::atomic<bool>& stop, const std::function<void(const std::vector<SyncReport>&)>& on_tick,
                    const std::function<void(const std::function<void()>&)>& guard) {
  while (!stop) {
    auto started = transport_.now();
    std::vector<SyncReport> reports;
    auto body = [&] { reports = tick(started); };
    if (guard) {
      guard(body);
    } else {
      body();
    }
    if (on_tick) on_tick(reports);
    auto wake = started + policy_.interval;
    while (!stop && transport_.now() < wake) {
      auto left = wake - transport_.now();
      std::this_thread::sleep_for(std::min<std::chrono::nanoseconds>(left, std::chrono::milliseconds(100)));
    }
  }
}

// --- federation config ---

const Peer* FederationConfig::find(const std::string& site_id) const {
  for (const auto& p : sites) {
    if (p.site.id == site_id) return &p;
  }
  return nullptr;
}

std::vector<Peer> FederationConfig::peers_of(const std::string& site_id) const {
  std::vector<Peer> out;
  for (const auto& p : sites) {
    if (p.site.id != site_id) out.push_back(p);
  }
  return out;
}

FederationConfig parse_federation(std::string_view text) {
  FederationConfig cfg;
  cfg.digest = sha256(as_bytes(text));
  std::set<std::uint32_t> ordinals;
  std::set<std::string> ids, addresses;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&] { return "federation line " + std::to_string(lineno) + ": "; };
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string ordinal, id, address, extra;
    if (!(fields >> ordinal)) continue;
    if (!(fields >> id >> address) || (fields >> extra)) {
      fail(Errc::InvalidArgument, where() + "expected '<ordinal> <site-id> <host:port>'");
    }
    std::uint32_t ord = 0;
    try {
      std::size_t used = 0;
      unsigned long v = std::stoul(ordinal, &used);
      if (used != ordinal.size() || v > UINT32_MAX) throw std::out_of_range("ordinal");
      ord = static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
      fail(Errc::InvalidArgument, where() + "bad ordinal '" + ordinal + "'");
    }
    try {
      validate_site_token(id);
      parse_endpoint(address);
    } catch (const Error& e) {
      fail(Errc::InvalidArgument, where() + e.what());
    }
    if (!ordinals.insert(ord).second) fail(Errc::InvalidArgument, where() + "duplicate ordinal " + ordinal);
    if (!ids.insert(id).second) fail(Errc::InvalidArgument, where() + "duplicate site " + id);
    if (!addresses.insert(address).second) fail(Errc::InvalidArgument, where() + "duplicate address " + address);
    cfg.sites.push_back(Peer{SiteId{id, ord}, address});
  }
  return cfg;
}

FederationConfig load_federation(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::Io, "cannot read federation config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_federation(ss.str());
}

}  // namespace catalog
