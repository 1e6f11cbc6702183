#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "catalog/store.hpp"
#include "catalog/transport.hpp"

namespace catalog {

struct Peer {
  SiteId site;
  std::string address;
};

enum class SyncOutcome : std::uint8_t { Success, Unreachable, ProtocolError, GapNeedsSnapshot };

std::string_view to_string(SyncOutcome o) noexcept;

struct SyncReport {
  SiteId peer;
  SyncOutcome outcome = SyncOutcome::Success;
  std::map<SiteId, std::uint64_t> ops_pulled;  // ops newly applied, per origin the peer knows
  std::uint64_t records_transferred = 0;       // op records received on the wire
  std::uint64_t frames = 0;                    // DELTA_RESP frames
  std::uint64_t bytes = 0;
  std::chrono::nanoseconds duration{};
  std::string error;

  std::uint64_t total_pulled() const;
  bool ok() const noexcept { return outcome == SyncOutcome::Success; }
};

struct RetryPolicy {
  std::chrono::nanoseconds interval = std::chrono::seconds(30);
  std::chrono::nanoseconds max_backoff = std::chrono::minutes(10);

  // Wait before the next attempt after `failures` consecutive failures (0 = healthy).
  std::chrono::nanoseconds delay(std::uint32_t failures) const;
};

struct SyncOptions {
  std::uint32_t max_batch = kDefaultMaxBatch;
  std::chrono::milliseconds timeout = std::chrono::seconds(30);
  std::chrono::milliseconds handshake_timeout = kHandshakeTimeout;
  std::uint64_t catchup_threshold = 100;  // bootstrap cutover once a round pulls fewer ops
  std::uint32_t max_catchup_rounds = 1000;
};

// Pulls every origin the peer knows, relay included. Never throws for
// network or protocol trouble; the outcome says what happened.
SyncReport sync_with_peer(Store& store, Transport& transport, const Peer& peer, const Sha256& federation,
                          const SyncOptions& options = {});

std::vector<SyncReport> sync_round(Store& store, Transport& transport, const std::vector<Peer>& peers,
                                   const Sha256& federation, const SyncOptions& options = {});

struct BootstrapReport {
  SyncReport final_sync;
  std::uint64_t snapshot_rows = 0;
  CursorMap snapshot_as_of;
  std::uint32_t catchup_rounds = 0;
  std::uint64_t catchup_ops = 0;
};

// Snapshot install followed by catch-up syncs. Throws Unreachable as
// ConnectionRefused, DigestMismatch, and protocol errors.
BootstrapReport bootstrap_from(Store& store, Transport& transport, const Peer& peer, const Sha256& federation,
                               const SyncOptions& options = {});

// Per-peer retry state driven by an external clock.
class Scheduler {
 public:
  struct PeerState {
    Peer peer;
    std::uint32_t consecutive_failures = 0;
    std::chrono::nanoseconds next_due{0};
    std::optional<std::chrono::nanoseconds> last_success;
    std::optional<SyncReport> last_report;
  };

  Scheduler(Store& store, Transport& transport, std::vector<Peer> peers, Sha256 federation,
            RetryPolicy policy = {}, SyncOptions options = {});

  // apply_buffer, then one sync with every peer whose retry time has come.
  std::vector<SyncReport> tick(std::chrono::nanoseconds now);

  // Ticks every policy.interval until `stop` turns true. `on_tick` sees each
  // tick's reports. `guard` wraps each tick (e.g. to hold a file lock).
  void run(const std::atomic<bool>& stop,
           const std::function<void(const std::vector<SyncReport>&)>& on_tick = {},
           const std::function<void(const std::function<void()>&)>& guard = {});

  const std::vector<PeerState>& peers() const noexcept { return peers_; }
  const RetryPolicy& policy() const noexcept { return policy_; }
  // Points later ticks at a reopened store for the same site.
  void rebind(Store& store);

 private:
  Store* store_;
  Transport& transport_;
  std::vector<PeerState> peers_;
  Sha256 federation_;
  RetryPolicy policy_;
  SyncOptions options_;
};

// Federation config: one `<ordinal> <site-id> <host:port>` per line; blank
// lines and '#' comments ignored.
struct FederationConfig {
  std::vector<Peer> sites;
  Sha256 digest{};  // SHA-256 of the file bytes

  const Peer* find(const std::string& site_id) const;
  std::vector<Peer> peers_of(const std::string& site_id) const;
};

// Throws InvalidArgument with the line number.
FederationConfig parse_federation(std::string_view text);
FederationConfig load_federation(const std::filesystem::path& path);

}  // namespace catalog
