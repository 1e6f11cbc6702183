#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "catalog/transport.hpp"

namespace catalog {

// Fault model for one directed link.
struct LinkFaults {
  std::chrono::nanoseconds latency_min{std::chrono::microseconds(200)};
  std::chrono::nanoseconds latency_max{std::chrono::milliseconds(2)};
  double drop_probability = 0.0;     // frame silently lost
  double corrupt_probability = 0.0;  // one payload byte flipped
};

struct TraceEntry {
  std::chrono::nanoseconds at{};
  std::string from;
  std::string to;
  MessageType type{};
  std::uint32_t length = 0;
  enum class Fate : std::uint8_t { Delivered, Dropped, Corrupted, Refused } fate = Fate::Delivered;
};

// In-process network with a virtual clock. Servers answer synchronously
// through a SyncService per connection, so a sync run is a deterministic
// function of the seed and the call sequence.
class SimNetwork {
 public:
  explicit SimNetwork(std::uint64_t seed, LinkFaults defaults = {});
  ~SimNetwork();
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  void add_site(const std::string& site_id, SyncService::StoreRef store, const Sha256& federation,
                std::uint32_t max_batch = kDefaultMaxBatch);
  void add_site(const std::string& site_id, Store& store, const Sha256& federation,
                std::uint32_t max_batch = kDefaultMaxBatch);
  bool has_site(const std::string& site_id) const;

  // Throw UnknownSite.
  void partition(const std::string& site_id);
  void heal(const std::string& site_id);
  bool partitioned(const std::string& site_id) const;
  void cut(const std::string& from, const std::string& to);  // one direction
  void restore(const std::string& from, const std::string& to);
  void set_faults(const std::string& from, const std::string& to, const LinkFaults& faults);

  std::unique_ptr<Transport> transport_for(const std::string& site_id);

  std::chrono::nanoseconds now() const noexcept { return clock_; }
  void advance(std::chrono::nanoseconds d) noexcept { clock_ += d; }

  const std::vector<TraceEntry>& trace() const noexcept { return trace_; }
  // Covers every entry plus the payload bytes of delivered frames.
  Sha256 trace_digest() const noexcept { return chain_; }

 private:
  friend class SimConnection;
  struct Site {
    SyncService::StoreRef store;
    Sha256 federation{};
    std::uint32_t max_batch = kDefaultMaxBatch;
  };

  const Site& site(const std::string& id) const;
  bool reachable(const std::string& from, const std::string& to) const;
  const LinkFaults& faults(const std::string& from, const std::string& to) const;
  std::chrono::nanoseconds latency(const LinkFaults& f);
  // Moves one encoded frame across from->to. Returns false if it was lost.
  bool carry(const std::string& from, const std::string& to, Bytes& wire);
  void record(TraceEntry entry, ByteView wire);

  std::mt19937_64 rng_;
  LinkFaults defaults_;
  std::map<std::string, Site> sites_;
  std::set<std::string> partitioned_;
  std::set<std::pair<std::string, std::string>> cut_;
  std::map<std::pair<std::string, std::string>, LinkFaults> link_faults_;
  std::chrono::nanoseconds clock_{0};
  std::vector<TraceEntry> trace_;
  Sha256 chain_{};
};

}  // namespace catalog
