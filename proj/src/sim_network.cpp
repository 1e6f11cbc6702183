#include "catalog/sim_network.hpp"

#include <deque>

#include "catalog/error.hpp"

namespace catalog {

class SimConnection final : public Connection {
 public:
  SimConnection(SimNetwork& net, std::string client, std::string server)
      : net_(net),
        client_(std::move(client)),
        server_(std::move(server)),
        service_(net.site(server_).store, net.site(server_).federation, net.site(server_).max_batch) {}

  void send(const Frame& f) override {
    if (!open_ || server_gone_) fail(Errc::ConnectionRefused, "connection to " + server_ + " is closed");
    if (!net_.reachable(client_, server_)) {
      net_.record({net_.now(), client_, server_, f.type, static_cast<std::uint32_t>(f.payload.size()),
                   TraceEntry::Fate::Refused},
                  {});
      server_gone_ = true;
      fail(Errc::ConnectionRefused, server_ + " unreachable");
    }
    Bytes wire = encode_frame(f);
    if (!net_.carry(client_, server_, wire)) return;

    Frame in;
    std::vector<Frame> replies;
    try {
      decode_frame(wire, in);
      replies = service_.handle(in);
    } catch (const Error&) {
      // The server cannot parse the header: it drops the connection.
      server_gone_ = true;
      return;
    }
    for (const Frame& r : replies) {
      Bytes back = encode_frame(r);
      if (!net_.reachable(server_, client_)) {
        server_gone_ = true;
        break;
      }
      if (net_.carry(server_, client_, back)) inbox_.push_back(std::move(back));
    }
    if (service_.closed()) server_gone_ = true;
  }

  Frame receive(std::chrono::milliseconds timeout) override {
    if (!open_) fail(Errc::ConnectionRefused, "connection closed");
    if (inbox_.empty()) {
      if (server_gone_) fail(Errc::ConnectionRefused, server_ + " closed the connection");
      net_.advance(timeout);
      fail(Errc::Timeout, "no frame from " + server_);
    }
    Bytes wire = std::move(inbox_.front());
    inbox_.pop_front();
    Frame f;
    decode_frame(wire, f);
    return f;
  }

  void close() override { open_ = false; }

 private:
  SimNetwork& net_;
  std::string client_;
  std::string server_;
  SyncService service_;
  std::deque<Bytes> inbox_;
  bool open_ = true;
  bool server_gone_ = false;
};

namespace {

class SimTransport final : public Transport {
 public:
  SimTransport(SimNetwork& net, std::string local) : net_(net), local_(std::move(local)) {}

  std::unique_ptr<Connection> connect(const std::string& site_id, const std::string&) override {
    if (!net_.has_site(site_id)) fail(Errc::ConnectionRefused, "no such endpoint " + site_id);
    if (net_.partitioned(site_id) || net_.partitioned(local_)) {
      fail(Errc::ConnectionRefused, site_id + " unreachable");
    }
    return std::make_unique<SimConnection>(net_, local_, site_id);
  }

  std::chrono::nanoseconds now() override { return net_.now(); }

 private:
  SimNetwork& net_;
  std::string local_;
};

}  // namespace

SimNetwork::SimNetwork(std::uint64_t seed, LinkFaults defaults) : rng_(seed), defaults_(defaults) {}

SimNetwork::~SimNetwork() = default;

void SimNetwork::add_site(const std::string& site_id, SyncService::StoreRef store, const Sha256& federation,
                          std::uint32_t max_batch) {
  sites_[site_id] = Site{std::move(store), federation, max_batch};
}

void SimNetwork::add_site(const std::string& site_id, Store& store, const Sha256& federation,
                          std::uint32_t max_batch) {
  add_site(site_id, [&store] { return std::shared_ptr<Store>(&store, [](Store*) {}); }, federation, max_batch);
}

bool SimNetwork::has_site(const std::string& site_id) const { return sites_.count(site_id) != 0; }

const SimNetwork::Site& SimNetwork::site(const std::string& id) const {
  auto it = sites_.find(id);
  if (it == sites_.end()) fail(Errc::UnknownSite, "unknown site " + id);
  return it->second;
}

void SimNetwork::partition(const std::string& site_id) {
  site(site_id);
  partitioned_.insert(site_id);
}

void SimNetwork::heal(const std::string& site_id) {
  site(site_id);
  partitioned_.erase(site_id);
}

bool SimNetwork::partitioned(const std::string& site_id) const { return partitioned_.count(site_id) != 0; }

void SimNetwork::cut(const std::string& from, const std::string& to) {
  site(from);
  site(to);
  cut_.insert({from, to});
}

void SimNetwork::restore(const std::string& from, const std::string& to) {
  site(from);
  site(to);
  cut_.erase({from, to});
}

void SimNetwork::set_faults(const std::string& from, const std::string& to, const LinkFaults& faults) {
  site(from);
  site(to);
  link_faults_[{from, to}] = faults;
}

bool SimNetwork::reachable(const std::string& from, const std::string& to) const {
  return !partitioned(from) && !partitioned(to) && cut_.count({from, to}) == 0;
}

const LinkFaults& SimNetwork::faults(const std::string& from, const std::string& to) const {
  auto it = link_faults_.find({from, to});
  return it == link_faults_.end() ? defaults_ : it->second;
}

std::chrono::nanoseconds SimNetwork::latency(const LinkFaults& f) {
  if (f.latency_max <= f.latency_min) return f.latency_min;
  std::uniform_int_distribution<std::int64_t> d(f.latency_min.count(), f.latency_max.count());
  return std::chrono::nanoseconds(d(rng_));
}

bool SimNetwork::carry(const std::string& from, const std::string& to, Bytes& wire) {
  const LinkFaults& f = faults(from, to);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  clock_ += latency(f);
  TraceEntry e{clock_, from, to, static_cast<MessageType>(wire[4]),
               static_cast<std::uint32_t>(wire.size() - kFrameHeader), TraceEntry::Fate::Delivered};
  if (f.drop_probability > 0 && coin(rng_) < f.drop_probability) {
    e.fate = TraceEntry::Fate::Dropped;
    record(std::move(e), {});
    return false;
  }
  if (f.corrupt_probability > 0 && wire.size() > kFrameHeader && coin(rng_) < f.corrupt_probability) {
    std::uniform_int_distribution<std::size_t> pos(kFrameHeader, wire.size() - 1);
    wire[pos(rng_)] ^= static_cast<std::uint8_t>(1 + rng_() % 255);
    e.fate = TraceEntry::Fate::Corrupted;
  }
  record(std::move(e), wire);
  return true;
}

void SimNetwork::record(TraceEntry entry, ByteView wire) {
  Encoder enc;
  enc.raw(chain_);
  enc.i64(entry.at.count());
  enc.str(entry.from);
  enc.str(entry.to);
  enc.u8(static_cast<std::uint8_t>(entry.type));
  enc.u32(entry.length);
  enc.u8(static_cast<std::uint8_t>(entry.fate));
  enc.raw(wire);
  chain_ = sha256(enc.buffer());
  trace_.push_back(std::move(entry));
}

std::unique_ptr<Transport> SimNetwork::transport_for(const std::string& site_id) {
  site(site_id);
  return std::make_unique<SimTransport>(*this, site_id);
}

}  // namespace catalog
