#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "catalog/transport.hpp"

namespace catalog {

// Blocking socket with poll()-based deadlines.
class TcpConnection final : public Connection {
 public:
  explicit TcpConnection(int fd);
  ~TcpConnection() override;

  void send(const Frame& f) override;
  Frame receive(std::chrono::milliseconds timeout) override;
  void close() override;
  int fd() const noexcept { return fd_; }

 private:
  int fd_;
  Bytes pending_;
};

// "host:port"; throws InvalidArgument.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& address);

// Throws ConnectionRefused.
std::unique_ptr<TcpConnection> tcp_connect(const std::string& host, std::uint16_t port,
                                           std::chrono::milliseconds timeout = std::chrono::seconds(10));

class TcpTransport final : public Transport {
 public:
  std::unique_ptr<Connection> connect(const std::string& site_id, const std::string& address) override;
  std::chrono::nanoseconds now() override;
};

// Accepts peers and serves each connection from its own thread.
class SyncServer {
 public:
  SyncServer(SyncService::StoreRef store, Sha256 federation, std::uint32_t max_batch = kDefaultMaxBatch);
  ~SyncServer();
  SyncServer(const SyncServer&) = delete;
  SyncServer& operator=(const SyncServer&) = delete;

  // Port 0 binds an ephemeral port. Throws Io.
  void start(std::uint16_t port, const std::string& bind_address = "127.0.0.1");
  void stop();
  std::uint16_t port() const noexcept { return port_; }

 private:
  struct Worker {
    std::thread thread;
    std::atomic<int> fd{-1};
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Worker& w);
  void reap(bool all);

  SyncService::StoreRef store_;
  Sha256 federation_;
  std::uint32_t max_batch_;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex workers_mu_;
  std::list<Worker> workers_;
};

}  // namespace catalog
