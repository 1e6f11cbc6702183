#include "catalog/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "catalog/error.hpp"

namespace catalog {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

TcpConnection::TcpConnection(int fd) : fd_(fd) { set_nodelay(fd_); }

TcpConnection::~TcpConnection() { close(); }

void TcpConnection::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpConnection::send(const Frame& f) {
  if (fd_ < 0) fail(Errc::ConnectionRefused, "connection closed");
  Bytes wire = encode_frame(f);
  std::size_t off = 0;
  while (off < wire.size()) {
    ssize_t n = ::send(fd_, wire.data() + off, wire.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(Errc::ConnectionRefused, errno_text("send"));
    }
    off += static_cast<std::size_t>(n);
  }
}

Frame TcpConnection::receive(std::chrono::milliseconds timeout) {
  if (fd_ < 0) fail(Errc::ConnectionRefused, "connection closed");
  auto deadline = Clock::now() + timeout;
  Frame f;
  while (true) {
    std::size_t used = decode_frame(pending_, f);
    if (used > 0) {
      pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(used));
      return f;
    }
    pollfd p{fd_, POLLIN, 0};
    int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(Errc::ConnectionRefused, errno_text("poll"));
    }
    if (r == 0) fail(Errc::Timeout, "receive timed out");
    std::uint8_t buf[64 * 1024];
    ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(Errc::ConnectionRefused, errno_text("recv"));
    }
    if (n == 0) fail(Errc::ConnectionRefused, "peer closed the connection");
    pending_.insert(pending_.end(), buf, buf + n);
  }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    fail(Errc::InvalidArgument, "endpoint must be host:port, got '" + address + "'");
  }
  std::string host = address.substr(0, colon);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    fail(Errc::InvalidArgument, "bad port in '" + address + "'");
  }
  if (port == 0 || port > 65535) fail(Errc::InvalidArgument, "port out of range in '" + address + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

std::unique_ptr<TcpConnection> tcp_connect(const std::string& host, std::uint16_t port,
                                           std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    fail(Errc::ConnectionRefused, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  auto deadline = Clock::now() + timeout;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
    if (fd < 0) continue;
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, remaining_ms(deadline));
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        errno = err;
        rc = err == 0 ? 0 : -1;
      } else {
        errno = ETIMEDOUT;
        rc = -1;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
      ::freeaddrinfo(res);
      return std::make_unique<TcpConnection>(fd);
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  fail(Errc::ConnectionRefused, "connect " + host + ":" + service + ": " + last);
}

std::unique_ptr<Connection> TcpTransport::connect(const std::string&, const std::string& address) {
  auto [host, port] = parse_endpoint(address);
  return tcp_connect(host, port);
}

std::chrono::nanoseconds TcpTransport::now() { return Clock::now().time_since_epoch(); }

// --- server ---

SyncServer::SyncServer(SyncService::StoreRef store, Sha256 federation, std::uint32_t max_batch)
    : store_(std::move(store)), federation_(federation), max_batch_(max_batch) {}

SyncServer::~SyncServer() { stop(); }

void SyncServer::start(std::uint16_t port, const std::string& bind_address) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE | AI_NUMERICHOST;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(bind_address.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0) {
    fail(Errc::Io, "bind address " + bind_address + ": " + ::gai_strerror(rc));
  }
  int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    fail(Errc::Io, errno_text("socket"));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) < 0 || ::listen(fd, 64) < 0) {
    std::string msg = errno_text("bind " + bind_address + ":" + std::to_string(port));
    ::close(fd);
    ::freeaddrinfo(res);
    fail(Errc::Io, msg);
  }
  ::freeaddrinfo(res);

  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  if (::pipe2(wake_, O_CLOEXEC) < 0) {
    ::close(fd);
    fail(Errc::Io, errno_text("pipe"));
  }
  listen_fd_ = fd;
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void SyncServer::accept_loop() {
  while (!stopping_) {
    pollfd p[2] = {{listen_fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
    if (::poll(p, 2, 1000) < 0 && errno != EINTR) break;
    reap(false);
    if (p[1].revents != 0 || stopping_) break;
    if ((p[0].revents & POLLIN) == 0) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mu_);
    Worker& w = workers_.emplace_back();
    w.fd = fd;
    w.thread = std::thread([this, &w] { serve(w); });
  }
}

void SyncServer::serve(Worker& w) {
  TcpConnection conn(w.fd.load());
  SyncService service(store_, federation_, max_batch_);
  bool greeted = false;
  try {
    while (!stopping_ && !service.closed()) {
      Frame in;
      try {
        in = conn.receive(greeted ? std::chrono::milliseconds(500) : kHandshakeTimeout);
      } catch (const Error& e) {
        if (e.code() == Errc::Timeout && greeted) continue;
        break;
      }
      greeted = true;
      for (const Frame& out : service.handle(in)) conn.send(out);
    }
  } catch (const Error&) {
    // Undecodable header or a vanished peer: drop the session.
  }
  {
    // Under the lock so stop() never shuts down a reused descriptor.
    std::lock_guard lock(workers_mu_);
    w.fd = -1;
    conn.close();
  }
  w.done = true;
}

void SyncServer::reap(bool all) {
  std::list<Worker> finished;
  {
    std::lock_guard lock(workers_mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      auto next = std::next(it);
      if (all || it->done) finished.splice(finished.end(), workers_, it);
      it = next;
    }
  }
  for (auto& w : finished) {
    if (w.thread.joinable()) w.thread.join();
  }
}

void SyncServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  if (wake_[1] >= 0) {
    char c = 1;
    [[maybe_unused]] auto n = ::write(wake_[1], &c, 1);
  }
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(workers_mu_);
    for (auto& w : workers_) {
      int fd = w.fd.load();
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
  }
  reap(true);
  ::close(listen_fd_);
  ::close(wake_[0]);
  ::close(wake_[1]);
  listen_fd_ = wake_[0] = wake_[1] = -1;
}

}  // namespace catalog
