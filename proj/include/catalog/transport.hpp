#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "catalog/codec.hpp"
#include "catalog/digest.hpp"
#include "catalog/store.hpp"

namespace catalog {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 7474;
inline constexpr std::uint32_t kMaxFramePayload = 64u << 20;
inline constexpr std::size_t kFrameHeader = 5;
inline constexpr std::uint32_t kDefaultMaxBatch = 5000;
inline constexpr std::size_t kSnapChunkBytes = 4u << 20;
inline constexpr std::chrono::milliseconds kHandshakeTimeout{10'000};

enum class MessageType : std::uint8_t {
  Hello = 0x01,
  CursorsReq = 0x02,
  CursorsResp = 0x03,
  DeltaReq = 0x04,
  DeltaResp = 0x05,
  SnapReq = 0x06,
  SnapChunk = 0x07,
  Error = 0x08,
};

bool is_known_message(std::uint8_t type) noexcept;

// Wire: u32 payload length, u8 type, payload.
struct Frame {
  MessageType type = MessageType::Error;
  Bytes payload;
  bool operator==(const Frame&) const = default;
};

Bytes encode_frame(const Frame& f);
void append_frame(Bytes& out, const Frame& f);

// Parses one frame from the front of `in`: bytes consumed, or 0 if more input
// is needed. Throws FrameTooLarge past the 64 MiB cap and ProtocolError for an
// undefined message type.
std::size_t decode_frame(ByteView in, Frame& out);

// Codes carried in ERROR frames.
enum class WireError : std::uint16_t {
  Version = 1,
  Federation = 2,
  UnknownType = 3,
  Gap = 4,
  UnknownOrigin = 5,
  Protocol = 6,
  Internal = 7,
};

std::string_view to_string(WireError e) noexcept;

// --- message payloads ---

struct HelloMsg {
  std::uint16_t version = kProtocolVersion;
  std::string site_id;
  Sha256 federation{};
};

struct ErrorMsg {
  WireError code = WireError::Internal;
  std::string message;
};

struct DeltaReqMsg {
  SiteId origin;
  SequenceNumber after = 0;
  std::uint32_t max_batch = kDefaultMaxBatch;
};

struct DeltaRespMsg {
  bool last = true;
  std::vector<OperationRecord> ops;
};

// data non-empty: a piece of the encoded snapshot. data empty: terminator
// carrying the snapshot digest.
struct SnapChunkMsg {
  Bytes data;
  Sha256 digest{};
};

Frame make_frame(const HelloMsg& m);
Frame make_frame(const ErrorMsg& m);
Frame make_frame(const CursorMap& cursors);  // CURSORS_RESP
Frame make_frame(const DeltaReqMsg& m);
Frame make_frame(const DeltaRespMsg& m);
Frame make_frame(const SnapChunkMsg& m);
Frame make_request(MessageType type);  // CURSORS_REQ, SNAP_REQ

// Each parser checks the frame type and throws ProtocolError on malformed payloads.
HelloMsg parse_hello(const Frame& f);
ErrorMsg parse_error(const Frame& f);
CursorMap parse_cursors(const Frame& f);
DeltaReqMsg parse_delta_req(const Frame& f);
DeltaRespMsg parse_delta_resp(const Frame& f);
SnapChunkMsg parse_snap_chunk(const Frame& f);

// Maps an ERROR frame received by a client to the exception it stands for.
[[noreturn]] void throw_wire_error(const ErrorMsg& m);

// --- sessions ---

// A bidirectional frame pipe. Real sockets and the simulator both implement it.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual void send(const Frame& f) = 0;
  // Throws Timeout when nothing arrives in time, ConnectionRefused when the peer is gone.
  virtual Frame receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

// Client-side connector plus the clock that sync timings are measured with.
class Transport {
 public:
  virtual ~Transport() = default;
  // Throws ConnectionRefused.
  virtual std::unique_ptr<Connection> connect(const std::string& site_id, const std::string& address) = 0;
  virtual std::chrono::nanoseconds now() = 0;
};

// Server side of the protocol for one session; transport independent.
class SyncService {
 public:
  using StoreRef = std::function<std::shared_ptr<Store>()>;

  SyncService(StoreRef store, Sha256 federation, std::uint32_t max_batch = kDefaultMaxBatch);
  SyncService(Store& store, Sha256 federation, std::uint32_t max_batch = kDefaultMaxBatch);

  // Frames to send back. After closed() turns true the session must be dropped.
  std::vector<Frame> handle(const Frame& in);
  bool closed() const noexcept { return closed_; }
  const std::string& peer() const noexcept { return peer_; }

 private:
  std::vector<Frame> refuse(WireError code, const std::string& message);

  StoreRef store_;
  Sha256 federation_;
  std::uint32_t max_batch_;
  std::string peer_;
  bool greeted_ = false;
  bool closed_ = false;
};

// Client side: handshake then request/response at batch granularity.
class Session {
 public:
  // Performs HELLO. Throws VersionMismatch, FederationMismatch, HandshakeTimeout.
  Session(std::unique_ptr<Connection> conn, const SiteId& local, const Sha256& federation,
          std::chrono::milliseconds handshake_timeout = kHandshakeTimeout,
          std::uint16_t version = kProtocolVersion);

  const std::string& peer_site() const noexcept { return peer_; }

  CursorMap request_cursors();

  // Streams DELTA_RESP frames, handing each fully decoded batch to `on_batch`.
  // Returns the number of DELTA_RESP frames. Throws GapDetected when the peer
  // has pruned the range.
  std::size_t request_delta(const SiteId& origin, SequenceNumber after, std::uint32_t max_batch,
                            const std::function<void(std::vector<OperationRecord>&)>& on_batch);

  Snapshot request_snapshot();

  std::uint64_t bytes_received() const noexcept { return bytes_; }
  void set_timeout(std::chrono::milliseconds t) noexcept { timeout_ = t; }
  void close();

 private:
  Frame receive();

  std::unique_ptr<Connection> conn_;
  std::string peer_;
  std::chrono::milliseconds timeout_{30'000};
  std::uint64_t bytes_ = 0;
};

}  // namespace catalog
