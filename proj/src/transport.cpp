#include "catalog/transport.hpp"

#include <algorithm>

#include "catalog/error.hpp"

namespace catalog {

namespace {

constexpr std::uint32_t kMaxBatchCap = 100'000;

// Payload parsers surface every decode problem as a protocol error.
template <class F>
auto parse_payload(const Frame& f, MessageType expected, F&& body) {
  if (f.type != expected) {
    fail(Errc::ProtocolError, "unexpected message type " + std::to_string(static_cast<int>(f.type)));
  }
  try {
    Decoder d(f.payload);
    auto out = body(d);
    d.expect_end();
    return out;
  } catch (const Error& e) {
    if (e.code() == Errc::ProtocolError) throw;
    fail(Errc::ProtocolError, std::string("malformed payload: ") + e.what());
  }
}

}  // namespace

bool is_known_message(std::uint8_t type) noexcept { return type >= 0x01 && type <= 0x08; }

void append_frame(Bytes& out, const Frame& f) {
  if (f.payload.size() > kMaxFramePayload) {
    fail(Errc::FrameTooLarge, "frame payload of " + std::to_string(f.payload.size()) + " bytes exceeds 64 MiB");
  }
  std::uint8_t hdr[kFrameHeader];
  put_u32_be(hdr, static_cast<std::uint32_t>(f.payload.size()));
  hdr[4] = static_cast<std::uint8_t>(f.type);
  out.insert(out.end(), hdr, hdr + kFrameHeader);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
}

Bytes encode_frame(const Frame& f) {
  Bytes out;
  out.reserve(kFrameHeader + f.payload.size());
  append_frame(out, f);
  return out;
}

std::size_t decode_frame(ByteView in, Frame& out) {
  if (in.size() < kFrameHeader) return 0;
  std::uint32_t len = get_u32_be(in.data());
  if (len > kMaxFramePayload) fail(Errc::FrameTooLarge, "incoming frame of " + std::to_string(len) + " bytes");
  if (!is_known_message(in[4])) fail(Errc::ProtocolError, "unknown message type " + std::to_string(in[4]));
  if (in.size() < kFrameHeader + len) return 0;
  out.type = static_cast<MessageType>(in[4]);
  out.payload.assign(in.begin() + kFrameHeader, in.begin() + kFrameHeader + len);
  return kFrameHeader + len;
}

std::string_view to_string(WireError e) noexcept {
  switch (e) {
    case WireError::Version: return "VERSION";
    case WireError::Federation: return "FEDERATION";
    case WireError::UnknownType: return "UNKNOWN_TYPE";
    case WireError::Gap: return "GAP";
    case WireError::UnknownOrigin: return "UNKNOWN_ORIGIN";
    case WireError::Protocol: return "PROTOCOL";
    case WireError::Internal: return "INTERNAL";
  }
  return "?";
}

// --- message payloads ---

Frame make_frame(const HelloMsg& m) {
  Encoder e;
  e.u16(m.version);
  e.str(m.site_id);
  e.raw(m.federation);
  return {MessageType::Hello, e.take()};
}

Frame make_frame(const ErrorMsg& m) {
  Encoder e;
  e.u16(static_cast<std::uint16_t>(m.code));
  e.str(m.message);
  return {MessageType::Error, e.take()};
}

Frame make_frame(const CursorMap& cursors) {
  Encoder e;
  e.u32(static_cast<std::uint32_t>(cursors.size()));
  for (const auto& [origin, seq] : cursors) {
    encode(e, origin);
    e.u64(seq);
  }
  return {MessageType::CursorsResp, e.take()};
}

Frame make_frame(const DeltaReqMsg& m) {
  Encoder e;
  encode(e, m.origin);
  e.u64(m.after);
  e.u32(m.max_batch);
  return {MessageType::DeltaReq, e.take()};
}

Frame make_frame(const DeltaRespMsg& m) {
  Encoder e;
  e.u8(m.last ? 1 : 0);
  e.u32(static_cast<std::uint32_t>(m.ops.size()));
  Bytes records;
  for (const auto& op : m.ops) append_log_record(records, op);
  e.raw(records);
  return {MessageType::DeltaResp, e.take()};
}

Frame make_frame(const SnapChunkMsg& m) {
  Encoder e;
  e.bytes(m.data);
  if (m.data.empty()) e.raw(m.digest);
  return {MessageType::SnapChunk, e.take()};
}

Frame make_request(MessageType type) { return {type, {}}; }

HelloMsg parse_hello(const Frame& f) {
  return parse_payload(f, MessageType::Hello, [](Decoder& d) {
    HelloMsg m;
    m.version = d.u16();
    m.site_id = d.str();
    ByteView fed = d.raw(32);
    std::copy(fed.begin(), fed.end(), m.federation.begin());
    return m;
  });
}

ErrorMsg parse_error(const Frame& f) {
  return parse_payload(f, MessageType::Error, [](Decoder& d) {
    ErrorMsg m;
    m.code = static_cast<WireError>(d.u16());
    m.message = d.str();
    return m;
  });
}

CursorMap parse_cursors(const Frame& f) {
  return parse_payload(f, MessageType::CursorsResp, [](Decoder& d) {
    CursorMap m;
    std::uint32_t n = d.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      SiteId origin;
      decode(d, origin);
      m[origin] = d.u64();
    }
    return m;
  });
}

DeltaReqMsg parse_delta_req(const Frame& f) {
  return parse_payload(f, MessageType::DeltaReq, [](Decoder& d) {
    DeltaReqMsg m;
    decode(d, m.origin);
    m.after = d.u64();
    m.max_batch = d.u32();
    return m;
  });
}

DeltaRespMsg parse_delta_resp(const Frame& f) {
  return parse_payload(f, MessageType::DeltaResp, [](Decoder& d) {
    DeltaRespMsg m;
    std::uint8_t last = d.u8();
    if (last > 1) fail(Errc::ProtocolError, "bad last flag");
    m.last = last == 1;
    std::uint32_t n = d.u32();
    if (n > d.remaining() / 8) fail(Errc::ProtocolError, "op count exceeds payload");
    m.ops.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      OperationRecord op;
      ByteView rest = d.raw(d.remaining());
      std::size_t used = 0;
      try {
        used = parse_log_record(rest, op);
      } catch (const Error& e) {
        fail(Errc::ProtocolError, std::string("bad op record: ") + e.what());
      }
      if (used == 0) fail(Errc::ProtocolError, "truncated op record");
      d = Decoder(rest.subspan(used));
      m.ops.push_back(std::move(op));
    }
    return m;
  });
}

SnapChunkMsg parse_snap_chunk(const Frame& f) {
  return parse_payload(f, MessageType::SnapChunk, [](Decoder& d) {
    SnapChunkMsg m;
    m.data = d.bytes();
    if (m.data.size() > kSnapChunkBytes) fail(Errc::ProtocolError, "snapshot chunk over 4 MiB");
    if (m.data.empty()) {
      ByteView dig = d.raw(32);
      std::copy(dig.begin(), dig.end(), m.digest.begin());
    }
    return m;
  });
}

void throw_wire_error(const ErrorMsg& m) {
  std::string what = std::string(to_string(m.code)) + ": " + m.message;
  switch (m.code) {
    case WireError::Version: fail(Errc::VersionMismatch, what);
    case WireError::Federation: fail(Errc::FederationMismatch, what);
    case WireError::Gap: fail(Errc::GapDetected, what);
    case WireError::UnknownOrigin: fail(Errc::UnknownOrigin, what);
    default: fail(Errc::ProtocolError, what);
  }
}

// --- server side ---

SyncService::SyncService(StoreRef store, Sha256 federation, std::uint32_t max_batch)
    : store_(std::move(store)), federation_(federation), max_batch_(max_batch) {}

SyncService::SyncService(Store& store, Sha256 federation, std::uint32_t max_batch)
    : SyncService([&store] { return std::shared_ptr<Store>(&store, [](Store*) {}); }, federation, max_batch) {}

std::vector<Frame> SyncService::refuse(WireError code, const std::string& message) {
  closed_ = true;
  return {make_frame(ErrorMsg{code, message})};
}

std::vector<Frame> SyncService::handle(const Frame& in) {
  if (closed_) return {};
  if (!is_known_message(static_cast<std::uint8_t>(in.type))) {
    return refuse(WireError::UnknownType, "unknown message type " + std::to_string(static_cast<int>(in.type)));
  }
  try {
    if (!greeted_) {
      if (in.type != MessageType::Hello) return refuse(WireError::Protocol, "expected HELLO");
      HelloMsg hello = parse_hello(in);
      if (hello.version != kProtocolVersion) {
        return refuse(WireError::Version, "protocol version " + std::to_string(hello.version) +
                                              " not supported, expected " + std::to_string(kProtocolVersion));
      }
      if (hello.federation != federation_) return refuse(WireError::Federation, "federation config differs");
      validate_site_token(hello.site_id);
      auto store = store_();
      if (hello.site_id == store->site().id) return refuse(WireError::Protocol, "peer claims our own site id");
      peer_ = hello.site_id;
      greeted_ = true;
      return {make_frame(HelloMsg{kProtocolVersion, store->site().id, federation_})};
    }

    switch (in.type) {
      case MessageType::CursorsReq:
        if (!in.payload.empty()) return refuse(WireError::Protocol, "CURSORS_REQ carries a payload");
        return {make_frame(store_()->cursors())};

      case MessageType::DeltaReq: {
        DeltaReqMsg req = parse_delta_req(in);
        auto store = store_();
        std::uint32_t batch = req.max_batch == 0 ? max_batch_ : std::min(req.max_batch, kMaxBatchCap);
        SequenceNumber high = store->cursor(req.origin.id);
        store->note_ack(peer_, req.origin, req.after);
        std::vector<Frame> out;
        SequenceNumber after = req.after;
        try {
          while (true) {
            DeltaRespMsg resp;
            if (after < high) resp.ops = store->scan_partition(req.origin.id, after, std::min<SequenceNumber>(batch, high - after));
            if (!resp.ops.empty()) after = resp.ops.back().seq;
            resp.last = after >= high || resp.ops.empty();
            out.push_back(make_frame(resp));
            if (resp.last) break;
          }
        } catch (const Error& e) {
          if (e.code() == Errc::GapDetected) return {make_frame(ErrorMsg{WireError::Gap, e.what()})};
          if (e.code() == Errc::UnknownOrigin) return {make_frame(ErrorMsg{WireError::UnknownOrigin, e.what()})};
          throw;
        }
        return out;
      }

      case MessageType::SnapReq: {
        if (!in.payload.empty()) return refuse(WireError::Protocol, "SNAP_REQ carries a payload");
        Snapshot snap = store_()->take_snapshot();
        Bytes bytes = encode_snapshot(snap);
        std::vector<Frame> out;
        for (std::size_t off = 0; off < bytes.size(); off += kSnapChunkBytes) {
          auto end = std::min(bytes.size(), off + kSnapChunkBytes);
          out.push_back(make_frame(SnapChunkMsg{Bytes(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                                      bytes.begin() + static_cast<std::ptrdiff_t>(end)),
                                                {}}));
        }
        out.push_back(make_frame(SnapChunkMsg{{}, snap.digest}));
        return out;
      }

      case MessageType::Error:
        closed_ = true;
        return {};

      default:
        return refuse(WireError::Protocol, "unexpected message type " + std::to_string(static_cast<int>(in.type)));
    }
  } catch (const Error& e) {
    return refuse(e.code() == Errc::ProtocolError || e.code() == Errc::Decode || e.code() == Errc::InvalidArgument
                      ? WireError::Protocol
                      : WireError::Internal,
                  e.what());
  }
}

// --- client side ---

Session::Session(std::unique_ptr<Connection> conn, const SiteId& local, const Sha256& federation,
                 std::chrono::milliseconds handshake_timeout, std::uint16_t version)
    : conn_(std::move(conn)) {
  conn_->send(make_frame(HelloMsg{version, local.id, federation}));
  Frame reply;
  try {
    reply = conn_->receive(handshake_timeout);
  } catch (const Error& e) {
    conn_->close();
    if (e.code() == Errc::Timeout) fail(Errc::HandshakeTimeout, "no HELLO from peer");
    throw;
  }
  bytes_ += kFrameHeader + reply.payload.size();
  try {
    if (reply.type == MessageType::Error) throw_wire_error(parse_error(reply));
    HelloMsg hello = parse_hello(reply);
    if (hello.version != version) fail(Errc::VersionMismatch, "peer speaks version " + std::to_string(hello.version));
    if (hello.federation != federation) fail(Errc::FederationMismatch, "peer federation differs");
    peer_ = hello.site_id;
  } catch (...) {
    conn_->close();
    throw;
  }
}

void Session::close() {
  if (conn_) conn_->close();
}

Frame Session::receive() {
  Frame f = conn_->receive(timeout_);
  bytes_ += kFrameHeader + f.payload.size();
  return f;
}

CursorMap Session::request_cursors() {
  conn_->send(make_request(MessageType::CursorsReq));
  Frame f = receive();
  try {
    if (f.type == MessageType::Error) throw_wire_error(parse_error(f));
    return parse_cursors(f);
  } catch (const Error& e) {
    if (e.code() == Errc::ProtocolError) close();
    throw;
  }
}

std::size_t Session::request_delta(const SiteId& origin, SequenceNumber after, std::uint32_t max_batch,
                                   const std::function<void(std::vector<OperationRecord>&)>& on_batch) {
  conn_->send(make_frame(DeltaReqMsg{origin, after, max_batch}));
  std::size_t frames = 0;
  while (true) {
    Frame f = receive();
    DeltaRespMsg resp;
    try {
      if (f.type == MessageType::Error) throw_wire_error(parse_error(f));
      resp = parse_delta_resp(f);
      for (const auto& op : resp.ops) {
        if (op.origin != origin) fail(Errc::ProtocolError, "delta for " + origin.id + " carries ops of " + op.origin.id);
      }
    } catch (const Error& e) {
      if (e.code() == Errc::ProtocolError) close();
      throw;
    }
    ++frames;
    if (!resp.ops.empty()) on_batch(resp.ops);
    if (resp.last) return frames;
  }
}

Snapshot Session::request_snapshot() {
  conn_->send(make_request(MessageType::SnapReq));
  Bytes assembled;
  while (true) {
    Frame f = receive();
    SnapChunkMsg chunk;
    try {
      if (f.type == MessageType::Error) throw_wire_error(parse_error(f));
      chunk = parse_snap_chunk(f);
    } catch (const Error& e) {
      if (e.code() == Errc::ProtocolError) close();
      throw;
    }
    if (!chunk.data.empty()) {
      assembled.insert(assembled.end(), chunk.data.begin(), chunk.data.end());
      continue;
    }
    Snapshot snap;
    try {
      snap = decode_snapshot(assembled);
    } catch (const Error& e) {
      if (e.code() == Errc::DigestMismatch) throw;
      close();
      fail(Errc::ProtocolError, std::string("bad snapshot: ") + e.what());
    }
    if (snap.digest != chunk.digest) fail(Errc::DigestMismatch, "snapshot trailer digest differs");
    return snap;
  }
}

}  // namespace catalog
