#include "catalog/codec.hpp"

#include "catalog/error.hpp"

namespace catalog {

void put_u32_be(std::uint8_t* out, std::uint32_t v) noexcept {
  out[0] = static_cast<std::uint8_t>(v >> 24);
  out[1] = static_cast<std::uint8_t>(v >> 16);
  out[2] = static_cast<std::uint8_t>(v >> 8);
  out[3] = static_cast<std::uint8_t>(v);
}

std::uint32_t get_u32_be(const std::uint8_t* in) noexcept {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
         (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

void Encoder::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  buf_.push_back(static_cast<std::uint8_t>(v));
}

void Encoder::u32(std::uint32_t v) {
  std::uint8_t b[4];
  put_u32_be(b, v);
  buf_.insert(buf_.end(), b, b + 4);
}

void Encoder::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v >> 32));
  u32(static_cast<std::uint32_t>(v));
}

void Encoder::str(std::string_view s) { bytes(as_bytes(s)); }

void Encoder::bytes(ByteView b) {
  if (b.size() > UINT32_MAX) fail(Errc::InvalidArgument, "field exceeds 4 GiB");
  u32(static_cast<std::uint32_t>(b.size()));
  raw(b);
}

void Decoder::need(std::size_t n) const {
  if (remaining() < n) {
    fail(Errc::Decode, "truncated input: need " + std::to_string(n) + " bytes, have " +
                           std::to_string(remaining()));
  }
}

std::uint8_t Decoder::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t Decoder::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
  pos_ += 2;
  return v;
}

std::uint32_t Decoder::u32() {
  need(4);
  std::uint32_t v = get_u32_be(data_.data() + pos_);
  pos_ += 4;
  return v;
}

std::uint64_t Decoder::u64() {
  std::uint64_t hi = u32();
  return (hi << 32) | u32();
}

ByteView Decoder::raw(std::size_t n) {
  need(n);
  ByteView out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string Decoder::str() {
  ByteView b = raw(u32());
  return std::string(b.begin(), b.end());
}

Bytes Decoder::bytes() {
  ByteView b = raw(u32());
  return Bytes(b.begin(), b.end());
}

void Decoder::expect_end() const {
  if (!at_end()) fail(Errc::Decode, std::to_string(remaining()) + " trailing bytes");
}

}  // namespace catalog
