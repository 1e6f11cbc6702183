#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "catalog/codec.hpp"

namespace catalog {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(ByteView data);

// Incremental SHA-256.
class Sha256Builder {
 public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  void update(ByteView data);
  Sha256 finish();

 private:
  void* ctx_;
};

// IEEE 802.3 polynomial (zlib).
std::uint32_t crc32(ByteView data) noexcept;

std::string to_hex(const Sha256& digest);
Sha256 sha256_from_hex(std::string_view hex);

}  // namespace catalog
