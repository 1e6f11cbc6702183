#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace catalog {

enum class Errc {
  EmptyName,
  IllegalCharacter,
  TooLong,
  InvalidArgument,
  Decode,
  Io,
  CorruptLog,
  SiteMismatch,
  OwnershipViolation,
  UnknownKey,
  DuplicateKey,
  UnknownOrigin,
  GapDetected,
  OutOfOrder,
  OriginIsSelf,
  DigestMismatch,
  ConnectionRefused,
  VersionMismatch,
  FederationMismatch,
  HandshakeTimeout,
  Timeout,
  FrameTooLarge,
  ProtocolError,
  UnknownSite,
  UnknownCluster,
  EmptyPath,
  UnknownToken,
  NotFound,
};

// Stable upper-case token, used in `E:<code>:` CLI diagnostics and ERROR frames.
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace catalog
