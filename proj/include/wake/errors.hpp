#pragma once

#include <stdexcept>
#include <string>

namespace wake {

/// Raised when serialized data (snapshot files, CSV, wire payloads) is
/// malformed. The message names the offending field or offset.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by remote backends. `kind` tells callers whether the failure is
/// retryable (unavailable) or a hard reject (invalid_parameter, decode).
class RemoteError : public std::runtime_error {
 public:
  enum class Kind { invalid_parameter, unavailable, decode };

  RemoteError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace wake
