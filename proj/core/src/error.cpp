#include "varconet/error.hpp"

namespace varconet {

const char* to_string(Error::Kind kind) noexcept {
  switch (kind) {
    case Error::Kind::Format: return "format error";
    case Error::Kind::Corruption: return "corruption error";
    case Error::Kind::Invariant: return "invariant error";
    case Error::Kind::Bounds: return "bounds error";
    case Error::Kind::Io: return "I/O error";
    case Error::Kind::Degenerate: return "degenerate input";
    case Error::Kind::Config: return "config error";
    case Error::Kind::Numeric: return "numeric error";
  }
  return "error";
}

}  // namespace varconet
