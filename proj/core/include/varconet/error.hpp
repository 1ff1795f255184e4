#pragma once

#include <stdexcept>
#include <string>

namespace varconet {

// Root of every exception thrown by the library. The kind lets the CLI map
// failures to messages without catching each subclass separately.
class Error : public std::runtime_error {
public:
  enum class Kind { Format, Corruption, Invariant, Bounds, Io, Degenerate, Config, Numeric };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

class FormatError : public Error {
public:
  explicit FormatError(const std::string& w) : Error(Kind::Format, w) {}
};

class CorruptionError : public Error {
public:
  explicit CorruptionError(const std::string& w) : Error(Kind::Corruption, w) {}
};

class InvariantError : public Error {
public:
  explicit InvariantError(const std::string& w) : Error(Kind::Invariant, w) {}
};

class BoundsError : public Error {
public:
  explicit BoundsError(const std::string& w) : Error(Kind::Bounds, w) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& w) : Error(Kind::Io, w) {}
};

class DegenerateError : public Error {
public:
  explicit DegenerateError(const std::string& w) : Error(Kind::Degenerate, w) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& w) : Error(Kind::Config, w) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& w) : Error(Kind::Numeric, w) {}
};

const char* to_string(Error::Kind kind) noexcept;

}  // namespace varconet
