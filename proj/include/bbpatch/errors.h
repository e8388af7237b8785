#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace bbpatch {

// Root of every error the library throws. Callers that only need a message
// can catch this; the subclasses exist so the CLI can map failures onto its
// exit-code contract and tests can assert on the failure kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (bad magic, truncated IDX, undecodable PNG).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inputs that are individually well formed but disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Oracle answered with something that contradicts its declared configuration
// (handshake shape/classes mismatch).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Remote oracle failures. Carries the request id when one was in flight and
// the HTTP status when the transport is HTTP.
class TransportError : public Error {
 public:
  TransportError(const std::string& what,
                 std::optional<std::uint64_t> request_id = std::nullopt,
                 std::optional<int> status = std::nullopt)
      : Error(format_message(what, request_id, status)),
        request_id_(request_id),
        status_(status) {}

  std::optional<std::uint64_t> request_id() const { return request_id_; }
  std::optional<int> status() const { return status_; }

 private:
  static std::string format_message(const std::string& what,
                            std::optional<std::uint64_t> id,
                            std::optional<int> status) {
    std::string out = what;
    if (id) out += " (request id " + std::to_string(*id) + ")";
    if (status) out += " (status " + std::to_string(*status) + ")";
    return out;
  }

  std::optional<std::uint64_t> request_id_;
  std::optional<int> status_;
};

}  // namespace bbpatch
