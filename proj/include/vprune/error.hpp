#pragma once

#include <stdexcept>
#include <string>

namespace vprune {

// Base of every error thrown by the library. The CLI maps each subclass to
// an exit code, so new failure classes need a new subclass, not a new message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (vocab, VPEM, JSON artifacts, corpus).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Input bytes are not valid UTF-8.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Violated precondition or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shapes that should agree do not.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Rows of paired inputs do not line up (teacher logits vs. corpus).
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Network failure or timeout talking to the generation service.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The generation service answered, but not with something usable.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, std::string body_excerpt, const std::string& what)
      : Error(what), status_(status), body_excerpt_(std::move(body_excerpt)) {}

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

// Filesystem failures (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vprune
