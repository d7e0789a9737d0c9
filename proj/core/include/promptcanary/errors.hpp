#pragma once

#include <stdexcept>
#include <string>

namespace canary {

/// Input that violates a documented precondition (bad lengths, empty sets,
/// malformed templates, out-of-range positions).
class InvalidArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A record in a corpus or config file could not be parsed. Carries the
/// 1-based line number when the source is line-oriented.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, long line = -1)
      : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  long line() const { return line_; }

private:
  long line_;
};

/// A parsed record is well-formed JSON but does not match the schema
/// (missing field, wrong type, bad enum value).
class SchemaError : public ParseError {
public:
  using ParseError::ParseError;
};

/// An operation was requested that the model does not support
/// (e.g. gradients from a remote endpoint).
class CapabilityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A token sequence does not fit in the model's context window.
class ContextOverflowError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// HTTP or connection failure talking to a remote model. Retriable by the
/// caller; carries the HTTP status (0 when the connection itself failed).
class TransportError : public std::runtime_error {
public:
  TransportError(const std::string& what, int status)
      : std::runtime_error(what + " (status " + std::to_string(status) + ")"),
        status_(status) {}

  int status() const { return status_; }

private:
  int status_;
};

/// A gradient or loss came back NaN/Inf. Names the parameter block or
/// candidate so the failing coordinate can be found.
class NonFiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace canary
