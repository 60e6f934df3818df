#pragma once

#include <stdexcept>
#include <string>

namespace biasaudit {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input document (JSON syntax, missing fields, bad enum values).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid document that violates a battery/manifest invariant.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Backend failure: transport exhaustion, malformed payload, bad config.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Replay backend asked for a tag the cassette does not contain.
class ReplayMissError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Cassette integrity problem (duplicate tag, digest mismatch, I/O).
class CassetteError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Experiment-level failure (attempts exhausted, incomplete run).
class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace biasaudit
