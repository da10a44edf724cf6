#pragma once

#include <stdexcept>
#include <string>

namespace latentlab {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TokenizationError : public Error {
 public:
  using Error::Error;
};

class InterventionError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or incompatible artifact files.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A latent or report was produced against a different checkpoint.
class FingerprintError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when an upstream artifact named on the command line does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

/// An artifact no longer matches the config or checkpoint it claims to come from.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace latentlab
