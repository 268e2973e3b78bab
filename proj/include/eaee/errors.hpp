#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eaee {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration or parameter block violates one or more invariants.
/// Every violated field is listed in `violations()`.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  explicit ConfigError(const std::string& violation)
      : ConfigError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Malformed input file (bad header, wrong column count, unparsable number).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed, but a value is out of its allowed range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The energy source chain has two absorbing states, so no unique steady state.
class ReducibleChainError : public Error {
 public:
  using Error::Error;
};

/// An action was requested that the battery cannot pay for.
class InfeasibleActionError : public Error {
 public:
  using Error::Error;
};

/// Singular evaluation system, failed convergence, or an enumeration bound hit.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A file produced by an earlier pipeline step is not present.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace eaee
