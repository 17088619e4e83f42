#pragma once

#include <stdexcept>
#include <string>

namespace cogarb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model, configuration or argument violates a documented invariant.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// A scenario document could not be parsed; the message carries the line.
class ScenarioError : public Error {
 public:
  ScenarioError(int line, const std::string& what)
      : Error("scenario line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// The solver path requested is not implemented for this input (general-sum stage games).
class NotSupported : public Error {
 public:
  using Error::Error;
};

/// The stage program could not be solved to the requested tolerance.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// A switch was requested but every mode has already been used.
class NoUnusedMode : public Error {
 public:
  using Error::Error;
};

/// A switching schedule cannot be executed under the budget / used-mode rules.
class InfeasibleStrategy : public Error {
 public:
  using Error::Error;
};

/// A stored playbook was built from a different operational profile.
class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace cogarb
