#pragma once

#include <stdexcept>
#include <string>

namespace hjlab {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NotControllable : public Error {
 public:
  using Error::Error;
};

/// A singular value sits too close to the rank threshold to decide.
class RankAmbiguous : public Error {
 public:
  RankAmbiguous(const std::string& msg, double gap) : Error(msg), gap_(gap) {}
  double gap() const { return gap_; }

 private:
  double gap_;
};

class InternalConsistency : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public Error {
 public:
  using Error::Error;
};

class HTooLarge : public Error {
 public:
  using Error::Error;
};

class InvalidExponent : public Error {
 public:
  using Error::Error;
};

class GridSpecError : public Error {
 public:
  using Error::Error;
};

class DomainMismatch : public Error {
 public:
  using Error::Error;
};

class TooCoarse : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed; carries the best value found.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& msg, double best_value, double best_residual)
      : Error(msg), best_value_(best_value), best_residual_(best_residual) {}
  double best_value() const { return best_value_; }
  double best_residual() const { return best_residual_; }

 private:
  double best_value_;
  double best_residual_;
};

class UnknownPreset : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hjlab
