#pragma once

#include <stdexcept>
#include <string>

namespace daepinn {

/// Base of every error raised by the library. The CLI maps ParseError to exit
/// status 2 and everything else to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, double last_residual = 0.0)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// dg/dz singular: the algebraic equations cannot be solved for z locally.
class IndexViolation : public Error {
 public:
  using Error::Error;
};

class DivisionByZero : public Error {
 public:
  using Error::Error;
};

class NotADae : public Error {
 public:
  using Error::Error;
};

class AmbiguousRank : public Error {
 public:
  using Error::Error;
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, long epoch)
      : Error(what), epoch_(epoch) {}
  long epoch() const noexcept { return epoch_; }

 private:
  long epoch_;
};

class RolloutDivergence : public Error {
 public:
  RolloutDivergence(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// An implicit step whose Newton iteration did not converge.
class StepFailure : public NumericalFailure {
 public:
  StepFailure(const std::string& what, double last_residual, double time)
      : NumericalFailure(what, last_residual), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class DegenerateDenominator : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0) : Error(what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace daepinn
