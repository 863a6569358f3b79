#pragma once

#include <stdexcept>
#include <string>

namespace stgp {

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or inconsistent input data (CLI exit code 2).
class DataError : public Error {
public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failure during fitting or evaluation (CLI exit code 3).
class NumericError : public Error {
public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class IoError : public DataError {
public:
  explicit IoError(const std::string& msg) : DataError("io error: " + msg) {}
};

class EmptyInput : public DataError {
public:
  explicit EmptyInput(const std::string& msg) : DataError("empty input: " + msg) {}
};

class ShapeMismatch : public DataError {
public:
  explicit ShapeMismatch(const std::string& msg) : DataError("shape mismatch: " + msg) {}
};

class TooFewPoints : public DataError {
public:
  explicit TooFewPoints(const std::string& msg) : DataError("too few points: " + msg) {}
};

class InsufficientHistory : public DataError {
public:
  explicit InsufficientHistory(const std::string& msg)
      : DataError("insufficient history: " + msg) {}
};

class LeakageError : public DataError {
public:
  explicit LeakageError(const std::string& msg) : DataError("leakage: " + msg) {}
};

class EventOutsideDomain : public DataError {
public:
  explicit EventOutsideDomain(const std::string& msg)
      : DataError("event outside domain: " + msg) {}
};

class NonFiniteInput : public NumericError {
public:
  explicit NonFiniteInput(const std::string& msg) : NumericError("non-finite input: " + msg) {}
};

class CholeskyFailure : public NumericError {
public:
  explicit CholeskyFailure(const std::string& msg) : NumericError("cholesky failure: " + msg) {}
};

class OptimizerDiverged : public NumericError {
public:
  explicit OptimizerDiverged(const std::string& msg)
      : NumericError("optimizer diverged: " + msg) {}
};

class UnboundedIntensity : public NumericError {
public:
  explicit UnboundedIntensity(const std::string& msg)
      : NumericError("unbounded intensity: " + msg) {}
};

}  // namespace stgp
