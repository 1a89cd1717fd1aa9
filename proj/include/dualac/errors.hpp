#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dualac {

/// Malformed input: wrong dimensions, out-of-range parameters, invalid distributions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A requested computation would exceed a configured size cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear system without a unique solution.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or breakdown inside an iterative method.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative fit produced non-finite values; carries the last finite iterate.
class DivergedError : public NumericalError {
 public:
  DivergedError(const std::string& what, Eigen::VectorXd last_finite)
      : NumericalError(what), last_finite_(std::move(last_finite)) {}

  const Eigen::VectorXd& last_finite() const noexcept { return last_finite_; }

 private:
  Eigen::VectorXd last_finite_;
};

/// Operation not available for this kind of object (e.g. exporting a continuous env).
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Object used in a state that does not allow the call (e.g. stepping a finished episode).
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dualac
