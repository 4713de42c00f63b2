#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace bdmri {

/// Malformed or inconsistent input data (dimension mismatch, nonpositive
/// signal, invalid probability, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Q = Phi^T W Phi + Lambda could not be factorized.
class SingularSystemError : public NumericalError {
 public:
  SingularSystemError(const std::string& what, double condition_estimate)
      : NumericalError(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// The residual degrees of freedom came out nonpositive.
class DegenerateDofError : public NumericalError {
 public:
  DegenerateDofError(const std::string& what, double dof)
      : NumericalError(what), dof_(dof) {}

  double dof() const noexcept { return dof_; }

 private:
  double dof_;
};

}  // namespace bdmri
