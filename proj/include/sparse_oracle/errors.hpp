#pragma once

#include <stdexcept>
#include <string>

namespace sparse_oracle {

/// Root of the library's error hierarchy.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical precondition failed (degenerate model, empty domain,
/// value outside the range where a formula is defined).
class numeric_domain_error : public error {
 public:
  using error::error;
};

/// Root finder was handed an interval without a sign change.
class bracketing_error : public numeric_domain_error {
 public:
  using numeric_domain_error::numeric_domain_error;
};

/// Adaptive quadrature ran out of panels. Carries the best estimate so the
/// caller can decide whether the partial answer is usable.
class quadrature_error : public numeric_domain_error {
 public:
  quadrature_error(const std::string& what, double best_estimate, double error_bound)
      : numeric_domain_error(what), best_estimate_(best_estimate), error_bound_(error_bound) {}

  double best_estimate() const { return best_estimate_; }
  double error_bound() const { return error_bound_; }

 private:
  double best_estimate_;
  double error_bound_;
};

/// Operation needs a density near zero (or a density at all) that the
/// supplied effect prior does not have.
class unsupported_prior_error : public numeric_domain_error {
 public:
  using numeric_domain_error::numeric_domain_error;
};

/// Equation provably has no solution for the supplied parameters.
class no_solution_error : public numeric_domain_error {
 public:
  using numeric_domain_error::numeric_domain_error;
};

/// Bad scenario/run configuration (unknown key, unparsable value, invalid
/// combination). Maps to the CLI's config exit code.
class config_error : public error {
 public:
  using error::error;
};

}  // namespace sparse_oracle
