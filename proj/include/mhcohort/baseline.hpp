#pragma once

#include <string>
#include <vector>

#include "mhcohort/cohort.hpp"
#include "mhcohort/designs.hpp"

namespace mhc {

// Right-continuous nondecreasing step function starting at 0.
struct StepFunction {
  std::vector<double> times;  // ascending, may repeat for tied failures
  std::vector<double> jumps;

  double operator()(double t) const;
  double total() const;
};

struct BaselineReport {
  StepFunction lambda_hat;
  StepFunction omega2_hat;
  StepFunction B_hat;
  double sigma2 = 0.0;  // variance of sqrt(n)(phi_hat - phi) used for the correction term
  double n = 0.0;

  double sigma2_lambda(double s, double t) const;
  double se(double t) const;  // sqrt(sigma2_lambda(t,t) / n)
  double last_time() const;
  // True when t lies beyond the last failure, where all functions are held constant.
  bool extrapolated(double t) const { return t > last_time(); }
};

StepFunction baseline_cumhaz(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                             double phi);

BaselineReport baseline_variance(const std::vector<SampledFailure>& failures,
                                 const LevelSet& levels, double phi, double sigma2, double n);

// CSV columns t, lambda_hat, omega2_hat, B_hat, se_lambda
std::string format_baseline_csv(const BaselineReport& rep, const std::vector<double>& grid);

}  // namespace mhc
