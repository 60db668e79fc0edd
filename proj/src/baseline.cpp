#include "mhcohort/baseline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mhcohort/io.hpp"

namespace mhc {

double StepFunction::operator()(double t) const {
  double v = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] <= t) v += jumps[i];
  return v;
}

double StepFunction::total() const {
  double v = 0.0;
  for (double j : jumps) v += j;
  return v;
}

double BaselineReport::sigma2_lambda(double s, double t) const {
  return omega2_hat(std::min(s, t)) + B_hat(s) * sigma2 * B_hat(t);
}

double BaselineReport::se(double t) const { return std::sqrt(sigma2_lambda(t, t) / n); }

double BaselineReport::last_time() const {
  return lambda_hat.times.empty() ? 0.0 : lambda_hat.times.back();
}

namespace {

struct Sums {
  double s0 = 0.0;
  double s1 = 0.0;
};

Sums weighted_sums(const SampledFailure& f, const LevelSet& levels, double phi) {
  Sums out;
  for (const auto& m : f.members) {
    double a = levels.alpha(m.level);
    out.s0 += std::pow(phi, a) * m.weight;
    if (a != 0.0) out.s1 += a * std::pow(phi, a - 1.0) * m.weight;
  }
  return out;
}

}  // namespace

StepFunction baseline_cumhaz(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                             double phi) {
  StepFunction out;
  for (const auto& f : failures) {
    Sums s = weighted_sums(f, levels, phi);
    out.times.push_back(f.time);
    out.jumps.push_back(s.s0 > 0.0 ? 1.0 / s.s0 : 0.0);
  }
  return out;
}

BaselineReport baseline_variance(const std::vector<SampledFailure>& failures,
                                 const LevelSet& levels, double phi, double sigma2, double n) {
  BaselineReport rep;
  rep.sigma2 = sigma2;
  rep.n = n;
  for (const auto& f : failures) {
    Sums s = weighted_sums(f, levels, phi);
    double inv = s.s0 > 0.0 ? 1.0 / s.s0 : 0.0;
    rep.lambda_hat.times.push_back(f.time);
    rep.lambda_hat.jumps.push_back(inv);
    rep.omega2_hat.times.push_back(f.time);
    rep.omega2_hat.jumps.push_back(n * inv * inv);
    rep.B_hat.times.push_back(f.time);
    rep.B_hat.jumps.push_back(s.s1 * inv * inv);
  }
  return rep;
}

std::string format_baseline_csv(const BaselineReport& rep, const std::vector<double>& grid) {
  std::string out = "t,lambda_hat,omega2_hat,B_hat,se_lambda\n";
  for (double t : grid)
    out += fmt::format("{},{},{},{},{}\n", format_double(t), format_double(rep.lambda_hat(t)),
                       format_double(rep.omega2_hat(t)), format_double(rep.B_hat(t)),
                       format_double(rep.se(t)));
  return out;
}

}  // namespace mhc
