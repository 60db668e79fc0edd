#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mhcohort/cohort.hpp"
#include "mhcohort/designs.hpp"

namespace mhc {

// Unordered level pairs j<k in the order (0,1), (0,2), ..., (1,2), ...
std::vector<std::pair<int, int>> level_pairs(std::size_t n_levels);

struct Increment {
  double time;
  int case_level;
  int stratum;            // stratum of the case
  std::vector<double> s;  // s_k = n(t)^{-1} sum of weights of sampled members at level k
};

struct EstimatorState {
  LevelSet levels;
  std::vector<double> R;  // row-major (eta+1)^2, R[j*K+k]
  std::vector<Increment> increments;
  double n = 0.0;         // cohort size
  std::vector<double> c;  // one weight per level pair, see level_pairs

  std::size_t K() const { return levels.size(); }
  double r(std::size_t j, std::size_t k) const { return R[j * K() + k]; }
};

// n_cohort <= 0 selects the largest n(t) seen among the failures.
EstimatorState accumulate(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                          double n_cohort = 0.0);

double falling_factorial(double a, int p);

// d^p/dphi^p of phi^{alpha_k} R_jk - phi^{alpha_j} R_kj.
double g_value(const EstimatorState& st, int j, int k, double phi, int p);

// n^{-1} sum_{j<k} c_jk G_jk G'_jk
double score(const EstimatorState& st, double phi);
double score_derivative(const EstimatorState& st, double phi);
// n^{-1} sum_{j<k} c_jk G_jk^2, half of whose derivative is the score.
double weighted_ssq(const EstimatorState& st, double phi);

struct SolveOptions {
  double lo = 1e-6;
  double hi = 1e6;
  int grid = 400;
  double tol = 1e-14;  // on log phi
  double prefer = 0.0; // > 0: among roots pick the one closest to this value
};

struct SolveResult {
  double phi = 0.0;
  bool degenerate = false;  // boundary estimate phi = 0
  int roots = 0;
  std::string note;
};

SolveResult solve_phi(const EstimatorState& st, const SolveOptions& opt = {});

enum class VariationMethod { Optional, ModelBased };
std::string method_name(VariationMethod m);
VariationMethod parse_method(const std::string& name);

struct Variation {
  std::size_t K = 0;
  std::vector<double> I2;  // K*K, symmetric
  std::vector<double> I3;  // K*K*K, symmetric
  double i2(std::size_t a, std::size_t b) const { return I2[a * K + b]; }
  double i3(std::size_t a, std::size_t b, std::size_t c) const { return I3[(a * K + b) * K + c]; }
};

Variation optional_variation(const EstimatorState& st, double phi);
Variation model_variation(const EstimatorState& st, double phi);

// Pair-indexed quantities shared by the estimated and the limiting variance.
struct PairMoments {
  std::vector<double> beta;   // per pair
  std::vector<double> Gamma;  // pairs x pairs covariation of the G processes
};

PairMoments pair_moments(const LevelSet& levels, const Variation& I, double phi);

// v^2 / gamma^2 for a weight vector c.
double sandwich_sigma2(const PairMoments& pm, const std::vector<double>& c);

struct VarianceReport {
  double phi_hat = 0.0;
  double sigma2 = 0.0;
  double sigma2_theta = 0.0;
  double gamma_hat = 0.0;
  Variation I;
  VariationMethod method = VariationMethod::Optional;
  bool informative = true;
};

VarianceReport variance(const EstimatorState& st, const Variation& I, double phi,
                        VariationMethod method = VariationMethod::Optional);

struct OptimalC {
  std::vector<double> c;
  double sigma2 = 0.0;
  bool fallback = false;  // covariation not positive definite; equal weights returned
};

// Weights minimising v^2/gamma^2 given the pair slopes beta and the covariation Gamma.
OptimalC optimal_c(const std::vector<double>& beta, const std::vector<double>& Gamma);

enum class CChoice { Equal, Optimal, Custom };

struct EstimateOptions {
  CChoice c = CChoice::Equal;
  std::vector<double> custom_c;
  VariationMethod variance = VariationMethod::Optional;
  double n_cohort = 0.0;  // <= 0: largest n(t) among failures
};

struct EstimateResult {
  double phi_hat = 0.0;
  double theta_hat = 0.0;
  double sigma2 = 0.0;
  double sigma2_theta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n = 0.0;
  std::size_t failures = 0;
  std::vector<double> c;
  VariationMethod method = VariationMethod::Optional;
  std::vector<std::string> flags;
  bool degenerate = false;  // no usable point estimate or variance

  bool has(const std::string& flag) const;
};

EstimateResult estimate(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                        const EstimateOptions& opt = {});

// Matching data with a separate baseline hazard per stratum: the point estimate is
// unchanged; the variation is accumulated stratum by stratum and summed.
EstimateResult estimate_stratified(const std::vector<SampledFailure>& failures,
                                   const LevelSet& levels, const EstimateOptions& opt = {});

std::string estimate_to_json(const EstimateResult& r);

}  // namespace mhc
