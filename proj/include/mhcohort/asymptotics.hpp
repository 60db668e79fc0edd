#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mhcohort/cohort.hpp"
#include "mhcohort/designs.hpp"
#include "mhcohort/estimator.hpp"

namespace mhc {

// Limit functions are piecewise constant on [t0, t1) segments covering [0, tau].
struct Segment {
  double t0 = 0.0;
  double t1 = 0.0;
  double p = 1.0;                           // P(at risk)
  double lambda0 = 1.0;                     // baseline hazard
  std::vector<double> f;                    // level frequencies among those at risk
  std::vector<double> q;                    // stratum frequencies (empty: one stratum)
  std::vector<std::vector<double>> f_strata;  // f_strata[l][k], level frequencies within stratum
  std::vector<double> lambda_strata;        // optional per-stratum baseline (matching only)

  std::size_t n_strata() const { return q.empty() ? 1 : q.size(); }
  double q_of(std::size_t l) const { return q.empty() ? 1.0 : q[l]; }
  const std::vector<double>& f_of(std::size_t l) const { return q.empty() ? f : f_strata[l]; }
  double lambda_of(std::size_t l) const { return lambda_strata.empty() ? lambda0 : lambda_strata[l]; }
  double length() const { return t1 - t0; }
};

struct PopulationModel {
  LevelSet levels;
  std::vector<Segment> segments;

  double tau() const { return segments.empty() ? 0.0 : segments.back().t1; }
  void validate() const;

  static PopulationModel constant(const LevelSet& levels, std::vector<double> f, double p,
                                  double lambda0, double tau);
  // f is derived as sum_l f_strata[l] q_l.
  static PopulationModel stratified(const LevelSet& levels, std::vector<double> q,
                                    std::vector<std::vector<double>> f_strata, double p,
                                    double lambda0, double tau,
                                    std::vector<double> lambda_strata = {});
};

// Piecewise-constant function of time.
struct Piecewise {
  std::vector<double> t0, t1, value;
  double operator()(double t) const;
  double integral() const;
};

// ---- moments --------------------------------------------------------------

// E[prod_{k in v} X_k] for X multivariate hypergeometric(n_vec, m), by summing the pmf
// over the support.
Rational hypergeom_moment(const std::vector<long>& n_vec, long m, const std::vector<int>& v);
// Same quantity through factorial moments: E[prod (X_k)_{r_k}] = (m)_R prod (n_k)_{r_k} / (n)_R.
Rational hypergeom_moment_formula(const std::vector<long>& n_vec, long m, const std::vector<int>& v);
// Multinomial(f, m) moments E[prod_{k in v} Y_k], |v| <= 3, in the closed forms
// EY_j = m f_j, EY_jY_k = (m)_2 f_j f_k, EY_j^2 = m f_j + (m)_2 f_j^2, ...
double multinomial_moment(const std::vector<double>& f, long m, const std::vector<int>& v);
// Any |v|, via factorial moments.
double multinomial_moment_general(const std::vector<double>& f, long m, const std::vector<int>& v);

// sum over compositions x of m of g(x) * multinomial pmf. m <= 30.
double multinomial_expect(const std::vector<double>& f, int m,
                          const std::function<double(const std::vector<int>&)>& g);

// ---- limiting sampled-set composition ------------------------------------

// One support point of the limiting law of the normalized weight vector
// s_k = n(t)^{-1} sum_{i in set, Z_i = k} w_i, given a failure at a time in the segment.
struct Atom {
  double prob;
  std::vector<double> s;
  int stratum;  // stratum whose baseline applies (matching); 0 otherwise
};

std::vector<Atom> composition_atoms(const DesignSpec& design, const Segment& seg);

// h_v on one segment from the design's closed forms.
double h_value(const DesignSpec& design, const Segment& seg, const std::vector<int>& v);
// h_v on one segment as p * E[prod s_k] over the composition atoms.
double h_from_atoms(const DesignSpec& design, const Segment& seg, const std::vector<int>& v);
Piecewise h_limit(const DesignSpec& design, const PopulationModel& pop, const std::vector<int>& v);

// Counter-matching displays written out term by term.
double h_cm_pair(const Segment& seg, const std::vector<int>& m, int k1, int k2);
double h_cm_jjk(const Segment& seg, const std::vector<int>& m, int k1, int k3);
double h_cm_distinct(const Segment& seg, const std::vector<int>& m, int k1, int k2, int k3);
// Classical case {h_01, h_011}.
std::pair<double, double> h_cm_classical(const Segment& seg, const std::vector<int>& m);

// I_v = int h_v lambda0 dt (per-stratum baseline for matching when given).
Variation limit_variation(const DesignSpec& design, const PopulationModel& pop);

// Asymptotic variance of sqrt(n)(phi_hat - phi0); empty c means equal weights.
double sigma2_mh(const DesignSpec& design, const PopulationModel& pop, double phi0,
                 const std::vector<double>& c = {});
// Classical case written directly: int (phi^2 h_011 + phi h_100) lambda0 / (int h_01 lambda0)^2.
double sigma2_mh_classical(const DesignSpec& design, const PopulationModel& pop, double phi0);
// Simple random sampling, classical case, in its explicit form.
double sigma2_srs_explicit(const PopulationModel& pop, int m, double phi0);

struct EPsi {
  Piecewise e;
  Piecewise psi;
};
EPsi e_psi(const DesignSpec& design, const PopulationModel& pop, double phi0);

// Inverse variance of sqrt(n)(theta_hat - theta0) for the maximum partial likelihood
// estimator: int p E[S2 - S1^2/S0] lambda0 dt, S_j = sum_k alpha_k^j phi^alpha_k s_k.
double mple_inverse_variance(const DesignSpec& design, const PopulationModel& pop, double phi0);

struct MpleVariance {
  double theta;  // variance of sqrt(n)(theta_hat - theta0)
  double phi;    // variance of sqrt(n)(phi_hat - phi0)
};
MpleVariance mple_variance(const DesignSpec& design, const PopulationModel& pop, double phi0);

struct AreRow {
  double log_phi;
  double sigma2_mh_theta;
  double sigma2_mple_theta;
  double are;
};
std::vector<AreRow> are_curve(const DesignSpec& design, const PopulationModel& pop,
                              const std::vector<double>& log_phi_grid);
std::string format_are_csv(const std::vector<AreRow>& rows);

struct AreSeries {
  std::string label;
  std::vector<AreRow> rows;
};
std::string render_are_svg(const std::vector<AreSeries>& series, const std::string& title);

struct SensSpecModel {
  double f1 = 0.2;
  double delta = 1.0;       // P(C=1 | Z=1)
  double gamma_spec = 1.0;  // P(C=0 | Z=0)
};

// Two strata: stratum 1 is the surrogate-positive stratum.
PopulationModel cm_population(const SensSpecModel& ss, double p, double lambda0, double tau);
// (1-delta)(1-gamma) + gamma delta
double cm_null_factor(const SensSpecModel& ss);

}  // namespace mhc
