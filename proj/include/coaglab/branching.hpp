#pragma once

// Probability-measure arithmetic and branching-process formulas shared by the
// deterministic solvers and the stochastic simulators: arm measures and their
// moments, the arms-to-offspring transform, convolution powers, generating
// functions and their fixed points, the Borel law, Dwass's two-ancestor
// formula, and a Galton-Watson sampler used as an independent oracle.
//
// All measures are finitely supported. Convolution powers carry a running
// log-scale factor so that deep powers stay representable; point masses below
// 1e-300 are available in log form via the *_log evaluators.

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "coaglab/rng.hpp"

namespace coaglab::branching {

/// Initial concentration of atoms by arm count: weights(a) for a in
/// {1..a_max}, nonnegative, not identically zero.
class ArmMeasure {
 public:
  /// weights[a-1] is the concentration of atoms with a arms.
  explicit ArmMeasure(std::vector<double> weights);
  static ArmMeasure from_pairs(const std::vector<std::pair<int, double>>& pairs);

  /// Poisson(lambda) arm counts restricted to {1..a_max}, not renormalized.
  /// Second member is the discarded mass (tail above a_max plus the atom at
  /// zero), reported so callers can account for the truncation.
  static std::pair<ArmMeasure, double> truncated_poisson(double lambda, int a_max);

  double operator()(int a) const {
    return (a >= 1 && a <= a_max()) ? w_[static_cast<std::size_t>(a - 1)] : 0.0;
  }
  int a_max() const { return static_cast<int>(w_.size()); }
  double total() const;                // A_0
  double moment(int j) const;          // A_j = sum_a a^j mu(a)
  ArmMeasure normalized() const;

 private:
  std::vector<double> w_;
};

/// Offspring law nu on {0..j_max}; pmf sums to 1 within 1e-12.
class OffspringLaw {
 public:
  explicit OffspringLaw(std::vector<double> pmf);

  double operator()(int j) const {
    return (j >= 0 && j <= j_max()) ? p_[static_cast<std::size_t>(j)] : 0.0;
  }
  int j_max() const { return static_cast<int>(p_.size()) - 1; }
  double mean() const;
  const std::vector<double>& pmf() const { return p_; }

 private:
  std::vector<double> p_;
};

/// Finitely supported nonnegative sequence with an offset and a log-scale
/// factor: mass(k) = values[k - offset] * exp(log_scale).
struct Pmf {
  long long offset = 0;
  std::vector<double> values;
  double log_scale = 0.0;

  double at(long long k) const;
  double log_at(long long k) const;  // -inf where the mass vanishes
  double sum() const;
  long long k_max() const { return offset + static_cast<long long>(values.size()) - 1; }
};

/// A_j = sum_a a^j mu(a).
double moment(const ArmMeasure& mu, int j);

/// nu(j) = (j+1) mu(j+1) / A_1, the size-biased-and-shifted arm law.
OffspringLaw offspring_from_arms(const ArmMeasure& mu);

/// Generating function g_nu(x) = sum x^j nu(j) and its derivative.
double pgf(const OffspringLaw& nu, double x);
double pgf_prime(const OffspringLaw& nu, double x);

/// nu^{*m} restricted to {0..k_max}, by iterated direct convolution.
Pmf convolution_power(const OffspringLaw& nu, long long m, long long k_max);

/// log nu^{*m}(m-2) for m = 2..m_max, computed in one convolution sweep.
/// Entry [m-2] corresponds to m; -inf where the mass vanishes.
std::vector<double> log_convolution_diagonal(const OffspringLaw& nu, long long m_max);

/// (2/m) nu^{*m}(m-2): total-progeny law of a two-ancestor Galton-Watson
/// forest with offspring law nu.
double dwass_two_ancestors(const OffspringLaw& nu, long long m);

/// Batch form of the above for m = 2..m_max (entry [m-2]).
std::vector<double> dwass_two_ancestors_upto(const OffspringLaw& nu, long long m_max);

/// Total progeny (ancestors included) of a Galton-Watson forest, simulated
/// breadth-first; nullopt once the population exceeds cap.
std::optional<long long> gw_sample_total_size(const OffspringLaw& nu, long long ancestors,
                                              Rng& rng, long long cap);

/// Borel(t) mass function e^{-tm} (tm)^{m-1} / m!, and its log.
double borel_pmf(double t, long long m);
double borel_log_pmf(double t, long long m);

/// Survival function of the multiplicative-coalescent cluster-size law:
/// 1 for t <= 1; for t > 1 the unique root in (0,1) of e^{t(x-1)} = x.
double theta(double t);

struct EtaBeta {
  double eta;   // unique root in (0,1) of x g'(x) = g(x)
  double beta;  // 1/g'(eta) = eta/g(eta), > 1 in the gelling regime
};

/// Fixed point used by the gelling-regime limiting concentrations.
/// Throws "fixed point only defined in gelling regime" when mean(nu) <= 1 and
/// "no root in (0,1)" when nu(0) = 0.
EtaBeta eta_beta(const OffspringLaw& nu);

struct CriticalityReport {
  double statistic;  // sum_i i(i-2) mu_hat(i), mu_hat = mu normalized
  bool gelling;      // statistic > 0, equivalently A_2 > 2 A_1
};

/// Molloy-Reed criterion for the arm measure.
CriticalityReport criticality(const ArmMeasure& mu);

/// sum_i i(i-2) pmf(i) for an arbitrary finitely supported law.
double molloy_reed_statistic(const Pmf& pmf);

}  // namespace coaglab::branching
