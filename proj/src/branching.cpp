#include "coaglab/branching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coaglab::branching {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Bracketing bisection to absolute tolerance 1e-12; f(lo) and f(hi) must
// have opposite signs.
template <typename F>
double bisect(F f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo < 1e-12) return mid;
    const double fm = f(mid);
    if ((flo <= 0) == (fm <= 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ArmMeasure::ArmMeasure(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw std::invalid_argument("ArmMeasure: empty support");
  bool any_positive = false;
  for (double w : w_) {
    if (w < 0) throw std::invalid_argument("ArmMeasure: negative weight");
    if (w > 0) any_positive = true;
  }
  if (!any_positive) throw std::invalid_argument("ArmMeasure: all weights zero");
}

ArmMeasure ArmMeasure::from_pairs(const std::vector<std::pair<int, double>>& pairs) {
  int a_max = 0;
  for (const auto& [a, w] : pairs) {
    if (a < 1) throw std::invalid_argument("ArmMeasure: arm count must be >= 1");
    a_max = std::max(a_max, a);
  }
  std::vector<double> w(static_cast<std::size_t>(a_max), 0.0);
  for (const auto& [a, weight] : pairs) w[static_cast<std::size_t>(a - 1)] += weight;
  return ArmMeasure(std::move(w));
}

std::pair<ArmMeasure, double> ArmMeasure::truncated_poisson(double lambda, int a_max) {
  if (lambda <= 0 || a_max < 1) throw std::invalid_argument("truncated_poisson: bad parameters");
  std::vector<double> w(static_cast<std::size_t>(a_max));
  double kept = 0.0;
  for (int a = 1; a <= a_max; ++a) {
    const double p = std::exp(-lambda + a * std::log(lambda) - std::lgamma(a + 1.0));
    w[static_cast<std::size_t>(a - 1)] = p;
    kept += p;
  }
  return {ArmMeasure(std::move(w)), 1.0 - kept};
}

double ArmMeasure::total() const { return moment(0); }

double ArmMeasure::moment(int j) const {
  // Largest-a-first accumulation in extended precision.
  long double acc = 0.0L;
  for (int a = a_max(); a >= 1; --a) acc += std::pow(static_cast<double>(a), j) * (*this)(a);
  return static_cast<double>(acc);
}

ArmMeasure ArmMeasure::normalized() const {
  const double z = total();
  std::vector<double> w(w_);
  for (double& x : w) x /= z;
  return ArmMeasure(std::move(w));
}

OffspringLaw::OffspringLaw(std::vector<double> pmf) : p_(std::move(pmf)) {
  if (p_.empty()) throw std::invalid_argument("OffspringLaw: empty pmf");
  double sum = 0.0;
  for (double p : p_) {
    if (p < 0) throw std::invalid_argument("OffspringLaw: negative mass");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("OffspringLaw: pmf does not sum to 1");
}

double OffspringLaw::mean() const {
  double acc = 0.0;
  for (int j = j_max(); j >= 0; --j) acc += j * (*this)(j);
  return acc;
}

double Pmf::at(long long k) const {
  const long long i = k - offset;
  if (i < 0 || i >= static_cast<long long>(values.size())) return 0.0;
  return values[static_cast<std::size_t>(i)] * std::exp(log_scale);
}

double Pmf::log_at(long long k) const {
  const long long i = k - offset;
  if (i < 0 || i >= static_cast<long long>(values.size())) return -kInf;
  const double v = values[static_cast<std::size_t>(i)];
  return v > 0 ? std::log(v) + log_scale : -kInf;
}

double Pmf::sum() const {
  long double acc = 0.0L;
  for (auto it = values.rbegin(); it != values.rend(); ++it) acc += *it;
  return static_cast<double>(acc) * std::exp(log_scale);
}

double moment(const ArmMeasure& mu, int j) {
  if (j < 0) throw std::invalid_argument("moment: j must be nonnegative");
  return mu.moment(j);
}

OffspringLaw offspring_from_arms(const ArmMeasure& mu) {
  const double a1 = mu.moment(1);
  if (a1 <= 0) throw std::invalid_argument("degenerate arm measure");
  std::vector<double> p(static_cast<std::size_t>(mu.a_max()));
  for (int j = 0; j < mu.a_max(); ++j)
    p[static_cast<std::size_t>(j)] = (j + 1) * mu(j + 1) / a1;
  return OffspringLaw(std::move(p));
}

double pgf(const OffspringLaw& nu, double x) {
  // Horner from the top coefficient.
  double acc = 0.0;
  for (int j = nu.j_max(); j >= 0; --j) acc = acc * x + nu(j);
  return acc;
}

double pgf_prime(const OffspringLaw& nu, double x) {
  double acc = 0.0;
  for (int j = nu.j_max(); j >= 1; --j) acc = acc * x + j * nu(j);
  return acc;
}

namespace {

// One convolution step: out(k) = sum_j in(k-j) nu(j), truncated at k_max.
void convolve_step(const std::vector<double>& in, const std::vector<double>& nu,
                   std::vector<double>& out, std::size_t k_cap) {
  const std::size_t out_len = std::min(k_cap + 1, in.size() + nu.size() - 1);
  out.assign(out_len, 0.0);
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const double pj = nu[j];
    if (pj == 0.0) continue;
    const std::size_t hi = std::min(out_len, in.size() + j);
    for (std::size_t k = j; k < hi; ++k) out[k] += in[k - j] * pj;
  }
}

// Normalize the window maximum to 1, accumulating into log_scale. Entries
// more than ~308 orders of magnitude below the window maximum are not
// representable under a shared scale and flush to zero.
void rescale(std::vector<double>& v, double& log_scale) {
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  if (mx > 0.0 && mx != 1.0) {
    const double factor = 1.0 / mx;
    for (double& x : v) x *= factor;
    log_scale += std::log(mx);
  }
}

}  // namespace

Pmf convolution_power(const OffspringLaw& nu, long long m, long long k_max) {
  if (m < 1) throw std::invalid_argument("convolution_power: m must be >= 1");
  if (k_max < 0) throw std::invalid_argument("convolution_power: k_max must be >= 0");
  const std::size_t cap = static_cast<std::size_t>(k_max);
  Pmf out;
  out.values.assign(std::min<std::size_t>(cap + 1, nu.pmf().size()), 0.0);
  std::copy_n(nu.pmf().begin(), out.values.size(), out.values.begin());
  std::vector<double> scratch;
  for (long long step = 1; step < m; ++step) {
    convolve_step(out.values, nu.pmf(), scratch, cap);
    out.values.swap(scratch);
    rescale(out.values, out.log_scale);
  }
  return out;
}

std::vector<double> log_convolution_diagonal(const OffspringLaw& nu, long long m_max) {
  if (m_max < 2) return {};
  std::vector<double> diag(static_cast<std::size_t>(m_max - 1), -kInf);
  const std::size_t cap = static_cast<std::size_t>(m_max - 2);
  std::vector<double> f(std::min<std::size_t>(cap + 1, nu.pmf().size()));
  std::copy_n(nu.pmf().begin(), f.size(), f.begin());
  double log_scale = 0.0;
  std::vector<double> scratch;
  for (long long m = 2; m <= m_max; ++m) {
    convolve_step(f, nu.pmf(), scratch, cap);
    f.swap(scratch);
    rescale(f, log_scale);
    const std::size_t k = static_cast<std::size_t>(m - 2);
    if (k < f.size() && f[k] > 0)
      diag[static_cast<std::size_t>(m - 2)] = std::log(f[k]) + log_scale;
  }
  return diag;
}

double dwass_two_ancestors(const OffspringLaw& nu, long long m) {
  if (m < 2) throw std::invalid_argument("dwass_two_ancestors: m must be >= 2");
  const Pmf conv = convolution_power(nu, m, m - 2);
  return (2.0 / static_cast<double>(m)) * conv.at(m - 2);
}

std::vector<double> dwass_two_ancestors_upto(const OffspringLaw& nu, long long m_max) {
  const std::vector<double> diag = log_convolution_diagonal(nu, m_max);
  std::vector<double> out(diag.size(), 0.0);
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const double m = static_cast<double>(i) + 2.0;
    out[i] = diag[i] > -kInf ? std::exp(std::log(2.0 / m) + diag[i]) : 0.0;
  }
  return out;
}

std::optional<long long> gw_sample_total_size(const OffspringLaw& nu, long long ancestors,
                                              Rng& rng, long long cap) {
  if (ancestors < 1) throw std::invalid_argument("gw_sample_total_size: ancestors must be >= 1");
  if (cap < ancestors) throw std::invalid_argument("gw_sample_total_size: cap below ancestors");
  long long total = ancestors;
  long long pending = ancestors;
  while (pending > 0) {
    --pending;
    // Inverse-CDF draw from nu.
    double u = rng.uniform01();
    int children = nu.j_max();
    for (int j = 0; j <= nu.j_max(); ++j) {
      u -= nu(j);
      if (u < 0) {
        children = j;
        break;
      }
    }
    total += children;
    pending += children;
    if (total > cap) return std::nullopt;
  }
  return total;
}

double borel_log_pmf(double t, long long m) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("borel_pmf: t must be in (0,1]");
  if (m < 1) throw std::invalid_argument("borel_pmf: m must be >= 1");
  const double md = static_cast<double>(m);
  return -t * md + (md - 1.0) * std::log(t * md) - std::lgamma(md + 1.0);
}

double borel_pmf(double t, long long m) { return std::exp(borel_log_pmf(t, m)); }

double theta(double t) {
  if (t <= 0) throw std::invalid_argument("theta: t must be positive");
  if (t <= 1.0) return 1.0;
  // x = 1 is always a root of e^{t(x-1)} = x; the survival solution is the
  // second root, bracketed by [0, argmin] where argmin = 1 - ln(t)/t.
  const double hi = 1.0 - std::log(t) / t;
  return bisect([t](double x) { return std::exp(t * (x - 1.0)) - x; }, 0.0, hi);
}

EtaBeta eta_beta(const OffspringLaw& nu) {
  if (nu.mean() <= 1.0)
    throw std::domain_error("fixed point only defined in gelling regime");
  if (nu(0) <= 0.0) throw std::domain_error("no root in (0,1)");
  // h(x) = x g'(x) - g(x) is nondecreasing with h(0) = -nu(0) < 0 and
  // h(1) = mean - 1 > 0.
  auto h = [&nu](double x) { return x * pgf_prime(nu, x) - pgf(nu, x); };
  const double eta = bisect(h, 0.0, 1.0);
  const double beta = 1.0 / pgf_prime(nu, eta);
  const double beta_alt = eta / pgf(nu, eta);
  if (std::abs(beta - beta_alt) > 1e-9)
    throw std::logic_error("eta_beta: fixed-point expressions disagree");
  if (!(beta > 1.0)) throw std::logic_error("eta_beta: beta must exceed 1");
  return {eta, beta};
}

CriticalityReport criticality(const ArmMeasure& mu) {
  const double a0 = mu.total();
  double acc = 0.0;
  for (int i = mu.a_max(); i >= 1; --i) acc += i * (i - 2.0) * mu(i) / a0;
  return {acc, acc > 0.0};
}

double molloy_reed_statistic(const Pmf& pmf) {
  double acc = 0.0;
  for (long long k = pmf.k_max(); k >= pmf.offset; --k) acc += k * (k - 2.0) * pmf.at(k);
  return acc;
}

}  // namespace coaglab::branching
