#include "coaglab/detsolve.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace coaglab::detsolve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

MonoField MonoField::monodisperse(int m_max) {
  MonoField f(m_max);
  f.at(1) = 1.0;
  return f;
}

MonoField MonoField::from_pairs(const std::vector<std::pair<long long, double>>& pairs,
                                int m_max) {
  MonoField f(m_max);
  for (const auto& [m, w] : pairs) {
    if (m < 1 || m > m_max) throw std::invalid_argument("MonoField: mass out of range");
    if (w < 0) throw std::invalid_argument("MonoField: negative concentration");
    f.at(m) += w;
  }
  return f;
}

double MonoField::moment(int j) const {
  // Largest-mass-first accumulation in extended precision: controls
  // cancellation for heavy-tailed fields near criticality.
  long double acc = 0.0L;
  for (long long m = m_max(); m >= 1; --m)
    acc += std::pow(static_cast<double>(m), j) * (*this)(m);
  return static_cast<double>(acc);
}

ConcentrationField ConcentrationField::atomic(const ArmMeasure& mu, int a_max, int m_max) {
  ConcentrationField f(a_max, m_max);
  if (mu.a_max() > a_max)
    throw std::invalid_argument("ConcentrationField::atomic: mu support exceeds a_max");
  for (int a = 1; a <= mu.a_max(); ++a) f.at(a, 1) = mu(a);
  return f;
}

double ConcentrationField::mass() const {
  long double acc = 0.0L;
  for (int a = a_max_; a >= 0; --a)
    for (long long m = m_max_; m >= 1; --m) acc += m * (*this)(a, m);
  return static_cast<double>(acc);
}

double ConcentrationField::arm_density() const {
  long double acc = 0.0L;
  for (int a = a_max_; a >= 1; --a)
    for (long long m = m_max_; m >= 1; --m) acc += a * (*this)(a, m);
  return static_cast<double>(acc);
}

double mcleod_log(double t, long long m) {
  if (t < 0 || t >= 1.0) throw std::domain_error("use kokholm past gelation");
  if (m < 1) throw std::invalid_argument("mcleod: m must be >= 1");
  if (t == 0.0) return m == 1 ? 0.0 : -kInf;
  const double md = static_cast<double>(m);
  return (md - 1.0) * std::log(t) + (md - 2.0) * std::log(md) - md * t - std::lgamma(md + 1.0);
}

double mcleod(double t, long long m) { return std::exp(mcleod_log(t, m)); }

double kokholm(double t, long long m) {
  if (t < 1.0) throw std::domain_error("kokholm: defined for t >= 1 only");
  if (m < 1) throw std::invalid_argument("kokholm: m must be >= 1");
  const double md = static_cast<double>(m);
  return std::exp((md - 2.0) * std::log(md) - md - std::lgamma(md + 1.0)) / t;
}

double tgel_multiplicative(const MonoField& c0) {
  const double m2 = c0.moment(2);
  if (m2 <= 0) throw std::invalid_argument("tgel_multiplicative: zero field");
  return 1.0 / m2;
}

double tgel_limited(const ArmMeasure& mu) {
  const double a1 = mu.moment(1);
  const double a2 = mu.moment(2);
  return a2 <= 2.0 * a1 ? kInf : 1.0 / (a2 - 2.0 * a1);
}

double limited_closed_form(const ArmMeasure& mu, double t, int a, long long m) {
  if (t < 0 || t >= tgel_limited(mu))
    throw std::domain_error("closed form valid pre-gelation only");
  if (m < 1) throw std::invalid_argument("limited_closed_form: m must be >= 1");
  if (a < 0) throw std::invalid_argument("limited_closed_form: a must be >= 0");
  if (a == 0) {
    if (m < 2 || t == 0.0) return 0.0;
    return limited_closed_form_zero_arms(mu, t, m);
  }
  if (t == 0.0) return m == 1 ? mu(a) : 0.0;
  const double a1 = mu.moment(1);
  const auto nu = branching::offspring_from_arms(mu);
  const double log_conv = branching::convolution_power(nu, m, a + m - 2).log_at(a + m - 2);
  if (log_conv == -kInf) return 0.0;
  const double ad = a, md = static_cast<double>(m);
  const double log_c = std::lgamma(ad + md - 1.0) - std::lgamma(ad + 1.0) - std::lgamma(md + 1.0) +
                       md * std::log(a1) + (md - 1.0) * std::log(t) -
                       (ad + md - 1.0) * std::log1p(a1 * t) + log_conv;
  return std::exp(log_c);
}

double limited_closed_form_zero_arms(const ArmMeasure& mu, double t, long long m) {
  if (m < 2) throw std::invalid_argument("limited_closed_form_zero_arms: m must be >= 2");
  if (t <= 0 || t >= tgel_limited(mu))
    throw std::domain_error("closed form valid pre-gelation only");
  const double a1 = mu.moment(1);
  const auto nu = branching::offspring_from_arms(mu);
  const double log_conv = branching::convolution_power(nu, m, m - 2).log_at(m - 2);
  if (log_conv == -kInf) return 0.0;
  const double md = static_cast<double>(m);
  const double log_c = std::log(a1) - std::log(md) - std::log(md - 1.0) +
                       (1.0 - md) * std::log1p(1.0 / (a1 * t)) + log_conv;
  return std::exp(log_c);
}

double limiting_concentration(const ArmMeasure& mu, int a, long long m) {
  if (m < 2) throw std::invalid_argument("limiting_concentration: m must be >= 2");
  if (a < 0) throw std::invalid_argument("limiting_concentration: a must be >= 0");
  if (a >= 1) return 0.0;
  const double a1 = mu.moment(1);
  const auto nu = branching::offspring_from_arms(mu);
  double log_beta = 0.0;
  if (branching::criticality(mu).gelling) log_beta = std::log(branching::eta_beta(nu).beta);
  const double log_conv = branching::convolution_power(nu, m, m - 2).log_at(m - 2);
  if (log_conv == -kInf) return 0.0;
  const double md = static_cast<double>(m);
  return std::exp(std::log(a1) - std::log(md) - std::log(md - 1.0) + (md - 1.0) * log_beta +
                  log_conv);
}

MassIdentity terminal_mass_identity(const ArmMeasure& mu, long long m_bound) {
  if (branching::criticality(mu).gelling)
    throw std::domain_error("terminal mass identity holds only without gelation");
  if (m_bound < 2) throw std::invalid_argument("terminal_mass_identity: bound must be >= 2");
  const double a1 = mu.moment(1);
  const auto nu = branching::offspring_from_arms(mu);
  const auto diag = branching::log_convolution_diagonal(nu, m_bound);

  // m c_inf(0,m) = A1 nu^{*m}(m-2) / (m-1); accumulate smallest terms first.
  std::vector<double> terms(diag.size(), 0.0);
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const double md = static_cast<double>(i) + 2.0;
    if (diag[i] > -kInf) terms[i] = std::exp(std::log(a1) - std::log(md - 1.0) + diag[i]);
  }
  long double lhs_acc = 0.0L;
  for (auto it = terms.rbegin(); it != terms.rend(); ++it) lhs_acc += *it;
  const double lhs = static_cast<double>(lhs_acc);

  // Tail estimate from the last two nonzero terms: geometric extrapolation
  // when they decay, a polynomial-style envelope near criticality.
  double tail = 0.0;
  long long i2 = -1, i1 = -1;
  for (long long i = static_cast<long long>(terms.size()) - 1; i >= 0; --i) {
    if (terms[static_cast<std::size_t>(i)] > 0) {
      if (i2 < 0) {
        i2 = i;
      } else {
        i1 = i;
        break;
      }
    }
  }
  if (i2 >= 0 && i1 >= 0) {
    // Terms live on a stride (support parity of nu); extrapolate per stride.
    const double stride = static_cast<double>(i2 - i1);
    const double last = terms[static_cast<std::size_t>(i2)];
    const double ratio = last / terms[static_cast<std::size_t>(i1)];
    if (ratio < 0.95) {
      tail = last * ratio / (1.0 - ratio);
    } else {
      // Near-critical m^{-3/2} envelope: sum_{m > M, strided} ~ 2 M t_M / stride.
      tail = 2.0 * (static_cast<double>(i2) + 2.0) * last / stride;
    }
  }
  return {lhs, mu.total(), tail};
}

MerleNormandLimits merle_normand_limits(const ArmMeasure& mu) {
  if (!branching::criticality(mu).gelling)
    throw std::domain_error("solution-phase limits are trivial without gelation");
  if (std::abs(mu.total() - 1.0) > 1e-9)
    throw std::invalid_argument("merle_normand_limits: mu must be a probability");
  const auto fp = branching::eta_beta(branching::offspring_from_arms(mu));
  branching::Pmf pi;
  pi.offset = 1;
  pi.values.assign(static_cast<std::size_t>(mu.a_max()), 0.0);
  double m_inf = 0.0;
  for (int i = mu.a_max(); i >= 1; --i) {
    const double w = std::pow(fp.eta, i) * mu(i);
    pi.values[static_cast<std::size_t>(i - 1)] = w;
    m_inf += w;
  }
  for (double& v : pi.values) v /= m_inf;
  return {m_inf, std::move(pi)};
}

// ---------------------------------------------------------------------------
// Truncated integrators
// ---------------------------------------------------------------------------

namespace {

// Fixed-step classical RK4 over a flat state vector. on_step(i, t, y) is
// called with the initial state and after every step. Throws when any entry
// sinks below -1e-10.
template <typename Deriv, typename OnStep>
void rk4(std::vector<double>& y, double t_end, long long n_steps, Deriv deriv, OnStep on_step) {
  const std::size_t dim = y.size();
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  const double h = t_end / static_cast<double>(n_steps);
  on_step(0, 0.0, y);
  for (long long i = 0; i < n_steps; ++i) {
    deriv(y, k1);
    for (std::size_t d = 0; d < dim; ++d) tmp[d] = y[d] + 0.5 * h * k1[d];
    deriv(tmp, k2);
    for (std::size_t d = 0; d < dim; ++d) tmp[d] = y[d] + 0.5 * h * k2[d];
    deriv(tmp, k3);
    for (std::size_t d = 0; d < dim; ++d) tmp[d] = y[d] + h * k3[d];
    deriv(tmp, k4);
    for (std::size_t d = 0; d < dim; ++d)
      y[d] += (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    for (std::size_t d = 0; d < dim; ++d)
      if (y[d] < -1e-10) throw std::runtime_error("instability, reduce step");
    on_step(i + 1, (i + 1 == n_steps) ? t_end : h * static_cast<double>(i + 1), y);
  }
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// dc(m)/dt = (1/2)(p*p)(m)/1 - p(m) P1 with p(m) = m c(m); the last state
// entry integrates the mass flux past m_max.
struct MonoDeriv {
  int m_max;
  mutable std::vector<double> p, suffix_p, suffix_mp;

  explicit MonoDeriv(int m) : m_max(m), p(m + 1), suffix_p(m + 2), suffix_mp(m + 2) {}

  void operator()(const std::vector<double>& y, std::vector<double>& dy) const {
    const int M = m_max;
    for (int m = 1; m <= M; ++m) p[m] = m * y[m - 1];
    suffix_p[M + 1] = suffix_mp[M + 1] = 0.0;
    for (int m = M; m >= 1; --m) {
      suffix_p[m] = suffix_p[m + 1] + p[m];
      suffix_mp[m] = suffix_mp[m + 1] + m * p[m];
    }
    const double p1 = suffix_p[1];
    std::fill(dy.begin(), dy.end(), 0.0);
    for (int mp = 1; mp < M; ++mp) {
      const double x = p[mp];
      if (x == 0.0) continue;
      for (int mq = 1; mq <= M - mp; ++mq) dy[mp + mq - 1] += 0.5 * x * p[mq];
    }
    double leak = 0.0;
    for (int mp = 1; mp <= M; ++mp) {
      const int first_out = M - mp + 1;
      leak += p[mp] * (mp * suffix_p[first_out] + suffix_mp[first_out]);
    }
    for (int m = 1; m <= M; ++m) dy[m - 1] -= p[m] * p1;
    dy[M] = 0.5 * leak;
  }
};

}  // namespace

MonoTrajectory integrate_mono(const MonoField& c0, double t_end, int m_max,
                              const StepControl& ctrl) {
  if (c0.m_max() > m_max) throw std::invalid_argument("integrate_mono: c0 exceeds m_max");
  if (t_end < 0) throw std::invalid_argument("integrate_mono: negative t_end");
  if (t_end >= tgel_multiplicative(c0))
    throw std::domain_error("integrate_mono: valid strictly before gelation");

  std::vector<double> y0(static_cast<std::size_t>(m_max) + 1, 0.0);
  for (long long m = 1; m <= c0.m_max(); ++m) y0[static_cast<std::size_t>(m - 1)] = c0(m);

  MonoTrajectory traj;
  if (t_end == 0.0) {
    traj.times = {0.0};
    MonoField f(m_max);
    for (long long m = 1; m <= m_max; ++m) f.at(m) = y0[static_cast<std::size_t>(m - 1)];
    traj.states.push_back(std::move(f));
    traj.leak = {0.0};
    return traj;
  }

  MonoDeriv deriv(m_max);
  auto run = [&](long long n_steps) {
    std::vector<double> y = y0;
    rk4(y, t_end, n_steps, deriv, [](long long, double, const std::vector<double>&) {});
    return y;
  };

  long long n = std::max<long long>(1, static_cast<long long>(std::ceil(t_end / ctrl.initial_dt)));
  std::vector<double> prev = run(n);
  long long accepted = -1;
  for (int r = 0; r < ctrl.max_refinements; ++r) {
    std::vector<double> next = run(2 * n);
    if (sup_diff(prev, next) < ctrl.refine_tol) {
      accepted = 2 * n;
      break;
    }
    prev = std::move(next);
    n *= 2;
  }
  if (accepted < 0) throw std::runtime_error("integrate_mono: step refinement did not converge");

  std::vector<double> y = y0;
  rk4(y, t_end, accepted, deriv, [&](long long, double t, const std::vector<double>& state) {
    traj.times.push_back(t);
    MonoField f(m_max);
    for (long long m = 1; m <= m_max; ++m) {
      const double v = state[static_cast<std::size_t>(m - 1)];
      f.at(m) = v < 0 ? 0.0 : v;
    }
    traj.states.push_back(std::move(f));
    traj.leak.push_back(std::max(0.0, state.back()));
  });
  return traj;
}

namespace {

// Two-index system: dc(a,m)/dt = (1/2) v(a+2, m) - a c(a,m) E with
// u(a,m) = a c(a,m), v = u (*) u (double convolution in arms-2 and mass),
// E = sum u. Last state entry integrates the mass flux past the bounds.
struct LimitedDeriv {
  int a_max, m_max;
  mutable std::vector<double> u;  // (a_max+1) x m_max, a-major, a >= 1 used
  mutable std::vector<double> v;  // (a_max+3) x (m_max+1)

  LimitedDeriv(int a, int m)
      : a_max(a), m_max(m),
        u(static_cast<std::size_t>(a + 1) * static_cast<std::size_t>(m), 0.0),
        v(static_cast<std::size_t>(a + 3) * static_cast<std::size_t>(m + 1), 0.0) {}

  std::size_t yidx(int a, int m) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(m_max) +
           static_cast<std::size_t>(m - 1);
  }
  std::size_t vidx(int alpha, int s) const {
    return static_cast<std::size_t>(alpha) * static_cast<std::size_t>(m_max + 1) +
           static_cast<std::size_t>(s);
  }

  void operator()(const std::vector<double>& y, std::vector<double>& dy) const {
    const int A = a_max, M = m_max;
    double arm_density = 0.0;  // E = sum u
    double arm_mass = 0.0;     // X = sum m u
    for (int a = 1; a <= A; ++a) {
      for (int m = 1; m <= M; ++m) {
        const double w = a * y[yidx(a, m)];
        u[yidx(a, m)] = w;
        arm_density += w;
        arm_mass += m * w;
      }
    }
    std::fill(v.begin(), v.end(), 0.0);
    for (int alpha = 2; alpha <= A + 2; ++alpha) {
      const int lo = std::max(1, alpha - A);
      for (int ap = lo; ap <= std::min(alpha - 1, A); ++ap) {
        const int aq = alpha - ap;
        const double* up = &u[yidx(ap, 1)];
        const double* uq = &u[yidx(aq, 1)];
        double* vrow = &v[vidx(alpha, 0)];
        for (int mp = 1; mp < M; ++mp) {
          const double x = up[mp - 1];
          if (x == 0.0) continue;
          const int hi = M - mp;
          for (int mq = 1; mq <= hi; ++mq) vrow[mp + mq] += x * uq[mq - 1];
        }
      }
    }
    double inside_mass_rate = 0.0;
    for (int a = 0; a <= A; ++a) {
      for (int m = 1; m <= M; ++m) {
        const double gain = 0.5 * v[vidx(a + 2, m)];
        dy[yidx(a, m)] = gain - u[yidx(a, m)] * arm_density;
        inside_mass_rate += m * gain;
      }
    }
    dy.back() = arm_density * arm_mass - inside_mass_rate;
  }
};

}  // namespace

LimitedTrajectory integrate_limited(const ArmMeasure& mu, double t_end, int a_max, int m_max,
                                    const StepControl& ctrl) {
  if (t_end < 0) throw std::invalid_argument("integrate_limited: negative t_end");
  if (t_end >= tgel_limited(mu))
    throw std::domain_error("integrate_limited: valid strictly before gelation");
  if (mu.a_max() > a_max) throw std::invalid_argument("integrate_limited: mu exceeds a_max");

  const std::size_t dim = static_cast<std::size_t>(a_max + 1) * static_cast<std::size_t>(m_max);
  std::vector<double> y0(dim + 1, 0.0);
  LimitedDeriv deriv(a_max, m_max);
  for (int a = 1; a <= mu.a_max(); ++a) y0[deriv.yidx(a, 1)] = mu(a);

  auto make_field = [&](const std::vector<double>& y) {
    ConcentrationField f(a_max, m_max);
    for (int a = 0; a <= a_max; ++a)
      for (int m = 1; m <= m_max; ++m) {
        const double v = y[deriv.yidx(a, m)];
        f.at(a, m) = v < 0 ? 0.0 : v;
      }
    return f;
  };

  LimitedTrajectory traj;
  if (t_end == 0.0) {
    traj.times = {0.0};
    traj.states.push_back(make_field(y0));
    traj.leak = {0.0};
    return traj;
  }

  auto run = [&](long long n_steps) {
    std::vector<double> y = y0;
    rk4(y, t_end, n_steps, deriv, [](long long, double, const std::vector<double>&) {});
    return y;
  };

  long long n = std::max<long long>(1, static_cast<long long>(std::ceil(t_end / ctrl.initial_dt)));
  std::vector<double> prev = run(n);
  long long accepted = -1;
  for (int r = 0; r < ctrl.max_refinements; ++r) {
    std::vector<double> next = run(2 * n);
    if (sup_diff(prev, next) < ctrl.refine_tol) {
      accepted = 2 * n;
      break;
    }
    prev = std::move(next);
    n *= 2;
  }
  if (accepted < 0)
    throw std::runtime_error("integrate_limited: step refinement did not converge");

  std::vector<double> y = y0;
  rk4(y, t_end, accepted, deriv, [&](long long, double t, const std::vector<double>& state) {
    traj.times.push_back(t);
    traj.states.push_back(make_field(state));
    traj.leak.push_back(std::max(0.0, state.back()));
  });
  return traj;
}

double weak_form_residual(const MonoTrajectory& traj, std::span<const double> f, Kernel kernel) {
  if (kernel != Kernel::multiplicative)
    throw std::invalid_argument("weak_form_residual: unsupported kernel");
  if (traj.times.size() < 3) return 0.0;

  auto f_at = [&f](long long m) {
    return (m >= 1 && m <= static_cast<long long>(f.size()))
               ? f[static_cast<std::size_t>(m - 1)]
               : 0.0;
  };
  auto pairing = [&](const MonoField& c) {
    double acc = 0.0;
    const int M = c.m_max();
    for (long long m = 1; m <= M; ++m) {
      const double cm = c(m);
      if (cm == 0.0) continue;
      for (long long mp = 1; mp <= M; ++mp) {
        const double w = f_at(m + mp) - f_at(m) - f_at(mp);
        if (w != 0.0) acc += w * static_cast<double>(m * mp) * cm * c(mp);
      }
    }
    return 0.5 * acc;
  };
  auto inner = [&](const MonoField& c) {
    double acc = 0.0;
    for (long long m = static_cast<long long>(f.size()); m >= 1; --m) acc += f_at(m) * c(m);
    return acc;
  };

  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < traj.times.size(); ++k) {
    const double dt = traj.times[k + 1] - traj.times[k - 1];
    const double ddt = (inner(traj.states[k + 1]) - inner(traj.states[k - 1])) / dt;
    worst = std::max(worst, std::abs(ddt - pairing(traj.states[k])));
  }
  return worst;
}

}  // namespace coaglab::detsolve
