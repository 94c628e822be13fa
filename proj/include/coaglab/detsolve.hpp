#pragma once

// Deterministic side of the laboratory: closed-form solutions of the
// multiplicative-kernel system (McLeod before gelation, Kokholm after) and of
// the limited-aggregation system (pre-gel two-index solution, its zero-arm
// branch, and the t -> infinity limits), gelation-time formulas, the
// Merle-Normand solution-phase limits, and truncated fixed-step RK4
// integrators for both systems with Richardson step halving and exact
// truncation-leak bookkeeping.

#include <span>
#include <vector>

#include "coaglab/branching.hpp"

namespace coaglab::detsolve {

using branching::ArmMeasure;

/// One-index concentration field c(m), m in {1..m_max}.
class MonoField {
 public:
  explicit MonoField(int m_max) : c_(static_cast<std::size_t>(m_max), 0.0) {}
  static MonoField monodisperse(int m_max);  // c(1) = 1
  static MonoField from_pairs(const std::vector<std::pair<long long, double>>& pairs, int m_max);

  double operator()(long long m) const {
    return (m >= 1 && m <= m_max()) ? c_[static_cast<std::size_t>(m - 1)] : 0.0;
  }
  double& at(long long m) { return c_[static_cast<std::size_t>(m - 1)]; }
  int m_max() const { return static_cast<int>(c_.size()); }

  /// sum_m m^j c(m), accumulated from the largest mass down.
  double moment(int j) const;

 private:
  std::vector<double> c_;
};

/// Two-index concentration field c(a, m), a in {0..a_max}, m in {1..m_max}.
class ConcentrationField {
 public:
  ConcentrationField(int a_max, int m_max)
      : a_max_(a_max), m_max_(m_max),
        c_(static_cast<std::size_t>(a_max + 1) * static_cast<std::size_t>(m_max), 0.0) {}

  /// Purely atomic initial data: c(a, 1) = mu(a).
  static ConcentrationField atomic(const ArmMeasure& mu, int a_max, int m_max);

  double operator()(int a, long long m) const {
    if (a < 0 || a > a_max_ || m < 1 || m > m_max_) return 0.0;
    return c_[index(a, m)];
  }
  double& at(int a, long long m) { return c_[index(a, m)]; }
  int a_max() const { return a_max_; }
  int m_max() const { return m_max_; }

  double mass() const;         // sum m c(a,m)
  double arm_density() const;  // sum a c(a,m)

 private:
  std::size_t index(int a, long long m) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(m_max_) +
           static_cast<std::size_t>(m - 1);
  }
  int a_max_, m_max_;
  std::vector<double> c_;
};

/// Time series of integrator states. leak[i] is the cumulative mass lost to
/// the truncation boundary up to times[i]; it is nondecreasing.
template <typename Field>
struct Trajectory {
  std::vector<double> times;
  std::vector<Field> states;
  std::vector<double> leak;

  double truncation_leak() const { return leak.empty() ? 0.0 : leak.back(); }
};

using MonoTrajectory = Trajectory<MonoField>;
using LimitedTrajectory = Trajectory<ConcentrationField>;

/// McLeod's pre-gelation solution t^{m-1} m^{m-2} e^{-mt} / m! for the
/// mono-disperse multiplicative system; throws for t >= 1.
double mcleod(double t, long long m);
double mcleod_log(double t, long long m);

/// Kokholm's post-gelation solution m^{m-2} e^{-m} / (m! t); throws for t < 1.
double kokholm(double t, long long m);

/// 1 / sum m^2 c0(m).
double tgel_multiplicative(const MonoField& c0);

/// Infinity when A2 <= 2 A1, else 1 / (A2 - 2 A1).
double tgel_limited(const ArmMeasure& mu);

/// Pre-gelation closed form for a, m >= 1:
/// ((a+m-2)!/(a! m!)) A1^m t^{m-1} (1+A1 t)^{-(a+m-1)} nu^{*m}(a+m-2).
double limited_closed_form(const ArmMeasure& mu, double t, int a, long long m);

/// Zero-arm branch (A1/(m(m-1))) (1 + 1/(A1 t))^{1-m} nu^{*m}(m-2), m >= 2.
double limited_closed_form_zero_arms(const ArmMeasure& mu, double t, long long m);

/// t -> infinity limit: 0 for a >= 1; for a = 0 the Dwass-type formula with
/// an extra beta^{m-1} factor in the gelling regime.
double limiting_concentration(const ArmMeasure& mu, int a, long long m);

struct MassIdentity {
  double lhs;         // sum_{m=2..m_bound} m c_inf(0, m)
  double rhs;         // sum_a mu(a)
  double tail_bound;  // geometric-extrapolation estimate of the dropped tail
};

/// Terminal-state mass identity of the non-gelling regime; throws in the
/// gelling regime where the identity fails.
MassIdentity terminal_mass_identity(const ArmMeasure& mu, long long m_bound);

struct MerleNormandLimits {
  double m_inf;             // terminal fraction of atoms in solution
  branching::Pmf pi_inf;    // terminal used-arm law, offset 1
};

/// Solution-phase limits of the threshold model; requires a gelling mu
/// normalized to a probability.
MerleNormandLimits merle_normand_limits(const ArmMeasure& mu);

struct StepControl {
  double initial_dt = 1e-2;  // first trial step (halved until converged)
  double refine_tol = 1e-8;  // sup-norm agreement between halvings
  int max_refinements = 16;
};

/// Truncated multiplicative-kernel system on m <= m_max, explicit RK4 with
/// Richardson halving; valid (and only accepted) strictly before gelation.
MonoTrajectory integrate_mono(const MonoField& c0, double t_end, int m_max,
                              const StepControl& ctrl = {});

/// Truncated limited-aggregation system on a <= a_max, m <= m_max.
LimitedTrajectory integrate_limited(const ArmMeasure& mu, double t_end, int a_max, int m_max,
                                    const StepControl& ctrl = {});

enum class Kernel { multiplicative };

/// Max over interior trajectory steps of the weak-form defect
/// |d/dt<c,f> - (1/2) sum (f(m+m')-f(m)-f(m')) kappa c c'|, with the time
/// derivative taken by centered differences. f[i] is the test function at
/// mass i+1; f vanishes outside its span.
double weak_form_residual(const MonoTrajectory& traj, std::span<const double> f, Kernel kernel);

}  // namespace coaglab::detsolve
