#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "coaglab/branching.hpp"
#include "coaglab/rng.hpp"

using namespace coaglab;
using namespace coaglab::branching;

namespace {

ArmMeasure delta_arm(int a) {
  std::vector<double> w(static_cast<std::size_t>(a), 0.0);
  w.back() = 1.0;
  return ArmMeasure(std::move(w));
}

// Independent oracle for total-progeny laws: single-tree totals T(k) by the
// recursive decomposition over the root's offspring (convolutions of T
// itself), then the two-ancestor law as T * T. No Dwass formula involved.
std::vector<double> gw_forest_totals_oracle(const OffspringLaw& nu, int ancestors, int k_max) {
  std::vector<double> tree(static_cast<std::size_t>(k_max) + 1, 0.0);
  for (int k = 1; k <= k_max; ++k) {
    // P(total = k) = sum_j nu(j) P(j independent subtrees total k-1).
    // Evaluate with the partially built table; subtree totals are < k, so
    // entries used are already final.
    std::vector<double> conv(static_cast<std::size_t>(k), 0.0);
    conv[0] = 1.0;  // zero subtrees
    double prob = nu(0) * (k == 1 ? 1.0 : 0.0);
    for (int j = 1; j <= nu.j_max(); ++j) {
      std::vector<double> next(static_cast<std::size_t>(k), 0.0);
      for (int s = 0; s < k; ++s) {
        if (conv[static_cast<std::size_t>(s)] == 0.0) continue;
        for (int add = 1; s + add < k; ++add)
          next[static_cast<std::size_t>(s + add)] +=
              conv[static_cast<std::size_t>(s)] * tree[static_cast<std::size_t>(add)];
      }
      conv.swap(next);
      prob += nu(j) * conv[static_cast<std::size_t>(k - 1)];
    }
    tree[static_cast<std::size_t>(k)] = prob;
  }
  std::vector<double> forest(static_cast<std::size_t>(k_max) + 1, 0.0);
  forest[0] = 1.0;
  for (int anc = 0; anc < ancestors; ++anc) {
    std::vector<double> next(static_cast<std::size_t>(k_max) + 1, 0.0);
    for (int s = 0; s <= k_max; ++s) {
      if (forest[static_cast<std::size_t>(s)] == 0.0) continue;
      for (int add = 1; s + add <= k_max; ++add)
        next[static_cast<std::size_t>(s + add)] +=
            forest[static_cast<std::size_t>(s)] * tree[static_cast<std::size_t>(add)];
    }
    forest.swap(next);
  }
  return forest;
}

}  // namespace

TEST_CASE("moments of arm measures") {
  CHECK(moment(delta_arm(3), 1) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(moment(delta_arm(3), 2) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(moment(ArmMeasure({0.5, 0.5}), 1) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(moment(ArmMeasure({0.5, 0.5}), 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("arm measure validation") {
  CHECK_THROWS(ArmMeasure({0.0, 0.0}));
  CHECK_THROWS(ArmMeasure({-0.1, 1.0}));
  CHECK_THROWS(ArmMeasure(std::vector<double>{}));
}

TEST_CASE("truncated poisson arms report the dropped tail") {
  const auto [mu, tail] = ArmMeasure::truncated_poisson(1.0, 12);
  CHECK(mu.total() + tail == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tail == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));  // dominated by the a=0 atom
}

TEST_CASE("offspring transform") {
  SUBCASE("single atom type") {
    const auto nu = offspring_from_arms(delta_arm(3));
    CHECK(nu(2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(nu.j_max() == 2);
  }
  SUBCASE("two atom types") {
    const auto nu = offspring_from_arms(ArmMeasure({0.5, 0.5}));
    CHECK(nu(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(nu(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("gap in the support") {
    const auto nu = offspring_from_arms(ArmMeasure({0.5, 0.0, 0.5}));
    CHECK(nu(0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(nu(1) == doctest::Approx(0.0));
    CHECK(nu(2) == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("always sums to one (random measures)") {
    Rng rng(20240901);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> w(1 + rng.below(8));
      bool any = false;
      for (double& x : w) {
        x = rng.below(4) == 0 ? 0.0 : rng.uniform01() * 10.0;
        any = any || x > 0;
      }
      if (!any) w[0] = 1.0;
      const auto nu = offspring_from_arms(ArmMeasure(w));
      double sum = 0.0;
      for (int j = 0; j <= nu.j_max(); ++j) sum += nu(j);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("probability generating function") {
  const OffspringLaw nu({0.25, 0.0, 0.75});
  CHECK(pgf(nu, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pgf(nu, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pgf(nu, 0.5) == doctest::Approx(0.4375).epsilon(1e-15));
  CHECK(pgf_prime(nu, 0.5) == doctest::Approx(0.75).epsilon(1e-15));  // 2 * 0.75 * 0.5
}

TEST_CASE("convolution powers") {
  SUBCASE("point mass") {
    const auto conv = convolution_power(OffspringLaw({0.0, 0.0, 1.0}), 3, 10);
    CHECK(conv.at(6) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(conv.at(5) == 0.0);
    CHECK(conv.at(7) == 0.0);
  }
  SUBCASE("binomial square") {
    const auto conv = convolution_power(OffspringLaw({1.0 / 3.0, 2.0 / 3.0}), 2, 2);
    CHECK(conv.at(0) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(conv.at(1) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
    CHECK(conv.at(2) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  }
  SUBCASE("fourth power vs direct enumeration") {
    // Enumerate every 4-tuple over {0, 2} and sum the products landing on 4.
    const double p0 = 0.25, p2 = 0.75;
    double oracle = 0.0;
    for (int i = 0; i < 16; ++i) {
      int sum = 0;
      double prob = 1.0;
      for (int b = 0; b < 4; ++b) {
        if (i >> b & 1) {
          sum += 2;
          prob *= p2;
        } else {
          prob *= p0;
        }
      }
      if (sum == 4) oracle += prob;
    }
    CHECK(oracle == doctest::Approx(27.0 / 128.0).epsilon(1e-15));
    const auto conv = convolution_power(OffspringLaw({p0, 0.0, p2}), 4, 8);
    CHECK(conv.at(4) == doctest::Approx(oracle).epsilon(1e-14));
  }
  SUBCASE("normalization within m * 1e-12") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> p(1 + rng.below(4), 0.0);
      double z = 0.0;
      for (double& x : p) z += (x = rng.uniform01());
      for (double& x : p) x /= z;
      const long long m = 1 + static_cast<long long>(rng.below(60));
      const auto conv = convolution_power(OffspringLaw(p), m,
                                          m * static_cast<long long>(p.size() - 1));
      CHECK(std::abs(conv.sum() - 1.0) <= static_cast<double>(m) * 1e-12);
    }
  }
  SUBCASE("semigroup property") {
    Rng rng(11);
    const OffspringLaw nu({0.3, 0.45, 0.25});
    const long long m1 = 5, m2 = 9, k_max = 2 * (m1 + m2);
    const auto whole = convolution_power(nu, m1 + m2, k_max);
    const auto part1 = convolution_power(nu, m1, k_max);
    const auto part2 = convolution_power(nu, m2, k_max);
    for (long long k = 0; k <= k_max; ++k) {
      double acc = 0.0;
      for (long long j = 0; j <= k; ++j) acc += part1.at(j) * part2.at(k - j);
      CHECK(std::abs(acc - whole.at(k)) <= 1e-10);
    }
  }
  SUBCASE("deep powers stay representable via the log scale") {
    // Window restricted to the far lower tail: every retained entry is far
    // below 1e-300, so only the running log scale keeps them alive.
    const OffspringLaw nu({0.05, 0.95});
    const long long m = 1000, k_max = 100;
    const auto conv = convolution_power(nu, m, k_max);
    const auto binom_log = [m](long long k) {
      const double md = static_cast<double>(m), kd = static_cast<double>(k);
      return std::lgamma(md + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(md - kd + 1.0) +
             kd * std::log(0.95) + (md - kd) * std::log(0.05);
    };
    CHECK(conv.log_at(50) == doctest::Approx(binom_log(50)).epsilon(1e-12));
    CHECK(conv.log_at(100) == doctest::Approx(binom_log(100)).epsilon(1e-12));
    // Degenerate single-entry window: the scale carries the whole magnitude.
    const auto bottom = convolution_power(nu, m, 0);
    CHECK(bottom.log_at(0) == doctest::Approx(m * std::log(0.05)).epsilon(1e-12));
  }
}

TEST_CASE("dwass two-ancestor law") {
  SUBCASE("no children") {
    CHECK(dwass_two_ancestors(OffspringLaw({1.0}), 2) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("frozen small cases") {
    const OffspringLaw nu({2.0 / 3.0, 1.0 / 3.0});
    CHECK(dwass_two_ancestors(nu, 2) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
    CHECK(dwass_two_ancestors(nu, 3) == doctest::Approx(8.0 / 27.0).epsilon(1e-14));
  }
  SUBCASE("matches the tree-recursion oracle") {
    const OffspringLaw nu({0.5, 0.3, 0.2});
    const auto oracle = gw_forest_totals_oracle(nu, 2, 20);
    const auto batch = dwass_two_ancestors_upto(nu, 20);
    for (long long m = 2; m <= 20; ++m) {
      CHECK(dwass_two_ancestors(nu, m) ==
            doctest::Approx(oracle[static_cast<std::size_t>(m)]).epsilon(1e-12));
      CHECK(batch[static_cast<std::size_t>(m - 2)] ==
            doctest::Approx(oracle[static_cast<std::size_t>(m)]).epsilon(1e-12));
    }
  }
  SUBCASE("total mass one iff not supercritical") {
    const auto sum_upto = [](const OffspringLaw& nu, long long bound) {
      double acc = 0.0;
      for (const double p : dwass_two_ancestors_upto(nu, bound)) acc += p;
      return acc;
    };
    CHECK(sum_upto(OffspringLaw({2.0 / 3.0, 1.0 / 3.0}), 400) ==
          doctest::Approx(1.0).epsilon(1e-10));
    // Critical with variance: slow, still converges from below.
    CHECK(sum_upto(OffspringLaw({0.5, 0.0, 0.5}), 40000) == doctest::Approx(1.0).epsilon(2e-2));
    // Supercritical: defective, total mass = extinction probability of the
    // two-ancestor forest. For nu(0)=1/4, nu(2)=3/4 a single line dies out
    // with probability q = 1/3 (the small root of q = 1/4 + 3/4 q^2), so the
    // forest law sums to q^2 = 1/9.
    CHECK(sum_upto(OffspringLaw({0.25, 0.0, 0.75}), 4000) ==
          doctest::Approx(1.0 / 9.0).epsilon(1e-9));
  }
}

TEST_CASE("galton-watson sampler") {
  SUBCASE("no children means ancestors only") {
    Rng rng(1);
    const OffspringLaw nu({1.0});
    for (int i = 0; i < 10; ++i) CHECK(gw_sample_total_size(nu, 3, rng, 100) == 3);
  }
  SUBCASE("binary offspring always exceeds the cap") {
    Rng rng(2);
    const OffspringLaw nu({0.0, 0.0, 1.0});
    int exceeded = 0;
    for (int i = 0; i < 50; ++i)
      if (!gw_sample_total_size(nu, 2, rng, 1000)) ++exceeded;
    CHECK(exceeded == 50);
  }
  SUBCASE("supercritical extinction fraction") {
    // Two-ancestor forest with nu(0)=1/4, nu(2)=3/4 stays finite with
    // probability (1/3)^2; cap high enough that misclassification is rare.
    Rng rng(3);
    const OffspringLaw nu({0.25, 0.0, 0.75});
    const int samples = 20000;
    int finite = 0;
    for (int i = 0; i < samples; ++i)
      if (gw_sample_total_size(nu, 2, rng, 100000)) ++finite;
    const double q2 = 1.0 / 9.0;
    const double se = std::sqrt(q2 * (1.0 - q2) / samples);
    CHECK(std::abs(static_cast<double>(finite) / samples - q2) <= 3.0 * se);
  }
  SUBCASE("empirical law matches dwass within 3 standard errors") {
    Rng rng(20240902);
    const OffspringLaw nu({2.0 / 3.0, 1.0 / 3.0});
    const int samples = 1'000'000;
    std::vector<long long> counts(21, 0);
    for (int s = 0; s < samples; ++s) {
      const auto size = gw_sample_total_size(nu, 2, rng, 1000);
      if (size && *size <= 20) ++counts[static_cast<std::size_t>(*size)];
    }
    for (long long m = 2; m <= 20; ++m) {
      const double expected = dwass_two_ancestors(nu, m);
      const double phat = static_cast<double>(counts[static_cast<std::size_t>(m)]) / samples;
      const double se = std::sqrt(expected * (1.0 - expected) / samples);
      CHECK(std::abs(phat - expected) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("borel law") {
  CHECK(borel_pmf(0.5, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(borel_pmf(0.5, 2) == doctest::Approx(std::exp(-1.0) / 2.0).epsilon(1e-14));
  SUBCASE("critical partial sums approach one") {
    double sum = 0.0;
    for (long long m = 100000; m >= 1; --m) sum += borel_pmf(1.0, m);
    CHECK(std::abs(sum - 1.0) <= 1e-2);
  }
}

TEST_CASE("theta fixed point") {
  CHECK(theta(0.7) == 1.0);
  CHECK(theta(1.0) == 1.0);
  SUBCASE("t = 2") {
    const double x = theta(2.0);
    CHECK(std::abs(std::exp(2.0 * (x - 1.0)) - x) < 1e-12);
    CHECK(x == doctest::Approx(0.203188).epsilon(1e-5));
  }
  SUBCASE("residuals at the acceptance points") {
    for (const double t : {1.1, 2.0, 5.0}) {
      const double x = theta(t);
      CHECK(std::abs(std::exp(t * (x - 1.0)) - x) < 1e-12);
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
  SUBCASE("t theta(t) is nonincreasing and theta is decreasing past 1") {
    double prev_theta = 1.0, prev_product = 1.0;
    for (double t = 1.0; t <= 6.0; t += 0.25) {
      const double th = theta(t);
      const double product = t * th;
      CHECK(th <= prev_theta + 1e-12);
      CHECK(product <= prev_product + 1e-10);
      if (t > 1.0) CHECK(th < prev_theta);
      prev_theta = th;
      prev_product = product;
    }
  }
  SUBCASE("footnote identity theta(t) = t'/t") {
    for (const double t : {1.5, 2.0, 3.0}) {
      // Independent bisection for t' in (0,1) with t' - ln t' = t - ln t.
      const double target = t - std::log(t);
      double lo = 1e-12, hi = 1.0;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        ((mid - std::log(mid)) > target ? lo : hi) = mid;
      }
      const double t_prime = 0.5 * (lo + hi);
      CHECK(theta(t) == doctest::Approx(t_prime / t).epsilon(1e-9));
    }
  }
}

TEST_CASE("eta-beta fixed point") {
  SUBCASE("closed-form case") {
    // nu(0)=1/4, nu(2)=3/4: eta solves (3/4)eta^2 = 1/4.
    const auto fp = eta_beta(OffspringLaw({0.25, 0.0, 0.75}));
    CHECK(fp.eta == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(fp.beta == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(fp.beta > 1.0);
    const OffspringLaw nu({0.25, 0.0, 0.75});
    CHECK(std::abs(fp.eta * pgf_prime(nu, fp.eta) - pgf(nu, fp.eta)) < 1e-12);
    CHECK(std::abs(fp.beta - fp.eta / pgf(nu, fp.eta)) < 1e-9);
  }
  SUBCASE("critical boundary rejected") {
    CHECK_THROWS_WITH(eta_beta(OffspringLaw({0.5, 0.0, 0.5})),
                      "fixed point only defined in gelling regime");
  }
  SUBCASE("no mass at zero rejected") {
    CHECK_THROWS_WITH(eta_beta(OffspringLaw({0.0, 0.0, 1.0})), "no root in (0,1)");
  }
}

TEST_CASE("criticality classification") {
  CHECK(criticality(delta_arm(2)).statistic == doctest::Approx(0.0));
  CHECK_FALSE(criticality(delta_arm(2)).gelling);
  CHECK(criticality(delta_arm(1)).statistic == doctest::Approx(-1.0));
  CHECK_FALSE(criticality(delta_arm(1)).gelling);
  const auto report = criticality(ArmMeasure({0.5, 0.0, 0.5}));
  CHECK(report.statistic == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(report.gelling);
  // Normalization does not change the sign or value.
  const auto scaled = criticality(ArmMeasure({5.0, 0.0, 5.0}));
  CHECK(scaled.statistic == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && x == y;
    any_diff = any_diff || x != z;
  }
  CHECK(all_equal);
  CHECK(any_diff);
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(10) < 10);
  }
}
