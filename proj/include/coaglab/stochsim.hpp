#pragma once

// Microscopic side of the laboratory: the stochastic coalescent with limited
// aggregations (pairs of particles merge at rate arms x arms / n), its
// threshold-gel variant (clusters larger than alpha fall into the gel and
// stop interacting), the mono-disperse multiplicative coalescent, the random
// configuration multigraph, and census/statistics extraction.
//
// All dynamics are exact Gillespie simulations driven by an explicit Rng;
// identical seed and inputs reproduce the identical event sequence.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "coaglab/branching.hpp"
#include "coaglab/rng.hpp"

namespace coaglab::stochsim {

using branching::ArmMeasure;

struct DegreeSequence {
  std::vector<int> degrees;  // one entry per vertex, all >= 1
  int n() const { return static_cast<int>(degrees.size()); }
  long long total_stubs() const;
};

/// n independent draws from mu normalized to a probability.
DegreeSequence sample_degrees(const ArmMeasure& mu, int n, Rng& rng);

/// Variance-free quota mode: floor(n mu_hat(a)) of each class, remaining
/// slots assigned by largest remainder (ties to the smaller arm count).
DegreeSequence quota_degrees(const ArmMeasure& mu, int n);

struct Particle {
  long long arms;
  long long size;
  friend bool operator==(const Particle&, const Particle&) = default;
  friend auto operator<=>(const Particle&, const Particle&) = default;
};

struct ParticleSystem {
  std::vector<Particle> particles;  // in-solution particles
  long long n = 0;                  // initial atom count
  long long gel_mass = 0;
  long long bonds_formed = 0;       // each bond consumed two arms
  long long gel_arms_removed = 0;   // free arms discarded with gelled clusters
  double clock = 0.0;

  long long total_arms() const;  // S, over in-solution particles
  long long solution_mass() const;
};

/// Limited-aggregation coalescent run to min(t_end, absorption); pass
/// t_end = infinity to run to absorption (no pair of distinct particles both
/// carrying arms).
ParticleSystem coalesce_limited(const DegreeSequence& degrees, double t_end, Rng& rng);

/// Total event rate of the system: sum over distinct pairs of a_i a_j / n
/// = (S^2 - sum a_i^2) / (2n).
double total_merge_rate(const ParticleSystem& system);

/// Mono-disperse multiplicative coalescent (cluster pair (m, m') merges at
/// rate m m'/n); particles report zero arms.
ParticleSystem coalesce_mono(long long n, double t_end, Rng& rng);

struct SolutionPoint {
  double t;
  double solution_fraction;         // m_t^n
  branching::Pmf used_arm_law;      // pi_t^n, offset 0
};

struct SolutionTrace {
  std::vector<SolutionPoint> points;
};

struct ThresholdResult {
  SolutionTrace trace;       // one point per requested sample time
  SolutionPoint terminal;    // state at the final clock
  ParticleSystem system;
};

/// Same dynamics as coalesce_limited except that any merged particle with
/// size > alpha falls into the gel immediately; alpha > n never triggers and
/// reproduces coalesce_limited event for event.
ThresholdResult coalesce_threshold(const DegreeSequence& degrees, long long alpha, double t_end,
                                   Rng& rng, std::span<const double> sample_times);

struct ConfigGraph {
  int n = 0;
  std::vector<int> degrees;
  std::vector<std::pair<int, int>> edges;   // may contain loops / multi-edges
  std::optional<int> leftover_stub_vertex;  // set when the stub total is odd
};

/// Uniform perfect matching of stubs via shuffle-and-pair.
ConfigGraph random_configuration(const DegreeSequence& degrees, Rng& rng);

struct ClusterRecord {
  long long size;
  long long free_arms;
  long long edge_count;
  bool is_tree;  // edge_count == size - 1
};

struct ClusterCensus {
  std::vector<ClusterRecord> clusters;
  long long n = 0;
  long long gel_mass = 0;
  std::map<long long, long long> size_counts;
  std::map<std::pair<long long, long long>, long long> class_counts;  // (arms, size)
};

ClusterCensus census(const ParticleSystem& system);
ClusterCensus census(const ConfigGraph& graph);

struct EdgeRootedLaw {
  std::map<long long, double> tree;      // P(|C_e| = m, C_e a tree), m <= m_max
  std::map<long long, double> non_tree;  // P(|C_e| = m, C_e not a tree)
  double tail_tree = 0.0;                // mass at sizes > m_max
  double tail_non_tree = 0.0;

  double non_tree_fraction() const;
};

/// Law of (component size, tree flag) at a uniformly random oriented edge,
/// by exhaustive enumeration of edges. Throws on a graph with no edges.
EdgeRootedLaw edge_rooted_size_law(const ConfigGraph& graph, long long m_max);

/// Monte Carlo variant sampling `samples` oriented edges.
EdgeRootedLaw edge_rooted_size_law(const ConfigGraph& graph, long long m_max, Rng& rng,
                                   long long samples);

/// Molloy-Reed statistic sum_k k(k-2) pi(k) of a used-arm law; validates
/// that the law is a probability supported within mu_reference's arm range.
double soc_statistic(const branching::Pmf& used_arm_law, const ArmMeasure& mu_reference);

struct ConcentrationEstimate {
  double value;
  double stderr_;
};

/// count(a, m)/n per particle class with binomial standard errors.
std::map<std::pair<long long, long long>, ConcentrationEstimate> empirical_concentrations(
    const ClusterCensus& census, long long n);

}  // namespace coaglab::stochsim
