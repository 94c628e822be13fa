#include "coaglab/stochsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "coaglab/sum_tree.hpp"

namespace coaglab::stochsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr long long kRejectionCap = 1'000'000;

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }

  int find(int v) {
    int root = v;
    while (parent[static_cast<std::size_t>(root)] != root)
      root = parent[static_cast<std::size_t>(root)];
    while (parent[static_cast<std::size_t>(v)] != root) {
      const int next = parent[static_cast<std::size_t>(v)];
      parent[static_cast<std::size_t>(v)] = root;
      v = next;
    }
    return root;
  }
};

}  // namespace

long long DegreeSequence::total_stubs() const {
  long long s = 0;
  for (int d : degrees) s += d;
  return s;
}

long long ParticleSystem::total_arms() const {
  long long s = 0;
  for (const auto& p : particles) s += p.arms;
  return s;
}

long long ParticleSystem::solution_mass() const {
  long long s = 0;
  for (const auto& p : particles) s += p.size;
  return s;
}

DegreeSequence sample_degrees(const ArmMeasure& mu, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_degrees: n must be >= 1");
  const ArmMeasure hat = mu.normalized();
  DegreeSequence out;
  out.degrees.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    int a = hat.a_max();
    for (int cand = 1; cand <= hat.a_max(); ++cand) {
      u -= hat(cand);
      if (u < 0) {
        a = cand;
        break;
      }
    }
    out.degrees[static_cast<std::size_t>(i)] = a;
  }
  return out;
}

DegreeSequence quota_degrees(const ArmMeasure& mu, int n) {
  if (n < 1) throw std::invalid_argument("quota_degrees: n must be >= 1");
  const ArmMeasure hat = mu.normalized();
  std::vector<long long> count(static_cast<std::size_t>(hat.a_max()) + 1, 0);
  std::vector<std::pair<double, int>> remainder;  // (-fraction, a): sort ascending
  long long assigned = 0;
  for (int a = 1; a <= hat.a_max(); ++a) {
    const double exact = n * hat(a);
    const long long base = static_cast<long long>(std::floor(exact));
    count[static_cast<std::size_t>(a)] = base;
    assigned += base;
    remainder.emplace_back(-(exact - static_cast<double>(base)), a);
  }
  std::sort(remainder.begin(), remainder.end());
  for (long long k = 0; k < n - assigned; ++k)
    ++count[static_cast<std::size_t>(remainder[static_cast<std::size_t>(k)].second)];
  DegreeSequence out;
  out.degrees.reserve(static_cast<std::size_t>(n));
  for (int a = 1; a <= hat.a_max(); ++a)
    out.degrees.insert(out.degrees.end(), static_cast<std::size_t>(count[static_cast<std::size_t>(a)]), a);
  return out;
}

// ---------------------------------------------------------------------------
// Limited-aggregation coalescent engine
// ---------------------------------------------------------------------------

namespace {

// Shared engine for coalesce_limited (alpha = n+1, never triggers) and
// coalesce_threshold. Pair sampling follows the arm-weighted scheme: the sum
// tree is keyed by per-atom free-arm counts, so drawing a leaf picks a
// particle proportionally to its total arms and the bond endpoint within it
// in one O(log n) descent; a draw hitting the same particle twice is
// rejected and redrawn.
class LimitedEngine {
 public:
  LimitedEngine(const DegreeSequence& degrees, long long alpha)
      : n_(degrees.n()),
        alpha_(alpha),
        degree_(degrees.degrees),
        free_(degrees.degrees),
        gelled_(static_cast<std::size_t>(n_), false),
        uf_(n_),
        root_arms_(static_cast<std::size_t>(n_)),
        root_size_(static_cast<std::size_t>(n_), 1),
        root_gelled_(static_cast<std::size_t>(n_), false),
        members_(static_cast<std::size_t>(n_)),
        tree_(static_cast<std::size_t>(n_)) {
    for (int v = 0; v < n_; ++v) {
      const int d = degree_[static_cast<std::size_t>(v)];
      if (d < 1) throw std::invalid_argument("coalescent: degrees must be >= 1");
      root_arms_[static_cast<std::size_t>(v)] = d;
      members_[static_cast<std::size_t>(v)] = {v};
      tree_.set(static_cast<std::size_t>(v), d);
      arms_ += d;
      sumsq_ += static_cast<long long>(d) * d;
    }
  }

  // Runs until min(t_end, absorption); records a trace point for each
  // requested sample time covered by the run.
  void run(double t_end, Rng& rng, std::span<const double> sample_times, SolutionTrace* trace) {
    std::vector<double> times(sample_times.begin(), sample_times.end());
    std::sort(times.begin(), times.end());
    std::size_t next_sample = 0;

    for (;;) {
      const long long rate_num = arms_ * arms_ - sumsq_;
      if (rate_num <= 0) break;  // absorbed: all remaining arms in one particle
      const double rate = static_cast<double>(rate_num) / (2.0 * static_cast<double>(n_));
      const double t_next = clock_ + rng.exponential(rate);
      if (t_next >= t_end) {
        record_until(t_end, true, times, next_sample, trace);
        clock_ = t_end;
        return;
      }
      record_until(t_next, false, times, next_sample, trace);
      clock_ = t_next;

      int v = 0, w = 0, rv = 0, rw = 0;
      long long rejections = 0;
      bool capped = false;
      do {
        v = static_cast<int>(tree_.sample(rng));
        w = static_cast<int>(tree_.sample(rng));
        rv = uf_.find(v);
        rw = uf_.find(w);
        if (++rejections > kRejectionCap) {
          capped = true;  // absorption declared
          break;
        }
      } while (rv == rw);
      if (capped) break;

      --free_[static_cast<std::size_t>(v)];
      tree_.add(static_cast<std::size_t>(v), -1);
      --free_[static_cast<std::size_t>(w)];
      tree_.add(static_cast<std::size_t>(w), -1);
      arms_ -= 2;
      ++bonds_;

      const long long av = root_arms_[static_cast<std::size_t>(rv)];
      const long long aw = root_arms_[static_cast<std::size_t>(rw)];
      const long long merged_arms = av + aw - 2;
      sumsq_ += merged_arms * merged_arms - av * av - aw * aw;

      if (members_[static_cast<std::size_t>(rv)].size() < members_[static_cast<std::size_t>(rw)].size())
        std::swap(rv, rw);
      uf_.parent[static_cast<std::size_t>(rw)] = rv;
      auto& big = members_[static_cast<std::size_t>(rv)];
      auto& small = members_[static_cast<std::size_t>(rw)];
      big.insert(big.end(), small.begin(), small.end());
      small.clear();
      small.shrink_to_fit();
      root_arms_[static_cast<std::size_t>(rv)] = merged_arms;
      root_size_[static_cast<std::size_t>(rv)] += root_size_[static_cast<std::size_t>(rw)];

      if (root_size_[static_cast<std::size_t>(rv)] > alpha_) gel(rv);
    }
    // Absorbed: every remaining sample time sees the terminal state.
    record_until(kInf, true, times, next_sample, trace);
  }

  SolutionPoint snapshot(double t) const {
    SolutionPoint pt;
    pt.t = t;
    const long long in_solution = static_cast<long long>(n_) - gel_mass_;
    pt.solution_fraction = static_cast<double>(in_solution) / static_cast<double>(n_);
    int max_degree = 0;
    for (int d : degree_) max_degree = std::max(max_degree, d);
    pt.used_arm_law.offset = 0;
    pt.used_arm_law.values.assign(static_cast<std::size_t>(max_degree) + 1, 0.0);
    if (in_solution > 0) {
      for (int u = 0; u < n_; ++u) {
        if (gelled_[static_cast<std::size_t>(u)]) continue;
        const int used = degree_[static_cast<std::size_t>(u)] - free_[static_cast<std::size_t>(u)];
        pt.used_arm_law.values[static_cast<std::size_t>(used)] += 1.0;
      }
      for (double& x : pt.used_arm_law.values) x /= static_cast<double>(in_solution);
    }
    return pt;
  }

  ParticleSystem result() const {
    ParticleSystem sys;
    sys.n = n_;
    sys.gel_mass = gel_mass_;
    sys.bonds_formed = bonds_;
    sys.gel_arms_removed = gel_arms_;
    sys.clock = clock_;
    for (int r = 0; r < n_; ++r) {
      if (uf_.parent[static_cast<std::size_t>(r)] != r) continue;
      if (root_gelled_[static_cast<std::size_t>(r)]) continue;
      sys.particles.push_back(
          {root_arms_[static_cast<std::size_t>(r)], root_size_[static_cast<std::size_t>(r)]});
    }
    return sys;
  }

  double clock() const { return clock_; }

 private:
  void gel(int root) {
    const long long a = root_arms_[static_cast<std::size_t>(root)];
    gel_mass_ += root_size_[static_cast<std::size_t>(root)];
    arms_ -= a;
    gel_arms_ += a;
    sumsq_ -= a * a;
    for (int u : members_[static_cast<std::size_t>(root)]) {
      gelled_[static_cast<std::size_t>(u)] = true;
      const int f = free_[static_cast<std::size_t>(u)];
      if (f > 0) tree_.add(static_cast<std::size_t>(u), -f);
    }
    members_[static_cast<std::size_t>(root)].clear();
    members_[static_cast<std::size_t>(root)].shrink_to_fit();
    root_arms_[static_cast<std::size_t>(root)] = 0;
    root_gelled_[static_cast<std::size_t>(root)] = true;
  }

  // Records sample times strictly below `upto` (or <= upto when inclusive)
  // against the current state.
  void record_until(double upto, bool inclusive, const std::vector<double>& times,
                    std::size_t& next, SolutionTrace* trace) {
    while (next < times.size() &&
           (times[next] < upto || (inclusive && times[next] <= upto))) {
      if (trace) trace->points.push_back(snapshot(times[next]));
      ++next;
    }
  }

  int n_;
  long long alpha_;
  std::vector<int> degree_;
  std::vector<int> free_;
  std::vector<bool> gelled_;
  UnionFind uf_;
  std::vector<long long> root_arms_;
  std::vector<long long> root_size_;
  std::vector<bool> root_gelled_;
  std::vector<std::vector<int>> members_;
  SumTree tree_;
  long long arms_ = 0;   // S: free arms in solution
  long long sumsq_ = 0;  // sum over in-solution particles of arms^2
  long long gel_mass_ = 0;
  long long bonds_ = 0;
  long long gel_arms_ = 0;
  double clock_ = 0.0;
};

}  // namespace

ParticleSystem coalesce_limited(const DegreeSequence& degrees, double t_end, Rng& rng) {
  if (t_end < 0) throw std::invalid_argument("coalesce_limited: negative t_end");
  LimitedEngine engine(degrees, static_cast<long long>(degrees.n()) + 1);
  engine.run(t_end, rng, {}, nullptr);
  return engine.result();
}

double total_merge_rate(const ParticleSystem& system) {
  long long arms = 0, sumsq = 0;
  for (const auto& p : system.particles) {
    arms += p.arms;
    sumsq += p.arms * p.arms;
  }
  return static_cast<double>(arms * arms - sumsq) / (2.0 * static_cast<double>(system.n));
}

ThresholdResult coalesce_threshold(const DegreeSequence& degrees, long long alpha, double t_end,
                                   Rng& rng, std::span<const double> sample_times) {
  if (t_end < 0) throw std::invalid_argument("coalesce_threshold: negative t_end");
  if (alpha < 1) throw std::invalid_argument("coalesce_threshold: alpha must be >= 1");
  LimitedEngine engine(degrees, alpha);
  ThresholdResult out;
  engine.run(t_end, rng, sample_times, &out.trace);
  out.terminal = engine.snapshot(engine.clock());
  out.system = engine.result();
  return out;
}

ParticleSystem coalesce_mono(long long n, double t_end, Rng& rng) {
  if (n < 1) throw std::invalid_argument("coalesce_mono: n must be >= 1");
  if (t_end < 0) throw std::invalid_argument("coalesce_mono: negative t_end");
  UnionFind uf(static_cast<int>(n));
  std::vector<long long> root_size(static_cast<std::size_t>(n), 1);
  long long sumsq = n;
  long long bonds = 0;
  double clock = 0.0;

  for (;;) {
    const long long rate_num = n * n - sumsq;
    if (rate_num <= 0) break;
    const double rate = static_cast<double>(rate_num) / (2.0 * static_cast<double>(n));
    const double t_next = clock + rng.exponential(rate);
    if (t_next >= t_end) {
      clock = t_end;
      break;
    }
    clock = t_next;

    int rv = 0, rw = 0;
    long long rejections = 0;
    bool capped = false;
    do {
      rv = uf.find(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
      rw = uf.find(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
      if (++rejections > kRejectionCap) {
        capped = true;  // absorption declared
        break;
      }
    } while (rv == rw);
    if (capped) break;

    ++bonds;
    const long long mv = root_size[static_cast<std::size_t>(rv)];
    const long long mw = root_size[static_cast<std::size_t>(rw)];
    sumsq += (mv + mw) * (mv + mw) - mv * mv - mw * mw;
    if (mv < mw) std::swap(rv, rw);
    uf.parent[static_cast<std::size_t>(rw)] = rv;
    root_size[static_cast<std::size_t>(rv)] = mv + mw;
  }

  ParticleSystem sys;
  sys.n = n;
  sys.gel_mass = 0;
  sys.bonds_formed = bonds;
  sys.clock = clock;
  for (long long r = 0; r < n; ++r)
    if (uf.parent[static_cast<std::size_t>(r)] == static_cast<int>(r))
      sys.particles.push_back({0, root_size[static_cast<std::size_t>(r)]});
  return sys;
}

ConfigGraph random_configuration(const DegreeSequence& degrees, Rng& rng) {
  ConfigGraph g;
  g.n = degrees.n();
  g.degrees = degrees.degrees;
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(degrees.total_stubs()));
  for (int v = 0; v < g.n; ++v) {
    const int d = degrees.degrees[static_cast<std::size_t>(v)];
    if (d < 1) throw std::invalid_argument("random_configuration: degrees must be >= 1");
    stubs.insert(stubs.end(), static_cast<std::size_t>(d), v);
  }
  for (std::size_t i = stubs.size(); i > 1; --i)
    std::swap(stubs[i - 1], stubs[rng.below(i)]);
  const std::size_t pairs = stubs.size() / 2;
  g.edges.reserve(pairs);
  for (std::size_t k = 0; k < pairs; ++k) g.edges.emplace_back(stubs[2 * k], stubs[2 * k + 1]);
  if (stubs.size() % 2 != 0) g.leftover_stub_vertex = stubs.back();
  return g;
}

ClusterCensus census(const ParticleSystem& system) {
  ClusterCensus out;
  out.n = system.n;
  out.gel_mass = system.gel_mass;
  out.clusters.reserve(system.particles.size());
  for (const auto& p : system.particles) {
    // Coalescent particles never form intra-particle bonds: always trees.
    out.clusters.push_back({p.size, p.arms, p.size - 1, true});
    ++out.size_counts[p.size];
    ++out.class_counts[{p.arms, p.size}];
  }
  return out;
}

ClusterCensus census(const ConfigGraph& graph) {
  UnionFind uf(graph.n);
  for (const auto& [u, v] : graph.edges) {
    const int ru = uf.find(u), rv = uf.find(v);
    if (ru != rv) uf.parent[static_cast<std::size_t>(rv)] = ru;
  }
  std::vector<long long> size(static_cast<std::size_t>(graph.n), 0);
  std::vector<long long> edge_count(static_cast<std::size_t>(graph.n), 0);
  std::vector<long long> free_arms(static_cast<std::size_t>(graph.n), 0);
  for (int v = 0; v < graph.n; ++v) ++size[static_cast<std::size_t>(uf.find(v))];
  for (const auto& [u, v] : graph.edges) ++edge_count[static_cast<std::size_t>(uf.find(u))];
  if (graph.leftover_stub_vertex)
    ++free_arms[static_cast<std::size_t>(uf.find(*graph.leftover_stub_vertex))];

  ClusterCensus out;
  out.n = graph.n;
  out.gel_mass = 0;
  for (int r = 0; r < graph.n; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    if (uf.parent[ri] != r) continue;
    const bool tree = edge_count[ri] == size[ri] - 1;
    out.clusters.push_back({size[ri], free_arms[ri], edge_count[ri], tree});
    ++out.size_counts[size[ri]];
    ++out.class_counts[{free_arms[ri], size[ri]}];
  }
  return out;
}

double EdgeRootedLaw::non_tree_fraction() const {
  double acc = tail_non_tree;
  for (const auto& [m, p] : non_tree) acc += p;
  return acc;
}

namespace {

struct ComponentIndex {
  UnionFind uf;
  std::vector<long long> size;
  std::vector<long long> edge_count;

  explicit ComponentIndex(const ConfigGraph& graph)
      : uf(graph.n),
        size(static_cast<std::size_t>(graph.n), 0),
        edge_count(static_cast<std::size_t>(graph.n), 0) {
    for (const auto& [u, v] : graph.edges) {
      const int ru = uf.find(u), rv = uf.find(v);
      if (ru != rv) uf.parent[static_cast<std::size_t>(rv)] = ru;
    }
    for (int v = 0; v < graph.n; ++v) ++size[static_cast<std::size_t>(uf.find(v))];
    for (const auto& [u, v] : graph.edges) ++edge_count[static_cast<std::size_t>(uf.find(u))];
  }
};

void deposit(EdgeRootedLaw& law, long long m, bool tree, double mass, long long m_max) {
  if (m <= m_max) {
    (tree ? law.tree : law.non_tree)[m] += mass;
  } else {
    (tree ? law.tail_tree : law.tail_non_tree) += mass;
  }
}

}  // namespace

EdgeRootedLaw edge_rooted_size_law(const ConfigGraph& graph, long long m_max) {
  if (m_max < 2) throw std::invalid_argument("edge_rooted_size_law: m_max must be >= 2");
  if (graph.edges.empty()) throw std::invalid_argument("edge_rooted_size_law: graph has no edges");
  ComponentIndex idx(graph);
  EdgeRootedLaw law;
  const double total = static_cast<double>(graph.edges.size());
  for (int r = 0; r < graph.n; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    if (idx.uf.parent[ri] != r || idx.edge_count[ri] == 0) continue;
    const bool tree = idx.edge_count[ri] == idx.size[ri] - 1;
    deposit(law, idx.size[ri], tree, static_cast<double>(idx.edge_count[ri]) / total, m_max);
  }
  return law;
}

EdgeRootedLaw edge_rooted_size_law(const ConfigGraph& graph, long long m_max, Rng& rng,
                                   long long samples) {
  if (m_max < 2) throw std::invalid_argument("edge_rooted_size_law: m_max must be >= 2");
  if (graph.edges.empty()) throw std::invalid_argument("edge_rooted_size_law: graph has no edges");
  if (samples < 1) throw std::invalid_argument("edge_rooted_size_law: samples must be >= 1");
  ComponentIndex idx(graph);
  EdgeRootedLaw law;
  const double mass = 1.0 / static_cast<double>(samples);
  for (long long s = 0; s < samples; ++s) {
    const auto e = graph.edges[rng.below(graph.edges.size())];
    const auto root = static_cast<std::size_t>(idx.uf.find(e.first));
    const bool tree = idx.edge_count[root] == idx.size[root] - 1;
    deposit(law, idx.size[root], tree, mass, m_max);
  }
  return law;
}

double soc_statistic(const branching::Pmf& used_arm_law, const ArmMeasure& mu_reference) {
  if (std::abs(used_arm_law.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("soc_statistic: law must be a probability");
  for (long long k = used_arm_law.k_max(); k > mu_reference.a_max(); --k)
    if (used_arm_law.at(k) > 0)
      throw std::invalid_argument("soc_statistic: used arms exceed the reference arm range");
  return branching::molloy_reed_statistic(used_arm_law);
}

std::map<std::pair<long long, long long>, ConcentrationEstimate> empirical_concentrations(
    const ClusterCensus& census, long long n) {
  if (n <= 0) throw std::invalid_argument("empirical_concentrations: n must be positive");
  std::map<std::pair<long long, long long>, ConcentrationEstimate> out;
  const double nd = static_cast<double>(n);
  for (const auto& [key, count] : census.class_counts) {
    const double p = static_cast<double>(count) / nd;
    out[key] = {p, std::sqrt(p * (1.0 - p) / nd)};
  }
  return out;
}

}  // namespace coaglab::stochsim
