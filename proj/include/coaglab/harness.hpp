#pragma once

// Experiment orchestration: flat key=value configuration files, replica
// fan-out with derived seeds (seed ^ replica index), CSV/JSON tables with a
// fixed {a, m, t, value, stderr} schema, and deterministic-vs-stochastic
// comparison reports. Consumed by the CLI in tools/.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coaglab/branching.hpp"

namespace coaglab::harness {

enum class Model {
  mono_coalescent,
  limited_coalescent,
  threshold_coalescent,
  configuration,
  ode_mono,
  ode_limited,
  closed_forms,
};

enum class OutputFormat { csv, json };

std::string to_string(Model model);
std::string to_string(OutputFormat format);

struct ExperimentConfig {
  Model model = Model::closed_forms;
  std::vector<std::pair<int, double>> mu;  // (arm count, weight); empty means delta_1
  long long n = 1;
  double t_end = 0.0;                      // may be infinity ("inf")
  std::optional<long long> alpha;          // nullopt: auto = ceil(n^{2/3})
  long long replicas = 1;
  std::uint64_t seed = 0;
  std::vector<double> sample_times;
  int a_max = 10;
  int m_max = 60;
  std::string output_path;
  OutputFormat format = OutputFormat::csv;

  branching::ArmMeasure arm_measure() const;  // mu entries (delta_1 when empty)
  long long effective_alpha() const;          // auto rule applied

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses the flat key=value format (# comments, mu entries as mu.<a>=<w>).
/// Unknown keys and malformed values raise std::runtime_error naming the
/// line and key.
ExperimentConfig parse_config(std::string_view text);

/// Inverse of parse_config: parse(serialize(cfg)) == cfg.
std::string serialize_config(const ExperimentConfig& config);

struct Row {
  long long a;
  long long m;
  double t;
  double value;
  double stderr_;
};

struct Table {
  std::vector<Row> rows;
};

/// Shortest round-trip decimal rendering (std::to_chars); "inf"/"nan" spelled
/// out so CSV and JSON reload bit-exactly.
std::string format_double(double x);

void write_table(const Table& table, const std::string& path, OutputFormat format);
Table read_table(const std::string& path);  // format sniffed from content

/// Runs the configured experiment and writes its output table; partial
/// outputs are removed on failure.
void run(const ExperimentConfig& config);

/// Produces the experiment's table without touching the filesystem.
Table run_to_table(const ExperimentConfig& config);

/// Limiting-concentration / solution-phase-limit table for the config's mu.
Table limits_table(const ExperimentConfig& config);

struct ComparisonRow {
  long long a;
  long long m;
  double t;
  double reference;
  double estimate;
  double stderr_;
  double z;  // (estimate - reference)/stderr; NaN when stderr == 0
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double max_abs_z = 0.0;         // over rows with stderr > 0
  double sup_gap = 0.0;           // max |estimate - reference|
  long long flagged = 0;          // rows with |z| > 3
  double truncation_leak = 0.0;   // largest leak row (a=-1, m=0) on either side

  std::string summary() const;
};

/// Row-wise comparison keyed on (a, m, t). Throws when the key sets are
/// disjoint.
ComparisonReport compare(const Table& reference, const Table& estimate);

void write_report(const ComparisonReport& report, const std::string& path, OutputFormat format);

/// Worker count for replica fan-out: COAGLAB_THREADS when set, otherwise the
/// hardware concurrency, never more than the replica count.
int worker_count(long long replicas);

}  // namespace coaglab::harness
