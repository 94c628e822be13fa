#include "coaglab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "coaglab/detsolve.hpp"
#include "coaglab/stochsim.hpp"

namespace coaglab::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void config_fail(int line, const std::string& key, const std::string& what) {
  std::ostringstream os;
  os << "config line " << line << ", key '" << key << "': " << what;
  throw std::runtime_error(os.str());
}

double parse_double_or_fail(std::string_view text, int line, const std::string& key) {
  if (text == "inf" || text == "infinity") return kInf;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    config_fail(line, key, "malformed number '" + std::string(text) + "'");
  return value;
}

long long parse_int_or_fail(std::string_view text, int line, const std::string& key) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    config_fail(line, key, "malformed integer '" + std::string(text) + "'");
  return value;
}

std::uint64_t parse_u64_or_fail(std::string_view text, int line, const std::string& key) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    config_fail(line, key, "malformed unsigned integer '" + std::string(text) + "'");
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

const std::map<std::string, Model, std::less<>> kModelNames = {
    {"mono_coalescent", Model::mono_coalescent},
    {"limited_coalescent", Model::limited_coalescent},
    {"threshold_coalescent", Model::threshold_coalescent},
    {"configuration", Model::configuration},
    {"ode_mono", Model::ode_mono},
    {"ode_limited", Model::ode_limited},
    {"closed_forms", Model::closed_forms},
};

}  // namespace

std::string to_string(Model model) {
  for (const auto& [name, value] : kModelNames)
    if (value == model) return name;
  return "?";
}

std::string to_string(OutputFormat format) { return format == OutputFormat::csv ? "csv" : "json"; }

branching::ArmMeasure ExperimentConfig::arm_measure() const {
  if (mu.empty()) return branching::ArmMeasure({1.0});
  return branching::ArmMeasure::from_pairs(mu);
}

long long ExperimentConfig::effective_alpha() const {
  if (alpha) return *alpha;
  return static_cast<long long>(std::ceil(std::pow(static_cast<double>(n), 2.0 / 3.0)));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  bool have_model = false, have_output = false;
  std::set<std::string> seen;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const std::size_t hash = raw.find('#'); hash != std::string_view::npos)
      raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      config_fail(line_no, std::string(line), "expected key=value");
    const std::string key{trim(line.substr(0, eq))};
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) config_fail(line_no, key, "empty key");
    if (!seen.insert(key).second) config_fail(line_no, key, "duplicate key");

    if (key == "model") {
      const auto it = kModelNames.find(value);
      if (it == kModelNames.end()) config_fail(line_no, key, "unknown model '" + std::string(value) + "'");
      cfg.model = it->second;
      have_model = true;
    } else if (key.starts_with("mu.")) {
      const long long a = parse_int_or_fail(key.substr(3), line_no, key);
      if (a < 1) config_fail(line_no, key, "arm count must be >= 1");
      const double w = parse_double_or_fail(value, line_no, key);
      if (w < 0) config_fail(line_no, key, "negative weight");
      cfg.mu.emplace_back(static_cast<int>(a), w);
    } else if (key == "n") {
      cfg.n = parse_int_or_fail(value, line_no, key);
      if (cfg.n < 1) config_fail(line_no, key, "n must be >= 1");
    } else if (key == "t_end") {
      cfg.t_end = parse_double_or_fail(value, line_no, key);
      if (!(cfg.t_end >= 0)) config_fail(line_no, key, "t_end must be nonnegative");
    } else if (key == "alpha") {
      if (value == "auto") {
        cfg.alpha.reset();
      } else {
        const long long a = parse_int_or_fail(value, line_no, key);
        if (a < 1) config_fail(line_no, key, "alpha must be >= 1");
        cfg.alpha = a;
      }
    } else if (key == "replicas") {
      cfg.replicas = parse_int_or_fail(value, line_no, key);
      if (cfg.replicas < 1) config_fail(line_no, key, "replicas must be >= 1");
    } else if (key == "seed") {
      cfg.seed = parse_u64_or_fail(value, line_no, key);
    } else if (key == "sample_times") {
      cfg.sample_times.clear();
      std::size_t start = 0;
      const std::string list{value};
      while (start <= list.size() && !list.empty()) {
        const std::size_t comma = list.find(',', start);
        const std::string item{trim(std::string_view(list).substr(
            start, comma == std::string::npos ? comma : comma - start))};
        if (!item.empty()) {
          const double t = parse_double_or_fail(item, line_no, key);
          if (!(t >= 0)) config_fail(line_no, key, "sample times must be nonnegative");
          cfg.sample_times.push_back(t);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    } else if (key == "truncation") {
      const std::size_t comma = value.find(',');
      if (comma == std::string_view::npos)
        config_fail(line_no, key, "expected 'a_max,m_max'");
      const long long a = parse_int_or_fail(trim(value.substr(0, comma)), line_no, key);
      const long long m = parse_int_or_fail(trim(value.substr(comma + 1)), line_no, key);
      if (a < 1 || m < 1) config_fail(line_no, key, "truncation bounds must be >= 1");
      cfg.a_max = static_cast<int>(a);
      cfg.m_max = static_cast<int>(m);
    } else if (key == "output") {
      const std::size_t comma = value.rfind(',');
      if (comma == std::string_view::npos)
        config_fail(line_no, key, "expected 'path,format'");
      cfg.output_path = std::string(trim(value.substr(0, comma)));
      const std::string_view fmt = trim(value.substr(comma + 1));
      if (fmt == "csv") {
        cfg.format = OutputFormat::csv;
      } else if (fmt == "json") {
        cfg.format = OutputFormat::json;
      } else {
        config_fail(line_no, key, "format must be csv or json");
      }
      if (cfg.output_path.empty()) config_fail(line_no, key, "empty output path");
      have_output = true;
    } else {
      config_fail(line_no, key, "unknown key");
    }
  }

  if (!have_model) throw std::runtime_error("config: missing required key 'model'");
  if (!have_output) throw std::runtime_error("config: missing required key 'output'");
  std::sort(cfg.mu.begin(), cfg.mu.end());
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "model=" << to_string(cfg.model) << "\n";
  for (const auto& [a, w] : cfg.mu) os << "mu." << a << "=" << format_double(w) << "\n";
  os << "n=" << cfg.n << "\n";
  os << "t_end=" << format_double(cfg.t_end) << "\n";
  if (cfg.alpha) {
    os << "alpha=" << *cfg.alpha << "\n";
  } else {
    os << "alpha=auto\n";
  }
  os << "replicas=" << cfg.replicas << "\n";
  os << "seed=" << cfg.seed << "\n";
  if (!cfg.sample_times.empty()) {
    os << "sample_times=";
    for (std::size_t i = 0; i < cfg.sample_times.size(); ++i)
      os << (i ? "," : "") << format_double(cfg.sample_times[i]);
    os << "\n";
  }
  os << "truncation=" << cfg.a_max << "," << cfg.m_max << "\n";
  os << "output=" << cfg.output_path << "," << to_string(cfg.format) << "\n";
  return os.str();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

double parse_table_double(std::string_view text, const std::string& context) {
  if (text == "inf") return kInf;
  if (text == "-inf") return -kInf;
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw std::runtime_error(context + ": malformed number '" + std::string(text) + "'");
  return value;
}

nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);  // JSON has no inf/nan literals
}

double json_to_double(const nlohmann::json& j, const std::string& context) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_table_double(j.get<std::string>(), context);
  throw std::runtime_error(context + ": expected a number");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing output file '" + path + "'");
}

}  // namespace

void write_table(const Table& table, const std::string& path, OutputFormat format) {
  std::string content;
  if (format == OutputFormat::csv) {
    std::ostringstream os;
    os << "a,m,t,value,stderr\n";
    for (const Row& r : table.rows)
      os << r.a << "," << r.m << "," << format_double(r.t) << "," << format_double(r.value)
         << "," << format_double(r.stderr_) << "\n";
    content = os.str();
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (const Row& r : table.rows)
      rows.push_back({{"a", r.a},
                      {"m", r.m},
                      {"t", json_number(r.t)},
                      {"value", json_number(r.value)},
                      {"stderr", json_number(r.stderr_)}});
    content = nlohmann::json{{"columns", {"a", "m", "t", "value", "stderr"}}, {"rows", rows}}
                  .dump(2) +
              "\n";
  }
  try {
    write_text_file(path, content);
  } catch (...) {
    std::remove(path.c_str());
    throw;
  }
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open table file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  Table table;
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    for (const auto& r : doc.at("rows")) {
      table.rows.push_back({r.at("a").get<long long>(), r.at("m").get<long long>(),
                            json_to_double(r.at("t"), path), json_to_double(r.at("value"), path),
                            json_to_double(r.at("stderr"), path)});
    }
    return table;
  }

  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) throw std::runtime_error(path + ": empty table");
  if (trim(line) != "a,m,t,value,stderr")
    throw std::runtime_error(path + ": unexpected CSV header '" + line + "'");
  while (std::getline(lines, line)) {
    const std::string_view sv = trim(line);
    if (sv.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = sv.find(',', start);
      fields.push_back(sv.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) throw std::runtime_error(path + ": expected 5 CSV fields");
    table.rows.push_back({static_cast<long long>(parse_table_double(fields[0], path)),
                          static_cast<long long>(parse_table_double(fields[1], path)),
                          parse_table_double(fields[2], path),
                          parse_table_double(fields[3], path),
                          parse_table_double(fields[4], path)});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

namespace {

using KeyedValues = std::map<std::tuple<long long, long long, double>, double>;

// Replica fan-out: computes one KeyedValues per replica (seed ^ index) on a
// bounded worker pool, then reduces in replica order to (mean, stderr).
template <typename Fn>
std::map<std::tuple<long long, long long, double>, std::pair<double, double>> replicate(
    const ExperimentConfig& cfg, Fn per_replica) {
  std::vector<KeyedValues> results(static_cast<std::size_t>(cfg.replicas));
  const int workers = worker_count(cfg.replicas);
  std::atomic<long long> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    for (;;) {
      const long long r = next.fetch_add(1);
      if (r >= cfg.replicas) return;
      try {
        Rng rng(cfg.seed ^ static_cast<std::uint64_t>(r));
        results[static_cast<std::size_t>(r)] = per_replica(rng);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  std::map<std::tuple<long long, long long, double>, std::pair<double, double>> out;
  std::set<std::tuple<long long, long long, double>> keys;
  for (const auto& r : results)
    for (const auto& [key, value] : r) keys.insert(key);
  const double R = static_cast<double>(cfg.replicas);
  for (const auto& key : keys) {
    double mean = 0.0;
    for (const auto& r : results) {
      const auto it = r.find(key);
      mean += it == r.end() ? 0.0 : it->second;
    }
    mean /= R;
    double var = 0.0;
    for (const auto& r : results) {
      const auto it = r.find(key);
      const double x = it == r.end() ? 0.0 : it->second;
      var += (x - mean) * (x - mean);
    }
    const double se = cfg.replicas > 1 ? std::sqrt(var / (R - 1.0) / R) : 0.0;
    out[key] = {mean, se};
  }
  return out;
}

std::vector<double> requested_times(const ExperimentConfig& cfg) {
  std::vector<double> times = cfg.sample_times;
  if (times.empty()) times.push_back(cfg.t_end);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

Table run_ode_mono(const ExperimentConfig& cfg) {
  detsolve::MonoField c0 = cfg.mu.empty()
                               ? detsolve::MonoField::monodisperse(cfg.m_max)
                               : detsolve::MonoField::from_pairs(
                                     [&] {
                                       std::vector<std::pair<long long, double>> pairs;
                                       for (const auto& [m, w] : cfg.mu) pairs.emplace_back(m, w);
                                       return pairs;
                                     }(),
                                     cfg.m_max);
  Table table;
  for (const double t : requested_times(cfg)) {
    const auto traj = detsolve::integrate_mono(c0, t, cfg.m_max);
    const auto& state = traj.states.back();
    for (long long m = 1; m <= cfg.m_max; ++m) table.rows.push_back({0, m, t, state(m), 0.0});
    table.rows.push_back({-1, 0, t, traj.truncation_leak(), 0.0});
  }
  return table;
}

Table run_ode_limited(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  Table table;
  for (const double t : requested_times(cfg)) {
    const auto traj = detsolve::integrate_limited(mu, t, cfg.a_max, cfg.m_max);
    const auto& state = traj.states.back();
    for (long long a = 0; a <= cfg.a_max; ++a)
      for (long long m = 1; m <= cfg.m_max; ++m)
        table.rows.push_back({a, m, t, state(static_cast<int>(a), m), 0.0});
    table.rows.push_back({-1, 0, t, traj.truncation_leak(), 0.0});
  }
  return table;
}

Table run_closed_forms(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  Table table;
  for (const double t : requested_times(cfg)) {
    for (long long a = 0; a <= cfg.a_max; ++a)
      for (long long m = 1; m <= cfg.m_max; ++m)
        table.rows.push_back(
            {a, m, t, detsolve::limited_closed_form(mu, t, static_cast<int>(a), m), 0.0});
  }
  return table;
}

Table run_mono_coalescent(const ExperimentConfig& cfg) {
  const auto aggregated = replicate(cfg, [&](Rng& rng) {
    const auto system = stochsim::coalesce_mono(cfg.n, cfg.t_end, rng);
    const auto counts = stochsim::census(system).size_counts;
    KeyedValues values;
    for (long long m = 1; m <= cfg.m_max; ++m) {
      const auto it = counts.find(m);
      values[{0, m, cfg.t_end}] =
          it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(cfg.n);
    }
    return values;
  });
  Table table;
  for (const auto& [key, stat] : aggregated)
    table.rows.push_back(
        {std::get<0>(key), std::get<1>(key), std::get<2>(key), stat.first, stat.second});
  return table;
}

KeyedValues class_grid_values(const stochsim::ClusterCensus& census, const ExperimentConfig& cfg,
                              double t) {
  const auto est = stochsim::empirical_concentrations(census, cfg.n);
  KeyedValues values;
  for (long long a = 0; a <= cfg.a_max; ++a)
    for (long long m = 1; m <= cfg.m_max; ++m) {
      const auto it = est.find({a, m});
      values[{a, m, t}] = it == est.end() ? 0.0 : it->second.value;
    }
  return values;
}

Table keyed_to_table(
    const std::map<std::tuple<long long, long long, double>, std::pair<double, double>>& stats) {
  Table table;
  for (const auto& [key, stat] : stats)
    table.rows.push_back(
        {std::get<0>(key), std::get<1>(key), std::get<2>(key), stat.first, stat.second});
  return table;
}

Table run_limited_coalescent(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  return keyed_to_table(replicate(cfg, [&](Rng& rng) {
    const auto degrees = stochsim::sample_degrees(mu, static_cast<int>(cfg.n), rng);
    const auto system = stochsim::coalesce_limited(degrees, cfg.t_end, rng);
    return class_grid_values(stochsim::census(system), cfg, cfg.t_end);
  }));
}

Table run_threshold_coalescent(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  const long long alpha = cfg.effective_alpha();
  if (alpha >= cfg.n) throw std::runtime_error("threshold must be macroscopic-excluding");
  return keyed_to_table(replicate(cfg, [&](Rng& rng) {
    const auto degrees = stochsim::sample_degrees(mu, static_cast<int>(cfg.n), rng);
    const auto result =
        stochsim::coalesce_threshold(degrees, alpha, cfg.t_end, rng, cfg.sample_times);
    KeyedValues values = class_grid_values(stochsim::census(result.system), cfg, cfg.t_end);
    for (const auto& pt : result.trace.points) {
      values[{-1, 0, pt.t}] = pt.solution_fraction;
      for (int k = 0; k <= mu.a_max(); ++k) values[{k, 0, pt.t}] = pt.used_arm_law.at(k);
    }
    values[{-1, 0, cfg.t_end}] = result.terminal.solution_fraction;
    for (int k = 0; k <= mu.a_max(); ++k)
      values[{k, 0, cfg.t_end}] = result.terminal.used_arm_law.at(k);
    return values;
  }));
}

Table run_configuration(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  return keyed_to_table(replicate(cfg, [&](Rng& rng) {
    const auto degrees = stochsim::sample_degrees(mu, static_cast<int>(cfg.n), rng);
    const auto graph = stochsim::random_configuration(degrees, rng);
    return class_grid_values(stochsim::census(graph), cfg, 0.0);
  }));
}

}  // namespace

Table run_to_table(const ExperimentConfig& cfg) {
  switch (cfg.model) {
    case Model::ode_mono:
      return run_ode_mono(cfg);
    case Model::ode_limited:
      return run_ode_limited(cfg);
    case Model::closed_forms:
      return run_closed_forms(cfg);
    case Model::mono_coalescent:
      return run_mono_coalescent(cfg);
    case Model::limited_coalescent:
      return run_limited_coalescent(cfg);
    case Model::threshold_coalescent:
      return run_threshold_coalescent(cfg);
    case Model::configuration:
      return run_configuration(cfg);
  }
  throw std::logic_error("run_to_table: unhandled model");
}

void run(const ExperimentConfig& cfg) {
  const Table table = run_to_table(cfg);
  write_table(table, cfg.output_path, cfg.format);
}

Table limits_table(const ExperimentConfig& cfg) {
  const auto mu = cfg.arm_measure();
  Table table;
  for (long long m = 2; m <= cfg.m_max; ++m)
    table.rows.push_back({0, m, kInf, detsolve::limiting_concentration(mu, 0, m), 0.0});
  if (branching::criticality(mu).gelling && std::abs(mu.total() - 1.0) <= 1e-9) {
    const auto limits = detsolve::merle_normand_limits(mu);
    table.rows.push_back({-1, 0, kInf, limits.m_inf, 0.0});
    for (long long i = 1; i <= limits.pi_inf.k_max(); ++i)
      table.rows.push_back({i, 0, kInf, limits.pi_inf.at(i), 0.0});
  }
  return table;
}

std::string ComparisonReport::summary() const {
  std::ostringstream os;
  os << "rows=" << rows.size() << " max|z|=" << format_double(max_abs_z)
     << " sup_gap=" << format_double(sup_gap) << " flagged=" << flagged
     << " truncation_leak=" << format_double(truncation_leak);
  return os.str();
}

ComparisonReport compare(const Table& reference, const Table& estimate) {
  std::map<std::tuple<long long, long long, double>, const Row*> ref_index;
  for (const Row& r : reference.rows) ref_index[{r.a, r.m, r.t}] = &r;

  ComparisonReport report;
  for (const Row& r : reference.rows)
    if (r.a == -1 && r.m == 0) report.truncation_leak = std::max(report.truncation_leak, r.value);
  for (const Row& e : estimate.rows) {
    if (e.a == -1 && e.m == 0)
      report.truncation_leak = std::max(report.truncation_leak, e.value);
    const auto it = ref_index.find({e.a, e.m, e.t});
    if (it == ref_index.end()) continue;
    const Row& r = *it->second;
    ComparisonRow row{e.a, e.m, e.t, r.value, e.value, e.stderr_,
                      std::numeric_limits<double>::quiet_NaN()};
    const double gap = std::abs(e.value - r.value);
    report.sup_gap = std::max(report.sup_gap, gap);
    if (e.stderr_ > 0) {
      row.z = (e.value - r.value) / e.stderr_;
      report.max_abs_z = std::max(report.max_abs_z, std::abs(row.z));
      if (std::abs(row.z) > 3.0) ++report.flagged;
    }
    report.rows.push_back(row);
  }
  if (report.rows.empty())
    throw std::runtime_error("compare: reference and estimate key sets are disjoint");
  return report;
}

void write_report(const ComparisonReport& report, const std::string& path, OutputFormat format) {
  std::string content;
  if (format == OutputFormat::csv) {
    std::ostringstream os;
    os << "a,m,t,reference,estimate,stderr,z\n";
    for (const auto& r : report.rows)
      os << r.a << "," << r.m << "," << format_double(r.t) << "," << format_double(r.reference)
         << "," << format_double(r.estimate) << "," << format_double(r.stderr_) << ","
         << format_double(r.z) << "\n";
    content = os.str();
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
      rows.push_back({{"a", r.a},
                      {"m", r.m},
                      {"t", json_number(r.t)},
                      {"reference", json_number(r.reference)},
                      {"estimate", json_number(r.estimate)},
                      {"stderr", json_number(r.stderr_)},
                      {"z", json_number(r.z)}});
    content = nlohmann::json{{"rows", rows},
                             {"summary",
                              {{"max_abs_z", json_number(report.max_abs_z)},
                               {"sup_gap", json_number(report.sup_gap)},
                               {"flagged", report.flagged},
                               {"truncation_leak", json_number(report.truncation_leak)}}}}
                  .dump(2) +
              "\n";
  }
  try {
    write_text_file(path, content);
  } catch (...) {
    std::remove(path.c_str());
    throw;
  }
}

int worker_count(long long replicas) {
  long long cap = replicas;
  if (const char* env = std::getenv("COAGLAB_THREADS")) {
    char* end = nullptr;
    const long long parsed = std::strtoll(env, &end, 10);
    if (end != env && parsed >= 1) cap = std::min(cap, parsed);
  } else {
    const long long hw = static_cast<long long>(std::thread::hardware_concurrency());
    if (hw >= 1) cap = std::min(cap, hw);
  }
  return static_cast<int>(std::max<long long>(1, cap));
}

}  // namespace coaglab::harness
