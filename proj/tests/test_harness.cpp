#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "coaglab/detsolve.hpp"
#include "coaglab/harness.hpp"

using namespace coaglab;
using namespace coaglab::harness;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("coaglab_test_" + name);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("minimal deterministic config") {
    const auto cfg = parse_config(
        "model=ode_mono\nn=1\nt_end=0.5\ntruncation=1,60\nseed=1\noutput=out.csv,csv\n");
    CHECK(cfg.model == Model::ode_mono);
    CHECK(cfg.n == 1);
    CHECK(cfg.t_end == 0.5);
    CHECK(cfg.a_max == 1);
    CHECK(cfg.m_max == 60);
    CHECK(cfg.seed == 1);
    CHECK(cfg.output_path == "out.csv");
    CHECK(cfg.format == OutputFormat::csv);
    CHECK(cfg.replicas == 1);
    CHECK_FALSE(cfg.alpha.has_value());
  }
  SUBCASE("mu entries build the arm measure") {
    const auto cfg =
        parse_config("model=closed_forms\nmu.1=0.5\nmu.3=0.5\noutput=o.csv,csv\n");
    const auto mu = cfg.arm_measure();
    CHECK(mu(1) == 0.5);
    CHECK(mu(2) == 0.0);
    CHECK(mu(3) == 0.5);
  }
  SUBCASE("comments, blanks and whitespace") {
    const auto cfg = parse_config(
        "# experiment\nmodel = configuration   # trailing comment\n\n  n =  250\n"
        "output=x.json,json\n");
    CHECK(cfg.model == Model::configuration);
    CHECK(cfg.n == 250);
    CHECK(cfg.format == OutputFormat::json);
  }
  SUBCASE("inf, auto and sample times") {
    const auto cfg = parse_config(
        "model=threshold_coalescent\nt_end=inf\nalpha=auto\nsample_times=0.5,1,2\n"
        "output=o.csv,csv\nn=1000\n");
    CHECK(std::isinf(cfg.t_end));
    CHECK_FALSE(cfg.alpha.has_value());
    CHECK(cfg.effective_alpha() == 100);  // ceil(1000^(2/3))
    CHECK(cfg.sample_times == std::vector<double>{0.5, 1.0, 2.0});
  }
  SUBCASE("errors name the line and key") {
    CHECK_THROWS_WITH_AS(parse_config("model=ode_mono\nt_end=-1\noutput=o.csv,csv\n"),
                         "config line 2, key 't_end': t_end must be nonnegative",
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config("model=ode_mono\nmu.2=-0.5\noutput=o.csv,csv\n"),
                         "config line 2, key 'mu.2': negative weight", std::runtime_error);
    CHECK_THROWS(parse_config("model=ode_mono\nbogus=1\noutput=o.csv,csv\n"));
    CHECK_THROWS(parse_config("model=ode_mono\nn=abc\noutput=o.csv,csv\n"));
    CHECK_THROWS(parse_config("model=ode_mono\nn=1\nn=2\noutput=o.csv,csv\n"));
    CHECK_THROWS(parse_config("output=o.csv,csv\n"));  // missing model
    CHECK_THROWS(parse_config("model=ode_mono\n"));    // missing output
    CHECK_THROWS(parse_config("model=warp_drive\noutput=o.csv,csv\n"));
  }
  SUBCASE("round trip") {
    ExperimentConfig cfg;
    cfg.model = Model::threshold_coalescent;
    cfg.mu = {{1, 0.5}, {3, 0.5}};
    cfg.n = 12345;
    cfg.t_end = std::numeric_limits<double>::infinity();
    cfg.alpha.reset();
    cfg.replicas = 7;
    cfg.seed = 0xDEADBEEFCAFEF00DULL;
    cfg.sample_times = {0.1, 0.25, 1.0 / 3.0};
    cfg.a_max = 5;
    cfg.m_max = 33;
    cfg.output_path = "results/table.json";
    cfg.format = OutputFormat::json;
    CHECK(parse_config(serialize_config(cfg)) == cfg);
    cfg.alpha = 400;
    cfg.t_end = 0.625;
    cfg.sample_times.clear();
    CHECK(parse_config(serialize_config(cfg)) == cfg);
  }
}

TEST_CASE("shortest round-trip doubles") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  for (const double x : {1.0 / 3.0, std::exp(-0.5), 1e-300, 6.02e23}) {
    const std::string s = format_double(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
}

TEST_CASE("table io") {
  Table table;
  table.rows = {{0, 1, 0.5, std::exp(-0.5), 0.0},
                {-1, 0, std::numeric_limits<double>::infinity(), 1.0 / 3.0, 1e-6},
                {2, 7, 0.25, 1e-300, 0.125}};

  SUBCASE("csv round trip is bit exact") {
    const auto path = temp_path("table.csv");
    write_table(table, path.string(), OutputFormat::csv);
    const auto back = read_table(path.string());
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      CHECK(back.rows[i].a == table.rows[i].a);
      CHECK(back.rows[i].m == table.rows[i].m);
      CHECK(back.rows[i].t == table.rows[i].t);
      CHECK(back.rows[i].value == table.rows[i].value);
      CHECK(back.rows[i].stderr_ == table.rows[i].stderr_);
    }
    CHECK(slurp(path).substr(0, 21) == "a,m,t,value,stderr\n0,");
    std::filesystem::remove(path);
  }
  SUBCASE("json mirrors the csv schema") {
    const auto path = temp_path("table.json");
    write_table(table, path.string(), OutputFormat::json);
    const auto back = read_table(path.string());
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      CHECK(back.rows[i].t == table.rows[i].t);
      CHECK(back.rows[i].value == table.rows[i].value);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("comparison reports") {
  Table ref;
  ref.rows = {{0, 1, 0.5, 1.0, 0.0}, {0, 2, 0.5, 0.25, 0.0}};
  SUBCASE("identical tables give zero z everywhere") {
    Table est = ref;
    for (auto& r : est.rows) r.stderr_ = 0.01;
    const auto report = compare(ref, est);
    CHECK(report.max_abs_z == 0.0);
    CHECK(report.sup_gap == 0.0);
    CHECK(report.flagged == 0);
    for (const auto& row : report.rows) CHECK(row.z == 0.0);
  }
  SUBCASE("flags rows beyond three standard errors") {
    Table est = ref;
    est.rows[0].value = 1.05;
    est.rows[0].stderr_ = 0.01;  // z = 5
    est.rows[1].value = 0.26;
    est.rows[1].stderr_ = 0.01;  // z = 1
    const auto report = compare(ref, est);
    CHECK(report.flagged == 1);
    CHECK(report.max_abs_z == doctest::Approx(5.0));
    CHECK(report.sup_gap == doctest::Approx(0.05));
  }
  SUBCASE("disjoint keys raise") {
    Table est;
    est.rows = {{9, 9, 9.0, 1.0, 0.0}};
    CHECK_THROWS(compare(ref, est));
  }
}

TEST_CASE("experiment runs") {
  SUBCASE("ode_mono output matches mcleod") {
    ExperimentConfig cfg;
    cfg.model = Model::ode_mono;
    cfg.t_end = 0.5;
    cfg.a_max = 1;
    cfg.m_max = 40;
    cfg.output_path = temp_path("ode_mono.csv").string();
    run(cfg);
    const auto table = read_table(cfg.output_path);
    double sup = 0.0;
    for (const auto& row : table.rows) {
      if (row.a != 0) continue;
      sup = std::max(sup, std::abs(row.value - detsolve::mcleod(0.5, row.m)));
    }
    CHECK(sup < 1e-6);
    std::filesystem::remove(cfg.output_path);
  }
  SUBCASE("sample times produce one state block per time") {
    ExperimentConfig cfg;
    cfg.model = Model::ode_mono;
    cfg.t_end = 0.4;
    cfg.sample_times = {0.2, 0.4};
    cfg.m_max = 20;
    const Table table = run_to_table(cfg);
    int checked = 0;
    for (const auto& row : table.rows) {
      if (row.a != 0) continue;
      CHECK(std::abs(row.value - detsolve::mcleod(row.t, row.m)) < 1e-6);
      ++checked;
    }
    CHECK(checked == 40);  // 20 masses at each of the two times
  }
  SUBCASE("ode_limited agrees with closed_forms on the shared grid") {
    ExperimentConfig base;
    base.mu = {{1, 0.5}, {2, 0.5}};
    base.t_end = 0.3;
    base.a_max = 12;
    base.m_max = 12;

    ExperimentConfig ode = base;
    ode.model = Model::ode_limited;
    ode.output_path = temp_path("ode_limited.csv").string();
    run(ode);

    ExperimentConfig closed = base;
    closed.model = Model::closed_forms;
    closed.output_path = temp_path("closed.csv").string();
    run(closed);

    const auto report = compare(read_table(closed.output_path), read_table(ode.output_path));
    CHECK(report.sup_gap < 1e-6);
    // The ODE table carries a leak row, surfaced in the report summary.
    CHECK(report.truncation_leak >= 0.0);
    CHECK(report.truncation_leak < 1e-3);
    std::filesystem::remove(ode.output_path);
    std::filesystem::remove(closed.output_path);
  }
  SUBCASE("json output runs end to end") {
    ExperimentConfig cfg;
    cfg.model = Model::configuration;
    cfg.mu = {{1, 0.8}, {2, 0.2}};
    cfg.n = 3000;
    cfg.replicas = 3;
    cfg.seed = 7;
    cfg.a_max = 2;
    cfg.m_max = 8;
    cfg.format = OutputFormat::json;
    cfg.output_path = temp_path("config.json").string();
    run(cfg);
    const auto table = read_table(cfg.output_path);
    double mass = 0.0;
    for (const auto& row : table.rows)
      if (row.m >= 1) mass += static_cast<double>(row.m) * row.value;
    CHECK(mass > 0.5);  // most atoms sit in small clusters on this grid
    CHECK(mass <= 1.0 + 1e-12);
    std::filesystem::remove(cfg.output_path);
  }
  SUBCASE("stochastic reruns are byte identical") {
    ExperimentConfig cfg;
    cfg.model = Model::limited_coalescent;
    cfg.mu = {{1, 0.9}, {2, 0.1}};
    cfg.n = 2000;
    cfg.t_end = std::numeric_limits<double>::infinity();
    cfg.replicas = 4;
    cfg.seed = 99;
    cfg.a_max = 3;
    cfg.m_max = 12;
    cfg.output_path = temp_path("coalescent_a.csv").string();
    run(cfg);
    const std::string first = slurp(cfg.output_path);
    std::filesystem::remove(cfg.output_path);
    cfg.output_path = temp_path("coalescent_b.csv").string();
    run(cfg);
    const std::string second = slurp(cfg.output_path);
    std::filesystem::remove(cfg.output_path);
    CHECK(first == second);
    CHECK_FALSE(first.empty());
  }
  SUBCASE("threshold experiments require a macroscopic-excluding alpha") {
    ExperimentConfig cfg;
    cfg.model = Model::threshold_coalescent;
    cfg.mu = {{1, 0.5}, {3, 0.5}};
    cfg.n = 100;
    cfg.alpha = 100;
    cfg.t_end = 1.0;
    cfg.output_path = temp_path("threshold.csv").string();
    CHECK_THROWS_WITH(run(cfg), "threshold must be macroscopic-excluding");
  }
  SUBCASE("limits table carries the solution-phase limits for gelling mixtures") {
    ExperimentConfig cfg;
    cfg.mu = {{1, 0.5}, {3, 0.5}};
    cfg.m_max = 8;
    const auto table = limits_table(cfg);
    bool found_m_inf = false;
    for (const auto& row : table.rows) {
      if (row.a == -1 && row.m == 0) {
        found_m_inf = true;
        CHECK(row.value == doctest::Approx(0.3849001794597505).epsilon(1e-12));
      }
      if (row.a == 0 && row.m == 2)
        CHECK(row.value == doctest::Approx(2.0 / std::sqrt(3.0) / 16.0).epsilon(1e-12));
    }
    CHECK(found_m_inf);
  }
  SUBCASE("worker count respects the environment cap") {
    setenv("COAGLAB_THREADS", "2", 1);
    CHECK(worker_count(8) == 2);
    CHECK(worker_count(1) == 1);
    unsetenv("COAGLAB_THREADS");
    CHECK(worker_count(1) == 1);
  }
  SUBCASE("replica seed derivation is injective") {
    const std::uint64_t seed = 0xABCDEF0123456789ULL;
    std::set<std::uint64_t> derived;
    for (std::uint64_t r = 0; r < 4096; ++r) derived.insert(seed ^ r);
    CHECK(derived.size() == 4096);
  }
}

TEST_CASE("mcleod vs mono coalescent through compare") {
  // Deterministic reference table from the closed form, stochastic estimate
  // from the mono coalescent; the z-scores stay within 3.
  ExperimentConfig cfg;
  cfg.model = Model::mono_coalescent;
  cfg.n = 100000;
  cfg.t_end = 0.5;
  cfg.replicas = 20;
  cfg.seed = 500;
  cfg.m_max = 10;
  const Table estimate = run_to_table(cfg);

  Table reference;
  for (long long m = 1; m <= 10; ++m)
    reference.rows.push_back({0, m, 0.5, detsolve::mcleod(0.5, m), 0.0});

  const auto report = compare(reference, estimate);
  CHECK(report.rows.size() == 10);
  CHECK(report.max_abs_z <= 3.0);
  CHECK(report.flagged == 0);
}
