// coaglab command-line front end.
//
//   coaglab solve    --config cfg   deterministic models (ode_*, closed_forms)
//   coaglab simulate --config cfg   stochastic models (coalescents, configuration)
//   coaglab limits   --config cfg   limiting-concentration / solution-phase tables
//   coaglab compare  --ref a --est b [--out report]
//
// --seed, --out and --format override the corresponding config entries.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "coaglab/harness.hpp"

namespace {

using coaglab::harness::ExperimentConfig;
using coaglab::harness::Model;
using coaglab::harness::OutputFormat;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

ExperimentConfig load_config(const std::string& path, const Overrides& overrides) {
  ExperimentConfig cfg = coaglab::harness::parse_config(read_file(path));
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.out) cfg.output_path = *overrides.out;
  if (overrides.format) {
    if (*overrides.format == "csv") {
      cfg.format = OutputFormat::csv;
    } else if (*overrides.format == "json") {
      cfg.format = OutputFormat::json;
    } else {
      throw std::runtime_error("--format must be csv or json");
    }
  }
  return cfg;
}

void add_overrides(CLI::App* cmd, Overrides& overrides) {
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&overrides](std::uint64_t s) { overrides.seed = s; }, "seed override");
  cmd->add_option_function<std::string>(
      "--out", [&overrides](const std::string& p) { overrides.out = p; }, "output path override");
  cmd->add_option_function<std::string>(
      "--format", [&overrides](const std::string& f) { overrides.format = f; },
      "output format override (csv|json)");
}

bool deterministic_model(Model m) {
  return m == Model::ode_mono || m == Model::ode_limited || m == Model::closed_forms;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coagulation-dynamics laboratory"};
  app.require_subcommand(1);

  std::string config_path, ref_path, est_path;
  Overrides overrides;

  auto* solve = app.add_subcommand("solve", "run a deterministic model");
  solve->add_option("--config", config_path, "experiment config")->required();
  add_overrides(solve, overrides);

  auto* simulate = app.add_subcommand("simulate", "run a stochastic model");
  simulate->add_option("--config", config_path, "experiment config")->required();
  add_overrides(simulate, overrides);

  auto* limits = app.add_subcommand("limits", "limiting-concentration tables");
  limits->add_option("--config", config_path, "experiment config")->required();
  add_overrides(limits, overrides);

  auto* cmp = app.add_subcommand("compare", "compare an estimate against a reference");
  cmp->add_option("--ref", ref_path, "reference table")->required();
  cmp->add_option("--est", est_path, "estimate table")->required();
  add_overrides(cmp, overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed() || simulate->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, overrides);
      const bool deterministic = deterministic_model(cfg.model);
      if (solve->parsed() && !deterministic)
        throw std::runtime_error("solve expects ode_mono, ode_limited or closed_forms");
      if (simulate->parsed() && deterministic)
        throw std::runtime_error("simulate expects a coalescent or configuration model");
      coaglab::harness::run(cfg);
      std::cout << "wrote " << cfg.output_path << "\n";
    } else if (limits->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, overrides);
      coaglab::harness::write_table(coaglab::harness::limits_table(cfg), cfg.output_path,
                                    cfg.format);
      std::cout << "wrote " << cfg.output_path << "\n";
    } else if (cmp->parsed()) {
      const auto report = coaglab::harness::compare(coaglab::harness::read_table(ref_path),
                                                    coaglab::harness::read_table(est_path));
      std::cout << report.summary() << "\n";
      if (overrides.out) {
        OutputFormat fmt = OutputFormat::csv;
        if (overrides.format && *overrides.format == "json") fmt = OutputFormat::json;
        coaglab::harness::write_report(report, *overrides.out, fmt);
        std::cout << "wrote " << *overrides.out << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
