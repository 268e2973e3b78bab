#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eaee/errors.hpp"
#include "eaee/experiment.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kMissing = 3, kNumerical = 4, kOther = 1 };

int run(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const eaee::ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << '\n';
    return kConfig;
  } catch (const eaee::MissingArtifactError& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return kMissing;
  } catch (const eaee::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const eaee::ReducibleChainError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-aware early-exit policies for energy-harvesting inference"};
  app.require_subcommand(1);

  std::string config_path = "experiment.ini";
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config file")->check(CLI::ExistingFile);
  };

  std::string init_path = "experiment.ini";
  auto* init = app.add_subcommand("init", "Write a documented default config file");
  init->add_option("path", init_path, "Destination");

  auto* gen = app.add_subcommand("gen-trace", "Generate or ingest a confidence trace and split it");
  auto* cal = app.add_subcommand("calibrate", "Temperature-scale logits and build traces from them");
  auto* fit = app.add_subcommand("fit", "Solve the exit policy and fit the naive Bayes exit predictors");
  bool verify_oracle = false;
  fit->add_flag("--verify-oracle", verify_oracle, "Cross-check policy iteration against exhaustive enumeration");
  auto* sim = app.add_subcommand("simulate", "Simulate every enabled controller");
  auto* rep = app.add_subcommand("report", "Summarize simulation results as markdown");
  auto* all = app.add_subcommand("all", "gen-trace (or calibrate), fit, simulate and report");
  for (auto* sub : {gen, cal, fit, sim, rep, all}) add_config(sub);

  CLI11_PARSE(app, argc, argv);

  if (init->parsed()) {
    return run([&] {
      if (std::filesystem::exists(init_path)) throw eaee::Error(fmt::format("'{}' already exists", init_path));
      std::ofstream(init_path) << eaee::default_config_text();
      std::cout << "wrote " << init_path << '\n';
    });
  }

  return run([&] {
    auto cfg = eaee::load_config(config_path);
    if (verify_oracle) cfg.solver.verify_oracle = true;
    if (gen->parsed()) eaee::cmd_gen_trace(cfg, std::cout);
    if (cal->parsed()) eaee::cmd_calibrate(cfg, std::cout);
    if (fit->parsed()) eaee::cmd_fit(cfg, std::cout);
    if (sim->parsed()) eaee::cmd_simulate(cfg, std::cout);
    if (rep->parsed()) {
      const auto outcome = eaee::cmd_report(cfg, std::cout);
      if (!outcome.audit_failures.empty()) throw eaee::Error("results failed the consistency audit");
    }
    if (all->parsed()) {
      if (cfg.trace.source == eaee::TraceSource::logits) {
        eaee::cmd_calibrate(cfg, std::cout);
      } else {
        eaee::cmd_gen_trace(cfg, std::cout);
      }
      eaee::cmd_fit(cfg, std::cout);
      eaee::cmd_simulate(cfg, std::cout);
      eaee::cmd_report(cfg, std::cout);
    }
  });
}
