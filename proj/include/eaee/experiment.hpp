#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eaee/energy_env.hpp"
#include "eaee/sim.hpp"
#include "eaee/trace.hpp"

namespace eaee {

enum class TraceSource { synthetic, csv, logits };

struct TraceSettings {
  TraceSource source = TraceSource::synthetic;
  std::filesystem::path csv_path;
  std::filesystem::path logit_path;
  std::size_t num_samples = 35000;
  GeneratorConfig generator;
  SplitFractions fractions{0.35, 0.35, 0.30};
};

struct SolverSettings {
  int grid_resolution = 256;
  SystemState reference{0, Condition::good};
  int max_iterations = 1000;
  bool verify_oracle = false;
};

struct ControllerSettings {
  std::vector<std::string> enabled{"always_continue", "always_exit", "eao", "oncc", "cc"};
  bool continue_fallback = false;
};

/// Everything one experiment run needs. Defaults reproduce the reference
/// scenario: lambda = (0.1, 0.2, 0.7), p_G = 0.9, p_B = 0.6, b_max = 50,
/// u_e = 1, u_c = 2, T = 10^4, 5 episodes.
struct ExperimentConfig {
  std::uint64_t seed = 2023;
  EnergyParams energy;
  TraceSettings trace;
  SolverSettings solver;
  ControllerSettings controllers;
  EpisodeConfig sim;
  std::filesystem::path output_dir = "out";
};

/// Every violated field, across all blocks (empty when valid).
std::vector<std::string> validation_errors(const ExperimentConfig& cfg);

/// Parses an INI/TOML-style file with [sections] and key = value lines.
/// Unknown keys are rejected. EAEE_OUTPUT_DIR and EAEE_SEED override the
/// output directory and seed. Throws ConfigError listing every problem.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});

/// Default config file contents, with every key documented.
std::string default_config_text();

namespace files {
inline constexpr const char* trace_est = "trace_est.csv";
inline constexpr const char* trace_nb = "trace_nb.csv";
inline constexpr const char* trace_test = "trace_test.csv";
inline constexpr const char* policy = "policy.csv";
inline constexpr const char* predictor = "predictor.csv";
inline constexpr const char* summary = "summary.csv";
inline constexpr const char* report = "report.md";
inline constexpr const char* calibration = "calibration.csv";
std::string results(std::string_view controller);
std::string trajectory(std::string_view controller);
}  // namespace files

// Pipeline steps. Each writes under cfg.output_dir and prints a short
// human-readable log to `log`.
void cmd_gen_trace(const ExperimentConfig& cfg, std::ostream& log);
void cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log);

struct FitOutcome {
  double gain = 0.0;
  int iterations = 0;
  std::optional<double> oracle_gain;
};
FitOutcome cmd_fit(const ExperimentConfig& cfg, std::ostream& log);

std::vector<AggregateResult> cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);

struct ReportOutcome {
  std::string markdown;
  std::vector<std::string> audit_failures;
};
ReportOutcome cmd_report(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace eaee
