#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eaee/action.hpp"
#include "eaee/controllers.hpp"
#include "eaee/energy_env.hpp"
#include "eaee/random.hpp"
#include "eaee/trace.hpp"

namespace eaee {

struct EpisodeConfig {
  int horizon = 10000;
  int num_episodes = 5;
  std::optional<int> b0;  // defaults to b_max
  Condition h0 = Condition::good;
  std::uint64_t seed = 2023;
  int num_classes = 10;
  int threads = 1;

  int initial_battery(const EnergyParams& p) const noexcept { return b0.value_or(p.b_max); }
};

std::vector<std::string> validation_errors(const EpisodeConfig& cfg, const EnergyParams& params);

/// Per-episode counts and metrics. accuracy is 0 with `no_served` set when
/// nothing was served.
struct EpisodeSummary {
  int episode = 0;
  double service_rate = 0.0;
  double accuracy = 0.0;
  double effective_accuracy = 0.0;
  long long served = 0;
  long long correct = 0;
  bool no_served = false;
};

struct EpisodeResult {
  EpisodeSummary metrics;
  std::vector<int> battery;                // B_0 .. B_T
  std::vector<long long> consumed;         // cumulative u(A) before slot t, length T + 1
  std::vector<long long> harvested;        // cumulative W before slot t, length T + 1
  std::array<long long, kActionCount> action_counts{};
};

/// One episode of `cfg.horizon` slots. Per slot the draw order is: source
/// transition, arrival, sample index (with replacement), controller draws,
/// then the free-guess outcome if any.
EpisodeResult run_episode(const Controller& controller, std::span<const ConfidenceSample> trace,
                          const EnergyParams& params, const EpisodeConfig& cfg, Rng& rng);

struct MetricStats {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 sd / sqrt(episodes), sd with ddof = 0
};

MetricStats summarize(std::span<const double> values);

struct AggregateResult {
  std::string controller;
  MetricStats service_rate;
  MetricStats accuracy;
  MetricStats effective_accuracy;
  std::vector<EpisodeSummary> episodes;
  std::vector<MetricStats> battery;   // per slot, length T + 1
  std::vector<MetricStats> consumed;  // per slot, length T + 1
};

std::uint64_t episode_seed(std::uint64_t master, std::string_view controller_id, int episode) noexcept;

/// Runs `cfg.num_episodes` per controller on `test` with seeds derived from
/// (master seed, controller id, episode index).
std::vector<AggregateResult> run_suite(std::span<const Controller* const> controllers,
                                       std::span<const ConfidenceSample> test, const EnergyParams& params,
                                       const EpisodeConfig& cfg);

struct EnergySeries {
  std::vector<long long> consumed;
  std::vector<double> continue_line;  // u_c t
  std::vector<double> exit_line;      // u_e t
  std::vector<double> harvest_line;   // eps t
};

EnergySeries cumulative_energy_series(const EpisodeResult& result, const EnergyParams& params);

// CSV outputs.
void write_results_csv(std::ostream& out, std::span<const EpisodeSummary> episodes);
std::vector<EpisodeSummary> read_results_csv(std::istream& in);
void write_trajectory_csv(std::ostream& out, const AggregateResult& agg);
void write_summary_csv(std::ostream& out, std::span<const AggregateResult> results);

struct SummaryRow {
  std::string controller;
  MetricStats alpha;
  MetricStats rho;
  MetricStats tau;
};

std::vector<SummaryRow> read_summary_csv(std::istream& in);

}  // namespace eaee
