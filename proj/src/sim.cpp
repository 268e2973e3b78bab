#include "eaee/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "eaee/csv.hpp"
#include "eaee/errors.hpp"

namespace eaee {

namespace {

constexpr std::string_view kResultsHeader = "episode,tau,rho,alpha,served,correct";
constexpr std::string_view kTrajectoryHeader = "t,battery_mean,battery_halfwidth,cumenergy_mean,cumenergy_halfwidth";
constexpr std::string_view kSummaryHeader = "controller,alpha_mean,alpha_ci,rho_mean,rho_ci,tau_mean,tau_ci";

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string> validation_errors(const EpisodeConfig& cfg, const EnergyParams& params) {
  std::vector<std::string> out;
  if (cfg.horizon < 1) out.push_back(fmt::format("sim.horizon = {} must be at least 1", cfg.horizon));
  if (cfg.num_episodes < 1) out.push_back(fmt::format("sim.episodes = {} must be at least 1", cfg.num_episodes));
  const int b0 = cfg.initial_battery(params);
  if (b0 < 0 || b0 > params.b_max) out.push_back(fmt::format("sim.b0 = {} outside [0, {}]", b0, params.b_max));
  if (cfg.num_classes < 2) out.push_back(fmt::format("num_classes = {} must be at least 2", cfg.num_classes));
  if (cfg.threads < 1) out.push_back(fmt::format("sim.threads = {} must be at least 1", cfg.threads));
  return out;
}

EpisodeResult run_episode(const Controller& controller, std::span<const ConfidenceSample> trace,
                          const EnergyParams& params, const EpisodeConfig& cfg, Rng& rng) {
  if (trace.empty()) throw ValidationError("simulation trace is empty");
  const auto horizon = static_cast<std::size_t>(cfg.horizon);
  const double guess_prob = 1.0 / cfg.num_classes;

  EpisodeResult r;
  r.battery.reserve(horizon + 1);
  r.consumed.reserve(horizon + 1);
  r.harvested.reserve(horizon + 1);

  SystemState state{cfg.initial_battery(params), cfg.h0};
  long long consumed = 0;
  long long harvested = 0;
  long long served = 0;
  long long correct = 0;
  r.battery.push_back(state.battery);
  r.consumed.push_back(0);
  r.harvested.push_back(0);

  for (std::size_t t = 0; t < horizon; ++t) {
    const auto harvest = step_source(state.condition, rng, params);
    const auto& sample = trace[rng.index(trace.size())];
    const Action a = controller.decide(state, sample, rng);
    const int cost = action_cost(a, params);
    if (cost > state.battery) {
      throw InfeasibleActionError(fmt::format("controller '{}' chose {} (cost {}) at slot {} with battery {}",
                                              controller.id(), to_string(a), cost, t, state.battery));
    }
    ++r.action_counts[static_cast<std::size_t>(a)];
    switch (a) {
      case Action::discard: break;
      case Action::exit_early: ++served; correct += sample.correct_e; break;
      case Action::continue_full: ++served; correct += sample.correct_c; break;
      case Action::free_guess: ++served; correct += rng.bernoulli(guess_prob); break;
    }
    state.battery = step_battery(state.battery, cost, harvest.arrival, params);
    state.condition = harvest.next;
    consumed += cost;
    harvested += harvest.arrival;
    r.battery.push_back(state.battery);
    r.consumed.push_back(consumed);
    r.harvested.push_back(harvested);
  }

  auto& m = r.metrics;
  m.served = served;
  m.correct = correct;
  m.service_rate = static_cast<double>(served) / static_cast<double>(horizon);
  m.no_served = served == 0;
  m.accuracy = m.no_served ? 0.0 : static_cast<double>(correct) / static_cast<double>(served);
  m.effective_accuracy = m.accuracy * m.service_rate;
  return r;
}

MetricStats summarize(std::span<const double> values) {
  MetricStats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.half_width = 1.96 * std::sqrt(ss / n) / std::sqrt(n);
  return s;
}

std::uint64_t episode_seed(std::uint64_t master, std::string_view controller_id, int episode) noexcept {
  return derive_seed(master, fnv1a(controller_id), static_cast<std::uint64_t>(episode));
}

std::vector<AggregateResult> run_suite(std::span<const Controller* const> controllers,
                                       std::span<const ConfidenceSample> test, const EnergyParams& params,
                                       const EpisodeConfig& cfg) {
  if (auto errors = validation_errors(cfg, params); !errors.empty()) throw ConfigError(std::move(errors));
  const std::size_t episodes = static_cast<std::size_t>(cfg.num_episodes);
  const std::size_t jobs = controllers.size() * episodes;
  std::vector<EpisodeResult> results(jobs);
  std::vector<std::exception_ptr> failures(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const auto& c = *controllers[j / episodes];
      const int ep = static_cast<int>(j % episodes);
      try {
        Rng rng(episode_seed(cfg.seed, c.id(), ep));
        results[j] = run_episode(c, test, params, cfg, rng);
        results[j].metrics.episode = ep;
      } catch (...) {
        failures[j] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), jobs);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<AggregateResult> out;
  const auto slots = static_cast<std::size_t>(cfg.horizon) + 1;
  for (std::size_t c = 0; c < controllers.size(); ++c) {
    AggregateResult agg;
    agg.controller = std::string(controllers[c]->id());
    std::vector<double> tau, rho, alpha;
    for (std::size_t e = 0; e < episodes; ++e) {
      const auto& m = results[c * episodes + e].metrics;
      agg.episodes.push_back(m);
      tau.push_back(m.service_rate);
      rho.push_back(m.accuracy);
      alpha.push_back(m.effective_accuracy);
    }
    agg.service_rate = summarize(tau);
    agg.accuracy = summarize(rho);
    agg.effective_accuracy = summarize(alpha);
    agg.battery.resize(slots);
    agg.consumed.resize(slots);
    std::vector<double> col_b(episodes), col_e(episodes);
    for (std::size_t t = 0; t < slots; ++t) {
      for (std::size_t e = 0; e < episodes; ++e) {
        const auto& r = results[c * episodes + e];
        col_b[e] = r.battery[t];
        col_e[e] = static_cast<double>(r.consumed[t]);
      }
      agg.battery[t] = summarize(col_b);
      agg.consumed[t] = summarize(col_e);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

EnergySeries cumulative_energy_series(const EpisodeResult& result, const EnergyParams& params) {
  EnergySeries s;
  s.consumed = result.consumed;
  const double eps = average_energy_rate(params);
  for (std::size_t t = 0; t < result.consumed.size(); ++t) {
    const double td = static_cast<double>(t);
    s.continue_line.push_back(params.u_continue * td);
    s.exit_line.push_back(params.u_exit * td);
    s.harvest_line.push_back(eps * td);
  }
  return s;
}

void write_results_csv(std::ostream& out, std::span<const EpisodeSummary> episodes) {
  out << kResultsHeader << '\n';
  for (const auto& e : episodes) {
    out << e.episode << ',' << csv::exact(e.service_rate) << ',' << csv::exact(e.accuracy) << ','
        << csv::exact(e.effective_accuracy) << ',' << e.served << ',' << e.correct << '\n';
  }
}

std::vector<EpisodeSummary> read_results_csv(std::istream& in) {
  csv::expect_header(in, kResultsHeader);
  std::vector<EpisodeSummary> out;
  std::string line;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 6) throw ParseError(fmt::format("line {}: expected 6 fields, got {}", line_no, f.size()));
    EpisodeSummary e;
    e.episode = static_cast<int>(csv::parse_int(f[0], line_no, "episode"));
    e.service_rate = csv::parse_double(f[1], line_no, "tau");
    e.accuracy = csv::parse_double(f[2], line_no, "rho");
    e.effective_accuracy = csv::parse_double(f[3], line_no, "alpha");
    e.served = csv::parse_int(f[4], line_no, "served");
    e.correct = csv::parse_int(f[5], line_no, "correct");
    e.no_served = e.served == 0;
    out.push_back(e);
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const AggregateResult& agg) {
  out << kTrajectoryHeader << '\n';
  for (std::size_t t = 0; t < agg.battery.size(); ++t) {
    out << t << ',' << csv::exact(agg.battery[t].mean) << ',' << csv::exact(agg.battery[t].half_width) << ','
        << csv::exact(agg.consumed[t].mean) << ',' << csv::exact(agg.consumed[t].half_width) << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const AggregateResult> results) {
  out << kSummaryHeader << '\n';
  for (const auto& r : results) {
    out << r.controller << ',' << csv::exact(r.effective_accuracy.mean) << ','
        << csv::exact(r.effective_accuracy.half_width) << ',' << csv::exact(r.accuracy.mean) << ','
        << csv::exact(r.accuracy.half_width) << ',' << csv::exact(r.service_rate.mean) << ','
        << csv::exact(r.service_rate.half_width) << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  csv::expect_header(in, kSummaryHeader);
  std::vector<SummaryRow> out;
  std::string line;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 7) throw ParseError(fmt::format("line {}: expected 7 fields, got {}", line_no, f.size()));
    SummaryRow r;
    r.controller = std::string(f[0]);
    r.alpha = {csv::parse_double(f[1], line_no, "alpha_mean"), csv::parse_double(f[2], line_no, "alpha_ci")};
    r.rho = {csv::parse_double(f[3], line_no, "rho_mean"), csv::parse_double(f[4], line_no, "rho_ci")};
    r.tau = {csv::parse_double(f[5], line_no, "tau_mean"), csv::parse_double(f[6], line_no, "tau_ci")};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace eaee
