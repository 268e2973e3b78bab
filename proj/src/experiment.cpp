#include "eaee/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "eaee/controllers.hpp"
#include "eaee/csv.hpp"
#include "eaee/errors.hpp"
#include "eaee/mdp.hpp"

namespace eaee {

namespace pt = boost::property_tree;

namespace {

enum SeedStream : std::uint64_t { kTraceStream = 1, kSplitStream = 2, kSimStream = 3 };

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cleaned(s);
  std::erase_if(cleaned, [](char c) { return c == '[' || c == ']'; });
  for (auto f : csv::split_fields(cleaned)) {
    auto t = trim(f);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

// Reads typed values out of the tree, recording every problem instead of
// stopping at the first.
class Reader {
 public:
  Reader(const pt::ptree& tree, std::vector<std::string>& errors) : tree_(tree), errors_(errors) {}

  template <class T>
  void get(const char* section, const char* key, T& dst) {
    const auto raw = raw_value(section, key);
    if (!raw) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (*raw == "true" || *raw == "1") {
        dst = true;
      } else if (*raw == "false" || *raw == "0") {
        dst = false;
      } else {
        bad(section, key, *raw, "a boolean");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      dst = *raw;
    } else {
      T v{};
      const auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
      if (ec != std::errc{} || ptr != raw->data() + raw->size()) {
        bad(section, key, *raw, "a number");
      } else {
        dst = v;
      }
    }
  }

  void get_condition(const char* section, const char* key, Condition& dst) {
    const auto raw = raw_value(section, key);
    if (!raw) return;
    if (*raw == "G" || *raw == "good") {
      dst = Condition::good;
    } else if (*raw == "B" || *raw == "bad") {
      dst = Condition::bad;
    } else {
      bad(section, key, *raw, "G or B");
    }
  }

  std::optional<std::string> raw_value(const char* section, const char* key) {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

 private:
  void bad(const char* section, const char* key, const std::string& raw, const char* expected) {
    errors_.push_back(fmt::format("{}.{} = '{}' is not {}", section, key, raw, expected));
  }

  const pt::ptree& tree_;
  std::vector<std::string>& errors_;
};

const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"experiment", {"seed"}},
      {"energy", {"p_good", "p_bad", "lambda0", "lambda1", "lambda2", "b_max", "u_exit", "u_continue"}},
      {"trace",
       {"source", "csv_path", "logit_path", "num_samples", "num_classes", "acc_early", "acc_final",
        "early_dispersion", "gain_dispersion", "overthinking_fraction", "overthinking_shrink", "split_est",
        "split_nb", "split_test"}},
      {"solver", {"grid_resolution", "reference_b", "reference_h", "max_iterations", "verify_oracle"}},
      {"controllers", {"enabled", "continue_fallback", "correctness_coupling"}},
      {"sim", {"horizon", "episodes", "b0", "h0", "threads"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::filesystem::path out_path(const ExperimentConfig& cfg, std::string_view name) {
  return cfg.output_dir / std::string(name);
}

std::vector<ConfidenceSample> load_split(const ExperimentConfig& cfg, const char* name) {
  const auto path = out_path(cfg, name);
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError(fmt::format("'{}' not found; run gen-trace (or calibrate) first", path.string()));
  }
  return ingest_csv(path, cfg.trace.generator.num_classes);
}

void write_splits(const ExperimentConfig& cfg, const TraceSplits& s, std::ostream& log) {
  emit_csv(out_path(cfg, files::trace_est), s.est);
  emit_csv(out_path(cfg, files::trace_nb), s.nb);
  emit_csv(out_path(cfg, files::trace_test), s.test);
  log << fmt::format("wrote {} / {} / {} samples to {}/trace_{{est,nb,test}}.csv\n", s.est.size(), s.nb.size(),
                     s.test.size(), cfg.output_dir.string());
}

void log_trace_stats(std::span<const ConfidenceSample> all, std::ostream& log) {
  double ce = 0, cc = 0, gap = 0;
  for (const auto& s : all) {
    ce += s.correct_e;
    cc += s.correct_c;
    gap += s.gap();
  }
  const double n = static_cast<double>(all.size());
  log << fmt::format("realized accuracy: early {:.4f}, final {:.4f}; mean gap {:.4f}\n", ce / n, cc / n, gap / n);
}

bool enabled(const ExperimentConfig& cfg, std::string_view id) {
  return std::find(cfg.controllers.enabled.begin(), cfg.controllers.enabled.end(), id) !=
         cfg.controllers.enabled.end();
}

void require_valid(const ExperimentConfig& cfg) {
  if (auto errors = validation_errors(cfg); !errors.empty()) throw ConfigError(std::move(errors));
}

}  // namespace

std::string files::results(std::string_view controller) { return fmt::format("results_{}.csv", controller); }
std::string files::trajectory(std::string_view controller) { return fmt::format("trajectory_{}.csv", controller); }

std::vector<std::string> validation_errors(const ExperimentConfig& cfg) {
  auto out = validation_errors(cfg.energy);
  const bool energy_ok = out.empty();
  for (auto& e : validation_errors(cfg.trace.generator)) out.push_back(std::move(e));

  const auto& fr = cfg.trace.fractions;
  if (fr.est < 0 || fr.nb < 0 || fr.test < 0 || std::abs(fr.est + fr.nb + fr.test - 1.0) > 1e-9) {
    out.push_back(fmt::format("trace.split_est + split_nb + split_test = {} (must be 1, all non-negative)",
                              fr.est + fr.nb + fr.test));
  }
  switch (cfg.trace.source) {
    case TraceSource::synthetic:
      if (cfg.trace.num_samples < 3) out.push_back("trace.num_samples must be at least 3");
      break;
    case TraceSource::csv:
      if (!std::filesystem::exists(cfg.trace.csv_path)) {
        out.push_back(fmt::format("trace.csv_path '{}' does not exist", cfg.trace.csv_path.string()));
      }
      break;
    case TraceSource::logits:
      if (!std::filesystem::exists(cfg.trace.logit_path)) {
        out.push_back(fmt::format("trace.logit_path '{}' does not exist", cfg.trace.logit_path.string()));
      }
      break;
  }

  if (cfg.solver.grid_resolution < 1) {
    out.push_back(fmt::format("solver.grid_resolution = {} must be at least 1", cfg.solver.grid_resolution));
  }
  if (cfg.solver.max_iterations < 1) {
    out.push_back(fmt::format("solver.max_iterations = {} must be at least 1", cfg.solver.max_iterations));
  }
  if (energy_ok && (cfg.solver.reference.battery < 0 || cfg.solver.reference.battery > cfg.energy.b_max)) {
    out.push_back(fmt::format("solver.reference_b = {} outside [0, {}]", cfg.solver.reference.battery,
                              cfg.energy.b_max));
  }

  if (cfg.controllers.enabled.empty()) out.emplace_back("controllers.enabled is empty");
  const auto ids = controller_ids();
  for (const auto& id : cfg.controllers.enabled) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      out.push_back(fmt::format("controllers.enabled: unknown controller '{}' (known: {})", id, fmt::join(ids, ", ")));
    }
  }

  // b0 can only be range-checked against a valid battery size.
  auto sim = cfg.sim;
  if (!energy_ok) sim.b0.reset();
  for (auto& e : validation_errors(sim, cfg.energy)) out.push_back(std::move(e));
  if (cfg.output_dir.empty()) out.emplace_back("output.dir is empty");
  return out;
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  // Strip trailing comments; the ini reader only understands whole-line ones.
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.erase(i);
        break;
      }
    }
    cleaned << line << '\n';
  }
  std::istringstream text(cleaned.str());
  pt::ptree tree;
  try {
    pt::read_ini(text, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error: {}", e.what()));
  }

  std::vector<std::string> errors;
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) {
      errors.push_back(fmt::format("unknown section [{}]", section));
      continue;
    }
    for (const auto& [key, value] : body) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        errors.push_back(fmt::format("unknown key {}.{}", section, key));
      }
    }
  }

  ExperimentConfig cfg;
  Reader r(tree, errors);
  r.get("experiment", "seed", cfg.seed);

  auto& e = cfg.energy;
  r.get("energy", "p_good", e.p_good);
  r.get("energy", "p_bad", e.p_bad);
  r.get("energy", "lambda0", e.lambda0);
  r.get("energy", "lambda1", e.lambda1);
  r.get("energy", "lambda2", e.lambda2);
  r.get("energy", "b_max", e.b_max);
  r.get("energy", "u_exit", e.u_exit);
  r.get("energy", "u_continue", e.u_continue);

  auto& t = cfg.trace;
  if (const auto src = r.raw_value("trace", "source")) {
    if (*src == "synthetic") {
      t.source = TraceSource::synthetic;
    } else if (*src == "csv") {
      t.source = TraceSource::csv;
    } else if (*src == "logits") {
      t.source = TraceSource::logits;
    } else {
      errors.push_back(fmt::format("trace.source = '{}' is not one of synthetic, csv, logits", *src));
    }
  }
  std::string csv_path;
  std::string logit_path;
  r.get("trace", "csv_path", csv_path);
  r.get("trace", "logit_path", logit_path);
  if (!csv_path.empty()) t.csv_path = resolve(base_dir, csv_path);
  if (!logit_path.empty()) t.logit_path = resolve(base_dir, logit_path);
  r.get("trace", "num_samples", t.num_samples);
  r.get("trace", "num_classes", t.generator.num_classes);
  r.get("trace", "acc_early", t.generator.acc_early);
  r.get("trace", "acc_final", t.generator.acc_final);
  r.get("trace", "early_dispersion", t.generator.early_dispersion);
  r.get("trace", "gain_dispersion", t.generator.gain_dispersion);
  r.get("trace", "overthinking_fraction", t.generator.overthinking_fraction);
  r.get("trace", "overthinking_shrink", t.generator.overthinking_shrink);
  r.get("trace", "split_est", t.fractions.est);
  r.get("trace", "split_nb", t.fractions.nb);
  r.get("trace", "split_test", t.fractions.test);

  auto& s = cfg.solver;
  r.get("solver", "grid_resolution", s.grid_resolution);
  r.get("solver", "reference_b", s.reference.battery);
  r.get_condition("solver", "reference_h", s.reference.condition);
  r.get("solver", "max_iterations", s.max_iterations);
  r.get("solver", "verify_oracle", s.verify_oracle);

  if (const auto list = r.raw_value("controllers", "enabled")) cfg.controllers.enabled = split_list(*list);
  r.get("controllers", "continue_fallback", cfg.controllers.continue_fallback);
  r.get("controllers", "correctness_coupling", t.generator.correctness_coupling);

  auto& sim = cfg.sim;
  r.get("sim", "horizon", sim.horizon);
  r.get("sim", "episodes", sim.num_episodes);
  if (const auto b0 = r.raw_value("sim", "b0"); b0 && *b0 != "b_max") {
    int v = 0;
    r.get("sim", "b0", v);
    sim.b0 = v;
  }
  r.get_condition("sim", "h0", sim.h0);
  r.get("sim", "threads", sim.threads);

  std::string out_dir;
  r.get("output", "dir", out_dir);
  if (!out_dir.empty()) cfg.output_dir = resolve(base_dir, out_dir);

  if (const char* env = std::getenv("EAEE_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (const char* env = std::getenv("EAEE_SEED"); env && *env) {
    const std::string_view sv(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (ec != std::errc{} || ptr != sv.data() + sv.size()) {
      errors.push_back(fmt::format("EAEE_SEED = '{}' is not an unsigned integer", sv));
    } else {
      cfg.seed = v;
    }
  }

  sim.num_classes = t.generator.num_classes;
  sim.seed = derive_seed(cfg.seed, kSimStream);

  for (auto& v : validation_errors(cfg)) errors.push_back(std::move(v));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  return parse_config(in, path.parent_path());
}

std::string default_config_text() {
  return R"(# Energy-aware early-exit experiment.
# Relative paths are resolved against this file's directory.
# EAEE_OUTPUT_DIR and EAEE_SEED override output.dir and experiment.seed.

[experiment]
seed = 2023                 # master seed; trace, split and simulation streams derive from it

[energy]
p_good = 0.9                # P[stay in good condition]
p_bad = 0.6                 # P[stay in bad condition]
lambda0 = 0.1               # P[0 quanta harvested | good]
lambda1 = 0.2               # P[1 quantum harvested | good]
lambda2 = 0.7               # P[2 quanta harvested | good]
b_max = 50                  # battery capacity in quanta
u_exit = 1                  # cost of running up to the early exit
u_continue = 2              # cost of running the full network

[trace]
source = synthetic          # synthetic | csv | logits
csv_path =                  # trace CSV (source = csv)
logit_path =                # logit CSV (source = logits, used by calibrate)
num_samples = 35000         # synthetic sample count before splitting
num_classes = 10
acc_early = 0.76            # target early-exit accuracy
acc_final = 0.93            # target final-exit accuracy
early_dispersion = 0.3      # spread of early confidence, in [0, 1)
gain_dispersion = 0.05      # spread of the final head's confidence gain, in [0, 1)
overthinking_fraction = 0.05  # share of samples where the final head loses confidence
overthinking_shrink = 0.9   # mean confidence ratio final/early on those samples
split_est = 0.35            # reward and gap estimation
split_nb = 0.35             # naive Bayes training
split_test = 0.30           # simulation

[solver]
grid_resolution = 256       # quantile levels of the gap distribution
reference_b = 0             # state whose relative value is pinned to 0
reference_h = G
max_iterations = 1000
verify_oracle = false       # cross-check against exhaustive enumeration (small instances only)

[controllers]
enabled = always_continue,always_exit,eao,oncc,cc
continue_fallback = false   # always_continue exits instead of discarding when u_exit <= b < u_continue
correctness_coupling = 0.0  # probability that both correctness bits share one draw

[sim]
horizon = 10000
episodes = 5
b0 = b_max                  # initial battery
h0 = G                      # initial harvesting condition
threads = 1

[output]
dir = out
)";
}

// ---------------------------------------------------------------------------

void cmd_gen_trace(const ExperimentConfig& cfg, std::ostream& log) {
  require_valid(cfg);
  std::vector<ConfidenceSample> all;
  switch (cfg.trace.source) {
    case TraceSource::synthetic: {
      Rng rng(derive_seed(cfg.seed, kTraceStream));
      all = generate_synthetic(cfg.trace.num_samples, cfg.trace.generator, rng);
      break;
    }
    case TraceSource::csv:
      all = ingest_csv(cfg.trace.csv_path, cfg.trace.generator.num_classes);
      break;
    case TraceSource::logits:
      throw ConfigError("trace.source = logits: use the calibrate command to build traces from logits");
  }
  log_trace_stats(all, log);
  Rng split_rng(derive_seed(cfg.seed, kSplitStream));
  write_splits(cfg, split(all, cfg.trace.fractions, split_rng), log);
}

void cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log) {
  require_valid(cfg);
  if (cfg.trace.source != TraceSource::logits) {
    throw ConfigError("calibrate requires trace.source = logits and trace.logit_path");
  }
  const auto records = ingest_logit_csv(cfg.trace.logit_path);
  if (records.empty()) throw ValidationError("logit file has no records");
  const auto classes = static_cast<int>(records.front().logits_e.size());
  if (classes != cfg.trace.generator.num_classes) {
    throw ConfigError(fmt::format("logit file has {} classes but trace.num_classes = {}", classes,
                                  cfg.trace.generator.num_classes));
  }
  const auto temps = calibrate(records);
  log << fmt::format("temperature: early {:.6f}, final {:.6f}\n", temps.early, temps.final);
  {
    auto out = csv::open_output(out_path(cfg, files::calibration));
    out << "head,temperature\n" << "early," << csv::exact(temps.early) << '\n'
        << "final," << csv::exact(temps.final) << '\n';
  }
  const auto all = to_samples(records, temps);
  log_trace_stats(all, log);
  Rng split_rng(derive_seed(cfg.seed, kSplitStream));
  write_splits(cfg, split(all, cfg.trace.fractions, split_rng), log);
}

FitOutcome cmd_fit(const ExperimentConfig& cfg, std::ostream& log) {
  require_valid(cfg);
  const auto est = load_split(cfg, files::trace_est);
  const auto nb = load_split(cfg, files::trace_nb);
  if (est.empty() || nb.empty()) throw ValidationError("estimation and naive Bayes splits must be non-empty");

  const auto model = build_model(cfg.energy, est, cfg.solver.grid_resolution);
  PiSolution sol = [&] {
    try {
      return policy_iteration(model, cfg.solver.reference, cfg.solver.max_iterations);
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format(
          "{} (p_good = {}, p_bad = {}, lambda = ({}, {}, {}), b_max = {}, u_exit = {}, u_continue = {})",
          e.what(), cfg.energy.p_good, cfg.energy.p_bad, cfg.energy.lambda0, cfg.energy.lambda1,
          cfg.energy.lambda2, cfg.energy.b_max, cfg.energy.u_exit, cfg.energy.u_continue));
    }
  }();

  FitOutcome outcome{sol.gain, sol.iterations, std::nullopt};
  log << fmt::format("grid points: {}; policy iteration converged in {} iterations; gain {:.6f}\n",
                     model.grid.size(), sol.iterations, sol.gain);
  if (cfg.solver.verify_oracle) {
    const auto oracle = brute_force_oracle(model);
    outcome.oracle_gain = oracle.gain;
    log << fmt::format("oracle gain {:.12f} (difference {:.3g})\n", oracle.gain, std::abs(oracle.gain - sol.gain));
    if (std::abs(oracle.gain - sol.gain) > 1e-9) {
      throw NumericalError(fmt::format("policy iteration gain {} differs from oracle gain {}", sol.gain, oracle.gain));
    }
  }

  {
    auto out = csv::open_output(out_path(cfg, files::policy));
    write_policy_csv(out, sol.policy);
  }
  const PredictorMap predictors(sol.policy, nb);
  {
    auto out = csv::open_output(out_path(cfg, files::predictor));
    write_predictor_csv(out, predictors.predictors());
  }

  log << "   b   eta(G)   eta(B)\n";
  for (int b = cfg.energy.u_continue; b <= cfg.energy.b_max; ++b) {
    log << fmt::format("{:4d}  {:7.4f}  {:7.4f}\n", b, sol.policy.exit_prob({b, Condition::good}),
                       sol.policy.exit_prob({b, Condition::bad}));
  }
  log << fmt::format("{} distinct thresholds, {} predictors written\n", predictors.predictors().size(),
                     predictors.predictors().size());
  return outcome;
}

std::vector<AggregateResult> cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  require_valid(cfg);
  const auto test = load_split(cfg, files::trace_test);

  std::vector<std::unique_ptr<Controller>> owned;
  const bool needs_policy = enabled(cfg, "oncc") || enabled(cfg, "cc");
  std::optional<ThresholdPolicy> policy;
  if (needs_policy) {
    const auto path = out_path(cfg, files::policy);
    if (!std::filesystem::exists(path)) {
      throw MissingArtifactError(fmt::format("'{}' not found; run fit first", path.string()));
    }
    policy = load_policy(path, cfg.energy);
  }
  for (const auto id : controller_ids()) {
    if (!enabled(cfg, id)) continue;
    if (id == "always_continue") {
      owned.push_back(std::make_unique<BaselineController>(BaselineKind::always_continue, cfg.energy,
                                                           cfg.controllers.continue_fallback));
    } else if (id == "always_exit") {
      owned.push_back(std::make_unique<BaselineController>(BaselineKind::always_exit, cfg.energy));
    } else if (id == "eao") {
      owned.push_back(std::make_unique<EnergyAgnosticOracle>(cfg.energy));
    } else if (id == "oncc") {
      owned.push_back(std::make_unique<OnccController>(*policy));
    } else if (id == "cc") {
      const auto path = out_path(cfg, files::predictor);
      if (!std::filesystem::exists(path)) {
        throw MissingArtifactError(fmt::format("'{}' not found; run fit first", path.string()));
      }
      owned.push_back(std::make_unique<CausalController>(PredictorMap(*policy, load_predictors(path))));
    }
  }
  std::vector<const Controller*> controllers;
  for (const auto& c : owned) controllers.push_back(c.get());

  auto results = run_suite(controllers, test, cfg.energy, cfg.sim);
  {
    auto out = csv::open_output(out_path(cfg, files::summary));
    write_summary_csv(out, results);
  }
  for (const auto& r : results) {
    auto res = csv::open_output(out_path(cfg, files::results(r.controller)));
    write_results_csv(res, r.episodes);
    auto traj = csv::open_output(out_path(cfg, files::trajectory(r.controller)));
    write_trajectory_csv(traj, r);
    log << fmt::format("{:>6}  alpha {:.4f} ± {:.4f}  rho {:.4f} ± {:.4f}  tau {:.4f} ± {:.4f}\n",
                       display_name(r.controller), r.effective_accuracy.mean, r.effective_accuracy.half_width,
                       r.accuracy.mean, r.accuracy.half_width, r.service_rate.mean, r.service_rate.half_width);
  }
  return results;
}

ReportOutcome cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  require_valid(cfg);
  const auto summary_path = out_path(cfg, files::summary);
  if (!std::filesystem::exists(summary_path)) {
    throw MissingArtifactError(fmt::format("'{}' not found; run simulate first", summary_path.string()));
  }
  auto in = csv::open_input(summary_path);
  const auto rows = read_summary_csv(in);

  ReportOutcome outcome;
  std::ostringstream md;
  md << "# Controller comparison\n\n";
  md << fmt::format("Energy rate {:.4f} quanta/slot, u_exit = {}, u_continue = {}, b_max = {}; T = {}, {} episodes.\n\n",
                    average_energy_rate(cfg.energy), cfg.energy.u_exit, cfg.energy.u_continue, cfg.energy.b_max,
                    cfg.sim.horizon, cfg.sim.num_episodes);
  md << "| Controller | alpha | rho | tau |\n|---|---|---|---|\n";
  for (const auto& r : rows) {
    md << fmt::format("| {} | {:.4f} ± {:.4f} | {:.4f} ± {:.4f} | {:.4f} ± {:.4f} |\n", display_name(r.controller),
                      r.alpha.mean, r.alpha.half_width, r.rho.mean, r.rho.half_width, r.tau.mean, r.tau.half_width);
  }

  auto find = [&](std::string_view id) -> const SummaryRow* {
    const auto it = std::find_if(rows.begin(), rows.end(), [id](const SummaryRow& r) { return r.controller == id; });
    return it == rows.end() ? nullptr : &*it;
  };
  const auto* cc = find("cc");
  const auto* ale = find("always_exit");
  const auto* alc = find("always_continue");
  if (cc && (ale || alc)) md << '\n';
  if (cc && ale && ale->rho.mean > 0) {
    md << fmt::format("- CC accuracy vs AlE: {:+.1f}%\n", 100.0 * (cc->rho.mean - ale->rho.mean) / ale->rho.mean);
  }
  if (cc && alc && alc->alpha.mean > 0) {
    md << fmt::format("- CC effective accuracy vs AlC: {:+.1f}%\n",
                      100.0 * (cc->alpha.mean - alc->alpha.mean) / alc->alpha.mean);
  }

  std::size_t checked = 0;
  for (const auto& r : rows) {
    const auto path = out_path(cfg, files::results(r.controller));
    if (!std::filesystem::exists(path)) {
      outcome.audit_failures.push_back(fmt::format("{}: per-episode results file missing", r.controller));
      continue;
    }
    auto rin = csv::open_input(path);
    for (const auto& e : read_results_csv(rin)) {
      ++checked;
      if (std::abs(e.effective_accuracy - e.accuracy * e.service_rate) > 1e-12) {
        outcome.audit_failures.push_back(fmt::format("{} episode {}: alpha {} != rho * tau = {}", r.controller,
                                                     e.episode, e.effective_accuracy, e.accuracy * e.service_rate));
      }
    }
  }
  md << '\n';
  if (outcome.audit_failures.empty()) {
    md << fmt::format("Consistency audit: alpha = rho * tau holds for all {} episodes.\n", checked);
  } else {
    md << "Consistency audit FAILED:\n";
    for (const auto& f : outcome.audit_failures) md << "- " << f << '\n';
  }

  outcome.markdown = md.str();
  {
    auto out = csv::open_output(out_path(cfg, files::report));
    out << outcome.markdown;
  }
  log << outcome.markdown;
  return outcome;
}

}  // namespace eaee
