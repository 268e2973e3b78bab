#include "eaee/controllers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "eaee/csv.hpp"
#include "eaee/errors.hpp"

namespace eaee {

namespace {

constexpr std::string_view kPredictorHeader = "gamma,prior1,mu0,var0,mu1,var1";

double log_normal_pdf(double z, double mu, double var) {
  const double d = z - mu;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

struct Moments {
  double mean = 0.0;
  double var = kVarianceFloor;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.var = std::max(ss / static_cast<double>(xs.size()), kVarianceFloor);
  return m;
}

}  // namespace

ExitPredictor fit_exit_predictor(std::span<const ConfidenceSample> samples, double gamma) {
  if (samples.empty()) throw ValidationError("exit predictor needs at least one sample");
  std::vector<double> z0;
  std::vector<double> z1;
  for (const auto& s : samples) (s.gap() <= gamma ? z1 : z0).push_back(s.z_e);

  const auto m0 = moments(z0);
  const auto m1 = moments(z1);
  ExitPredictor p{gamma, 0.0, m0.mean, m0.var, m1.mean, m1.var};
  const double n = static_cast<double>(samples.size());
  if (z1.empty()) {
    p.prior1 = 0.0;
  } else if (z0.empty()) {
    p.prior1 = 1.0;
  } else {
    p.prior1 = (static_cast<double>(z1.size()) + 1.0) / (n + 2.0);
  }
  return p;
}

double predict_exit_prob(const ExitPredictor& pred, double z_e) noexcept {
  if (pred.prior1 >= 1.0) return 1.0;
  if (pred.prior1 <= 0.0) return 0.0;
  const double log_odds = std::log(pred.prior1) - std::log1p(-pred.prior1) +
                          log_normal_pdf(z_e, pred.mu1, pred.var1) - log_normal_pdf(z_e, pred.mu0, pred.var0);
  if (std::isnan(log_odds)) return 0.5;
  if (log_odds >= 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
  const double e = std::exp(log_odds);
  return e / (1.0 + e);
}

void write_predictor_csv(std::ostream& out, std::span<const ExitPredictor> predictors) {
  out << kPredictorHeader << '\n';
  for (const auto& p : predictors) {
    out << csv::exact(p.gamma) << ',' << csv::exact(p.prior1) << ',' << csv::exact(p.mu0) << ','
        << csv::exact(p.var0) << ',' << csv::exact(p.mu1) << ',' << csv::exact(p.var1) << '\n';
  }
}

std::vector<ExitPredictor> read_predictor_csv(std::istream& in) {
  csv::expect_header(in, kPredictorHeader);
  std::vector<ExitPredictor> out;
  std::string line;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 6) throw ParseError(fmt::format("line {}: expected 6 fields, got {}", line_no, f.size()));
    ExitPredictor p;
    p.gamma = csv::parse_double(f[0], line_no, "gamma");
    p.prior1 = csv::parse_double(f[1], line_no, "prior1");
    p.mu0 = csv::parse_double(f[2], line_no, "mu0");
    p.var0 = csv::parse_double(f[3], line_no, "var0");
    p.mu1 = csv::parse_double(f[4], line_no, "mu1");
    p.var1 = csv::parse_double(f[5], line_no, "var1");
    if (p.prior1 < 0.0 || p.prior1 > 1.0) throw ValidationError(fmt::format("line {}: prior1 outside [0, 1]", line_no));
    if (p.var0 < kVarianceFloor || p.var1 < kVarianceFloor) {
      throw ValidationError(fmt::format("line {}: variance below floor {}", line_no, kVarianceFloor));
    }
    out.push_back(p);
  }
  return out;
}

std::vector<ExitPredictor> load_predictors(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return read_predictor_csv(in);
}

// ---------------------------------------------------------------------------

PredictorMap::PredictorMap(const ThresholdPolicy& policy, std::span<const ConfidenceSample> nb)
    : params_(policy.params()), slot_(state_count(policy.params()), -1) {
  const auto& p = policy.params();
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    for (Condition h : {Condition::good, Condition::bad}) {
      const double gamma = policy.threshold({b, h});
      auto it = std::find_if(predictors_.begin(), predictors_.end(),
                             [gamma](const ExitPredictor& e) { return e.gamma == gamma; });
      if (it == predictors_.end()) {
        predictors_.push_back(fit_exit_predictor(nb, gamma));
        it = predictors_.end() - 1;
      }
      slot_[state_index({b, h})] = static_cast<int>(it - predictors_.begin());
    }
  }
}

PredictorMap::PredictorMap(const ThresholdPolicy& policy, std::vector<ExitPredictor> predictors)
    : params_(policy.params()), predictors_(std::move(predictors)), slot_(state_count(policy.params()), -1) {
  const auto& p = policy.params();
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    for (Condition h : {Condition::good, Condition::bad}) {
      const double gamma = policy.threshold({b, h});
      const auto it = std::find_if(predictors_.begin(), predictors_.end(),
                                   [gamma](const ExitPredictor& e) { return e.gamma == gamma; });
      if (it == predictors_.end()) {
        throw ValidationError(fmt::format("no predictor fitted for threshold {} (state ({}, {}))",
                                          csv::exact(gamma), b, to_char(h)));
      }
      slot_[state_index({b, h})] = static_cast<int>(it - predictors_.begin());
    }
  }
}

const ExitPredictor& PredictorMap::at(SystemState s) const {
  const auto i = state_index(s);
  if (i >= slot_.size() || slot_[i] < 0) {
    throw std::out_of_range(fmt::format("no predictor for state ({}, {})", s.battery, to_char(s.condition)));
  }
  return predictors_[static_cast<std::size_t>(slot_[i])];
}

// ---------------------------------------------------------------------------

Action oncc_decide(SystemState state, double z_e, double z_c, const ThresholdPolicy& policy) {
  const auto& p = policy.params();
  if (state.battery < p.u_exit) return Action::discard;
  if (state.battery < p.u_continue) return Action::exit_early;
  return z_e + policy.threshold(state) >= z_c ? Action::exit_early : Action::continue_full;
}

Action cc_decide(SystemState state, double z_e, const PredictorMap& predictors, Rng& rng) {
  const auto& p = predictors.params();
  if (state.battery < p.u_exit) return Action::discard;
  if (state.battery < p.u_continue) return Action::exit_early;
  const double nu = predict_exit_prob(predictors.at(state), z_e);
  return rng.uniform() < nu ? Action::exit_early : Action::continue_full;
}

Action eao_decide(SystemState state, const ConfidenceSample& sample, const EnergyParams& params) {
  if (state.battery < params.u_exit) return Action::discard;
  if (sample.correct_e) return Action::exit_early;
  if (sample.correct_c && state.battery >= params.u_continue) return Action::continue_full;
  return Action::free_guess;
}

Action baseline_decide(BaselineKind kind, SystemState state, const EnergyParams& params, bool continue_fallback) {
  if (kind == BaselineKind::always_exit) {
    return state.battery >= params.u_exit ? Action::exit_early : Action::discard;
  }
  if (state.battery >= params.u_continue) return Action::continue_full;
  if (continue_fallback && state.battery >= params.u_exit) return Action::exit_early;
  return Action::discard;
}

Action OnccController::decide(SystemState state, const ConfidenceSample& sample, Rng&) const {
  return oncc_decide(state, sample.z_e, sample.z_c, policy_);
}

Action CausalController::decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const {
  return cc_decide(state, sample.z_e, predictors_, rng);
}

Action EnergyAgnosticOracle::decide(SystemState state, const ConfidenceSample& sample, Rng&) const {
  return eao_decide(state, sample, params_);
}

std::string_view BaselineController::id() const noexcept {
  return kind_ == BaselineKind::always_exit ? "always_exit" : "always_continue";
}

Action BaselineController::decide(SystemState state, const ConfidenceSample&, Rng&) const {
  return baseline_decide(kind_, state, params_, continue_fallback_);
}

std::span<const std::string_view> controller_ids() noexcept {
  static constexpr std::array<std::string_view, 5> ids{"always_continue", "always_exit", "eao", "oncc", "cc"};
  return ids;
}

std::string_view display_name(std::string_view id) noexcept {
  if (id == "always_continue") return "AlC";
  if (id == "always_exit") return "AlE";
  if (id == "eao") return "EAO";
  if (id == "oncc") return "oNCC";
  if (id == "cc") return "CC";
  return id;
}

}  // namespace eaee
