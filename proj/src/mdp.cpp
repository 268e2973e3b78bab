#include "eaee/mdp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "eaee/csv.hpp"
#include "eaee/errors.hpp"

namespace eaee {

namespace {

constexpr double kSingularRcond = 1e-12;
constexpr double kTieTolerance = 1e-12;
constexpr std::string_view kPolicyHeader = "b,h,gamma,exit_prob";

// The rcond estimate can miss exactly singular systems (a zero pivot is
// skipped rather than reported), so the pivots are checked as well.
bool is_singular(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
  return !(lu.rcond() > kSingularRcond) || !(pivots.minCoeff() > kSingularRcond * pivots.maxCoeff());
}

bool has_forced_exit(SystemState s, const EnergyParams& p) {
  return s.battery >= p.u_exit && s.battery < p.u_continue;
}

}  // namespace

std::size_t state_count(const EnergyParams& params) noexcept {
  return 2 * static_cast<std::size_t>(params.b_max + 1);
}

std::size_t state_index(SystemState s) noexcept {
  return 2 * static_cast<std::size_t>(s.battery) + static_cast<std::size_t>(s.condition);
}

SystemState state_at(std::size_t index) noexcept {
  return {static_cast<int>(index / 2), static_cast<Condition>(index % 2)};
}

TransitionKernel build_transition_kernel(const EnergyParams& params) {
  const auto n = static_cast<Eigen::Index>(state_count(params));
  TransitionKernel k;
  for (auto& m : k.by_action) m = Eigen::MatrixXd::Zero(n, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = state_at(static_cast<std::size_t>(i));
    const double stay = s.condition == Condition::good ? params.p_good : params.p_bad;
    for (Action a : {Action::discard, Action::exit_early, Action::continue_full}) {
      const int cost = action_cost(a, params);
      if (cost > s.battery) continue;
      auto& m = k.by_action[static_cast<std::size_t>(a)];
      for (Condition next : {Condition::good, Condition::bad}) {
        const double p_next = next == s.condition ? stay : 1.0 - stay;
        if (p_next == 0.0) continue;
        for (int w = 0; w <= 2; ++w) {
          const double p_w = next == Condition::good ? params.arrival_prob(w) : (w == 0 ? 1.0 : 0.0);
          if (p_w == 0.0) continue;
          const int b_next = std::min(s.battery - cost + w, params.b_max);
          m(i, static_cast<Eigen::Index>(state_index({b_next, next}))) += p_next * p_w;
        }
      }
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// ThresholdPolicy

ThresholdPolicy::ThresholdPolicy(const EnergyParams& params)
    : params_(params),
      gamma_(state_count(params), std::numeric_limits<double>::quiet_NaN()),
      exit_prob_(state_count(params), std::numeric_limits<double>::quiet_NaN()) {}

std::size_t ThresholdPolicy::checked_index(SystemState s) const {
  if (s.battery < params_.u_continue || s.battery > params_.b_max) {
    throw std::out_of_range(fmt::format("state ({}, {}) has no threshold", s.battery, to_char(s.condition)));
  }
  return state_index(s);
}

double ThresholdPolicy::threshold(SystemState s) const { return gamma_[checked_index(s)]; }

double ThresholdPolicy::exit_prob(SystemState s) const { return exit_prob_[checked_index(s)]; }

void ThresholdPolicy::set(SystemState s, double gamma, double exit_prob) {
  const auto i = checked_index(s);
  gamma_[i] = gamma;
  exit_prob_[i] = exit_prob;
}

bool ThresholdPolicy::complete() const noexcept {
  for (int b = params_.u_continue; b <= params_.b_max; ++b) {
    for (Condition h : {Condition::good, Condition::bad}) {
      if (std::isnan(gamma_[state_index({b, h})])) return false;
    }
  }
  return true;
}

void write_policy_csv(std::ostream& out, const ThresholdPolicy& policy) {
  out << kPolicyHeader << '\n';
  const auto& p = policy.params();
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    for (Condition h : {Condition::good, Condition::bad}) {
      out << b << ',' << to_char(h) << ',' << csv::exact(policy.threshold({b, h})) << ','
          << csv::exact(policy.exit_prob({b, h})) << '\n';
    }
  }
}

ThresholdPolicy read_policy_csv(std::istream& in, const EnergyParams& params) {
  csv::expect_header(in, kPolicyHeader);
  ThresholdPolicy policy(params);
  std::vector<bool> seen(state_count(params), false);
  std::string line;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 4 || f[1].size() != 1) {
      throw ParseError(fmt::format("line {}: expected b,h,gamma,exit_prob", line_no));
    }
    const auto b = csv::parse_int(f[0], line_no, "b");
    const SystemState s{static_cast<int>(b), condition_from_char(f[1][0])};
    if (b < params.u_continue || b > params.b_max) {
      throw ValidationError(fmt::format("line {}: b = {} outside [{}, {}]", line_no, b, params.u_continue, params.b_max));
    }
    if (seen[state_index(s)]) throw ValidationError(fmt::format("line {}: duplicate state", line_no));
    seen[state_index(s)] = true;
    policy.set(s, csv::parse_double(f[2], line_no, "gamma"), csv::parse_double(f[3], line_no, "exit_prob"));
  }
  if (!policy.complete()) throw ValidationError("policy file does not cover every state with b >= u_continue");
  return policy;
}

ThresholdPolicy load_policy(const std::filesystem::path& path, const EnergyParams& params) {
  auto in = csv::open_input(path);
  return read_policy_csv(in, params);
}

// ---------------------------------------------------------------------------
// Model construction

double reward_estimate(std::span<const ConfidenceSample> samples, double gamma) {
  if (samples.empty()) throw ValidationError("reward estimate needs at least one sample");
  double total = 0.0;
  for (const auto& s : samples) total += s.gap() <= gamma ? s.z_e : s.z_c;
  return total / static_cast<double>(samples.size());
}

std::vector<double> make_threshold_grid(const GapDistribution& dist, int resolution) {
  if (resolution < 1) throw ConfigError(fmt::format("solver.grid_resolution = {} must be at least 1", resolution));
  const double width = dist.support_hi() - dist.support_lo();
  const double step = width > 0.0 ? width / resolution : 1e-6;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(resolution) + 1);
  grid.push_back(dist.support_lo() - step);
  for (int k = 1; k <= resolution; ++k) grid.push_back(dist.quantile(static_cast<double>(k) / resolution));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

MdpModel build_model(const EnergyParams& params, std::span<const ConfidenceSample> est, std::vector<double> grid) {
  validate(params);
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  if (est.empty()) throw ValidationError("estimation split is empty");
  std::sort(grid.begin(), grid.end());

  MdpModel m;
  m.params = params;
  const auto dist = build_gap_distribution(est);
  for (double g : grid) {
    m.exit_prob.push_back(dist.cdf(g));
    m.reward.push_back(reward_estimate(est, g));
  }
  m.grid = std::move(grid);
  double ze = 0.0;
  for (const auto& s : est) ze += s.z_e;
  m.forced_exit_reward = ze / static_cast<double>(est.size());
  m.kernel = build_transition_kernel(params);
  return m;
}

MdpModel build_model(const EnergyParams& params, std::span<const ConfidenceSample> est, int grid_resolution) {
  if (est.empty()) throw ValidationError("estimation split is empty");
  return build_model(params, est, make_threshold_grid(build_gap_distribution(est), grid_resolution));
}

// ---------------------------------------------------------------------------
// Policy evaluation

GridPolicy constant_policy(const MdpModel& model, int grid_index) {
  GridPolicy policy(state_count(model.params), -1);
  for (std::size_t i = 0; i < policy.size(); ++i) {
    if (is_decision_state(state_at(i), model.params)) policy[i] = grid_index;
  }
  return policy;
}

Eigen::MatrixXd policy_transition_matrix(const MdpModel& model, const GridPolicy& policy) {
  const auto n = static_cast<Eigen::Index>(state_count(model.params));
  Eigen::MatrixXd p(n, n);
  const auto& k = model.kernel;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = state_at(static_cast<std::size_t>(i));
    if (is_decision_state(s, model.params)) {
      const double f = model.exit_prob[static_cast<std::size_t>(policy[static_cast<std::size_t>(i)])];
      p.row(i) = f * k[Action::exit_early].row(i) + (1.0 - f) * k[Action::continue_full].row(i);
    } else if (has_forced_exit(s, model.params)) {
      p.row(i) = k[Action::exit_early].row(i);
    } else {
      p.row(i) = k[Action::discard].row(i);
    }
  }
  return p;
}

Eigen::VectorXd policy_reward(const MdpModel& model, const GridPolicy& policy) {
  const auto n = static_cast<Eigen::Index>(state_count(model.params));
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = state_at(static_cast<std::size_t>(i));
    if (is_decision_state(s, model.params)) {
      r(i) = model.reward[static_cast<std::size_t>(policy[static_cast<std::size_t>(i)])];
    } else if (has_forced_exit(s, model.params)) {
      r(i) = model.forced_exit_reward;
    } else {
      r(i) = 0.0;
    }
  }
  return r;
}

ThresholdPolicy to_threshold_policy(const MdpModel& model, const GridPolicy& policy) {
  ThresholdPolicy out(model.params);
  for (std::size_t i = 0; i < policy.size(); ++i) {
    const auto s = state_at(i);
    if (!is_decision_state(s, model.params)) continue;
    const auto k = static_cast<std::size_t>(policy[i]);
    out.set(s, model.grid[k], model.exit_prob[k]);
  }
  return out;
}

PolicyEvaluation evaluate_policy(const MdpModel& model, const GridPolicy& policy, SystemState reference) {
  const auto n = static_cast<Eigen::Index>(state_count(model.params));
  const auto p = policy_transition_matrix(model, policy);
  const auto r = policy_reward(model, policy);

  // Unknowns: [gain, V(0), ..., V(n-1)].
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  a.block(0, 0, n, 1).setOnes();
  a.block(0, 1, n, n) = Eigen::MatrixXd::Identity(n, n) - p;
  rhs.head(n) = r;
  a(n, 1 + static_cast<Eigen::Index>(state_index(reference))) = 1.0;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (is_singular(lu)) {
    throw NumericalError("policy evaluation system is singular; the induced chain is not unichain");
  }
  const Eigen::VectorXd x = lu.solve(rhs);
  PolicyEvaluation out{x(0), x.tail(n)};
  out.bias(static_cast<Eigen::Index>(state_index(reference))) = 0.0;
  return out;
}

Eigen::VectorXd stationary_distribution(const MdpModel& model, const GridPolicy& policy) {
  const auto n = static_cast<Eigen::Index>(state_count(model.params));
  Eigen::MatrixXd a = policy_transition_matrix(model, policy).transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (is_singular(lu)) {
    throw NumericalError("balance equations are singular; the induced chain has more than one recurrent class");
  }
  return lu.solve(rhs);
}

double stationary_gain(const MdpModel& model, const GridPolicy& policy) {
  return stationary_distribution(model, policy).dot(policy_reward(model, policy));
}

// ---------------------------------------------------------------------------
// Solvers

PiSolution policy_iteration(const MdpModel& model, SystemState reference, int max_iterations) {
  if (model.grid.empty()) throw ConfigError("threshold grid is empty");
  if (reference.battery < 0 || reference.battery > model.params.b_max) {
    throw ConfigError(fmt::format("solver.reference_b = {} outside [0, {}]", reference.battery, model.params.b_max));
  }
  const auto& k = model.kernel;
  const int top = static_cast<int>(model.grid.size()) - 1;
  GridPolicy current = constant_policy(model, top);

  for (int it = 1; it <= max_iterations; ++it) {
    const auto eval = evaluate_policy(model, current, reference);
    GridPolicy next = current;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (current[i] < 0) continue;
      const auto row = static_cast<Eigen::Index>(i);
      const double q_exit = k[Action::exit_early].row(row).dot(eval.bias);
      const double q_continue = k[Action::continue_full].row(row).dot(eval.bias);
      std::vector<double> value(model.grid.size());
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < value.size(); ++g) {
        const double f = model.exit_prob[g];
        value[g] = model.reward[g] + f * q_exit + (1.0 - f) * q_continue;
        best = std::max(best, value[g]);
      }
      for (int g = top; g >= 0; --g) {
        if (value[static_cast<std::size_t>(g)] >= best - kTieTolerance) {
          next[i] = g;
          break;
        }
      }
    }
    if (next == current) {
      PiSolution sol{to_threshold_policy(model, current), current, eval.gain, {}, it};
      sol.bias.assign(eval.bias.data(), eval.bias.data() + eval.bias.size());
      return sol;
    }
    current = std::move(next);
  }
  throw NumericalError(fmt::format("policy iteration did not converge within {} iterations", max_iterations));
}

PiSolution brute_force_oracle(const MdpModel& model, double max_policies) {
  if (model.grid.empty()) throw ConfigError("threshold grid is empty");
  std::vector<std::size_t> decision;
  for (std::size_t i = 0; i < state_count(model.params); ++i) {
    if (is_decision_state(state_at(i), model.params)) decision.push_back(i);
  }
  const double total = std::pow(static_cast<double>(model.grid.size()), static_cast<double>(decision.size()));
  if (total > max_policies) {
    throw NumericalError(fmt::format("oracle would enumerate {:.3g} policies (limit {:.3g})", total, max_policies));
  }

  GridPolicy current = constant_policy(model, 0);
  GridPolicy best_policy = current;
  double best_gain = -std::numeric_limits<double>::infinity();
  const int radix = static_cast<int>(model.grid.size());
  while (true) {
    const double gain = stationary_gain(model, current);
    if (gain > best_gain) {
      best_gain = gain;
      best_policy = current;
    }
    // Odometer increment over the decision states.
    std::size_t d = 0;
    for (; d < decision.size(); ++d) {
      auto& digit = current[decision[d]];
      if (++digit < radix) break;
      digit = 0;
    }
    if (d == decision.size()) break;
  }
  return {to_threshold_policy(model, best_policy), best_policy, best_gain, {}, static_cast<int>(total)};
}

bool threshold_exchange_check(std::span<const ConfidenceSample> samples, std::size_t k) {
  const std::size_t n = samples.size();
  if (n > 20) throw ValidationError(fmt::format("exhaustive exchange check supports n <= 20, got {}", n));
  if (k > n) throw ValidationError(fmt::format("exit count {} exceeds sample count {}", k, n));

  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (mask >> i) & 1u ? samples[i].z_e : samples[i].z_c;
    best = std::max(best, v);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].gap() < samples[b].gap(); });
  double threshold_value = 0.0;
  for (std::size_t j = 0; j < n; ++j) threshold_value += j < k ? samples[order[j]].z_e : samples[order[j]].z_c;
  return threshold_value >= best - 1e-12;
}

}  // namespace eaee
