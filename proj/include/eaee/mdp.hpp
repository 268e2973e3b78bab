#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eaee/action.hpp"
#include "eaee/energy_env.hpp"
#include "eaee/trace.hpp"

namespace eaee {

// States are (b, h) with b in [0, b_max] and h in {G, B}; index = 2 b + h.
std::size_t state_count(const EnergyParams& params) noexcept;
std::size_t state_index(SystemState s) noexcept;
SystemState state_at(std::size_t index) noexcept;

/// True for states where the controller picks a threshold (b >= u_continue).
inline bool is_decision_state(SystemState s, const EnergyParams& p) noexcept {
  return s.battery >= p.u_continue;
}

/// Dense one-step transition matrices for the primitive actions d, e, c.
/// Rows for unaffordable (state, action) pairs are zero.
struct TransitionKernel {
  std::array<Eigen::MatrixXd, 3> by_action;

  const Eigen::MatrixXd& operator[](Action a) const { return by_action.at(static_cast<std::size_t>(a)); }
  bool feasible(std::size_t state, Action a) const { return (*this)[a].row(state).sum() > 0.5; }
};

TransitionKernel build_transition_kernel(const EnergyParams& params);

/// One threshold per decision state. A sample exits early iff
/// z_e + gamma >= z_c, i.e. its confidence gap is at most gamma.
class ThresholdPolicy {
 public:
  explicit ThresholdPolicy(const EnergyParams& params);

  const EnergyParams& params() const noexcept { return params_; }

  double threshold(SystemState s) const;
  double exit_prob(SystemState s) const;
  void set(SystemState s, double gamma, double exit_prob);

  /// Every decision state has a threshold.
  bool complete() const noexcept;

 private:
  std::size_t checked_index(SystemState s) const;

  EnergyParams params_;
  std::vector<double> gamma_;
  std::vector<double> exit_prob_;
};

/// Policy CSV: header `b,h,gamma,exit_prob`, one row per decision state.
void write_policy_csv(std::ostream& out, const ThresholdPolicy& policy);
ThresholdPolicy read_policy_csv(std::istream& in, const EnergyParams& params);
ThresholdPolicy load_policy(const std::filesystem::path& path, const EnergyParams& params);

/// Average confidence collected when samples with gap <= gamma exit early
/// and the rest continue.
double reward_estimate(std::span<const ConfidenceSample> samples, double gamma);

/// Quantiles of the gap law at levels k / resolution (k = 1..resolution),
/// plus one sentinel one step below the support ("never exit"). Ascending,
/// without duplicates; the last point is the support maximum ("always exit").
std::vector<double> make_threshold_grid(const GapDistribution& dist, int resolution);

struct MdpModel {
  EnergyParams params;
  std::vector<double> grid;       // ascending candidate thresholds
  std::vector<double> exit_prob;  // F_J on the grid
  std::vector<double> reward;     // reward_estimate on the grid
  double forced_exit_reward = 0;  // mean z_e, earned when u_exit <= b < u_continue
  TransitionKernel kernel;
};

MdpModel build_model(const EnergyParams& params, std::span<const ConfidenceSample> est, std::vector<double> grid);
MdpModel build_model(const EnergyParams& params, std::span<const ConfidenceSample> est, int grid_resolution);

/// Grid index per state; -1 for states with a forced action.
using GridPolicy = std::vector<int>;

GridPolicy constant_policy(const MdpModel& model, int grid_index);
Eigen::MatrixXd policy_transition_matrix(const MdpModel& model, const GridPolicy& policy);
Eigen::VectorXd policy_reward(const MdpModel& model, const GridPolicy& policy);
ThresholdPolicy to_threshold_policy(const MdpModel& model, const GridPolicy& policy);

struct PolicyEvaluation {
  double gain = 0.0;
  Eigen::VectorXd bias;
};

/// Solves gain + V(s) = r(s) + sum_s' P(s'|s) V(s') with V(reference) = 0 by
/// dense LU. Throws NumericalError if the system is singular (policy not unichain).
PolicyEvaluation evaluate_policy(const MdpModel& model, const GridPolicy& policy, SystemState reference);

/// Limiting distribution of the chain induced by `policy`.
Eigen::VectorXd stationary_distribution(const MdpModel& model, const GridPolicy& policy);

/// sum_s P_inf(s) r(s), computed through the stationary distribution.
double stationary_gain(const MdpModel& model, const GridPolicy& policy);

struct PiSolution {
  ThresholdPolicy policy;
  GridPolicy choice;
  double gain = 0.0;
  std::vector<double> bias;
  int iterations = 0;
};

/// Average-reward policy iteration over the threshold grid. Starts from the
/// always-exit policy; ties within 1e-12 go to the largest threshold.
PiSolution policy_iteration(const MdpModel& model, SystemState reference, int max_iterations = 1000);

inline constexpr double kMaxOraclePolicies = 1e6;

/// Enumerates every grid policy and scores it by its stationary distribution.
/// Throws NumericalError if there are more than `max_policies` candidates.
PiSolution brute_force_oracle(const MdpModel& model, double max_policies = kMaxOraclePolicies);

/// Checks, by enumerating all subsets of size k, that exiting the k samples
/// with the smallest gaps maximizes sum_exit z_e + sum_continue z_c.
/// Requires n <= 20.
bool threshold_exchange_check(std::span<const ConfidenceSample> samples, std::size_t k);

}  // namespace eaee
