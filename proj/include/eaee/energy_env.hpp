#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eaee/random.hpp"

namespace eaee {

/// Harvesting condition of the ambient source.
enum class Condition : std::uint8_t { good = 0, bad = 1 };

char to_char(Condition h) noexcept;
Condition condition_from_char(char c);

/// Two-state Markov energy source, arrival law, battery size and action costs.
/// Energy is counted in integer quanta.
struct EnergyParams {
  double p_good = 0.9;  // P[H_t = G | H_{t-1} = G]
  double p_bad = 0.6;   // P[H_t = B | H_{t-1} = B]
  double lambda0 = 0.1;
  double lambda1 = 0.2;
  double lambda2 = 0.7;
  int b_max = 50;
  int u_discard = 0;
  int u_exit = 1;
  int u_continue = 2;

  double arrival_prob(int w) const noexcept;
};

/// Lists every violated invariant (empty when valid).
std::vector<std::string> validation_errors(const EnergyParams& params);

/// Throws ConfigError listing all violations.
void validate(const EnergyParams& params);

/// MDP state: battery level B_t and the previous slot's condition H_{t-1}.
struct SystemState {
  int battery = 0;
  Condition condition = Condition::good;

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

struct HarvestOutcome {
  Condition next = Condition::good;
  int arrival = 0;
};

/// Long-run fraction of slots in the good condition.
/// Throws ReducibleChainError when both conditions are absorbing.
double steady_state_good(const EnergyParams& params);

/// Mean harvested quanta per slot, (lambda1 + 2 lambda2) * P_G.
double average_energy_rate(const EnergyParams& params);

/// Advances the source by one slot. Draw order: one uniform for the
/// condition transition, then one uniform for the arrival if the new
/// condition is good. Bad slots harvest nothing and consume no arrival draw.
HarvestOutcome step_source(Condition h, Rng& rng, const EnergyParams& params);

/// B' = min(b - cost + w, b_max). Throws InfeasibleActionError if cost > b.
int step_battery(int battery, int cost, int arrival, const EnergyParams& params);

}  // namespace eaee
