#include "eaee/energy_env.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "eaee/errors.hpp"

namespace eaee {

char to_char(Condition h) noexcept { return h == Condition::good ? 'G' : 'B'; }

Condition condition_from_char(char c) {
  if (c == 'G' || c == 'g') return Condition::good;
  if (c == 'B' || c == 'b') return Condition::bad;
  throw ParseError(fmt::format("unknown harvesting condition '{}'", c));
}

double EnergyParams::arrival_prob(int w) const noexcept {
  switch (w) {
    case 0: return lambda0;
    case 1: return lambda1;
    case 2: return lambda2;
    default: return 0.0;
  }
}

std::vector<std::string> validation_errors(const EnergyParams& p) {
  std::vector<std::string> out;
  auto check_prob = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) out.push_back(fmt::format("energy.{} = {} is not in [0, 1]", name, v));
  };
  check_prob(p.p_good, "p_good");
  check_prob(p.p_bad, "p_bad");
  check_prob(p.lambda0, "lambda0");
  check_prob(p.lambda1, "lambda1");
  check_prob(p.lambda2, "lambda2");
  if (std::abs(p.lambda0 + p.lambda1 + p.lambda2 - 1.0) > 1e-12) {
    out.push_back(fmt::format("energy.lambda0 + lambda1 + lambda2 = {} (must be 1)",
                              p.lambda0 + p.lambda1 + p.lambda2));
  }
  if (p.b_max < 0) out.push_back(fmt::format("energy.b_max = {} is negative", p.b_max));
  if (p.u_discard != 0) out.push_back(fmt::format("energy.u_discard = {} (must be 0)", p.u_discard));
  if (!(p.u_exit > p.u_discard)) {
    out.push_back(fmt::format("energy.u_exit = {} must exceed u_discard = {}", p.u_exit, p.u_discard));
  }
  if (!(p.u_continue > p.u_exit)) {
    out.push_back(fmt::format("energy.u_continue = {} must exceed u_exit = {}", p.u_continue, p.u_exit));
  }
  if (p.u_continue > p.b_max) {
    out.push_back(fmt::format("energy.u_continue = {} exceeds b_max = {}", p.u_continue, p.b_max));
  }
  return out;
}

void validate(const EnergyParams& params) {
  auto errors = validation_errors(params);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

double steady_state_good(const EnergyParams& params) {
  const double leave_good = 1.0 - params.p_good;
  const double leave_bad = 1.0 - params.p_bad;
  if (leave_good == 0.0 && leave_bad == 0.0) {
    throw ReducibleChainError(
        "p_good = p_bad = 1: both conditions are absorbing, steady state depends on the initial condition");
  }
  return leave_bad / (leave_good + leave_bad);
}

double average_energy_rate(const EnergyParams& params) {
  return (params.lambda1 + 2.0 * params.lambda2) * steady_state_good(params);
}

HarvestOutcome step_source(Condition h, Rng& rng, const EnergyParams& params) {
  const double stay = h == Condition::good ? params.p_good : params.p_bad;
  HarvestOutcome out;
  const bool stays = rng.uniform() < stay;
  out.next = stays ? h : (h == Condition::good ? Condition::bad : Condition::good);
  if (out.next == Condition::good) {
    const double u = rng.uniform();
    if (u < params.lambda0) {
      out.arrival = 0;
    } else if (u < params.lambda0 + params.lambda1) {
      out.arrival = 1;
    } else {
      out.arrival = 2;
    }
  }
  return out;
}

int step_battery(int battery, int cost, int arrival, const EnergyParams& params) {
  if (cost > battery) {
    throw InfeasibleActionError(
        fmt::format("action cost {} exceeds battery level {}", cost, battery));
  }
  return std::min(battery - cost + arrival, params.b_max);
}

}  // namespace eaee
