#pragma once

#include <cstdint>
#include <string_view>

#include "eaee/energy_env.hpp"

namespace eaee {

/// Per-slot decision. `free_guess` is the zero-energy random guess available
/// only to the energy-agnostic oracle.
enum class Action : std::uint8_t { discard = 0, exit_early = 1, continue_full = 2, free_guess = 3 };

inline constexpr int kActionCount = 4;

constexpr int action_cost(Action a, const EnergyParams& p) noexcept {
  switch (a) {
    case Action::exit_early: return p.u_exit;
    case Action::continue_full: return p.u_continue;
    case Action::discard: return p.u_discard;
    case Action::free_guess: return 0;
  }
  return 0;
}

constexpr std::string_view to_string(Action a) noexcept {
  switch (a) {
    case Action::discard: return "discard";
    case Action::exit_early: return "exit_early";
    case Action::continue_full: return "continue_full";
    case Action::free_guess: return "free_guess";
  }
  return "?";
}

}  // namespace eaee
