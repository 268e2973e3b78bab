#pragma once

#include <vector>

#include "eaee/energy_env.hpp"
#include "eaee/random.hpp"
#include "eaee/trace.hpp"

namespace eaee::testing {

struct SmallInstance {
  EnergyParams params;
  std::vector<ConfidenceSample> est;
};

// Random source and costs with b_max in [b_lo, b_hi] and at most
// `max_band + 1` battery levels at or above u_continue. Stay probabilities
// are kept inside (0, 1) so every threshold policy is unichain.
inline EnergyParams random_params(Rng& rng, int b_lo, int b_hi, int max_band) {
  EnergyParams p;
  p.p_good = 0.05 + 0.9 * rng.uniform();
  p.p_bad = 0.05 + 0.9 * rng.uniform();
  const double a = rng.uniform() + 0.05, b = rng.uniform(), c = rng.uniform();
  p.lambda0 = a / (a + b + c);
  p.lambda1 = b / (a + b + c);
  p.lambda2 = 1.0 - p.lambda0 - p.lambda1;
  p.b_max = b_lo + static_cast<int>(rng.index(static_cast<std::size_t>(b_hi - b_lo + 1)));
  p.u_exit = 1 + static_cast<int>(rng.index(2));
  const int lo = std::max(p.u_exit + 1, p.b_max - max_band);
  p.u_continue = lo + static_cast<int>(rng.index(static_cast<std::size_t>(p.b_max - lo + 1)));
  return p;
}

inline SmallInstance random_small_instance(Rng& rng, int b_lo = 3, int b_hi = 6, int max_band = 2,
                                           std::size_t n_est = 200) {
  SmallInstance inst;
  inst.params = random_params(rng, b_lo, b_hi, max_band);
  inst.est = generate_synthetic(n_est, GeneratorConfig{}, rng);
  return inst;
}

}  // namespace eaee::testing
