#include <doctest.h>

#include <cmath>

#include "eaee/energy_env.hpp"
#include "eaee/errors.hpp"

using namespace eaee;

namespace {

EnergyParams with_chain(double p_good, double p_bad) {
  EnergyParams p;
  p.p_good = p_good;
  p.p_bad = p_bad;
  return p;
}

}  // namespace

TEST_CASE("steady state of the two-state source") {
  CHECK(steady_state_good(with_chain(0.9, 0.6)) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(steady_state_good(with_chain(1.0, 0.0)) == 1.0);
  CHECK(steady_state_good(with_chain(0.5, 0.5)) == 0.5);
  CHECK(steady_state_good(with_chain(1.0, 0.3)) == 1.0);
  CHECK(steady_state_good(with_chain(0.2, 1.0)) == 0.0);
  CHECK_THROWS_AS(steady_state_good(with_chain(1.0, 1.0)), ReducibleChainError);
}

TEST_CASE("steady state solves the balance equation") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto p = with_chain(rng.uniform(), rng.uniform());
    const double pg = steady_state_good(p);
    CHECK(pg * (1 - p.p_good) == doctest::Approx((1 - pg) * (1 - p.p_bad)).epsilon(1e-12));
  }
}

TEST_CASE("average energy rate") {
  EnergyParams p;
  CHECK(std::abs(average_energy_rate(p) - 1.28) <= 1e-12);

  p.lambda0 = 1.0;
  p.lambda1 = 0.0;
  p.lambda2 = 0.0;
  CHECK(average_energy_rate(p) == 0.0);

  p.lambda0 = 0.1;
  p.lambda1 = 0.6;
  p.lambda2 = 0.3;
  CHECK(std::abs(average_energy_rate(p) - 0.96) <= 1e-12);

  CHECK_THROWS_AS(average_energy_rate(with_chain(1.0, 1.0)), ReducibleChainError);
}

TEST_CASE("parameter validation collects every violation") {
  EnergyParams p;
  CHECK(validation_errors(p).empty());

  p.p_good = 1.5;
  p.lambda2 = 0.5;
  p.u_exit = 3;
  const auto errors = validation_errors(p);
  CHECK(errors.size() >= 3);
  CHECK_THROWS_AS(validate(p), ConfigError);

  EnergyParams q;
  q.u_exit = q.u_continue;
  CHECK_FALSE(validation_errors(q).empty());
  q = EnergyParams{};
  q.b_max = 1;
  CHECK_FALSE(validation_errors(q).empty());
  q = EnergyParams{};
  q.u_discard = 1;
  CHECK_FALSE(validation_errors(q).empty());
}

TEST_CASE("source with absorbing conditions") {
  Rng rng(3);
  auto p = with_chain(1.0, 0.0);
  for (int i = 0; i < 1000; ++i) CHECK(step_source(Condition::good, rng, p).next == Condition::good);

  p = with_chain(0.5, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const auto o = step_source(Condition::bad, rng, p);
    CHECK(o.next == Condition::bad);
    CHECK(o.arrival == 0);
  }
}

TEST_CASE("arrival frequency from the good state") {
  Rng rng(5);
  const auto p = with_chain(1.0, 0.0);
  constexpr int n = 1'000'000;
  int twos = 0;
  for (int i = 0; i < n; ++i) twos += step_source(Condition::good, rng, p).arrival == 2;
  CHECK(std::abs(twos / double(n) - 0.7) <= 0.002);
}

TEST_CASE("bad slots never harvest") {
  Rng rng(8);
  const EnergyParams p;
  Condition h = Condition::good;
  for (int i = 0; i < 100'000; ++i) {
    const auto o = step_source(h, rng, p);
    if (o.next == Condition::bad) REQUIRE(o.arrival == 0);
    REQUIRE((o.arrival >= 0 && o.arrival <= 2));
    h = o.next;
  }
}

TEST_CASE("long-run frequencies match the steady state within 3 sigma") {
  Rng rng(2024);
  for (const auto& p : {EnergyParams{}, with_chain(0.7, 0.2), with_chain(0.95, 0.9)}) {
    constexpr int n = 400'000;
    Condition h = Condition::good;
    long long good = 0;
    long long harvested = 0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto o = step_source(h, rng, p);
      h = o.next;
      good += h == Condition::good;
      harvested += o.arrival;
      sq += o.arrival * o.arrival;
    }
    const double pg = steady_state_good(p);
    // Consecutive slots are correlated; inflate the binomial sigma by the
    // chain's integrated autocorrelation factor (1 + r) / (1 - r), r = p_G + p_B - 1.
    const double r = p.p_good + p.p_bad - 1.0;
    const double inflation = std::sqrt((1 + r) / (1 - r));
    const double sigma_g = std::sqrt(pg * (1 - pg) / n) * inflation;
    CHECK(std::abs(good / double(n) - pg) <= 3 * sigma_g);

    const double eps = average_energy_rate(p);
    const double var_w = sq / n - eps * eps;
    const double sigma_w = std::sqrt(var_w / n) * inflation;
    CHECK(std::abs(harvested / double(n) - eps) <= 3 * sigma_w);
  }
}

TEST_CASE("battery update") {
  const EnergyParams p;
  CHECK(step_battery(5, 2, 1, p) == 4);
  CHECK(step_battery(50, 0, 2, p) == 50);
  CHECK(step_battery(1, 1, 0, p) == 0);
  CHECK_THROWS_AS(step_battery(1, 2, 2, p), InfeasibleActionError);
}

TEST_CASE("battery update is monotone and bounded") {
  const EnergyParams p;
  for (int b = 0; b <= p.b_max; ++b) {
    for (int cost : {0, 1, 2}) {
      if (cost > b) continue;
      for (int w = 0; w <= 2; ++w) {
        const int next = step_battery(b, cost, w, p);
        CHECK((next >= 0 && next <= p.b_max));
        if (w < 2) CHECK(step_battery(b, cost, w + 1, p) >= next);
        if (cost < 2 && cost + 1 <= b) CHECK(step_battery(b, cost + 1, w, p) <= next);
      }
    }
  }
}

TEST_CASE("random trajectories stay within battery bounds") {
  Rng rng(99);
  for (int trial = 0; trial < 10'000; ++trial) {
    EnergyParams p;
    p.p_good = rng.uniform();
    p.p_bad = rng.uniform();
    p.lambda1 = rng.uniform() * 0.5;
    p.lambda2 = rng.uniform() * 0.5;
    p.lambda0 = 1.0 - p.lambda1 - p.lambda2;
    p.u_exit = 1 + static_cast<int>(rng.index(3));
    p.u_continue = p.u_exit + 1 + static_cast<int>(rng.index(3));
    p.b_max = p.u_continue + static_cast<int>(rng.index(8));
    REQUIRE(validation_errors(p).empty());
    int b = static_cast<int>(rng.index(static_cast<std::size_t>(p.b_max) + 1));
    Condition h = rng.bernoulli(0.5) ? Condition::good : Condition::bad;
    for (int t = 0; t < 20; ++t) {
      const auto o = step_source(h, rng, p);
      const int costs[] = {0, p.u_exit, p.u_continue};
      const int cost = costs[rng.index(3)];
      if (cost > b) continue;
      b = step_battery(b, cost, o.arrival, p);
      h = o.next;
      REQUIRE((b >= 0 && b <= p.b_max));
    }
  }
}

TEST_CASE("condition characters") {
  CHECK(to_char(Condition::good) == 'G');
  CHECK(to_char(Condition::bad) == 'B');
  CHECK(condition_from_char('G') == Condition::good);
  CHECK(condition_from_char('B') == Condition::bad);
  CHECK_THROWS(condition_from_char('x'));
}

TEST_CASE("seeded streams are reproducible") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2, 0));
}
