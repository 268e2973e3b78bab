#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eaee/controllers.hpp"
#include "eaee/errors.hpp"
#include "support.hpp"

using namespace eaee;

namespace {

ThresholdPolicy uniform_policy(const EnergyParams& p, double gamma, double exit_prob = 0.5) {
  ThresholdPolicy policy(p);
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    policy.set({b, Condition::good}, gamma, exit_prob);
    policy.set({b, Condition::bad}, gamma, exit_prob);
  }
  return policy;
}

// Two-point classes centred on mu0 = 0.4 and mu1 = 0.8 with equal spread.
std::vector<ConfidenceSample> symmetric_samples() {
  std::vector<ConfidenceSample> xs;
  for (double z : {0.35, 0.45}) xs.push_back({z, z + 0.3, true, true});  // gap 0.3 -> t = 0
  for (double z : {0.75, 0.85}) xs.push_back({z, z + 0.1, true, true});  // gap 0.1 -> t = 1
  return xs;
}

}  // namespace

TEST_CASE("oNCC threshold rule") {
  const EnergyParams p;
  const auto policy = uniform_policy(p, 0.1);
  CHECK(oncc_decide({10, Condition::good}, 0.9, 0.95, policy) == Action::exit_early);
  CHECK(oncc_decide({10, Condition::good}, 0.9, 0.95, uniform_policy(p, 0.0)) == Action::continue_full);
  CHECK(oncc_decide({0, Condition::good}, 0.9, 0.95, policy) == Action::discard);
  CHECK(oncc_decide({1, Condition::bad}, 0.2, 0.95, policy) == Action::exit_early);
  // Boundary: z_e + gamma == z_c exits.
  CHECK(oncc_decide({5, Condition::good}, 0.5, 0.75, uniform_policy(p, 0.25)) == Action::exit_early);
}

TEST_CASE("single-class predictor fits are constant") {
  Rng rng(1);
  const auto xs = generate_synthetic(500, GeneratorConfig{}, rng);
  const auto d = build_gap_distribution(xs);
  const auto all_exit = fit_exit_predictor(xs, d.support_hi());
  const auto none_exit = fit_exit_predictor(xs, d.support_lo() - 0.01);
  CHECK(all_exit.prior1 == 1.0);
  CHECK(none_exit.prior1 == 0.0);
  for (double z = 0.0; z <= 1.0; z += 0.05) {
    CHECK(predict_exit_prob(all_exit, z) == 1.0);
    CHECK(predict_exit_prob(none_exit, z) == 0.0);
  }
  CHECK_THROWS_AS(fit_exit_predictor(std::span<const ConfidenceSample>{}, 0.0), ValidationError);
}

TEST_CASE("symmetric classes meet at the midpoint") {
  const ExitPredictor manual{0.2, 0.5, 0.4, 0.01, 0.8, 0.01};
  CHECK(std::abs(predict_exit_prob(manual, 0.6) - 0.5) <= 1e-9);

  const auto fitted = fit_exit_predictor(symmetric_samples(), 0.2);
  CHECK(fitted.prior1 == 0.5);
  CHECK(fitted.mu0 == doctest::Approx(0.4));
  CHECK(fitted.mu1 == doctest::Approx(0.8));
  CHECK(fitted.var0 == doctest::Approx(fitted.var1));
  CHECK(std::abs(predict_exit_prob(fitted, 0.6) - 0.5) <= 1e-9);
}

TEST_CASE("predictor fit uses Laplace prior and variance floor") {
  std::vector<ConfidenceSample> xs{{0.5, 0.9, 1, 1}, {0.5, 0.9, 1, 1}, {0.7, 0.7, 1, 1}};
  const auto p = fit_exit_predictor(xs, 0.1);
  CHECK(p.prior1 == doctest::Approx(2.0 / 5.0));
  CHECK(p.var0 == kVarianceFloor);
  CHECK(p.var1 == kVarianceFloor);
  CHECK(p.mu0 == 0.5);
  CHECK(p.mu1 == 0.7);
}

TEST_CASE("posterior is monotone with equal variances and bounded everywhere") {
  const ExitPredictor pred{0.0, 0.3, 0.45, 0.02, 0.7, 0.02};
  double prev = 0.0;
  for (int i = 0; i <= 10'000; ++i) {
    const double z = i / 10'000.0;
    const double v = predict_exit_prob(pred, z);
    REQUIRE(v >= prev);
    prev = v;
  }
  Rng rng(2);
  for (int i = 0; i < 10'000; ++i) {
    const ExitPredictor r{0.0, rng.uniform(), rng.uniform(), 1e-6 + rng.uniform() * 0.1, rng.uniform(),
                          1e-6 + rng.uniform() * 0.1};
    for (double z : {-1e6, -1.0, 0.0, rng.uniform(), 1.0, 1e6}) {
      const double v = predict_exit_prob(r, z);
      REQUIRE((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("CC forced rules consume no draws") {
  EnergyParams p;
  p.u_exit = 2;
  p.u_continue = 3;
  const auto policy = uniform_policy(p, 0.1);
  Rng rng(3);
  const PredictorMap map(policy, generate_synthetic(300, GeneratorConfig{}, rng));
  Rng a(9), b(9);
  CHECK(cc_decide({1, Condition::good}, 0.5, map, a) == Action::discard);
  CHECK(cc_decide({2, Condition::bad}, 0.5, map, a) == Action::exit_early);
  CHECK(a.uniform() == b.uniform());
}

TEST_CASE("CC with a certain predictor always exits") {
  const EnergyParams p;
  Rng rng(4);
  const auto xs = generate_synthetic(300, GeneratorConfig{}, rng);
  const auto policy = uniform_policy(p, 2.0);
  const PredictorMap map(policy, xs);
  CHECK(map.at({p.b_max, Condition::good}).prior1 == 1.0);
  for (int i = 0; i < 1000; ++i) CHECK(cc_decide({10, Condition::good}, rng.uniform(), map, rng) == Action::exit_early);
}

TEST_CASE("CC exit frequency matches the predicted probability") {
  const EnergyParams p;
  Rng rng(5);
  const auto xs = generate_synthetic(2000, GeneratorConfig{}, rng);
  const auto policy = uniform_policy(p, build_gap_distribution(xs).quantile(0.5));
  const PredictorMap map(policy, xs);
  for (double z : {0.3, 0.6, 0.9}) {
    const SystemState s{20, Condition::bad};
    const double nu = predict_exit_prob(map.at(s), z);
    constexpr int n = 100'000;
    int exits = 0;
    for (int i = 0; i < n; ++i) exits += cc_decide(s, z, map, rng) == Action::exit_early;
    CHECK(std::abs(exits / double(n) - nu) <= 3 * std::sqrt(nu * (1 - nu) / n) + 1e-12);
  }
}

TEST_CASE("CC never reads the final confidence") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = eaee::testing::random_params(rng, 3, 20, 18);
    const auto xs = generate_synthetic(200, GeneratorConfig{}, rng);
    ThresholdPolicy policy(p);
    const auto d = build_gap_distribution(xs);
    for (int b = p.u_continue; b <= p.b_max; ++b) {
      for (Condition h : {Condition::good, Condition::bad}) policy.set({b, h}, d.quantile(rng.uniform() + 1e-9), 0.5);
    }
    const CausalController cc{PredictorMap(policy, xs)};
    for (int i = 0; i < 300; ++i) {
      const SystemState s{static_cast<int>(rng.index(static_cast<std::size_t>(p.b_max) + 1)),
                          rng.bernoulli(0.5) ? Condition::good : Condition::bad};
      ConfidenceSample x = xs[rng.index(xs.size())];
      ConfidenceSample y = x;
      y.z_c = 0.1 + 0.9 * rng.uniform();
      y.correct_c = !x.correct_c;
      const auto seed = rng.engine()();
      Rng r1(seed), r2(seed);
      REQUIRE(cc.decide(s, x, r1) == cc.decide(s, y, r2));
      REQUIRE(r1.uniform() == r2.uniform());
    }
  }
}

TEST_CASE("EAO rule order") {
  const EnergyParams p;
  CHECK(eao_decide({1, Condition::good}, {0.5, 0.6, true, false}, p) == Action::exit_early);
  CHECK(eao_decide({1, Condition::good}, {0.5, 0.6, false, true}, p) == Action::free_guess);
  CHECK(eao_decide({p.b_max, Condition::good}, {0.5, 0.6, false, false}, p) == Action::free_guess);
  CHECK(eao_decide({2, Condition::good}, {0.5, 0.6, false, true}, p) == Action::continue_full);
  CHECK(eao_decide({0, Condition::good}, {0.5, 0.6, true, true}, p) == Action::discard);
}

TEST_CASE("baselines") {
  const EnergyParams p;
  CHECK(baseline_decide(BaselineKind::always_continue, {p.u_continue - 1, Condition::good}, p) == Action::discard);
  CHECK(baseline_decide(BaselineKind::always_continue, {p.u_continue - 1, Condition::good}, p, true) ==
        Action::exit_early);
  CHECK(baseline_decide(BaselineKind::always_continue, {p.u_continue, Condition::bad}, p) == Action::continue_full);
  CHECK(baseline_decide(BaselineKind::always_exit, {1, Condition::good}, p) == Action::exit_early);
  CHECK(baseline_decide(BaselineKind::always_exit, {0, Condition::good}, p) == Action::discard);
}

TEST_CASE("every controller only emits affordable actions") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = eaee::testing::random_params(rng, 3, 30, 28);
    const auto xs = generate_synthetic(300, GeneratorConfig{}, rng);
    const auto d = build_gap_distribution(xs);
    ThresholdPolicy policy(p);
    for (int b = p.u_continue; b <= p.b_max; ++b) {
      for (Condition h : {Condition::good, Condition::bad}) policy.set({b, h}, d.quantile(rng.uniform() + 1e-9), 0.5);
    }
    const OnccController oncc(policy);
    const CausalController cc{PredictorMap(policy, xs)};
    const EnergyAgnosticOracle eao(p);
    const BaselineController ale(BaselineKind::always_exit, p);
    const BaselineController alc(BaselineKind::always_continue, p);
    const BaselineController alc_fb(BaselineKind::always_continue, p, true);
    const Controller* all[] = {&oncc, &cc, &eao, &ale, &alc, &alc_fb};
    for (int i = 0; i < 50; ++i) {
      const SystemState s{static_cast<int>(rng.index(static_cast<std::size_t>(p.b_max) + 1)),
                          rng.bernoulli(0.5) ? Condition::good : Condition::bad};
      const auto& x = xs[rng.index(xs.size())];
      for (const auto* c : all) {
        const Action a = c->decide(s, x, rng);
        REQUIRE(action_cost(a, p) <= s.battery);
        if (a == Action::free_guess) REQUIRE(c->id() == "eao");
        ++checked;
      }
    }
  }
  CHECK(checked >= 10'000);
}

TEST_CASE("predictor CSV and map reattachment") {
  EnergyParams p;
  p.b_max = 8;
  Rng rng(8);
  const auto xs = generate_synthetic(500, GeneratorConfig{}, rng);
  const auto d = build_gap_distribution(xs);
  ThresholdPolicy policy(p);
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    policy.set({b, Condition::good}, d.quantile(0.1 * (b - 1)), 0.5);
    policy.set({b, Condition::bad}, d.quantile(0.1 * (b - 1)), 0.5);
  }
  const PredictorMap fitted(policy, xs);
  CHECK(fitted.predictors().size() == 7);
  CHECK(&fitted.at({4, Condition::good}) == &fitted.at({4, Condition::bad}));
  CHECK_THROWS_AS(fitted.at({1, Condition::good}), std::out_of_range);

  std::ostringstream out;
  write_predictor_csv(out, fitted.predictors());
  CHECK(out.str().rfind("gamma,prior1,mu0,var0,mu1,var1\n", 0) == 0);
  std::istringstream in(out.str());
  const PredictorMap loaded(policy, read_predictor_csv(in));
  for (int b = p.u_continue; b <= p.b_max; ++b) {
    const auto& a = fitted.at({b, Condition::good});
    const auto& c = loaded.at({b, Condition::good});
    CHECK(a.gamma == c.gamma);
    CHECK(a.prior1 == c.prior1);
    CHECK(a.mu0 == c.mu0);
    CHECK(a.var1 == c.var1);
  }

  std::vector<ExitPredictor> partial(fitted.predictors().begin(), fitted.predictors().begin() + 3);
  CHECK_THROWS_AS(PredictorMap(policy, partial), ValidationError);
  std::istringstream bad("gamma,prior1,mu0,var0,mu1,var1\n0.1,1.5,0.2,0.1,0.3,0.1\n");
  CHECK_THROWS_AS(read_predictor_csv(bad), ValidationError);
  std::istringstream low_var("gamma,prior1,mu0,var0,mu1,var1\n0.1,0.5,0.2,0,0.3,0.1\n");
  CHECK_THROWS_AS(read_predictor_csv(low_var), ValidationError);
}

TEST_CASE("controller ids and display names") {
  const auto ids = controller_ids();
  REQUIRE(ids.size() == 5);
  CHECK(display_name("always_exit") == "AlE");
  CHECK(display_name("cc") == "CC");
  CHECK(display_name("unknown") == "unknown");
  const EnergyParams p;
  CHECK(BaselineController(BaselineKind::always_exit, p).id() == "always_exit");
  CHECK(EnergyAgnosticOracle(p).id() == "eao");
}
