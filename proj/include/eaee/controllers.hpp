#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eaee/action.hpp"
#include "eaee/energy_env.hpp"
#include "eaee/mdp.hpp"
#include "eaee/random.hpp"
#include "eaee/trace.hpp"

namespace eaee {

inline constexpr double kVarianceFloor = 1e-6;

/// Gaussian naive Bayes over the early confidence z_e, predicting whether a
/// sample would exit under threshold `gamma` (t = 1 iff z_c - z_e <= gamma).
/// prior1 is exactly 0 or 1 for single-class fits, which makes the posterior
/// constant.
struct ExitPredictor {
  double gamma = 0.0;
  double prior1 = 0.5;
  double mu0 = 0.0;
  double var0 = 1.0;
  double mu1 = 0.0;
  double var1 = 1.0;
};

ExitPredictor fit_exit_predictor(std::span<const ConfidenceSample> samples, double gamma);

/// Posterior p(t = 1 | z_e), evaluated in log-odds form.
double predict_exit_prob(const ExitPredictor& pred, double z_e) noexcept;

/// Predictor CSV: header `gamma,prior1,mu0,var0,mu1,var1`.
void write_predictor_csv(std::ostream& out, std::span<const ExitPredictor> predictors);
std::vector<ExitPredictor> read_predictor_csv(std::istream& in);
std::vector<ExitPredictor> load_predictors(const std::filesystem::path& path);

/// Maps each decision state to the predictor fitted for its threshold.
/// States sharing a threshold share one predictor.
class PredictorMap {
 public:
  /// Fits one predictor per distinct threshold of `policy` on `nb`.
  PredictorMap(const ThresholdPolicy& policy, std::span<const ConfidenceSample> nb);
  /// Reattaches predictors (e.g. read from disk); thresholds must match exactly.
  PredictorMap(const ThresholdPolicy& policy, std::vector<ExitPredictor> predictors);

  const EnergyParams& params() const noexcept { return params_; }
  const ExitPredictor& at(SystemState s) const;
  std::span<const ExitPredictor> predictors() const noexcept { return predictors_; }

 private:
  EnergyParams params_;
  std::vector<ExitPredictor> predictors_;
  std::vector<int> slot_;  // per state index, -1 if none
};

/// Threshold rule with full knowledge of z_c.
Action oncc_decide(SystemState state, double z_e, double z_c, const ThresholdPolicy& policy);

/// Draws exit with the predicted probability. Never looks at z_c; consumes
/// exactly one uniform draw, and only in decision states.
Action cc_decide(SystemState state, double z_e, const PredictorMap& predictors, Rng& rng);

/// Exit if the early head is right, continue if only the final head is
/// right and affordable, otherwise guess for free.
Action eao_decide(SystemState state, const ConfidenceSample& sample, const EnergyParams& params);

enum class BaselineKind { always_exit, always_continue };

/// With `continue_fallback`, always-continue exits instead of discarding
/// when u_exit <= b < u_continue.
Action baseline_decide(BaselineKind kind, SystemState state, const EnergyParams& params,
                       bool continue_fallback = false);

/// Uniform interface consumed by the simulator.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string_view id() const noexcept = 0;
  virtual Action decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const = 0;
};

class OnccController final : public Controller {
 public:
  explicit OnccController(ThresholdPolicy policy) : policy_(std::move(policy)) {}
  std::string_view id() const noexcept override { return "oncc"; }
  Action decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const override;

 private:
  ThresholdPolicy policy_;
};

class CausalController final : public Controller {
 public:
  explicit CausalController(PredictorMap predictors) : predictors_(std::move(predictors)) {}
  std::string_view id() const noexcept override { return "cc"; }
  Action decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const override;

 private:
  PredictorMap predictors_;
};

class EnergyAgnosticOracle final : public Controller {
 public:
  explicit EnergyAgnosticOracle(const EnergyParams& params) : params_(params) {}
  std::string_view id() const noexcept override { return "eao"; }
  Action decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const override;

 private:
  EnergyParams params_;
};

class BaselineController final : public Controller {
 public:
  BaselineController(BaselineKind kind, const EnergyParams& params, bool continue_fallback = false)
      : kind_(kind), params_(params), continue_fallback_(continue_fallback) {}
  std::string_view id() const noexcept override;
  Action decide(SystemState state, const ConfidenceSample& sample, Rng& rng) const override;

 private:
  BaselineKind kind_;
  EnergyParams params_;
  bool continue_fallback_;
};

/// Known controller ids in display order.
std::span<const std::string_view> controller_ids() noexcept;
std::string_view display_name(std::string_view id) noexcept;

}  // namespace eaee
