#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eaee/random.hpp"

namespace eaee {

/// Side information for one data slot: max-softmax confidence at the early
/// and final exits, and whether each exit's prediction is correct.
struct ConfidenceSample {
  double z_e = 1.0;
  double z_c = 1.0;
  bool correct_e = true;
  bool correct_c = true;

  double gap() const noexcept { return z_c - z_e; }
};

/// Raw logits of both heads for one labelled input.
struct LogitRecord {
  std::vector<double> logits_e;
  std::vector<double> logits_c;
  int label = 0;
};

enum class ExitHead { early, final };

/// Shape of the synthetic confidence generator.
///
/// Confidences are drawn on the unit scale x in [0, 1] and mapped to
/// z = 1/C + (1 - 1/C) x. Early confidence x_e ~ Beta with mean matching
/// `acc_early`. The final head closes a random fraction v of the remaining
/// headroom, x_c = x_e + (1 - x_e) v, except for an `overthinking_fraction`
/// of samples where it loses confidence instead, x_c = x_e w. The mean of v
/// is solved so that E[z_c] = acc_final. Correctness bits are Bernoulli(z),
/// which makes the trace calibrated by construction.
///
/// Dispersions are in [0, 1): a Beta with mean m and dispersion d has
/// variance m (1 - m) d, so d = 0 is a point mass.
struct GeneratorConfig {
  int num_classes = 10;
  double acc_early = 0.76;
  double acc_final = 0.93;
  double early_dispersion = 0.3;
  double gain_dispersion = 0.05;
  double overthinking_fraction = 0.05;
  double overthinking_shrink = 0.9;
  // Probability that a sample's two correctness bits share one uniform draw
  // (comonotone coupling). 0 means conditionally independent.
  double correctness_coupling = 0.0;
};

std::vector<std::string> validation_errors(const GeneratorConfig& cfg);

std::vector<ConfidenceSample> generate_synthetic(std::size_t n, const GeneratorConfig& cfg, Rng& rng);

/// Checks 1/num_classes <= z <= 1 for both confidences.
bool is_valid_sample(const ConfidenceSample& s, int num_classes) noexcept;

/// Trace CSV: header `z_e,z_c,correct_e,correct_c`.
std::vector<ConfidenceSample> read_trace_csv(std::istream& in, int num_classes = 10);
std::vector<ConfidenceSample> ingest_csv(const std::filesystem::path& path, int num_classes = 10);
void write_trace_csv(std::ostream& out, std::span<const ConfidenceSample> samples);
void emit_csv(const std::filesystem::path& path, std::span<const ConfidenceSample> samples);

/// Logit CSV: header `label,logits_e_0..logits_e_{C-1},logits_c_0..logits_c_{C-1}`.
std::vector<LogitRecord> read_logit_csv(std::istream& in);
std::vector<LogitRecord> ingest_logit_csv(const std::filesystem::path& path);
void write_logit_csv(std::ostream& out, std::span<const LogitRecord> records);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

/// Mean negative log-likelihood of softmax(logits / T) for one head.
double mean_nll(std::span<const LogitRecord> records, ExitHead head, double temperature);

/// Golden-section search on log T over [0.05, 20] for the NLL minimizer.
double temperature_scale(std::span<const LogitRecord> records, ExitHead head);

struct Temperatures {
  double early = 1.0;
  double final = 1.0;
};

/// Fits one temperature per head.
Temperatures calibrate(std::span<const LogitRecord> records);

/// Converts logit records into confidence samples under the given temperatures.
std::vector<ConfidenceSample> to_samples(std::span<const LogitRecord> records, const Temperatures& t);

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
std::size_t argmax(std::span<const double> values);

struct SplitFractions {
  double est = 0.5;
  double nb = 0.25;
  double test = 0.25;
};

struct TraceSplits {
  std::vector<ConfidenceSample> est;
  std::vector<ConfidenceSample> nb;
  std::vector<ConfidenceSample> test;
};

/// Random disjoint partition: est and nb sizes are floor(f * n); the
/// remainder goes to test.
TraceSplits split(std::span<const ConfidenceSample> samples, const SplitFractions& fractions, Rng& rng);

/// Empirical law of the confidence gap J = z_c - z_e.
class GapDistribution {
 public:
  explicit GapDistribution(std::vector<double> gaps);

  std::span<const double> sorted_gaps() const noexcept { return gaps_; }
  double support_lo() const noexcept { return gaps_.front(); }
  double support_hi() const noexcept { return gaps_.back(); }
  std::size_t size() const noexcept { return gaps_.size(); }

  /// Pr[J <= gamma]; right-continuous.
  double cdf(double gamma) const noexcept;

  /// Smallest atom g with cdf(g) >= p, for p in (0, 1].
  double quantile(double p) const noexcept;

 private:
  std::vector<double> gaps_;
};

GapDistribution build_gap_distribution(std::span<const ConfidenceSample> samples);

inline double cdf(const GapDistribution& dist, double gamma) noexcept { return dist.cdf(gamma); }

}  // namespace eaee
