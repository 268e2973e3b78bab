#include "eaee/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "eaee/csv.hpp"
#include "eaee/errors.hpp"

namespace eaee {

namespace {

constexpr double kBoundSlack = 1e-9;
constexpr std::string_view kTraceHeader = "z_e,z_c,correct_e,correct_c";

struct GeneratorMeans {
  double early = 0.0;  // E[x_e]
  double final = 0.0;  // E[x_c] target
  double gain = 0.0;   // E[v]
};

double unit_scale(double accuracy, int num_classes) {
  const double lo = 1.0 / num_classes;
  return (accuracy - lo) / (1.0 - lo);
}

double achieved_final_mean(const GeneratorConfig& cfg, double m_e, double m_v) {
  const double p = cfg.overthinking_fraction;
  return (1.0 - p) * (m_e + (1.0 - m_e) * m_v) + p * m_e * cfg.overthinking_shrink;
}

GeneratorMeans solve_means(const GeneratorConfig& cfg) {
  GeneratorMeans m;
  m.early = unit_scale(cfg.acc_early, cfg.num_classes);
  m.final = unit_scale(cfg.acc_final, cfg.num_classes);
  const double p = cfg.overthinking_fraction;
  if (m.early < 1.0) {
    const double target_regular = (m.final - p * m.early * cfg.overthinking_shrink) / (1.0 - p);
    m.gain = (target_regular - m.early) / (1.0 - m.early);
  }
  return m;
}

// Beta with mean m and variance m (1 - m) d. Degenerate cases are point masses.
double draw_beta(double m, double d, Rng& rng) {
  if (d <= 0.0 || m <= 0.0 || m >= 1.0) return std::clamp(m, 0.0, 1.0);
  const double concentration = 1.0 / d - 1.0;
  std::gamma_distribution<double> ga(m * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - m) * concentration, 1.0);
  const double a = ga(rng.engine());
  const double b = gb(rng.engine());
  if (a + b <= 0.0) return m;
  return a / (a + b);
}

double log_sum_exp_scaled(std::span<const double> logits, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l / temperature);
  double s = 0.0;
  for (double l : logits) s += std::exp(l / temperature - mx);
  return mx + std::log(s);
}

std::span<const double> head_logits(const LogitRecord& r, ExitHead head) {
  return head == ExitHead::early ? std::span<const double>(r.logits_e) : std::span<const double>(r.logits_c);
}

}  // namespace

std::vector<std::string> validation_errors(const GeneratorConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.num_classes < 2) {
    out.push_back(fmt::format("trace.num_classes = {} must be at least 2", cfg.num_classes));
    return out;
  }
  const double lo = 1.0 / cfg.num_classes;
  if (!(cfg.acc_early >= lo && cfg.acc_early <= 1.0)) {
    out.push_back(fmt::format("trace.acc_early = {} is not in [1/num_classes, 1]", cfg.acc_early));
  }
  if (!(cfg.acc_final >= lo && cfg.acc_final <= 1.0)) {
    out.push_back(fmt::format("trace.acc_final = {} is not in [1/num_classes, 1]", cfg.acc_final));
  }
  if (cfg.acc_early > cfg.acc_final) {
    out.push_back(fmt::format("trace.acc_early = {} exceeds trace.acc_final = {}", cfg.acc_early, cfg.acc_final));
  }
  auto check_unit = [&](double v, const char* name, bool allow_one) {
    const bool ok = v >= 0.0 && (allow_one ? v <= 1.0 : v < 1.0);
    if (!ok) out.push_back(fmt::format("trace.{} = {} is not in [0, 1{}", name, v, allow_one ? "]" : ")"));
  };
  check_unit(cfg.early_dispersion, "early_dispersion", false);
  check_unit(cfg.gain_dispersion, "gain_dispersion", false);
  check_unit(cfg.overthinking_fraction, "overthinking_fraction", false);
  check_unit(cfg.overthinking_shrink, "overthinking_shrink", true);
  check_unit(cfg.correctness_coupling, "correctness_coupling", true);
  if (out.empty()) {
    const auto m = solve_means(cfg);
    const double m_v = std::clamp(m.gain, 0.0, 1.0);
    if (std::abs(achieved_final_mean(cfg, m.early, m_v) - m.final) > 1e-9) {
      out.push_back(fmt::format(
          "trace.acc_final = {} is unreachable with overthinking_fraction = {} and overthinking_shrink = {}",
          cfg.acc_final, cfg.overthinking_fraction, cfg.overthinking_shrink));
    }
  }
  return out;
}

std::vector<ConfidenceSample> generate_synthetic(std::size_t n, const GeneratorConfig& cfg, Rng& rng) {
  if (auto errors = validation_errors(cfg); !errors.empty()) throw ConfigError(std::move(errors));
  const auto m = solve_means(cfg);
  const double m_v = std::clamp(m.gain, 0.0, 1.0);
  const double lo = 1.0 / cfg.num_classes;
  auto to_conf = [lo](double x) { return std::clamp(lo + (1.0 - lo) * x, lo, 1.0); };

  std::vector<ConfidenceSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x_e = draw_beta(m.early, cfg.early_dispersion, rng);
    double x_c = 0.0;
    if (rng.uniform() < cfg.overthinking_fraction) {
      x_c = x_e * draw_beta(cfg.overthinking_shrink, cfg.gain_dispersion, rng);
    } else {
      x_c = x_e + (1.0 - x_e) * draw_beta(m_v, cfg.gain_dispersion, rng);
    }
    ConfidenceSample s;
    s.z_e = to_conf(x_e);
    s.z_c = to_conf(x_c);
    const bool coupled = rng.uniform() < cfg.correctness_coupling;
    const double u_e = rng.uniform();
    const double u_c = coupled ? u_e : rng.uniform();
    s.correct_e = u_e < s.z_e;
    s.correct_c = u_c < s.z_c;
    out.push_back(s);
  }
  return out;
}

bool is_valid_sample(const ConfidenceSample& s, int num_classes) noexcept {
  const double lo = 1.0 / num_classes - kBoundSlack;
  const double hi = 1.0 + kBoundSlack;
  return s.z_e >= lo && s.z_e <= hi && s.z_c >= lo && s.z_c <= hi;
}

std::vector<ConfidenceSample> read_trace_csv(std::istream& in, int num_classes) {
  csv::expect_header(in, kTraceHeader);
  std::vector<ConfidenceSample> out;
  std::string line;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 4) {
      throw ParseError(fmt::format("line {}: expected 4 fields, got {}", line_no, f.size()));
    }
    ConfidenceSample s;
    s.z_e = csv::parse_double(f[0], line_no, "z_e");
    s.z_c = csv::parse_double(f[1], line_no, "z_c");
    s.correct_e = csv::parse_bool01(f[2], line_no, "correct_e");
    s.correct_c = csv::parse_bool01(f[3], line_no, "correct_c");
    if (!is_valid_sample(s, num_classes)) {
      throw ValidationError(fmt::format("line {}: confidences z_e = {}, z_c = {} outside [1/{}, 1]",
                                        line_no, f[0], f[1], num_classes));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<ConfidenceSample> ingest_csv(const std::filesystem::path& path, int num_classes) {
  auto in = csv::open_input(path);
  try {
    return read_trace_csv(in, num_classes);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_trace_csv(std::ostream& out, std::span<const ConfidenceSample> samples) {
  out << kTraceHeader << '\n';
  for (const auto& s : samples) {
    out << fmt::format("{:.10f},{:.10f},{},{}\n", s.z_e, s.z_c, int(s.correct_e), int(s.correct_c));
  }
}

void emit_csv(const std::filesystem::path& path, std::span<const ConfidenceSample> samples) {
  auto out = csv::open_output(path);
  write_trace_csv(out, samples);
}

std::vector<LogitRecord> read_logit_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) throw ParseError("line 1: missing header");
  const auto header = csv::split_fields(line);
  if (header.size() < 5 || (header.size() - 1) % 2 != 0 || header[0] != "label") {
    throw ParseError("line 1: logit header must be label followed by 2*C logit columns, C >= 2");
  }
  const std::size_t classes = (header.size() - 1) / 2;
  for (std::size_t k = 0; k < classes; ++k) {
    if (header[1 + k] != fmt::format("logits_e_{}", k) || header[1 + classes + k] != fmt::format("logits_c_{}", k)) {
      throw ParseError(fmt::format("line 1: unexpected logit column names near class {}", k));
    }
  }
  std::vector<LogitRecord> out;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(fmt::format("line {}: expected {} fields, got {}", line_no, header.size(), f.size()));
    }
    LogitRecord r;
    const auto label = csv::parse_int(f[0], line_no, "label");
    if (label < 0 || label >= static_cast<long long>(classes)) {
      throw ValidationError(fmt::format("line {}: label {} outside [0, {})", line_no, label, classes));
    }
    r.label = static_cast<int>(label);
    for (std::size_t k = 0; k < classes; ++k) {
      r.logits_e.push_back(csv::parse_double(f[1 + k], line_no, "logit"));
      r.logits_c.push_back(csv::parse_double(f[1 + classes + k], line_no, "logit"));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LogitRecord> ingest_logit_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return read_logit_csv(in);
}

void write_logit_csv(std::ostream& out, std::span<const LogitRecord> records) {
  const std::size_t classes = records.empty() ? 2 : records.front().logits_e.size();
  out << "label";
  for (std::size_t k = 0; k < classes; ++k) out << ",logits_e_" << k;
  for (std::size_t k = 0; k < classes; ++k) out << ",logits_c_" << k;
  out << '\n';
  for (const auto& r : records) {
    out << r.label;
    for (double l : r.logits_e) out << ',' << csv::exact(l);
    for (double l : r.logits_c) out << ',' << csv::exact(l);
    out << '\n';
  }
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  const double lse = log_sum_exp_scaled(logits, temperature);
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) p[k] = std::exp(logits[k] / temperature - lse);
  return p;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double mean_nll(std::span<const LogitRecord> records, ExitHead head, double temperature) {
  double total = 0.0;
  for (const auto& r : records) {
    const auto logits = head_logits(r, head);
    total += log_sum_exp_scaled(logits, temperature) - logits[r.label] / temperature;
  }
  return total / static_cast<double>(records.size());
}

double temperature_scale(std::span<const LogitRecord> records, ExitHead head) {
  if (records.empty()) throw ValidationError("temperature scaling needs at least one logit record");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kMinTemperature);
  double b = std::log(kMaxTemperature);
  auto f = [&](double log_t) { return mean_nll(records, head, std::exp(log_t)); };
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > 1e-8) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return std::exp(0.5 * (a + b));
}

Temperatures calibrate(std::span<const LogitRecord> records) {
  return {temperature_scale(records, ExitHead::early), temperature_scale(records, ExitHead::final)};
}

std::vector<ConfidenceSample> to_samples(std::span<const LogitRecord> records, const Temperatures& t) {
  std::vector<ConfidenceSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto pe = softmax(r.logits_e, t.early);
    const auto pc = softmax(r.logits_c, t.final);
    const auto ke = argmax(pe);
    const auto kc = argmax(pc);
    out.push_back({pe[ke], pc[kc], static_cast<int>(ke) == r.label, static_cast<int>(kc) == r.label});
  }
  return out;
}

TraceSplits split(std::span<const ConfidenceSample> samples, const SplitFractions& fr, Rng& rng) {
  std::vector<std::string> errors;
  if (fr.est < 0.0 || fr.nb < 0.0 || fr.test < 0.0) errors.emplace_back("split fractions must be non-negative");
  if (std::abs(fr.est + fr.nb + fr.test - 1.0) > 1e-9) {
    errors.push_back(fmt::format("split fractions sum to {} (must be 1)", fr.est + fr.nb + fr.test));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));

  const std::size_t n = samples.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);

  const auto n_est = static_cast<std::size_t>(std::floor(fr.est * static_cast<double>(n) + 1e-9));
  const auto n_nb = std::min(n - n_est, static_cast<std::size_t>(std::floor(fr.nb * static_cast<double>(n) + 1e-9)));
  TraceSplits out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_est ? out.est : (i < n_est + n_nb ? out.nb : out.test);
    dst.push_back(samples[idx[i]]);
  }
  return out;
}

GapDistribution::GapDistribution(std::vector<double> gaps) : gaps_(std::move(gaps)) {
  if (gaps_.empty()) throw ValidationError("gap distribution needs at least one sample");
  std::sort(gaps_.begin(), gaps_.end());
}

double GapDistribution::cdf(double gamma) const noexcept {
  const auto it = std::upper_bound(gaps_.begin(), gaps_.end(), gamma);
  return static_cast<double>(it - gaps_.begin()) / static_cast<double>(gaps_.size());
}

double GapDistribution::quantile(double p) const noexcept {
  const double n = static_cast<double>(gaps_.size());
  auto k = static_cast<long long>(std::ceil(p * n - 1e-9)) - 1;
  k = std::clamp<long long>(k, 0, static_cast<long long>(gaps_.size()) - 1);
  return gaps_[static_cast<std::size_t>(k)];
}

GapDistribution build_gap_distribution(std::span<const ConfidenceSample> samples) {
  std::vector<double> gaps;
  gaps.reserve(samples.size());
  for (const auto& s : samples) gaps.push_back(s.gap());
  return GapDistribution(std::move(gaps));
}

}  // namespace eaee
