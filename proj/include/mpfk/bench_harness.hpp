#pragma once

// Desk-scale HPL and HPL-MxP drivers: seeded problem generation, a shared
// flop model, the backward-error gate, and energy figures from user-supplied
// power data.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mpfk/matrix.hpp"
#include "mpfk/mixed_precision_ir.hpp"
#include "mpfk/random.hpp"

namespace mpfk {

/// Deterministic stream of uniform FP64 values in [-0.5, 0.5) (splitmix64).
class PrngStream {
 public:
  explicit PrngStream(std::uint64_t seed) noexcept : gen_(seed) {}
  std::uint64_t next_raw() noexcept { return gen_.next(); }
  double next() noexcept { return gen_.uniform_centered(); }

 private:
  SplitMix64 gen_;
};

PrngStream prng_stream(std::uint64_t seed) noexcept;

struct LinearSystem {
  DenseMatrix a;
  DenseVector b;
};

/// A filled row-major from the stream, then b.
LinearSystem generate_hpl_matrix(Index n, std::uint64_t seed);

/// Same draws as generate_hpl_matrix, with each diagonal entry replaced by
/// 1 + sum of the off-diagonal magnitudes of its row.
LinearSystem generate_dd_matrix(Index n, std::uint64_t seed);

/// (2/3) n^3 + 2 n^2, credited to both modes.
double flop_model(Index n) noexcept;

struct PowerSample {
  double time_s = 0.0;
  double watts = 0.0;
};

struct ConstantPower {
  double watts = 0.0;
};

struct PowerTrace {
  std::vector<PowerSample> samples;
};

using PowerSource = std::variant<ConstantPower, PowerTrace>;

/// Reads a CSV with header `time_s,watts`; timestamps strictly increasing, watts > 0.
PowerTrace load_power_trace(const std::string& path);
PowerTrace parse_power_trace(std::string_view csv_text);

enum class BenchMode { hpl, hplmxp };
std::string_view to_string(BenchMode m) noexcept;
BenchMode parse_bench_mode(std::string_view text);

struct BenchConfig {
  Index n = 128;
  std::uint64_t seed = 1;
  BenchMode mode = BenchMode::hpl;
  IRConfig ir{};  ///< hplmxp only
  std::optional<PowerSource> power;
};

struct BenchResult {
  BenchMode mode = BenchMode::hpl;
  Index n = 0;
  std::uint64_t seed = 0;
  double elapsed_s = 0.0;
  double gflops = 0.0;
  double backward_error = 0.0;
  bool passed = false;
  std::optional<int> iterations;
  std::optional<double> energy_j;
  std::optional<double> gflops_per_watt;
  std::string diagnostic;
};

inline constexpr double kHplPassThreshold = 16.0;

BenchResult run_hpl(const BenchConfig& cfg);
BenchResult run_hplmxp(const BenchConfig& cfg);
/// Dispatches on cfg.mode and applies cfg.power when present.
BenchResult run_benchmark(const BenchConfig& cfg);

struct EnergyMetrics {
  double energy_j = 0.0;
  double mean_watts = 0.0;
  double gflops_per_watt = 0.0;
};

/// Constant power: W * t. Trace: trapezoidal integral of the piecewise-linear
/// power curve over [0, elapsed_s], holding the first/last sample outside
/// the trace span.
EnergyMetrics energy_metrics(const BenchResult& result, const PowerSource& power);

enum class ReportFormat { csv, markdown };
ReportFormat parse_report_format(std::string_view text);

struct ReportOptions {
  ReportFormat format = ReportFormat::csv;
  /// Blank elapsed_s, gflops, energy_j and gflops_per_watt for reproducible output.
  bool include_timing = true;
};

/// Columns: mode,n,seed,elapsed_s,gflops,backward_error,passed,iterations,energy_j,gflops_per_watt
std::string emit_report(const std::vector<BenchResult>& results, const ReportOptions& opts = {});

}  // namespace mpfk
