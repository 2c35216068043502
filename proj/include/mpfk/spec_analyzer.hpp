#pragma once

// Hardware figures of merit (throughput per precision and execution path,
// memory bandwidth) and the ratios derived from them: Bytes/FLOP, roofline
// bounds, and speedup/efficiency between published benchmark runs.

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpfk {

enum class ComputePath { fma, tensor, emulated };

std::string_view to_string(ComputePath p) noexcept;
ComputePath parse_compute_path(std::string_view text);

/// "<precision>.<path>", e.g. fp64.fma or fp16.tensor.
struct ThroughputKey {
  std::string precision;
  ComputePath path = ComputePath::fma;

  std::string str() const;
  static ThroughputKey parse(std::string_view text);

  friend auto operator<=>(const ThroughputKey&, const ThroughputKey&) = default;
  friend bool operator==(const ThroughputKey&, const ThroughputKey&) = default;
};

struct HardwareSpec {
  std::string name;
  /// TFLOP/s per (precision, path). Missing entries are "not available".
  std::map<ThroughputKey, double> throughput_tflops;
  double memory_bw_tbps = 0.0;
  std::optional<double> power_w;
  /// B/FLOP as printed by the vendor or a publication; never recomputed.
  std::map<ThroughputKey, double> published_bytes_per_flop;

  /// Throws SpecError when the entry is absent.
  double throughput(const ThroughputKey& key) const;
  void validate() const;

  friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

/// Loads the JSON schema {name, memory_bw_tbps, power_w?, throughput_tflops:
/// {"<precision>.<path>": number}, published_bytes_per_flop?: {...}}.
/// Parse and schema errors throw SpecError carrying line/column information.
HardwareSpec load_hardware_spec(std::string_view json_text);
HardwareSpec load_hardware_spec_file(const std::string& path);
/// Canonical form: sorted keys, two-space indent, shortest round-trip numbers.
std::string serialize_hardware_spec(const HardwareSpec& spec);

/// V100, A100, H200, B200 as published (FP64/FP16, FMA/tensor, bandwidth, printed B/FLOP).
std::vector<HardwareSpec> builtin_specs();
/// Case-insensitive lookup in builtin_specs(); throws SpecError if unknown.
HardwareSpec builtin_spec(std::string_view name);

/// memory bandwidth (TB/s) / throughput (TFLOP/s).
double bytes_per_flop(const HardwareSpec& spec, const ThroughputKey& key);

enum class Bound { memory_bound, compute_bound };
std::string_view to_string(Bound b) noexcept;

struct RooflineResult {
  double intensity = 0.0;  ///< FLOP per byte
  double attainable_tflops = 0.0;
  Bound bound = Bound::memory_bound;
};

/// min(peak, bandwidth * intensity); compute_bound from the ridge point on.
RooflineResult attainable(const HardwareSpec& spec, double intensity, const ThroughputKey& key);

/// Intensity at which the bandwidth and compute roofs meet: peak / bandwidth.
double ridge_point(const HardwareSpec& spec, const ThroughputKey& key);

struct BenchmarkRecord {
  std::string system;
  std::string mode;
  double perf_tflops = 0.0;
  std::optional<double> efficiency_gflops_per_watt;
};

/// b.perf / a.perf; the records must be from the same system.
double speedup(const BenchmarkRecord& a, const BenchmarkRecord& b);
/// b.efficiency / a.efficiency; both must carry an efficiency figure.
double efficiency_gain(const BenchmarkRecord& a, const BenchmarkRecord& b);

/// Mixed-precision IR solver vs FP64 LU on a 32k complex system (V100, A100, H200).
std::vector<BenchmarkRecord> published_ir_records();
/// HPL on B200: native FP64 vs 7-slice integer emulation, tuned for maximum
/// performance ("B200 max-perf") or maximum efficiency ("B200 max-eff").
std::vector<BenchmarkRecord> published_emulation_records();
/// The unique record matching system and mode; throws SpecError otherwise.
BenchmarkRecord find_record(const std::vector<BenchmarkRecord>& records, std::string_view system,
                            std::string_view mode);

struct Discrepancy {
  std::string system;
  ThroughputKey key;
  double computed = 0.0;
  double published = 0.0;
  /// |computed - published| / published
  double relative_difference = 0.0;
  bool flagged = false;
};

inline constexpr double kConsistencyFlagThreshold = 0.15;

/// Every published B/FLOP entry that differs from bandwidth / throughput;
/// entries above the threshold are flagged.
std::vector<Discrepancy> consistency_report(const HardwareSpec& spec,
                                            double flag_threshold = kConsistencyFlagThreshold);

struct SeriesRow {
  std::string system;
  ThroughputKey key;
  std::optional<double> throughput_tflops;
  double memory_bw_tbps = 0.0;
  std::optional<double> bytes_per_flop;
  std::optional<double> published_bytes_per_flop;
};

/// Per-system Bytes/FLOP for fp64/fp16 x fma/tensor (blank where the
/// throughput is not available) plus an fp64.emulated row for each system in
/// `emulated_tflops`. Throws SpecError if an emulated entry names an unknown system.
std::vector<SeriesRow> figure4_series(const std::vector<HardwareSpec>& specs,
                                      const std::map<std::string, double>& emulated_tflops);

/// Same rows for every throughput entry of one spec.
std::vector<SeriesRow> spec_series(const HardwareSpec& spec);

/// Header: system,precision,path,throughput_tflops,memory_bw_tbps,bytes_per_flop,published_bytes_per_flop
std::string series_csv(const std::vector<SeriesRow>& rows);
/// Header: system,precision,path,computed,published,relative_difference,flagged
std::string discrepancy_csv(const std::vector<Discrepancy>& rows);

}  // namespace mpfk
