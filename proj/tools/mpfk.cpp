// mpfk: command-line front end for the mixed-precision toolkit.
//
// Exit codes: 0 success, 1 numerical failure (not converged, overflow guard,
// failed benchmark gate), 2 usage error.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpfk/bench_harness.hpp"
#include "mpfk/emulated_gemm.hpp"
#include "mpfk/errors.hpp"
#include "mpfk/formats.hpp"
#include "mpfk/mixed_precision_ir.hpp"
#include "mpfk/spec_analyzer.hpp"
#include "mpfk/text.hpp"

namespace {

using namespace mpfk;

constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

std::uint64_t default_seed() {
  const char* env = std::getenv("MPFK_SEED");
  if (env == nullptr || *env == '\0') return 1;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used, 0);
    if (used == std::string(env).size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("MPFK_SEED must be an unsigned integer, got '" + std::string(env) + "'");
}

std::string hex(std::uint64_t bits, int storage_bits) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setfill('0') << std::setw((storage_bits + 3) / 4) << bits;
  return os.str();
}

std::uint64_t parse_bits(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("--bits expects an unsigned integer such as 0x3C00, got '" + text + "'");
}

DenseMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open matrix file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    for (const auto& field : split_csv_line(line)) {
      const auto v = parse_double(field);
      if (!v) throw UsageError(path + ":" + std::to_string(lineno) + ": malformed number '" + field + "'");
      row.push_back(*v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw UsageError("matrix file '" + path + "' is empty");
  DenseMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

DenseMatrix random_matrix(Index rows, Index cols, PrngStream& stream) {
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = 2.0 * stream.next();  // uniform [-1, 1)
  }
  return m;
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

// ---- format ---------------------------------------------------------------

struct FormatArgs {
  std::string type;
  std::string bits;
  std::string value;
  std::string round = "nearest_even";
  bool nan_on_overflow = false;
};

int run_format_inspect(const FormatArgs& a) {
  const FormatSpec spec = builtin_format(a.type);
  const PackedScalar x = pack(parse_bits(a.bits), spec);
  const double v = decode(x);
  std::cout << "type: " << spec.name << "\n"
            << "bits: " << hex(x.bits, spec.storage_bits) << "\n"
            << "value: " << format_number(v) << "\n"
            << "class: " << to_string(classify(x)) << "\n"
            << "ulp: " << format_number(ulp(v, spec)) << "\n";
  return 0;
}

int run_format_convert(const FormatArgs& a) {
  FormatSpec spec = builtin_format(a.type);
  if (a.nan_on_overflow) spec.saturate_overflow = false;
  const auto input = parse_double(a.value);
  if (!input) throw UsageError("--value expects a number, got '" + a.value + "'");
  const RoundingMode mode = parse_rounding_mode(a.round);
  const PackedScalar x = encode(*input, spec, mode);
  const double v = decode(x);
  std::cout << "type: " << spec.name << "\n"
            << "input: " << format_number(*input) << "\n"
            << "round: " << to_string(mode) << "\n"
            << "bits: " << hex(x.bits, spec.storage_bits) << "\n"
            << "value: " << format_number(v) << "\n"
            << "class: " << to_string(classify(x)) << "\n";
  if (std::isfinite(*input) && std::isfinite(v)) {
    const double err = v - *input;
    std::cout << "error: " << format_number(err) << "\n";
    if (*input != 0.0) std::cout << "relative_error: " << format_number(std::fabs(err / *input)) << "\n";
  }
  const double limit = max_finite(spec);
  if (!std::isnan(*input) && std::fabs(*input) > limit) {
    if (std::isinf(v)) {
      std::cout << "note: overflowed to " << format_number(v) << "\n";
    } else if (std::isnan(v)) {
      std::cout << "note: overflow encoded as NaN\n";
    } else {
      std::cout << "note: saturated to max finite " << format_number(v) << "\n";
    }
  }
  return 0;
}

// ---- gemm -----------------------------------------------------------------

struct GemmArgs {
  Index n = 32;
  Index k = 0;
  Index m = 0;
  int s = 7;
  int w = 7;
  std::string pair_policy = "triangular";
  std::uint64_t seed = 1;
  bool verify = false;
  bool sweep = false;
  std::string a_path;
  std::string b_path;
};

void print_report(const GemmErrorReport& r) {
  std::cout << "max_relative_error: " << format_number(r.max_relative_error) << "\n"
            << "median_relative_error: " << format_number(r.median_relative_error) << "\n"
            << "native_fp64_max_relative_error: " << format_number(r.native_max_relative_error) << "\n";
}

int run_gemm(const GemmArgs& g) {
  DenseMatrix a;
  DenseMatrix b;
  if (!g.a_path.empty() || !g.b_path.empty()) {
    if (g.a_path.empty() || g.b_path.empty()) throw UsageError("--a and --b must be given together");
    a = read_matrix_csv(g.a_path);
    b = read_matrix_csv(g.b_path);
  } else {
    const Index k = g.k > 0 ? g.k : g.n;
    const Index m = g.m > 0 ? g.m : g.n;
    if (g.n < 1 || k < 1 || m < 1) throw UsageError("matrix dimensions must be positive");
    PrngStream stream(g.seed);
    a = random_matrix(g.n, k, stream);
    b = random_matrix(k, m, stream);
  }
  if (a.cols() != b.rows()) {
    throw UsageError("dimension mismatch: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     ", B is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  EmulationConfig cfg;
  cfg.slices = g.s;
  cfg.slice_width = g.w;
  cfg.pair_policy = parse_pair_policy(g.pair_policy);

  std::cout << "gemm: A " << a.rows() << "x" << a.cols() << ", B " << b.rows() << "x" << b.cols() << ", s=" << g.s
            << ", w=" << g.w << ", pair_policy=" << to_string(cfg.pair_policy) << "\n";
  if (g.verify) {
    const GemmErrorReport r = gemm_error_report(a, b, cfg);
    std::cout << "slice_multiplies: " << r.slice_multiplies << "\n"
              << "integer_ops: " << format_number(r.integer_ops) << "\n"
              << "modeled_flops: " << format_number(r.modeled_flops) << "\n";
    print_report(r);
  } else {
    EmulationStats stats;
    const DenseMatrix c = emulated_gemm(a, b, cfg, &stats);
    std::cout << "slice_multiplies: " << stats.slice_multiplies << "\n"
              << "checksum: " << format_number(c.sum()) << "\n";
  }
  if (g.sweep) {
    std::cout << "s,slice_multiplies,max_relative_error,median_relative_error\n";
    for (int s = 1; s <= g.s; ++s) {
      EmulationConfig c = cfg;
      c.slices = s;
      const GemmErrorReport r = gemm_error_report(a, b, c);
      std::cout << s << "," << r.slice_multiplies << "," << format_number(r.max_relative_error) << ","
                << format_number(r.median_relative_error) << "\n";
    }
  }
  return 0;
}

// ---- solve-ir -------------------------------------------------------------

struct SolveArgs {
  Index n = 256;
  std::uint64_t seed = 1;
  std::string factor_format = "fp16";
  std::string rounding = "nearest_even";
  std::string pivoting = "partial";
  double tol = 16.0;
  int max_iters = 50;
};

int run_solve_ir(const SolveArgs& s) {
  if (s.n < 1) throw UsageError("--n must be >= 1");
  IRConfig cfg;
  cfg.factor_format = builtin_format(s.factor_format);
  cfg.rounding = parse_rounding_mode(s.rounding);
  cfg.pivoting = parse_pivoting(s.pivoting);
  cfg.tol = s.tol;
  cfg.max_iters = s.max_iters;
  const LinearSystem sys = generate_dd_matrix(s.n, s.seed);
  const IRResult res = ir_solve(sys.a, sys.b, cfg);
  const IRReport& r = res.report;
  std::cout << "n: " << s.n << "\n"
            << "seed: " << s.seed << "\n"
            << "factor_format: " << cfg.factor_format.name << "\n"
            << "rounding: " << to_string(cfg.rounding) << "\n"
            << "pivoting: " << to_string(cfg.pivoting) << "\n"
            << "converged: " << (r.converged ? "true" : "false") << "\n"
            << "stagnated: " << (r.stagnated ? "true" : "false") << "\n"
            << "iterations: " << r.iterations << "\n"
            << "backward_error: " << format_number(r.backward_error) << "\n"
            << "flops_low: " << r.flops_low << "\n"
            << "flops_high: " << r.flops_high << "\n"
            << "residual_history:\n";
  for (std::size_t i = 0; i < r.residual_history.size(); ++i) {
    std::cout << "  " << i << " " << format_number(r.residual_history[i]) << "\n";
  }
  return r.converged ? 0 : kExitNumerical;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string mode;
  Index n = 128;
  std::uint64_t seed = 1;
  double power_constant = 0.0;
  std::string power_trace;
  std::string out;
  std::string format = "csv";
  bool no_timing = false;
  std::string factor_format = "fp16";
};

int run_bench(const BenchArgs& a) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  BenchConfig cfg;
  cfg.mode = parse_bench_mode(a.mode);
  cfg.n = a.n;
  cfg.seed = a.seed;
  cfg.ir.factor_format = builtin_format(a.factor_format);
  if (a.power_constant != 0.0 && !a.power_trace.empty()) {
    throw UsageError("--power-constant and --power-trace are mutually exclusive");
  }
  if (a.power_constant != 0.0) {
    if (!(a.power_constant > 0.0)) throw UsageError("--power-constant must be positive");
    cfg.power = ConstantPower{a.power_constant};
  } else if (!a.power_trace.empty()) {
    cfg.power = load_power_trace(a.power_trace);
  }
  ReportOptions opts;
  opts.format = parse_report_format(a.format);
  opts.include_timing = !a.no_timing;

  const BenchResult r = run_benchmark(cfg);
  write_output(emit_report({r}, opts), a.out);
  if (!r.passed) {
    std::cerr << "benchmark gate failed" << (r.diagnostic.empty() ? "" : ": " + r.diagnostic) << "\n";
    return kExitNumerical;
  }
  return 0;
}

// ---- roofline -------------------------------------------------------------

struct RooflineArgs {
  std::vector<std::string> spec_files;
  std::vector<std::string> builtins;
  std::string precision;
  std::string path;
  std::vector<double> intensities;
  std::string series;
  std::vector<std::string> emulated;
  bool consistency = false;
  std::string out;
};

std::map<std::string, double> parse_emulated(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    const auto v = eq == std::string::npos ? std::nullopt : parse_double(item.substr(eq + 1));
    if (!v || eq == 0) throw UsageError("--emulated-tflops expects SYSTEM=TFLOPS, got '" + item + "'");
    out[item.substr(0, eq)] = *v;
  }
  return out;
}

int run_roofline(const RooflineArgs& a) {
  std::vector<HardwareSpec> specs;
  for (const auto& f : a.spec_files) specs.push_back(load_hardware_spec_file(f));
  for (const auto& b : a.builtins) specs.push_back(builtin_spec(b));
  if (specs.empty()) {
    if (a.series.empty() && !a.consistency) throw UsageError("give --spec FILE, --builtin NAME, or --series fig4");
    specs = builtin_specs();
  }

  std::string text;
  if (!a.series.empty()) {
    if (a.series != "fig4") throw UsageError("unknown series '" + a.series + "' (expected fig4)");
    text += series_csv(figure4_series(specs, parse_emulated(a.emulated)));
  } else if (!a.precision.empty() || !a.path.empty()) {
    if (a.precision.empty() || a.path.empty()) throw UsageError("--precision and --path must be given together");
    const ThroughputKey key{a.precision, parse_compute_path(a.path)};
    for (const auto& spec : specs) {
      text += spec.name + " " + key.str() + " bytes_per_flop: " + format_number(bytes_per_flop(spec, key)) + "\n";
      text += spec.name + " " + key.str() + " ridge_point_flop_per_byte: " + format_number(ridge_point(spec, key)) +
              "\n";
      for (const double i : a.intensities) {
        const RooflineResult r = attainable(spec, i, key);
        text += spec.name + " " + key.str() + " intensity " + format_number(i) +
                " attainable_tflops: " + format_number(r.attainable_tflops) + " " + std::string(to_string(r.bound)) +
                "\n";
      }
    }
  } else if (!a.consistency) {
    std::vector<SeriesRow> rows;
    for (const auto& spec : specs) {
      const auto more = spec_series(spec);
      rows.insert(rows.end(), more.begin(), more.end());
    }
    text += series_csv(rows);
  }
  if (a.consistency) {
    std::vector<Discrepancy> all;
    for (const auto& spec : specs) {
      const auto d = consistency_report(spec);
      all.insert(all.end(), d.begin(), d.end());
    }
    if (!text.empty()) text += "\n";
    text += discrepancy_csv(all);
  }
  write_output(text, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpfk: reduced-precision formats, emulated GEMM, mixed-precision refinement, and roofline tools"};
  app.require_subcommand(1);
  std::function<int()> action;

  std::uint64_t seed = 1;
  try {
    seed = default_seed();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  // format
  FormatArgs fmt;
  auto* format = app.add_subcommand("format", "Inspect bit patterns or convert values between formats");
  format->require_subcommand(1);
  auto* inspect = format->add_subcommand("inspect", "Decode and classify a bit pattern");
  inspect->add_option("--type", fmt.type, "Format: e4m3, e5m2, fp16, bf16, tf32, fp32, fp64")->required();
  inspect->add_option("--bits", fmt.bits, "Bit pattern, e.g. 0x3C00")->required();
  inspect->callback([&] { action = [&] { return run_format_inspect(fmt); }; });
  auto* convert = format->add_subcommand("convert", "Round a decimal value into a format");
  convert->add_option("--type", fmt.type, "Target format")->required();
  convert->add_option("--value", fmt.value, "Value (decimal or hex float)")->required();
  convert->add_option("--round", fmt.round, "nearest_even, toward_zero, or stochastic[:seed]")
      ->capture_default_str();
  convert->add_flag("--nan-on-overflow", fmt.nan_on_overflow, "e4m3: encode overflow as NaN instead of saturating");
  convert->callback([&] { action = [&] { return run_format_convert(fmt); }; });

  // gemm
  GemmArgs gemm_args;
  gemm_args.seed = seed;
  auto* gemm = app.add_subcommand("gemm", "Emulated FP64 GEMM from integer slices");
  gemm->add_option("--n", gemm_args.n, "Rows of A")->capture_default_str();
  gemm->add_option("--k", gemm_args.k, "Inner dimension (default n)");
  gemm->add_option("--m", gemm_args.m, "Columns of B (default n)");
  gemm->add_option("--s", gemm_args.s, "Slice count")->capture_default_str();
  gemm->add_option("--w", gemm_args.w, "Bits per slice")->capture_default_str();
  gemm->add_option("--pair-policy", gemm_args.pair_policy, "triangular or full")->capture_default_str();
  gemm->add_option("--seed", gemm_args.seed, "PRNG seed (default $MPFK_SEED or 1)");
  gemm->add_flag("--verify", gemm_args.verify, "Compare against the exact oracle");
  gemm->add_flag("--sweep", gemm_args.sweep, "Report error for every slice count 1..s");
  gemm->add_option("--a", gemm_args.a_path, "CSV file for A (instead of random operands)");
  gemm->add_option("--b", gemm_args.b_path, "CSV file for B");
  gemm->callback([&] { action = [&] { return run_gemm(gemm_args); }; });

  // solve-ir
  SolveArgs solve_args;
  solve_args.seed = seed;
  auto* solve = app.add_subcommand("solve-ir", "Mixed-precision iterative refinement on a diagonally dominant system");
  solve->add_option("--n", solve_args.n, "Problem size")->capture_default_str();
  solve->add_option("--seed", solve_args.seed, "PRNG seed (default $MPFK_SEED or 1)");
  solve->add_option("--factor-format", solve_args.factor_format, "fp16, bf16, e4m3, e5m2, tf32, fp32, or fp64")
      ->capture_default_str();
  solve->add_option("--rounding", solve_args.rounding, "Factorization rounding mode")->capture_default_str();
  solve->add_option("--pivoting", solve_args.pivoting, "partial or none")->capture_default_str();
  solve->add_option("--tol", solve_args.tol, "Backward-error threshold")->capture_default_str();
  solve->add_option("--max-iters", solve_args.max_iters, "Refinement iteration cap")->capture_default_str();
  solve->callback([&] { action = [&] { return run_solve_ir(solve_args); }; });

  // bench
  BenchArgs bench_args;
  bench_args.seed = seed;
  auto* bench = app.add_subcommand("bench", "Run mini-HPL or mini-HPL-MxP");
  bench->add_option("mode", bench_args.mode, "hpl or hplmxp")->required()->check(CLI::IsMember({"hpl", "hplmxp"}));
  bench->add_option("--n", bench_args.n, "Problem size")->capture_default_str();
  bench->add_option("--seed", bench_args.seed, "PRNG seed (default $MPFK_SEED or 1)");
  bench->add_option("--power-constant", bench_args.power_constant, "Constant power draw in watts");
  bench->add_option("--power-trace", bench_args.power_trace, "CSV power trace with header time_s,watts");
  bench->add_option("--out", bench_args.out, "Report file (default stdout)");
  bench->add_option("--format", bench_args.format, "csv or markdown")->capture_default_str();
  bench->add_flag("--no-timing", bench_args.no_timing, "Leave timing-dependent columns blank");
  bench->add_option("--factor-format", bench_args.factor_format, "hplmxp factorization format")
      ->capture_default_str();
  bench->callback([&] { action = [&] { return run_bench(bench_args); }; });

  // roofline
  RooflineArgs roof;
  auto* roofline = app.add_subcommand("roofline", "Bytes/FLOP, roofline bounds, and spec consistency");
  roofline->add_option("--spec", roof.spec_files, "Hardware spec JSON file (repeatable)");
  roofline->add_option("--builtin", roof.builtins, "Builtin spec: v100, a100, h200, b200 (repeatable)");
  roofline->add_option("--precision", roof.precision, "Precision, e.g. fp64 or fp16");
  roofline->add_option("--path", roof.path, "fma, tensor, or emulated");
  roofline->add_option("--intensity", roof.intensities, "Arithmetic intensity in FLOP/byte (repeatable)");
  roofline->add_option("--series", roof.series, "Emit a plot series: fig4");
  roofline->add_option("--emulated-tflops", roof.emulated, "SYSTEM=TFLOPS for the emulated FP64 series");
  roofline->add_flag("--consistency", roof.consistency, "Compare printed B/FLOP with bandwidth/throughput");
  roofline->add_option("--out", roof.out, "Output file (default stdout)");
  roofline->callback([&] { action = [&] { return run_roofline(roof); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const OverflowGuardError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SingularMatrixError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
