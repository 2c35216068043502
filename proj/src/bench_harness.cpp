#include "mpfk/bench_harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mpfk/errors.hpp"
#include "mpfk/text.hpp"

namespace mpfk {
namespace {

using Clock = std::chrono::steady_clock;

constexpr double kMinElapsed = 1e-9;

double seconds_since(Clock::time_point start) {
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  return std::max(s, kMinElapsed);
}

void require_size(Index n) {
  if (n < 1) throw ConfigError("problem size n must be >= 1, got " + std::to_string(n));
}

void finish(BenchResult& r) {
  r.gflops = flop_model(r.n) / r.elapsed_s / 1e9;
  r.passed = r.passed && r.backward_error <= kHplPassThreshold;
}

// Integral of the linear interpolant between (t0, w0) and (t1, w1) over [a, b] within [t0, t1].
double trapezoid(const PowerSample& p, const PowerSample& q, double a, double b) {
  auto at = [&](double t) { return p.watts + (q.watts - p.watts) * (t - p.time_s) / (q.time_s - p.time_s); };
  return 0.5 * (at(a) + at(b)) * (b - a);
}

double trace_energy(const PowerTrace& trace, double elapsed) {
  const auto& s = trace.samples;
  if (s.empty()) throw ConfigError("power trace is empty");
  double energy = 0.0;
  // Held at the first sample before the trace starts.
  if (s.front().time_s > 0.0) energy += s.front().watts * std::min(s.front().time_s, elapsed);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double a = std::max(s[i].time_s, 0.0);
    const double b = std::min(s[i + 1].time_s, elapsed);
    if (b > a) energy += trapezoid(s[i], s[i + 1], a, b);
  }
  // Held at the last sample after the trace ends.
  const double tail_start = std::max(s.back().time_s, 0.0);
  if (elapsed > tail_start) energy += s.back().watts * (elapsed - tail_start);
  return energy;
}

}  // namespace

PrngStream prng_stream(std::uint64_t seed) noexcept { return PrngStream(seed); }

LinearSystem generate_hpl_matrix(Index n, std::uint64_t seed) {
  require_size(n);
  PrngStream stream(seed);
  LinearSystem sys{DenseMatrix(n, n), DenseVector(n)};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) sys.a(i, j) = stream.next();
  }
  for (Index i = 0; i < n; ++i) sys.b(i) = stream.next();
  return sys;
}

LinearSystem generate_dd_matrix(Index n, std::uint64_t seed) {
  LinearSystem sys = generate_hpl_matrix(n, seed);
  for (Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) off += std::fabs(sys.a(i, j));
    }
    sys.a(i, i) = off + 1.0;
  }
  return sys;
}

double flop_model(Index n) noexcept {
  const double x = static_cast<double>(n);
  return 2.0 / 3.0 * x * x * x + 2.0 * x * x;
}

PowerTrace parse_power_trace(std::string_view text) {
  PowerTrace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_csv_line(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (!header) {
      if (fields.size() != 2 || fields[0] != "time_s" || fields[1] != "watts") {
        throw ConfigError("power trace line " + std::to_string(lineno) + ": expected header 'time_s,watts'");
      }
      header = true;
      continue;
    }
    const auto where = "power trace line " + std::to_string(lineno) + ": ";
    if (fields.size() != 2) throw ConfigError(where + "expected 2 fields");
    const auto t = parse_double(fields[0]);
    const auto w = parse_double(fields[1]);
    if (!t || !w || !std::isfinite(*t) || !std::isfinite(*w)) throw ConfigError(where + "malformed number");
    if (!(*w > 0.0)) throw ConfigError(where + "watts must be positive");
    if (!trace.samples.empty() && !(*t > trace.samples.back().time_s)) {
      throw ConfigError(where + "timestamps must be strictly increasing");
    }
    trace.samples.push_back({*t, *w});
  }
  if (!header) throw ConfigError("power trace: missing header 'time_s,watts'");
  if (trace.samples.empty()) throw ConfigError("power trace has no samples");
  return trace;
}

PowerTrace load_power_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open power trace '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_power_trace(buf.str());
}

std::string_view to_string(BenchMode m) noexcept { return m == BenchMode::hpl ? "hpl" : "hplmxp"; }

BenchMode parse_bench_mode(std::string_view text) {
  if (text == "hpl") return BenchMode::hpl;
  if (text == "hplmxp") return BenchMode::hplmxp;
  throw ConfigError("unknown benchmark mode '" + std::string(text) + "' (expected hpl or hplmxp)");
}

BenchResult run_hpl(const BenchConfig& cfg) {
  if (cfg.mode != BenchMode::hpl) throw ConfigError("run_hpl called with mode " + std::string(to_string(cfg.mode)));
  const LinearSystem sys = generate_hpl_matrix(cfg.n, cfg.seed);
  BenchResult r;
  r.mode = BenchMode::hpl;
  r.n = cfg.n;
  r.seed = cfg.seed;
  const auto start = Clock::now();
  try {
    const DenseVector x = fp64_lu_solve(sys.a, sys.b);
    r.elapsed_s = seconds_since(start);
    r.backward_error = hpl_backward_error(sys.a, x, sys.b);
    r.passed = true;
  } catch (const SingularMatrixError& e) {
    r.elapsed_s = seconds_since(start);
    r.backward_error = std::numeric_limits<double>::infinity();
    r.diagnostic = e.what();
  }
  finish(r);
  return r;
}

BenchResult run_hplmxp(const BenchConfig& cfg) {
  if (cfg.mode != BenchMode::hplmxp) {
    throw ConfigError("run_hplmxp called with mode " + std::string(to_string(cfg.mode)));
  }
  const LinearSystem sys = generate_dd_matrix(cfg.n, cfg.seed);
  BenchResult r;
  r.mode = BenchMode::hplmxp;
  r.n = cfg.n;
  r.seed = cfg.seed;
  const auto start = Clock::now();
  try {
    const IRResult ir = ir_solve(sys.a, sys.b, cfg.ir);
    r.elapsed_s = seconds_since(start);
    r.backward_error = ir.report.backward_error;
    r.iterations = ir.report.iterations;
    r.passed = ir.report.converged;
    if (!ir.report.converged) r.diagnostic = ir.report.stagnated ? "refinement stagnated" : "iteration cap reached";
  } catch (const SingularMatrixError& e) {
    r.elapsed_s = seconds_since(start);
    r.backward_error = std::numeric_limits<double>::infinity();
    r.iterations = 0;
    r.diagnostic = e.what();
  }
  finish(r);
  return r;
}

BenchResult run_benchmark(const BenchConfig& cfg) {
  BenchResult r = cfg.mode == BenchMode::hpl ? run_hpl(cfg) : run_hplmxp(cfg);
  if (cfg.power) {
    const EnergyMetrics e = energy_metrics(r, *cfg.power);
    r.energy_j = e.energy_j;
    r.gflops_per_watt = e.gflops_per_watt;
  }
  return r;
}

EnergyMetrics energy_metrics(const BenchResult& result, const PowerSource& power) {
  if (!(result.elapsed_s > 0.0)) throw ConfigError("energy_metrics: elapsed time must be positive");
  EnergyMetrics m;
  if (const auto* c = std::get_if<ConstantPower>(&power)) {
    if (!(c->watts > 0.0)) throw ConfigError("constant power must be positive");
    m.energy_j = c->watts * result.elapsed_s;
    m.mean_watts = c->watts;
  } else {
    m.energy_j = trace_energy(std::get<PowerTrace>(power), result.elapsed_s);
    m.mean_watts = m.energy_j / result.elapsed_s;
  }
  m.gflops_per_watt = result.gflops / m.mean_watts;
  return m;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected csv or markdown)");
}

std::string emit_report(const std::vector<BenchResult>& results, const ReportOptions& opts) {
  static const std::vector<std::string> columns{"mode",           "n",      "seed",       "elapsed_s",
                                                "gflops",         "backward_error", "passed", "iterations",
                                                "energy_j",       "gflops_per_watt"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    const bool t = opts.include_timing;
    rows.push_back({std::string(to_string(r.mode)), std::to_string(r.n), std::to_string(r.seed),
                    t ? format_number(r.elapsed_s) : "", t ? format_number(r.gflops) : "",
                    format_number(r.backward_error), r.passed ? "true" : "false",
                    r.iterations ? std::to_string(*r.iterations) : "", t ? format_optional(r.energy_j) : "",
                    t ? format_optional(r.gflops_per_watt) : ""});
  }

  std::string out;
  auto join = [&](const std::vector<std::string>& cells, std::string_view sep, std::string_view open,
                  std::string_view close) {
    out += open;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += sep;
      out += cells[i];
    }
    out += close;
    out += '\n';
  };
  if (opts.format == ReportFormat::csv) {
    join(columns, ",", "", "");
    for (const auto& row : rows) join(row, ",", "", "");
  } else {
    join(columns, " | ", "| ", " |");
    join(std::vector<std::string>(columns.size(), "---"), " | ", "| ", " |");
    for (const auto& row : rows) join(row, " | ", "| ", " |");
  }
  return out;
}

}  // namespace mpfk
