#include "mpfk/mixed_precision_ir.hpp"

#include <cmath>
#include <limits>

#include "mpfk/errors.hpp"

namespace mpfk {
namespace {

constexpr double kHplEpsilon = 0x1.0p-53;

// Every operation is the exact FP64 result.
struct NativeArithmetic {
  double round(double v) const noexcept { return v; }
  double mul(double a, double b) const noexcept { return a * b; }
  double sub(double a, double b) const noexcept { return a - b; }
  double div(double a, double b) const noexcept { return a / b; }
};

// Every operation is rounded once to the target format.
struct RoundedArithmetic {
  const FormatSpec& spec;
  RoundingMode mode;
  SplitMix64* rng;

  double round(double v) const { return rounded_op_unchecked(OpKind::add, v, 0.0, 0.0, spec, mode, rng); }
  double mul(double a, double b) const { return rounded_op_unchecked(OpKind::mul, a, b, 0.0, spec, mode, rng); }
  double sub(double a, double b) const { return rounded_op_unchecked(OpKind::sub, a, b, 0.0, spec, mode, rng); }
  double div(double a, double b) const { return rounded_op_unchecked(OpKind::div, a, b, 0.0, spec, mode, rng); }
};

bool is_native(const FormatSpec& spec) { return spec == builtin_format("fp64"); }

// Calls f with the arithmetic policy that implements `spec`.
template <typename F>
decltype(auto) with_arithmetic(const FormatSpec& spec, RoundingMode mode, SplitMix64* rng, F&& f) {
  if (is_native(spec)) {
    if (mode.kind() != RoundingMode::Kind::nearest_even) {
      throw ConfigError("fp64 factorization runs natively and supports only nearest_even rounding");
    }
    NativeArithmetic native;
    return f(native);
  }
  if (spec.storage_bits > 32) {
    throw ConfigError("factor format '" + spec.name + "' must be fp64 or at most 32 bits wide");
  }
  RoundedArithmetic rounded{spec, mode, rng};
  return f(rounded);
}

template <typename Arith>
std::uint64_t factor_in_place(DenseMatrix& lu, std::vector<Index>& perm, Pivoting pivoting, const Arith& ar) {
  const Index n = lu.rows();
  std::uint64_t ops = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      lu(i, j) = ar.round(lu(i, j));
      if (!std::isfinite(lu(i, j))) {
        throw FormatError("entry (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") overflows the factor format");
      }
    }
  }
  for (Index k = 0; k < n; ++k) {
    if (pivoting == Pivoting::partial) {
      Index p = k;
      for (Index i = k + 1; i < n; ++i) {
        if (std::fabs(lu(i, k)) > std::fabs(lu(p, k))) p = i;
      }
      if (p != k) {
        lu.row(p).swap(lu.row(k));
        std::swap(perm[static_cast<std::size_t>(p)], perm[static_cast<std::size_t>(k)]);
      }
    }
    const double pivot = lu(k, k);
    if (pivot == 0.0 || !std::isfinite(pivot)) {
      throw SingularMatrixError("pivot " + std::to_string(k) + " is " + (pivot == 0.0 ? "zero" : "not finite") +
                                " in the working precision");
    }
    for (Index i = k + 1; i < n; ++i) {
      const double l = ar.div(lu(i, k), pivot);
      lu(i, k) = l;
      for (Index j = k + 1; j < n; ++j) lu(i, j) = ar.sub(lu(i, j), ar.mul(l, lu(k, j)));
      ops += 1 + 2 * static_cast<std::uint64_t>(n - k - 1);
    }
  }
  return ops;
}

template <typename Arith>
DenseVector solve_in_place(const LowPrecisionLU& f, const Eigen::Ref<const DenseVector>& rhs, const Arith& ar,
                           std::uint64_t& ops) {
  const Index n = f.size();
  DenseVector y(n);
  for (Index i = 0; i < n; ++i) y(i) = ar.round(rhs(f.perm[static_cast<std::size_t>(i)]));
  for (Index i = 0; i < n; ++i) {
    double s = y(i);
    for (Index j = 0; j < i; ++j) s = ar.sub(s, ar.mul(f.lu(i, j), y(j)));
    y(i) = s;
    ops += 2 * static_cast<std::uint64_t>(i);
  }
  for (Index i = n - 1; i >= 0; --i) {
    double s = y(i);
    for (Index j = i + 1; j < n; ++j) s = ar.sub(s, ar.mul(f.lu(i, j), y(j)));
    y(i) = ar.div(s, f.lu(i, i));
    ops += 2 * static_cast<std::uint64_t>(n - 1 - i) + 1;
  }
  return y;
}

void require_square_finite(const Eigen::Ref<const DenseMatrix>& a, const char* who) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(who) + ": matrix must be square, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  const auto [i, j] = first_non_finite(a);
  if (i >= 0) {
    throw NonFiniteError(std::string(who) + ": non-finite entry at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
  }
}

double matrix_inf_norm(const Eigen::Ref<const DenseMatrix>& a) {
  double norm = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Index j = 0; j < a.cols(); ++j) row += std::fabs(a(i, j));
    norm = std::max(norm, row);
  }
  return norm;
}

double inf_norm(const Eigen::Ref<const DenseVector>& v) {
  double norm = 0.0;
  for (Index i = 0; i < v.size(); ++i) norm = std::max(norm, std::fabs(v(i)));
  return norm;
}

double scaled_residual(double residual_norm, double a_norm, double x_norm, double b_norm, Index n) {
  if (residual_norm == 0.0) return 0.0;
  const double denom = kHplEpsilon * (a_norm * x_norm + b_norm) * static_cast<double>(n);
  return denom == 0.0 ? std::numeric_limits<double>::infinity() : residual_norm / denom;
}

std::uint64_t solve_stream_seed(RoundingMode mode) noexcept { return ~mode.seed(); }

}  // namespace

std::string_view to_string(Pivoting p) noexcept { return p == Pivoting::partial ? "partial" : "none"; }

Pivoting parse_pivoting(std::string_view text) {
  if (text == "partial") return Pivoting::partial;
  if (text == "none") return Pivoting::none;
  throw ConfigError("unknown pivoting '" + std::string(text) + "' (expected partial or none)");
}

std::uint64_t lu_factor_op_count(Index n) noexcept {
  const auto m = static_cast<std::uint64_t>(n);
  if (m == 0) return 0;
  return m * (m - 1) / 2 + (m - 1) * m * (2 * m - 1) / 3;
}

std::uint64_t lu_solve_op_count(Index n) noexcept {
  const auto m = static_cast<std::uint64_t>(n);
  return 2 * m * m - m;
}

LowPrecisionLU lu_factor_lowprec(const Eigen::Ref<const DenseMatrix>& a, const IRConfig& cfg) {
  require_square_finite(a, "lu_factor_lowprec");
  LowPrecisionLU f;
  f.lu = a;
  f.format = cfg.factor_format;
  f.rounding = cfg.rounding;
  f.perm.resize(static_cast<std::size_t>(a.rows()));
  for (std::size_t i = 0; i < f.perm.size(); ++i) f.perm[i] = static_cast<Index>(i);

  SplitMix64 rng(cfg.rounding.seed());
  f.factor_ops = with_arithmetic(cfg.factor_format, cfg.rounding, &rng,
                                 [&](const auto& ar) { return factor_in_place(f.lu, f.perm, cfg.pivoting, ar); });
  return f;
}

DenseVector lu_solve_lowprec(const LowPrecisionLU& lu, const Eigen::Ref<const DenseVector>& rhs, SplitMix64* stream,
                             std::uint64_t* ops) {
  if (rhs.size() != lu.size()) {
    throw DimensionError("lu_solve_lowprec: rhs has " + std::to_string(rhs.size()) + " entries, factor is " +
                         std::to_string(lu.size()));
  }
  SplitMix64 local(solve_stream_seed(lu.rounding));
  SplitMix64* rng = stream != nullptr ? stream : &local;
  std::uint64_t count = 0;
  DenseVector x = with_arithmetic(lu.format, lu.rounding, rng,
                                  [&](const auto& ar) { return solve_in_place(lu, rhs, ar, count); });
  if (ops != nullptr) *ops += count;
  return x;
}

DenseVector residual(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& x,
                     const Eigen::Ref<const DenseVector>& b) {
  if (a.cols() != x.size() || a.rows() != b.size()) throw DimensionError("residual: dimension mismatch");
  DenseVector r(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    double dot = 0.0;
    for (Index j = 0; j < a.cols(); ++j) dot += a(i, j) * x(j);
    r(i) = b(i) - dot;
  }
  return r;
}

double hpl_backward_error(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& x,
                          const Eigen::Ref<const DenseVector>& b) {
  const DenseVector r = residual(a, x, b);
  return scaled_residual(inf_norm(r), matrix_inf_norm(a), inf_norm(x), inf_norm(b), a.rows());
}

DenseVector fp64_lu_solve(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& b) {
  IRConfig cfg;
  cfg.factor_format = builtin_format("fp64");
  cfg.pivoting = Pivoting::partial;
  return lu_solve_lowprec(lu_factor_lowprec(a, cfg), b);
}

IRResult ir_solve(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& b,
                  const IRConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw ConfigError("ir_solve: tol must be positive");
  if (cfg.max_iters < 1) throw ConfigError("ir_solve: max_iters must be >= 1");
  require_square_finite(a, "ir_solve");
  if (b.size() != a.rows()) throw DimensionError("ir_solve: rhs length does not match matrix");

  const Index n = a.rows();
  const auto n2 = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  const double a_norm = matrix_inf_norm(a);
  const double b_norm = inf_norm(b);

  IRResult out;
  IRReport& rep = out.report;
  const LowPrecisionLU lu = lu_factor_lowprec(a, cfg);
  rep.flops_low = lu.factor_ops;
  SplitMix64 stream(solve_stream_seed(cfg.rounding));

  out.x = lu_solve_lowprec(lu, b, &stream, &rep.flops_low);
  DenseVector r = residual(a, out.x, b);
  rep.flops_high += 2 * n2;
  double be = scaled_residual(inf_norm(r), a_norm, inf_norm(out.x), b_norm, n);
  rep.residual_history.push_back(be);
  rep.converged = be <= cfg.tol;

  for (int it = 1; it <= cfg.max_iters && !rep.converged; ++it) {
    // Power-of-two scaling keeps the correction inside the factor format's
    // range; small residuals would otherwise flush to zero on entry.
    int e = 0;
    std::frexp(inf_norm(r), &e);
    const DenseVector scaled = r.unaryExpr([e](double v) { return std::ldexp(v, -e); });
    const DenseVector d =
        lu_solve_lowprec(lu, scaled, &stream, &rep.flops_low).unaryExpr([e](double v) { return std::ldexp(v, e); });
    out.x += d;
    rep.flops_high += static_cast<std::uint64_t>(n);
    r = residual(a, out.x, b);
    rep.flops_high += 2 * n2;

    const double next = scaled_residual(inf_norm(r), a_norm, inf_norm(out.x), b_norm, n);
    rep.residual_history.push_back(next);
    rep.iterations = it;
    rep.converged = next <= cfg.tol;
    if (!rep.converged && !(next < be)) {
      rep.stagnated = true;
      break;
    }
    be = next;
  }
  rep.backward_error = rep.residual_history.back();
  return out;
}

}  // namespace mpfk
