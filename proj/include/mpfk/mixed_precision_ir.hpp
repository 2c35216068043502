#pragma once

#include <cstdint>
#include <vector>

#include "mpfk/formats.hpp"
#include "mpfk/matrix.hpp"

namespace mpfk {

enum class Pivoting { partial, none };

std::string_view to_string(Pivoting p) noexcept;
Pivoting parse_pivoting(std::string_view text);

struct IRConfig {
  FormatSpec factor_format = builtin_format("fp16");
  RoundingMode rounding = RoundingMode::nearest_even();
  Pivoting pivoting = Pivoting::partial;
  /// Convergence threshold on hpl_backward_error.
  double tol = 16.0;
  int max_iters = 50;
};

/// Packed L\U factors (unit lower triangle implied) held as FP64 carriers of
/// factor_format values, with the row permutation applied to A.
struct LowPrecisionLU {
  DenseMatrix lu;
  /// perm[i] is the original row placed at position i.
  std::vector<Index> perm;
  FormatSpec format;
  RoundingMode rounding = RoundingMode::nearest_even();
  std::uint64_t factor_ops = 0;

  Index size() const noexcept { return lu.rows(); }
};

struct IRReport {
  int iterations = 0;
  /// hpl_backward_error after the initial solve and after each refinement step.
  std::vector<double> residual_history;
  bool converged = false;
  /// Set when a refinement step failed to reduce the scaled residual; the loop stops there.
  bool stagnated = false;
  double backward_error = 0.0;
  std::uint64_t flops_low = 0;
  std::uint64_t flops_high = 0;
};

struct IRResult {
  DenseVector x;
  IRReport report;
};

/// Right-looking LU in which every multiply, subtract and divide is rounded
/// separately to cfg.factor_format. An FP64 factor format runs natively.
/// Throws SingularMatrixError when a pivot rounds to zero (or overflows).
LowPrecisionLU lu_factor_lowprec(const Eigen::Ref<const DenseMatrix>& a, const IRConfig& cfg);

/// Forward and back substitution in the factor format; rhs is rounded to the
/// format on entry. `stream` supplies stochastic draws when the factor was
/// computed with stochastic rounding.
DenseVector lu_solve_lowprec(const LowPrecisionLU& lu, const Eigen::Ref<const DenseVector>& rhs,
                             SplitMix64* stream = nullptr, std::uint64_t* ops = nullptr);

/// b - A x in FP64; each row's dot product is accumulated left to right.
DenseVector residual(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& x,
                     const Eigen::Ref<const DenseVector>& b);

/// ||Ax - b||_inf / (eps (||A||_inf ||x||_inf + ||b||_inf) n), eps = 2^-53.
double hpl_backward_error(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& x,
                          const Eigen::Ref<const DenseVector>& b);

/// Native FP64 partial-pivot LU solve with a fixed operation order.
DenseVector fp64_lu_solve(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& b);

/// Factor once in low precision, then refine x <- x + LU^{-1}(b - Ax) with
/// FP64 residuals until hpl_backward_error <= cfg.tol or max_iters steps.
IRResult ir_solve(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseVector>& b,
                  const IRConfig& cfg = {});

/// Closed-form operation counts used to check the instrumentation.
std::uint64_t lu_factor_op_count(Index n) noexcept;
std::uint64_t lu_solve_op_count(Index n) noexcept;

}  // namespace mpfk
