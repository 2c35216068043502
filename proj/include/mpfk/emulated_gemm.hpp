#pragma once

// FP64 matrix multiplication emulated with exact integer products of
// narrow slices (Ozaki-style splitting).
//
// Each row of A (column of B) is scaled by a power of two so its largest
// entry lies in (-1, 1), then peeled into s signed slices of w bits each by
// repeated scale-by-2^w and truncation. Slice products are computed exactly
// in 64-bit integer arithmetic and recombined in FP64 in a fixed order.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mpfk/errors.hpp"
#include "mpfk/matrix.hpp"

namespace mpfk {

enum class Orientation { by_row, by_col };
enum class PairPolicy { triangular, full };

std::string_view to_string(PairPolicy p) noexcept;
PairPolicy parse_pair_policy(std::string_view text);

using SliceMatrix = Matrix<std::int32_t>;
using AccumMatrix = Matrix<std::int64_t>;

struct SliceDecomposition {
  Orientation orientation = Orientation::by_row;
  /// One exponent per row (by_row) or column (by_col): max |m| < 2^e.
  std::vector<int> scale_exponents;
  /// slices[p] carries weight 2^(e - w(p+1)); |entry| <= 2^w - 1.
  std::vector<SliceMatrix> slices;
  int slice_width = 7;

  int slice_count() const noexcept { return static_cast<int>(slices.size()); }
  Index rows() const noexcept { return slices.empty() ? 0 : slices.front().rows(); }
  Index cols() const noexcept { return slices.empty() ? 0 : slices.front().cols(); }
};

/// Tile shape of the integer kernel; (16, 16, 8) mirrors a tensor-core MMA block.
struct TileShape {
  Index m = 16;
  Index n = 16;
  Index k = 8;
};

struct EmulationConfig {
  int slices = 7;
  int slice_width = 7;
  PairPolicy pair_policy = PairPolicy::triangular;
  int accumulator_bits = 64;
  TileShape tile{};
};

struct EmulationStats {
  int slice_multiplies = 0;
};

SliceDecomposition split(const Eigen::Ref<const DenseMatrix>& m, Orientation orientation, int slices,
                         int slice_width);

/// Sum of weighted slices, accumulated per entry from slice 0 upward in FP64.
DenseMatrix reconstruct(const SliceDecomposition& d);

/// Throws OverflowGuardError unless k * 2^(2w) <= 2^(accumulator_bits - 1).
void check_overflow_guard(Index depth, int slice_width, int accumulator_bits);

/// Exact integer product A * B with int64 accumulation, tiled by `tile`.
/// Entries must satisfy |x| <= 2^w - 1; the guard is checked before any work.
template <typename DerivedA, typename DerivedB>
AccumMatrix integer_gemm(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                         int slice_width, TileShape tile = {}, int accumulator_bits = 64) {
  static_assert(std::is_integral_v<typename DerivedA::Scalar> && std::is_integral_v<typename DerivedB::Scalar>,
                "integer_gemm takes integer matrices");
  if (a.cols() != b.rows()) {
    throw DimensionError("integer_gemm: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  if (tile.m < 1 || tile.n < 1 || tile.k < 1) throw ConfigError("integer_gemm: tile extents must be positive");
  check_overflow_guard(a.cols(), slice_width, accumulator_bits);
  const std::int64_t limit = (std::int64_t{1} << slice_width) - 1;
  auto in_range = [limit](const auto& m) {
    return m.size() == 0 || (m.template cast<std::int64_t>().cwiseAbs().maxCoeff() <= limit);
  };
  if (!in_range(a.derived()) || !in_range(b.derived())) {
    throw OverflowGuardError("integer_gemm: operand entry exceeds 2^" + std::to_string(slice_width) + " - 1");
  }

  const Index rows = a.rows();
  const Index cols = b.cols();
  const Index depth = a.cols();
  AccumMatrix c = AccumMatrix::Zero(rows, cols);
  for (Index i0 = 0; i0 < rows; i0 += tile.m) {
    const Index i1 = std::min(rows, i0 + tile.m);
    for (Index j0 = 0; j0 < cols; j0 += tile.n) {
      const Index j1 = std::min(cols, j0 + tile.n);
      for (Index l0 = 0; l0 < depth; l0 += tile.k) {
        const Index l1 = std::min(depth, l0 + tile.k);
        for (Index i = i0; i < i1; ++i) {
          for (Index l = l0; l < l1; ++l) {
            const std::int64_t ail = a(i, l);
            for (Index j = j0; j < j1; ++j) c(i, j) += ail * static_cast<std::int64_t>(b(l, j));
          }
        }
      }
    }
  }
  return c;
}

/// Emulated FP64 product. Slice pairs are recombined in ascending p+q, then
/// ascending p; the triangular policy keeps pairs with p+q < s.
DenseMatrix emulated_gemm(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b,
                          const EmulationConfig& cfg = {}, EmulationStats* stats = nullptr);

/// Reference product: each output entry is accumulated exactly in a wide
/// fixed-point integer and rounded once to nearest-even FP64.
DenseMatrix oracle_gemm_exact(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b);

/// Plain FP64 triple loop with sequential accumulation (no FMA).
DenseMatrix native_gemm(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b);

/// Smallest s with reconstruct(split(m, orientation, s, w)) == m.
int required_slices_for_exact(const Eigen::Ref<const DenseMatrix>& m, int slice_width,
                              Orientation orientation = Orientation::by_row);

/// Number of slice pairs admitted by the policy: s(s+1)/2 or s^2.
int slice_pair_count(int slices, PairPolicy policy) noexcept;

/// Elementwise |c - ref| / |ref| (absolute error where ref == 0).
DenseMatrix relative_error(const Eigen::Ref<const DenseMatrix>& c, const Eigen::Ref<const DenseMatrix>& ref);

struct GemmErrorReport {
  Index m = 0, n = 0, k = 0;
  int slices = 0;
  int slice_width = 0;
  PairPolicy pair_policy = PairPolicy::triangular;
  double max_relative_error = 0.0;
  double median_relative_error = 0.0;
  /// Same statistic for native FP64 GEMM on the same operands.
  double native_max_relative_error = 0.0;
  int slice_multiplies = 0;
  /// Integer multiply-adds issued, counted as 2 ops each.
  double integer_ops = 0.0;
  /// 2mnk: the FP64 work the emulation stands in for.
  double modeled_flops = 0.0;
};

GemmErrorReport gemm_error_report(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b,
                                  const EmulationConfig& cfg = {});

}  // namespace mpfk
