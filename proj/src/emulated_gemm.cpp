#include "mpfk/emulated_gemm.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace mpfk {
namespace {

void validate_slicing(int slices, int slice_width) {
  if (slices < 1) throw ConfigError("slice count must be >= 1, got " + std::to_string(slices));
  if (slice_width < 1 || slice_width > 31) {
    throw ConfigError("slice width must be in [1, 31], got " + std::to_string(slice_width));
  }
}

void require_finite(const Eigen::Ref<const DenseMatrix>& m, const char* name) {
  const auto [i, j] = first_non_finite(m);
  if (i >= 0) {
    throw NonFiniteError(std::string(name) + " has a non-finite entry at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
  }
}

// Smallest e with |x| < 2^e for the largest |x|; 0 for an all-zero line.
int scale_exponent(double max_abs) {
  if (max_abs == 0.0) return 0;
  int e = 0;
  std::frexp(max_abs, &e);
  return e;
}

}  // namespace

std::string_view to_string(PairPolicy p) noexcept {
  return p == PairPolicy::triangular ? "triangular" : "full";
}

PairPolicy parse_pair_policy(std::string_view text) {
  if (text == "triangular") return PairPolicy::triangular;
  if (text == "full") return PairPolicy::full;
  throw ConfigError("unknown pair policy '" + std::string(text) + "' (expected triangular or full)");
}

SliceDecomposition split(const Eigen::Ref<const DenseMatrix>& m, Orientation orientation, int slices,
                         int slice_width) {
  validate_slicing(slices, slice_width);
  require_finite(m, "matrix");

  SliceDecomposition d;
  d.orientation = orientation;
  d.slice_width = slice_width;
  d.slices.assign(static_cast<std::size_t>(slices), SliceMatrix::Zero(m.rows(), m.cols()));

  const bool by_row = orientation == Orientation::by_row;
  const Index lines = by_row ? m.rows() : m.cols();
  const Index length = by_row ? m.cols() : m.rows();
  d.scale_exponents.resize(static_cast<std::size_t>(lines));

  for (Index line = 0; line < lines; ++line) {
    auto at = [&](Index t) -> std::pair<Index, Index> { return by_row ? std::pair{line, t} : std::pair{t, line}; };
    double max_abs = 0.0;
    for (Index t = 0; t < length; ++t) {
      const auto [i, j] = at(t);
      max_abs = std::max(max_abs, std::fabs(m(i, j)));
    }
    const int e = scale_exponent(max_abs);
    d.scale_exponents[static_cast<std::size_t>(line)] = e;
    if (max_abs == 0.0) continue;

    for (Index t = 0; t < length; ++t) {
      const auto [i, j] = at(t);
      // `rest` stays exact: each step removes the leading w bits of the residual.
      double rest = m(i, j);
      for (int p = 0; p < slices && rest != 0.0; ++p) {
        const int shift = slice_width * (p + 1) - e;
        const double digit = std::trunc(std::ldexp(rest, shift));
        d.slices[static_cast<std::size_t>(p)](i, j) = static_cast<std::int32_t>(digit);
        rest -= std::ldexp(digit, -shift);
      }
    }
  }
  return d;
}

DenseMatrix reconstruct(const SliceDecomposition& d) {
  DenseMatrix out = DenseMatrix::Zero(d.rows(), d.cols());
  const bool by_row = d.orientation == Orientation::by_row;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      const int e = d.scale_exponents[static_cast<std::size_t>(by_row ? i : j)];
      double acc = 0.0;
      for (int p = 0; p < d.slice_count(); ++p) {
        acc += std::ldexp(static_cast<double>(d.slices[static_cast<std::size_t>(p)](i, j)),
                          e - d.slice_width * (p + 1));
      }
      out(i, j) = acc;
    }
  }
  return out;
}

void check_overflow_guard(Index depth, int slice_width, int accumulator_bits) {
  if (accumulator_bits < 2 || accumulator_bits > 64) {
    throw ConfigError("accumulator_bits must be in [2, 64], got " + std::to_string(accumulator_bits));
  }
  if (depth <= 0) return;
  const int headroom = accumulator_bits - 1 - 2 * slice_width;
  const bool ok = headroom >= 0 && (headroom >= 63 || static_cast<std::uint64_t>(depth) <=
                                                          (std::uint64_t{1} << headroom));
  if (!ok) {
    throw OverflowGuardError("overflow guard: k * 2^(2w) = " + std::to_string(depth) + " * 2^" +
                             std::to_string(2 * slice_width) + " exceeds 2^" + std::to_string(accumulator_bits - 1));
  }
}

int slice_pair_count(int slices, PairPolicy policy) noexcept {
  return policy == PairPolicy::triangular ? slices * (slices + 1) / 2 : slices * slices;
}

DenseMatrix emulated_gemm(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b,
                          const EmulationConfig& cfg, EmulationStats* stats) {
  if (a.cols() != b.rows()) {
    throw DimensionError("emulated_gemm: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " but B is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  validate_slicing(cfg.slices, cfg.slice_width);
  check_overflow_guard(a.cols(), cfg.slice_width, cfg.accumulator_bits);
  require_finite(a, "A");
  require_finite(b, "B");

  const SliceDecomposition sa = split(a, Orientation::by_row, cfg.slices, cfg.slice_width);
  const SliceDecomposition sb = split(b, Orientation::by_col, cfg.slices, cfg.slice_width);
  const int s = cfg.slices;
  const int w = cfg.slice_width;
  const int max_level = cfg.pair_policy == PairPolicy::triangular ? s - 1 : 2 * s - 2;

  DenseMatrix c = DenseMatrix::Zero(a.rows(), b.cols());
  int multiplies = 0;
  for (int level = 0; level <= max_level; ++level) {
    for (int p = std::max(0, level - (s - 1)); p <= std::min(level, s - 1); ++p) {
      const int q = level - p;
      const AccumMatrix partial = integer_gemm(sa.slices[static_cast<std::size_t>(p)],
                                               sb.slices[static_cast<std::size_t>(q)], w, cfg.tile,
                                               cfg.accumulator_bits);
      ++multiplies;
      for (Index i = 0; i < c.rows(); ++i) {
        const int ea = sa.scale_exponents[static_cast<std::size_t>(i)];
        for (Index j = 0; j < c.cols(); ++j) {
          const int eb = sb.scale_exponents[static_cast<std::size_t>(j)];
          c(i, j) += std::ldexp(static_cast<double>(partial(i, j)), ea + eb - w * (level + 2));
        }
      }
    }
  }
  if (stats != nullptr) stats->slice_multiplies = multiplies;
  return c;
}

DenseMatrix native_gemm(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b) {
  if (a.cols() != b.rows()) throw DimensionError("native_gemm: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Index l = 0; l < a.cols(); ++l) acc += a(i, l) * b(l, j);
      c(i, j) = acc;
    }
  }
  return c;
}

int required_slices_for_exact(const Eigen::Ref<const DenseMatrix>& m, int slice_width, Orientation orientation) {
  validate_slicing(1, slice_width);
  require_finite(m, "matrix");
  const bool by_row = orientation == Orientation::by_row;
  const Index lines = by_row ? m.rows() : m.cols();
  int needed = 1;
  for (Index line = 0; line < lines; ++line) {
    const auto values = by_row ? DenseVector(m.row(line).transpose()) : DenseVector(m.col(line));
    const int e = scale_exponent(values.cwiseAbs().maxCoeff());
    for (const double v : values) {
      if (v == 0.0) continue;
      // Exponent of the lowest set bit of v.
      const std::uint64_t raw = std::bit_cast<std::uint64_t>(std::fabs(v));
      const int dexp = static_cast<int>(raw >> 52);
      const std::uint64_t sig = (raw & ((std::uint64_t{1} << 52) - 1)) | (dexp ? std::uint64_t{1} << 52 : 0);
      const int lsb = (dexp ? dexp - 1075 : -1074) + std::countr_zero(sig);
      const int bits = e - lsb;
      needed = std::max(needed, (bits + slice_width - 1) / slice_width);
    }
  }
  return needed;
}

DenseMatrix relative_error(const Eigen::Ref<const DenseMatrix>& c, const Eigen::Ref<const DenseMatrix>& ref) {
  if (c.rows() != ref.rows() || c.cols() != ref.cols()) throw DimensionError("relative_error: shape mismatch");
  DenseMatrix err(c.rows(), c.cols());
  for (Index i = 0; i < c.rows(); ++i) {
    for (Index j = 0; j < c.cols(); ++j) {
      const double diff = std::fabs(c(i, j) - ref(i, j));
      err(i, j) = ref(i, j) == 0.0 ? diff : diff / std::fabs(ref(i, j));
    }
  }
  return err;
}

GemmErrorReport gemm_error_report(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b,
                                  const EmulationConfig& cfg) {
  EmulationStats stats;
  const DenseMatrix c = emulated_gemm(a, b, cfg, &stats);
  const DenseMatrix ref = oracle_gemm_exact(a, b);
  const DenseMatrix err = relative_error(c, ref);

  GemmErrorReport r;
  r.m = a.rows();
  r.n = b.cols();
  r.k = a.cols();
  r.slices = cfg.slices;
  r.slice_width = cfg.slice_width;
  r.pair_policy = cfg.pair_policy;
  r.slice_multiplies = stats.slice_multiplies;
  const double mnk = static_cast<double>(r.m) * static_cast<double>(r.n) * static_cast<double>(r.k);
  r.integer_ops = 2.0 * mnk * stats.slice_multiplies;
  r.modeled_flops = 2.0 * mnk;
  if (err.size() > 0) {
    r.max_relative_error = err.maxCoeff();
    std::vector<double> values(err.data(), err.data() + err.size());
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    double median = *mid;
    if (values.size() % 2 == 0) median = 0.5 * (median + *std::max_element(values.begin(), mid));
    r.median_relative_error = median;
    r.native_max_relative_error = relative_error(native_gemm(a, b), ref).maxCoeff();
  }
  return r;
}

}  // namespace mpfk
