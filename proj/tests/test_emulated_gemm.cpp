#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "mpfk/emulated_gemm.hpp"
#include "mpfk/random.hpp"

using namespace mpfk;

namespace {

DenseMatrix uniform(Index r, Index c, SplitMix64& rng, double scale = 2.0) {
  DenseMatrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform_centered();
  return m;
}

// Entries are 21-bit integers times 2^-21, then each row (or column) is
// scaled by a random power of two. Products of such operands sum exactly in FP64.
DenseMatrix short_mantissa(Index r, Index c, SplitMix64& rng, bool scale_rows) {
  DenseMatrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) {
      const auto q = static_cast<std::int64_t>(rng.next() % (1u << 21)) - (1 << 20);
      m(i, j) = std::ldexp(static_cast<double>(q), -20);
    }
  const Index lines = scale_rows ? r : c;
  for (Index t = 0; t < lines; ++t) {
    const int e = static_cast<int>(rng.next() % 41) - 20;
    if (scale_rows) m.row(t) *= std::ldexp(1.0, e);
    else m.col(t) *= std::ldexp(1.0, e);
  }
  return m;
}

bool bitwise_equal(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
  for (Index i = 0; i < x.size(); ++i)
    if (std::bit_cast<std::uint64_t>(x.data()[i]) != std::bit_cast<std::uint64_t>(y.data()[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("split of simple matrices") {
  DenseMatrix z = DenseMatrix::Zero(3, 4);
  const auto dz = split(z, Orientation::by_row, 3, 7);
  CHECK(dz.slice_count() == 3);
  for (const auto& s : dz.slices) CHECK(s.cwiseAbs().maxCoeff() == 0);
  CHECK(reconstruct(dz) == z);

  DenseMatrix m(1, 1);
  m << 0.75;
  const auto d = split(m, Orientation::by_row, 1, 7);
  CHECK(d.scale_exponents[0] == 0);
  CHECK(d.slices[0](0, 0) == 96);
  CHECK(reconstruct(d)(0, 0) == 0.75);

  DenseMatrix signs(2, 2);
  signs << 1.0, -1.0, 0.5, -0.5;
  CHECK(reconstruct(split(signs, Orientation::by_row, 1, 7)) == signs);
  CHECK(reconstruct(split(signs, Orientation::by_col, 1, 7)) == signs);
}

TEST_CASE("slices respect the width bound") {
  SplitMix64 rng(1);
  const DenseMatrix m = uniform(16, 16, rng, 1000.0);
  for (const auto orientation : {Orientation::by_row, Orientation::by_col}) {
    const auto d = split(m, orientation, 7, 7);
    for (const auto& s : d.slices) CHECK(s.cwiseAbs().maxCoeff() <= 127);
    CHECK(d.scale_exponents.size() == 16);
  }
}

TEST_CASE("reconstruction error is below the last slice weight") {
  SplitMix64 rng(2);
  const DenseMatrix m = uniform(16, 16, rng);
  for (int s = 1; s <= 7; ++s) {
    const auto d = split(m, Orientation::by_row, s, 7);
    const DenseMatrix r = reconstruct(d);
    for (Index i = 0; i < m.rows(); ++i) {
      const double bound = std::ldexp(1.0, d.scale_exponents[static_cast<std::size_t>(i)] - 7 * s);
      for (Index j = 0; j < m.cols(); ++j) CHECK(std::fabs(m(i, j) - r(i, j)) < bound);
    }
  }
}

TEST_CASE("split validates its input") {
  DenseMatrix m = DenseMatrix::Ones(3, 3);
  CHECK_THROWS_AS(split(m, Orientation::by_row, 0, 7), ConfigError);
  CHECK_THROWS_AS(split(m, Orientation::by_row, 2, 0), ConfigError);
  CHECK_THROWS_AS(split(m, Orientation::by_row, 2, 32), ConfigError);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    split(m, Orientation::by_row, 2, 7);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
  }
}

TEST_CASE("integer_gemm is exact") {
  SliceMatrix id = SliceMatrix::Identity(5, 5);
  SliceMatrix x(5, 3);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<std::int32_t>(i * 7 % 255) - 127;
  CHECK(integer_gemm(id, x, 7) == x.cast<std::int64_t>());

  SplitMix64 rng(4);
  SliceMatrix a(37, 64);
  SliceMatrix b(64, 29);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<std::int32_t>(rng.next() % 255) - 127;
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<std::int32_t>(rng.next() % 255) - 127;
  AccumMatrix naive = AccumMatrix::Zero(37, 29);
  for (Index i = 0; i < 37; ++i)
    for (Index j = 0; j < 29; ++j)
      for (Index l = 0; l < 64; ++l) naive(i, j) += std::int64_t{a(i, l)} * b(l, j);
  CHECK(integer_gemm(a, b, 7) == naive);
  CHECK(integer_gemm(a, b, 7, TileShape{3, 5, 7}) == naive);
  CHECK(integer_gemm(a, b, 7, TileShape{1, 1, 1}) == naive);
}

TEST_CASE("integer_gemm guards") {
  SliceMatrix a = SliceMatrix::Ones(2, 3);
  SliceMatrix b = SliceMatrix::Ones(2, 2);
  CHECK_THROWS_AS(integer_gemm(a, b, 7), DimensionError);
  SliceMatrix big = SliceMatrix::Constant(2, 2, 200);
  CHECK_THROWS_AS(integer_gemm(big, big, 7), OverflowGuardError);
  CHECK_THROWS_AS(check_overflow_guard(3, 31, 64), OverflowGuardError);
  CHECK_NOTHROW(check_overflow_guard(std::int64_t{1} << 49, 7, 64));
  CHECK_THROWS_AS(check_overflow_guard((std::int64_t{1} << 49) + 1, 7, 64), OverflowGuardError);
  CHECK_THROWS_AS(check_overflow_guard(1024, 7, 24), OverflowGuardError);
}

TEST_CASE("slice pair counts") {
  CHECK(slice_pair_count(7, PairPolicy::triangular) == 28);
  CHECK(slice_pair_count(7, PairPolicy::full) == 49);
  CHECK(slice_pair_count(1, PairPolicy::triangular) == 1);

  SplitMix64 rng(6);
  const DenseMatrix a = uniform(8, 8, rng);
  const DenseMatrix b = uniform(8, 8, rng);
  EmulationStats stats;
  emulated_gemm(a, b, {}, &stats);
  CHECK(stats.slice_multiplies == 28);
  EmulationConfig full;
  full.pair_policy = PairPolicy::full;
  emulated_gemm(a, b, full, &stats);
  CHECK(stats.slice_multiplies == 49);
}

TEST_CASE("emulated identity products are exact") {
  const DenseMatrix id = DenseMatrix::Identity(9, 9);
  CHECK(emulated_gemm(id, id) == id);
  EmulationConfig one;
  one.slices = 1;
  CHECK(emulated_gemm(id, id, one) == id);
  CHECK(emulated_gemm(DenseMatrix::Zero(4, 3), DenseMatrix::Zero(3, 2)) == DenseMatrix::Zero(4, 2));
}

TEST_CASE("emulated GEMM matches the oracle on short mantissas") {
  SplitMix64 rng(8);
  EmulationConfig full;
  full.slices = 3;
  full.pair_policy = PairPolicy::full;
  for (int t = 0; t < 10; ++t) {
    const DenseMatrix a = short_mantissa(16, 16, rng, true);
    const DenseMatrix b = short_mantissa(16, 16, rng, false);
    const DenseMatrix ref = oracle_gemm_exact(a, b);
    CHECK(bitwise_equal(emulated_gemm(a, b, full), ref));
    CHECK(bitwise_equal(emulated_gemm(a, b), ref));
  }
}

TEST_CASE("error shrinks as slices are added") {
  SplitMix64 rng(9);
  const DenseMatrix a = uniform(32, 32, rng);
  const DenseMatrix b = uniform(32, 32, rng);
  const DenseMatrix ref = oracle_gemm_exact(a, b);
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= 7; ++s) {
    EmulationConfig cfg;
    cfg.slices = s;
    const double err = relative_error(emulated_gemm(a, b, cfg), ref).maxCoeff();
    CHECK(err <= prev);
    prev = err;
  }
  EmulationConfig eight;
  eight.slices = 8;
  eight.pair_policy = PairPolicy::full;
  // Eight full 7-bit slices cover all 53 bits; only the FP64 recombination rounds.
  const DenseMatrix e8 = emulated_gemm(a, b, eight);
  CHECK(relative_error(e8, ref).maxCoeff() < 1e-12);
}

TEST_CASE("emulated GEMM is invariant under power-of-two scaling") {
  SplitMix64 rng(10);
  const DenseMatrix a = uniform(12, 20, rng);
  const DenseMatrix b = uniform(20, 9, rng);
  const DenseMatrix c = emulated_gemm(a, b);
  const DenseMatrix scaled = emulated_gemm(std::ldexp(1.0, 37) * a, std::ldexp(1.0, -11) * b);
  CHECK(bitwise_equal(scaled, std::ldexp(1.0, 26) * c));
  CHECK(bitwise_equal(emulated_gemm(a, b), c));
}

TEST_CASE("emulated GEMM handles rectangular and mismatched shapes") {
  SplitMix64 rng(11);
  const DenseMatrix a = uniform(5, 33, rng);
  const DenseMatrix b = uniform(33, 3, rng);
  const DenseMatrix c = emulated_gemm(a, b);
  CHECK(c.rows() == 5);
  CHECK(c.cols() == 3);
  CHECK(relative_error(c, oracle_gemm_exact(a, b)).maxCoeff() < 1e-6);
  CHECK_THROWS_AS(emulated_gemm(a, a), DimensionError);
  CHECK_THROWS_AS(oracle_gemm_exact(a, a), DimensionError);
}

TEST_CASE("exact oracle") {
  DenseMatrix a(1, 3);
  DenseMatrix b(3, 1);
  a << 0.1, 0.2, 1e-17;
  b << 0.3, -0.7, 3.0;
  // Correctly rounded value of the exact rational sum.
  CHECK(oracle_gemm_exact(a, b)(0, 0) == -0x1.c28f5c28f5c27p-4);
  CHECK(native_gemm(a, b)(0, 0) == -0x1.c28f5c28f5c26p-4);

  DenseMatrix c(1, 3);
  DenseMatrix d(3, 1);
  c << 1e16, 1.0, -1e16;
  d << 1.0, 1.0, 1.0;
  CHECK(oracle_gemm_exact(c, d)(0, 0) == 1.0);
  CHECK(native_gemm(c, d)(0, 0) == 0.0);

  SplitMix64 rng(12);
  const DenseMatrix x = uniform(7, 7, rng);
  const DenseMatrix y = uniform(7, 7, rng);
  // Single products are correctly rounded by the hardware multiplier.
  for (Index i = 0; i < 7; ++i) {
    CHECK(oracle_gemm_exact(x.row(i).leftCols(1), y.col(i).topRows(1))(0, 0) == x(i, 0) * y(0, i));
  }
  CHECK(oracle_gemm_exact(DenseMatrix::Identity(7, 7), x) == x);
}

TEST_CASE("exact oracle rounds subnormal results once") {
  DenseMatrix a(1, 1);
  DenseMatrix b(1, 1);
  a << std::ldexp(1.0, -537);
  b << std::ldexp(1.0, -537);
  CHECK(oracle_gemm_exact(a, b)(0, 0) == std::ldexp(1.0, -1074));
  b << std::ldexp(1.0, -538);
  CHECK(oracle_gemm_exact(a, b)(0, 0) == 0.0);  // exactly half the smallest subnormal: ties to even
  b << std::ldexp(3.0, -539);
  CHECK(oracle_gemm_exact(a, b)(0, 0) == std::ldexp(1.0, -1074));  // 0.75 ulp
  a << std::ldexp(1.0, 600);
  b << std::ldexp(1.0, 500);
  CHECK(oracle_gemm_exact(a, b)(0, 0) == std::numeric_limits<double>::infinity());
  a << -std::numeric_limits<double>::max();
  b << 1.0;
  CHECK(oracle_gemm_exact(a, b)(0, 0) == -std::numeric_limits<double>::max());
}

TEST_CASE("required slice counts") {
  CHECK(required_slices_for_exact(DenseMatrix::Identity(4, 4), 7) == 1);
  CHECK(required_slices_for_exact(DenseMatrix::Zero(2, 2), 7) == 1);
  DenseMatrix full(1, 1);
  full << 1.0 - std::ldexp(1.0, -53);
  CHECK(required_slices_for_exact(full, 7) == 8);
  DenseMatrix third(1, 1);
  third << 1.0 / 3.0;
  CHECK(required_slices_for_exact(third, 7) == 8);

  SplitMix64 rng(13);
  for (int t = 0; t < 20; ++t) {
    DenseMatrix m = uniform(3, 3, rng);
    const int bits = 1 + static_cast<int>(rng.next() % 50);
    m = m.unaryExpr([bits](double v) { return std::ldexp(std::trunc(std::ldexp(v, bits)), -bits); });
    const int s = required_slices_for_exact(m, 7);
    CHECK(reconstruct(split(m, Orientation::by_row, s, 7)) == m);
    if (s > 1) CHECK(reconstruct(split(m, Orientation::by_row, s - 1, 7)) != m);
  }
}

TEST_CASE("error report") {
  SplitMix64 rng(14);
  const DenseMatrix a = uniform(8, 6, rng);
  const DenseMatrix b = uniform(6, 4, rng);
  const GemmErrorReport r = gemm_error_report(a, b);
  CHECK(r.m == 8);
  CHECK(r.k == 6);
  CHECK(r.n == 4);
  CHECK(r.slice_multiplies == 28);
  CHECK(r.modeled_flops == 2.0 * 8 * 6 * 4);
  CHECK(r.integer_ops == 28 * r.modeled_flops);
  CHECK(r.median_relative_error <= r.max_relative_error);
  CHECK(r.max_relative_error < 1e-9);
  CHECK(parse_pair_policy("full") == PairPolicy::full);
  CHECK_THROWS_AS(parse_pair_policy("diagonal"), ConfigError);
}
