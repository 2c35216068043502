#include <array>
#include <bit>
#include <cmath>

#include "mpfk/emulated_gemm.hpp"

namespace mpfk {
namespace {

// Two's-complement fixed-point accumulator wide enough for any sum of
// products of finite doubles: bit 0 weighs 2^-2148 (the smallest product of
// two subnormals), and 4352 bits cover the largest product with room for
// 2^200 terms of carry.
class ExactAccumulator {
 public:
  static constexpr int kLimbs = 68;
  static constexpr int kOffset = 2148;

  void clear() noexcept { limbs_.fill(0); }

  void add_product(double a, double b) noexcept {
    if (a == 0.0 || b == 0.0) return;
    const Parts pa = parts(a);
    const Parts pb = parts(b);
    const unsigned __int128 mag = static_cast<unsigned __int128>(pa.significand) * pb.significand;
    add_shifted(mag, pa.exponent + pb.exponent + kOffset, pa.negative != pb.negative);
  }

  double round_to_double() const noexcept {
    std::array<std::uint64_t, kLimbs> mag = limbs_;
    const bool negative = (mag.back() >> 63) != 0;
    if (negative) {
      unsigned carry = 1;
      for (auto& limb : mag) {
        limb = ~limb + carry;
        carry = (carry && limb == 0) ? 1 : 0;
      }
    }
    int top = -1;
    for (int i = kLimbs - 1; i >= 0; --i) {
      if (mag[static_cast<std::size_t>(i)] != 0) {
        top = i * 64 + 63 - std::countl_zero(mag[static_cast<std::size_t>(i)]);
        break;
      }
    }
    if (top < 0) return 0.0;

    const int msb_exp = top - kOffset;
    const int ulp_exp = std::max(msb_exp - 52, -1074);
    const int cut = ulp_exp + kOffset;  // bits below `cut` are rounded away
    std::uint64_t mant = extract(mag, cut, top - cut + 1);
    if (cut > 0) {
      const bool round_bit = bit(mag, cut - 1);
      const bool sticky = any_below(mag, cut - 1);
      if (round_bit && (sticky || (mant & 1))) ++mant;
    }
    const double v = std::ldexp(static_cast<double>(mant), ulp_exp);
    return negative ? -v : v;
  }

 private:
  struct Parts {
    std::uint64_t significand;
    int exponent;  // value = significand * 2^exponent
    bool negative;
  };

  static Parts parts(double x) noexcept {
    const std::uint64_t raw = std::bit_cast<std::uint64_t>(x);
    const int dexp = static_cast<int>((raw >> 52) & 0x7FF);
    std::uint64_t sig = raw & ((std::uint64_t{1} << 52) - 1);
    int e = -1074;
    if (dexp != 0) {
      sig |= std::uint64_t{1} << 52;
      e = dexp - 1075;
    }
    return {sig, e, (raw >> 63) != 0};
  }

  void add_shifted(unsigned __int128 mag, int shift, bool subtract) noexcept {
    const int limb = shift / 64;
    const int offset = shift % 64;
    std::array<std::uint64_t, 3> w{};
    w[0] = static_cast<std::uint64_t>(mag << offset);
    w[1] = static_cast<std::uint64_t>(offset == 0 ? (mag >> 64) : (mag >> (64 - offset)));
    w[2] = offset == 0 ? 0 : static_cast<std::uint64_t>((mag >> 64) >> (64 - offset));
    if (!subtract) {
      unsigned carry = 0;
      for (int i = limb; i < kLimbs; ++i) {
        const std::uint64_t addend = i - limb < 3 ? w[static_cast<std::size_t>(i - limb)] : 0;
        if (addend == 0 && carry == 0 && i - limb >= 3) break;
        auto& dst = limbs_[static_cast<std::size_t>(i)];
        const std::uint64_t s1 = dst + addend;
        const unsigned c1 = s1 < dst;
        const std::uint64_t s2 = s1 + carry;
        const unsigned c2 = s2 < s1;
        dst = s2;
        carry = c1 | c2;
      }
    } else {
      unsigned borrow = 0;
      for (int i = limb; i < kLimbs; ++i) {
        const std::uint64_t sub = i - limb < 3 ? w[static_cast<std::size_t>(i - limb)] : 0;
        if (sub == 0 && borrow == 0 && i - limb >= 3) break;
        auto& dst = limbs_[static_cast<std::size_t>(i)];
        const std::uint64_t d1 = dst - sub;
        const unsigned b1 = dst < sub;
        const std::uint64_t d2 = d1 - borrow;
        const unsigned b2 = d1 < borrow;
        dst = d2;
        borrow = b1 | b2;
      }
    }
  }

  static bool bit(const std::array<std::uint64_t, kLimbs>& m, int i) noexcept {
    return (m[static_cast<std::size_t>(i / 64)] >> (i % 64)) & 1;
  }

  static bool any_below(const std::array<std::uint64_t, kLimbs>& m, int i) noexcept {
    const int limb = i / 64;
    for (int l = 0; l < limb; ++l) {
      if (m[static_cast<std::size_t>(l)] != 0) return true;
    }
    const int offset = i % 64;
    return offset > 0 && (m[static_cast<std::size_t>(limb)] & ((std::uint64_t{1} << offset) - 1)) != 0;
  }

  // `count` (<= 53) bits starting at bit `from`.
  static std::uint64_t extract(const std::array<std::uint64_t, kLimbs>& m, int from, int count) noexcept {
    const int limb = from / 64;
    const int offset = from % 64;
    unsigned __int128 window = m[static_cast<std::size_t>(limb)];
    if (limb + 1 < kLimbs) window |= static_cast<unsigned __int128>(m[static_cast<std::size_t>(limb + 1)]) << 64;
    const std::uint64_t v = static_cast<std::uint64_t>(window >> offset);
    return count >= 64 ? v : v & ((std::uint64_t{1} << count) - 1);
  }

  std::array<std::uint64_t, kLimbs> limbs_{};
};

}  // namespace

DenseMatrix oracle_gemm_exact(const Eigen::Ref<const DenseMatrix>& a, const Eigen::Ref<const DenseMatrix>& b) {
  if (a.cols() != b.rows()) throw DimensionError("oracle_gemm_exact: inner dimensions differ");
  const auto [ia, ja] = first_non_finite(a);
  const auto [ib, jb] = first_non_finite(b);
  if (ia >= 0 || ib >= 0) throw NonFiniteError("oracle_gemm_exact: operands must be finite");

  DenseMatrix c(a.rows(), b.cols());
  ExactAccumulator acc;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      acc.clear();
      for (Index l = 0; l < a.cols(); ++l) acc.add_product(a(i, l), b(l, j));
      c(i, j) = acc.round_to_double();
    }
  }
  return c;
}

}  // namespace mpfk
