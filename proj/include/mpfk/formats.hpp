#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mpfk/random.hpp"

namespace mpfk {

enum class SpecialSemantics {
  ieee_like,      ///< all-ones exponent encodes inf (zero mantissa) or NaN
  e4m3_extended,  ///< no infinities; only S.1111.111 is NaN
};

/// Bit-level description of a binary floating-point format.
///
/// `mantissa_bits` counts explicit fraction bits. For formats whose significand
/// is narrower than the container (TF32: 10 fraction bits in a 32-bit word) the
/// fraction occupies the high end of the container's fraction field and the
/// remaining low bits are zero.
struct FormatSpec {
  std::string name;
  int exponent_bits = 0;
  int mantissa_bits = 0;
  int bias = 0;
  int storage_bits = 0;
  SpecialSemantics special_semantics = SpecialSemantics::ieee_like;
  /// e4m3_extended only: overflow saturates to max finite (true) or gives NaN.
  bool saturate_overflow = true;

  /// Fraction field width of the container (differs from mantissa_bits for TF32).
  int container_mantissa_bits() const noexcept { return storage_bits - 1 - exponent_bits; }
  int min_normal_exponent() const noexcept { return 1 - bias; }
  /// Everything except FP128 can be encoded in 64 bits and decoded exactly to FP64.
  bool arithmetic_capable() const noexcept { return storage_bits <= 64; }

  friend bool operator==(const FormatSpec&, const FormatSpec&) = default;
};

/// Builds a custom IEEE-like format with the default bias 2^(e-1)-1.
FormatSpec make_format(std::string name, int exponent_bits, int mantissa_bits,
                       SpecialSemantics semantics = SpecialSemantics::ieee_like);

/// e4m3, e5m2, fp16, bf16, tf32, fp32, fp64, fp128. Throws FormatError otherwise.
FormatSpec builtin_format(std::string_view name);

std::vector<std::string> builtin_format_names();

/// Raw encoding together with the format that gives it meaning.
struct PackedScalar {
  std::uint64_t bits = 0;
  FormatSpec spec;

  friend bool operator==(const PackedScalar&, const PackedScalar&) = default;
};

/// Constructs a PackedScalar after checking the pattern is well formed.
PackedScalar pack(std::uint64_t bits, const FormatSpec& spec);

class RoundingMode {
 public:
  enum class Kind { nearest_even, toward_zero, stochastic };

  static constexpr RoundingMode nearest_even() noexcept { return RoundingMode(Kind::nearest_even, 0); }
  static constexpr RoundingMode toward_zero() noexcept { return RoundingMode(Kind::toward_zero, 0); }
  static constexpr RoundingMode stochastic(std::uint64_t seed) noexcept {
    return RoundingMode(Kind::stochastic, seed);
  }

  constexpr Kind kind() const noexcept { return kind_; }
  constexpr std::uint64_t seed() const noexcept { return seed_; }

  friend constexpr bool operator==(RoundingMode, RoundingMode) = default;

 private:
  constexpr RoundingMode(Kind kind, std::uint64_t seed) noexcept : kind_(kind), seed_(seed) {}
  Kind kind_;
  std::uint64_t seed_;
};

/// Parses "nearest_even", "toward_zero", or "stochastic[:seed]".
RoundingMode parse_rounding_mode(std::string_view text);
std::string to_string(RoundingMode mode);

enum class FloatClass { zero, subnormal, normal, inf, nan };
std::string_view to_string(FloatClass c) noexcept;

double decode(const PackedScalar& x);

/// Correctly rounded encoding of `v`. Stochastic mode draws once from a
/// splitmix64 stream seeded with the mode's seed.
PackedScalar encode(double v, const FormatSpec& spec, RoundingMode mode = RoundingMode::nearest_even());

FloatClass classify(const PackedScalar& x);

/// Rounds with one draw from `rng`; up with probability equal to the
/// fractional distance from the lower neighbour.
PackedScalar stochastic_round(double v, const FormatSpec& spec, SplitMix64& rng);

/// decode(encode(v)) without materializing the PackedScalar.
double round_to_format(double v, const FormatSpec& spec, RoundingMode mode = RoundingMode::nearest_even());

/// True when `v` is a value of the format (NaN counts when the format has one).
bool representable(double v, const FormatSpec& spec);

double max_finite(const FormatSpec& spec);
double min_positive_normal(const FormatSpec& spec);
double min_positive_subnormal(const FormatSpec& spec);
/// 2^-(mantissa_bits+1).
double unit_roundoff(const FormatSpec& spec);
/// Spacing of the format at |v| (subnormal spacing below the normal range).
double ulp(double v, const FormatSpec& spec);

std::uint64_t canonical_nan_bits(const FormatSpec& spec);

enum class OpKind { add, sub, mul, div, fma };

/// Correctly rounded `a op b` (or a*b+c for fma) in `spec`. Operands must
/// already be representable and the format at most 32 bits wide; both are
/// checked. Computed exactly with FP64 error-free transformations, then
/// rounded once.
double rounded_op(OpKind kind, double a, double b, double c, const FormatSpec& spec, RoundingMode mode);

/// Same as rounded_op but with stochastic draws taken from `rng` and without
/// the representability check; used by inner loops whose operands are
/// format values by construction.
double rounded_op_unchecked(OpKind kind, double a, double b, double c, const FormatSpec& spec,
                            RoundingMode mode, SplitMix64* rng);

}  // namespace mpfk
