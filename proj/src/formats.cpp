#include "mpfk/formats.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <limits>

#include "mpfk/errors.hpp"

namespace mpfk {
namespace {

constexpr std::uint64_t low_mask(int bits) noexcept {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

int max_biased_exponent(const FormatSpec& s) noexcept {
  const int all_ones = (1 << s.exponent_bits) - 1;
  return s.special_semantics == SpecialSemantics::ieee_like ? all_ones - 1 : all_ones;
}

std::uint64_t sign_mask(const FormatSpec& s) noexcept { return std::uint64_t{1} << (s.storage_bits - 1); }

std::uint64_t max_finite_magnitude(const FormatSpec& s) noexcept {
  const std::uint64_t mmask = low_mask(s.mantissa_bits);
  const std::uint64_t be = static_cast<std::uint64_t>(max_biased_exponent(s));
  const std::uint64_t frac =
      s.special_semantics == SpecialSemantics::ieee_like ? mmask : mmask - 1;  // S.1111.111 is NaN
  return ((be << s.mantissa_bits) | frac) << (s.container_mantissa_bits() - s.mantissa_bits);
}

std::uint64_t infinity_magnitude(const FormatSpec& s) noexcept {
  const std::uint64_t all_ones = low_mask(s.exponent_bits);
  return all_ones << s.container_mantissa_bits();
}

void require_arithmetic(const FormatSpec& s, const char* what) {
  if (!s.arithmetic_capable()) {
    throw UnsupportedOperation(std::string(what) + " is not supported for format '" + s.name +
                               "' (metadata only)");
  }
}

double decode_bits(std::uint64_t bits, const FormatSpec& s) {
  const int m = s.mantissa_bits;
  const int shift = s.container_mantissa_bits() - m;
  const bool negative = (bits & sign_mask(s)) != 0;
  const std::uint64_t mag = bits & ~sign_mask(s);
  const std::uint64_t frac = (mag >> shift) & low_mask(m);
  const int be = static_cast<int>(mag >> s.container_mantissa_bits());
  const int all_ones = (1 << s.exponent_bits) - 1;

  double value;
  if (be == all_ones && s.special_semantics == SpecialSemantics::ieee_like) {
    value = frac == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  } else if (be == all_ones && frac == low_mask(m)) {
    value = std::numeric_limits<double>::quiet_NaN();
  } else if (be == 0) {
    value = std::ldexp(static_cast<double>(frac), s.min_normal_exponent() - m);
  } else {
    value = std::ldexp(static_cast<double>(frac | (std::uint64_t{1} << m)), be - s.bias - m);
  }
  return negative ? -value : value;
}

// Rounds the exact value hi + lo (|lo| <= ulp(hi)/2, as produced by the
// error-free transformations below) to `s`. `u` is the uniform draw used by
// stochastic rounding.
std::uint64_t encode_bits(double hi, double lo, const FormatSpec& s, RoundingMode::Kind kind, double u) {
  using Kind = RoundingMode::Kind;
  if (std::isnan(hi)) return canonical_nan_bits(s);

  const std::uint64_t sign = std::signbit(hi) ? sign_mask(s) : 0;
  const bool ieee = s.special_semantics == SpecialSemantics::ieee_like;
  const std::uint64_t max_mag = max_finite_magnitude(s);

  auto overflow = [&]() -> std::uint64_t {
    if (kind == Kind::toward_zero) return sign | max_mag;
    if (ieee) return sign | infinity_magnitude(s);
    return s.saturate_overflow ? (sign | max_mag) : canonical_nan_bits(s);
  };

  if (std::isinf(hi)) {
    if (ieee) return sign | infinity_magnitude(s);
    return s.saturate_overflow ? (sign | max_mag) : canonical_nan_bits(s);
  }
  if (hi == 0.0) return sign;

  const int m = s.mantissa_bits;
  const std::uint64_t raw = std::bit_cast<std::uint64_t>(std::fabs(hi));
  const int dexp = static_cast<int>(raw >> 52);
  std::uint64_t sig = raw & low_mask(52);
  int lsb_exp;  // exponent of sig's least significant bit
  if (dexp == 0) {
    lsb_exp = -1074;
  } else {
    sig |= std::uint64_t{1} << 52;
    lsb_exp = dexp - 1075;
  }
  const int value_exp = lsb_exp + std::bit_width(sig) - 1;
  int exp = std::max(value_exp, s.min_normal_exponent());
  const int target_lsb = exp - m;
  const int shift = target_lsb - lsb_exp;

  std::uint64_t q;
  std::uint64_t rem = 0;
  std::uint64_t half = 0;
  double frac;  // remainder as a fraction of one target ulp
  if (shift <= 0) {
    q = sig << -shift;
    frac = 0.0;
  } else if (shift >= 64) {
    q = 0;
    rem = 1;  // nonzero, strictly below half
    half = 2;
    frac = std::ldexp(static_cast<double>(sig), -shift);
  } else {
    q = sig >> shift;
    rem = sig & low_mask(shift);
    half = std::uint64_t{1} << (shift - 1);
    frac = std::ldexp(static_cast<double>(rem), -shift);
  }

  // Direction of the low-order tail relative to |hi|.
  const int tail = lo == 0.0 ? 0 : (std::signbit(lo) == std::signbit(hi) ? 1 : -1);
  bool up = false;
  bool step_down = false;  // exact grid point with a tail toward zero
  switch (kind) {
    case Kind::nearest_even:
      if (rem > half) {
        up = true;
      } else if (rem == half && rem != 0) {
        up = tail > 0 || (tail == 0 && (q & 1));
      }
      break;
    case Kind::toward_zero:
      step_down = rem == 0 && tail < 0;
      break;
    case Kind::stochastic:
      if (rem == 0 && tail != 0) {
        const double tail_frac = std::ldexp(std::fabs(lo), -target_lsb);
        if (tail > 0) {
          up = u < tail_frac;
        } else {
          step_down = !(u < 1.0 - tail_frac);
        }
      } else {
        up = u < frac;
      }
      break;
  }

  if (up) ++q;
  if (q == (std::uint64_t{1} << (m + 1))) {
    q >>= 1;
    ++exp;
  }
  std::uint64_t biased;
  if (q < (std::uint64_t{1} << m)) {
    biased = 0;  // subnormal or zero; only reachable when exp == min_normal_exponent
  } else {
    const int be = exp + s.bias;
    if (be > max_biased_exponent(s)) return overflow();
    biased = static_cast<std::uint64_t>(be);
  }
  std::uint64_t mag = ((biased << m) | (q & low_mask(m))) << (s.container_mantissa_bits() - m);
  if (mag > max_mag) return overflow();
  if (step_down && mag > 0) --mag;
  return sign | mag;
}

// Exact a op b as an unevaluated sum hi + lo.
struct ExactSum {
  double hi;
  double lo;
};

ExactSum two_sum(double a, double b) noexcept {
  const double s = a + b;
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return {s, std::isfinite(s) ? err : 0.0};
}

ExactSum exact_op(OpKind kind, double a, double b, double c) noexcept {
  switch (kind) {
    case OpKind::add:
      return two_sum(a, b);
    case OpKind::sub:
      return two_sum(a, -b);
    case OpKind::mul: {
      const double p = a * b;
      return {p, std::isfinite(p) ? std::fma(a, b, -p) : 0.0};
    }
    case OpKind::div: {
      const double qt = a / b;
      if (!std::isfinite(qt) || b == 0.0) return {qt, 0.0};
      const double r = std::fma(-qt, b, a);  // exact remainder
      return {qt, r / b};
    }
    case OpKind::fma: {
      // Products of <= 26-bit significands are exact in FP64.
      const double p = a * b;
      return two_sum(p, c);
    }
  }
  return {std::numeric_limits<double>::quiet_NaN(), 0.0};
}

}  // namespace

FormatSpec make_format(std::string name, int exponent_bits, int mantissa_bits, SpecialSemantics semantics) {
  if (exponent_bits < 2 || exponent_bits > 15 || mantissa_bits < 1 || 1 + exponent_bits + mantissa_bits > 64) {
    throw FormatError("invalid format geometry for '" + name + "'");
  }
  FormatSpec s;
  s.name = std::move(name);
  s.exponent_bits = exponent_bits;
  s.mantissa_bits = mantissa_bits;
  s.bias = (1 << (exponent_bits - 1)) - 1;
  s.storage_bits = 1 + exponent_bits + mantissa_bits;
  s.special_semantics = semantics;
  return s;
}

FormatSpec builtin_format(std::string_view name) {
  if (name == "e4m3") return make_format("e4m3", 4, 3, SpecialSemantics::e4m3_extended);
  if (name == "e5m2") return make_format("e5m2", 5, 2);
  if (name == "fp16") return make_format("fp16", 5, 10);
  if (name == "bf16") return make_format("bf16", 8, 7);
  if (name == "tf32") {
    FormatSpec s = make_format("tf32", 8, 10);
    s.storage_bits = 32;  // FP32 container, low 13 fraction bits zero
    return s;
  }
  if (name == "fp32") return make_format("fp32", 8, 23);
  if (name == "fp64") return make_format("fp64", 11, 52);
  if (name == "fp128") {
    FormatSpec s;
    s.name = "fp128";
    s.exponent_bits = 15;
    s.mantissa_bits = 112;
    s.bias = 16383;
    s.storage_bits = 128;
    return s;
  }
  std::string known;
  for (const auto& n : builtin_format_names()) known += (known.empty() ? "" : ", ") + n;
  throw FormatError("unknown format '" + std::string(name) + "' (expected one of: " + known + ")");
}

std::vector<std::string> builtin_format_names() {
  return {"e4m3", "e5m2", "fp16", "bf16", "tf32", "fp32", "fp64", "fp128"};
}

PackedScalar pack(std::uint64_t bits, const FormatSpec& spec) {
  require_arithmetic(spec, "bit-pattern encoding");
  if (spec.storage_bits < 64 && (bits >> spec.storage_bits) != 0) {
    throw FormatError("bit pattern does not fit in " + std::to_string(spec.storage_bits) + "-bit format '" +
                      spec.name + "'");
  }
  const int pad = spec.container_mantissa_bits() - spec.mantissa_bits;
  if ((bits & low_mask(pad)) != 0) {
    throw FormatError("bit pattern has nonzero padding bits for format '" + spec.name + "'");
  }
  return PackedScalar{bits, spec};
}

RoundingMode parse_rounding_mode(std::string_view text) {
  if (text == "nearest_even" || text == "nearest") return RoundingMode::nearest_even();
  if (text == "toward_zero") return RoundingMode::toward_zero();
  if (text == "stochastic") return RoundingMode::stochastic(0);
  constexpr std::string_view prefix = "stochastic:";
  if (text.starts_with(prefix)) {
    std::uint64_t seed = 0;
    const auto digits = text.substr(prefix.size());
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
    if (ec == std::errc{} && ptr == digits.data() + digits.size()) return RoundingMode::stochastic(seed);
  }
  throw ConfigError("unknown rounding mode '" + std::string(text) +
                    "' (expected nearest_even, toward_zero, or stochastic[:seed])");
}

std::string to_string(RoundingMode mode) {
  switch (mode.kind()) {
    case RoundingMode::Kind::nearest_even:
      return "nearest_even";
    case RoundingMode::Kind::toward_zero:
      return "toward_zero";
    case RoundingMode::Kind::stochastic:
      return "stochastic:" + std::to_string(mode.seed());
  }
  return "?";
}

std::string_view to_string(FloatClass c) noexcept {
  switch (c) {
    case FloatClass::zero:
      return "zero";
    case FloatClass::subnormal:
      return "subnormal";
    case FloatClass::normal:
      return "normal";
    case FloatClass::inf:
      return "inf";
    case FloatClass::nan:
      return "nan";
  }
  return "?";
}

double decode(const PackedScalar& x) {
  require_arithmetic(x.spec, "decode");
  return decode_bits(pack(x.bits, x.spec).bits, x.spec);
}

PackedScalar encode(double v, const FormatSpec& spec, RoundingMode mode) {
  require_arithmetic(spec, "encode");
  double u = 0.0;
  if (mode.kind() == RoundingMode::Kind::stochastic) u = SplitMix64(mode.seed()).uniform01();
  return PackedScalar{encode_bits(v, 0.0, spec, mode.kind(), u), spec};
}

FloatClass classify(const PackedScalar& x) {
  const double v = decode(x);
  if (std::isnan(v)) return FloatClass::nan;
  if (std::isinf(v)) return FloatClass::inf;
  if (v == 0.0) return FloatClass::zero;
  const std::uint64_t be = (x.bits & ~sign_mask(x.spec)) >> x.spec.container_mantissa_bits();
  return be == 0 ? FloatClass::subnormal : FloatClass::normal;
}

PackedScalar stochastic_round(double v, const FormatSpec& spec, SplitMix64& rng) {
  require_arithmetic(spec, "stochastic rounding");
  const double u = rng.uniform01();
  return PackedScalar{encode_bits(v, 0.0, spec, RoundingMode::Kind::stochastic, u), spec};
}

double round_to_format(double v, const FormatSpec& spec, RoundingMode mode) {
  require_arithmetic(spec, "rounding");
  double u = 0.0;
  if (mode.kind() == RoundingMode::Kind::stochastic) u = SplitMix64(mode.seed()).uniform01();
  return decode_bits(encode_bits(v, 0.0, spec, mode.kind(), u), spec);
}

bool representable(double v, const FormatSpec& spec) {
  if (std::isnan(v)) return true;
  if (std::isinf(v)) return spec.special_semantics == SpecialSemantics::ieee_like;
  const double r = decode_bits(encode_bits(v, 0.0, spec, RoundingMode::Kind::nearest_even, 0.0), spec);
  return r == v && std::signbit(r) == std::signbit(v);
}

double max_finite(const FormatSpec& spec) {
  require_arithmetic(spec, "max_finite");
  return decode_bits(max_finite_magnitude(spec), spec);
}

double min_positive_normal(const FormatSpec& spec) {
  require_arithmetic(spec, "min_positive_normal");
  return std::ldexp(1.0, spec.min_normal_exponent());
}

double min_positive_subnormal(const FormatSpec& spec) {
  require_arithmetic(spec, "min_positive_subnormal");
  return std::ldexp(1.0, spec.min_normal_exponent() - spec.mantissa_bits);
}

double unit_roundoff(const FormatSpec& spec) { return std::ldexp(1.0, -spec.mantissa_bits - 1); }

double ulp(double v, const FormatSpec& spec) {
  require_arithmetic(spec, "ulp");
  if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  const int e = v == 0.0 ? spec.min_normal_exponent() : std::max(std::ilogb(v), spec.min_normal_exponent());
  return std::ldexp(1.0, e - spec.mantissa_bits);
}

std::uint64_t canonical_nan_bits(const FormatSpec& s) {
  if (s.special_semantics == SpecialSemantics::e4m3_extended) {
    return (low_mask(s.exponent_bits) << s.container_mantissa_bits()) |
           (low_mask(s.mantissa_bits) << (s.container_mantissa_bits() - s.mantissa_bits));
  }
  const std::uint64_t quiet = std::uint64_t{1} << (s.container_mantissa_bits() - 1);
  return infinity_magnitude(s) | quiet;
}

double rounded_op_unchecked(OpKind kind, double a, double b, double c, const FormatSpec& spec,
                            RoundingMode mode, SplitMix64* rng) {
  const ExactSum exact = exact_op(kind, a, b, c);
  double u = 0.0;
  if (mode.kind() == RoundingMode::Kind::stochastic) {
    u = rng != nullptr ? rng->uniform01() : SplitMix64(mode.seed()).uniform01();
  }
  return decode_bits(encode_bits(exact.hi, exact.lo, spec, mode.kind(), u), spec);
}

double rounded_op(OpKind kind, double a, double b, double c, const FormatSpec& spec, RoundingMode mode) {
  if (spec.storage_bits > 32) {
    throw UnsupportedOperation("rounded_op requires a format of at most 32 bits; '" + spec.name + "' has " +
                      std::to_string(spec.storage_bits));
  }
  const bool uses_c = kind == OpKind::fma;
  for (double operand : {a, b, uses_c ? c : 0.0}) {
    if (!representable(operand, spec)) {
      throw FormatError("operand " + std::to_string(operand) + " is not representable in '" + spec.name + "'");
    }
  }
  return rounded_op_unchecked(kind, a, b, c, spec, mode, nullptr);
}

}  // namespace mpfk
