#pragma once

// Reference implementations used only by the tests. They share no code with
// the library: values come from a direct field formula and rounding is a
// nearest-value search over the enumerated format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct Layout {
  int e;
  int m;
  bool e4m3;  // no inf, only S.1111.111 is NaN
};

inline constexpr Layout kE4M3{4, 3, true};
inline constexpr Layout kE5M2{5, 2, false};
inline constexpr Layout kFP16{5, 10, false};
inline constexpr Layout kBF16{8, 7, false};

inline double field_value(std::uint32_t bits, Layout l) {
  const int bias = (1 << (l.e - 1)) - 1;
  const std::uint32_t fmask = (1u << l.m) - 1;
  const std::uint32_t emask = (1u << l.e) - 1;
  const bool neg = (bits >> (l.e + l.m)) & 1u;
  const std::uint32_t E = (bits >> l.m) & emask;
  const std::uint32_t F = bits & fmask;
  double v;
  if (E == emask && (!l.e4m3 || F == fmask)) {
    v = (F == 0 && !l.e4m3) ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  } else if (E == 0) {
    v = static_cast<double>(F) * std::pow(2.0, 1 - bias - l.m);
  } else {
    v = (1.0 + static_cast<double>(F) / std::pow(2.0, l.m)) * std::pow(2.0, static_cast<int>(E) - bias);
  }
  return neg ? -v : v;
}

/// Nearest-value rounding by search over every finite non-negative pattern.
class NearestTable {
 public:
  explicit NearestTable(Layout l) : layout_(l) {
    const std::uint32_t half = 1u << (l.e + l.m);
    for (std::uint32_t b = 0; b < half; ++b) {
      const double v = field_value(b, l);
      if (std::isfinite(v)) entries_.push_back({v, b});
    }
    std::sort(entries_.begin(), entries_.end(), [](const Entry& x, const Entry& y) { return x.value < y.value; });
    const int bias = (1 << (l.e - 1)) - 1;
    const int emax_field = l.e4m3 ? (1 << l.e) - 1 : (1 << l.e) - 2;
    // First value past the largest finite one, on the same grid.
    overflow_ = max() + std::pow(2.0, emax_field - bias - l.m);
  }

  double max() const { return entries_.back().value; }

  /// Returns the pattern. Overflow returns `overflow_bits` (caller decides inf/saturation).
  std::uint32_t round(double v, std::uint32_t overflow_bits) const {
    const std::uint32_t sign = std::signbit(v) ? 1u << (layout_.e + layout_.m) : 0u;
    const double a = std::fabs(v);
    if (a >= overflow_) return sign | overflow_bits;
    if (a > max()) {
      const double dlo = a - max();
      const double dhi = overflow_ - a;
      // Tie: the virtual neighbour continues the pattern sequence, so its
      // parity is the opposite of the largest finite pattern.
      const bool max_even = (entries_.back().bits & 1u) == 0;
      if (dlo < dhi || (dlo == dhi && max_even)) return sign | entries_.back().bits;
      return sign | overflow_bits;
    }
    auto it = std::lower_bound(entries_.begin(), entries_.end(), a,
                               [](const Entry& e, double x) { return e.value < x; });
    if (it->value == a) return sign | it->bits;
    const Entry& hi = *it;
    const Entry& lo = *(it - 1);
    const double dlo = a - lo.value;
    const double dhi = hi.value - a;
    if (dlo < dhi) return sign | lo.bits;
    if (dhi < dlo) return sign | hi.bits;
    return sign | (((lo.bits & 1u) == 0) ? lo.bits : hi.bits);
  }

  /// Largest magnitude not above |v|, with v's sign (saturating at max).
  std::uint32_t truncate(double v) const {
    const std::uint32_t sign = std::signbit(v) ? 1u << (layout_.e + layout_.m) : 0u;
    const double a = std::fabs(v);
    auto it = std::upper_bound(entries_.begin(), entries_.end(), a,
                               [](double x, const Entry& e) { return x < e.value; });
    return sign | (it - 1)->bits;
  }

  double value(std::uint32_t bits) const { return field_value(bits, layout_); }

 private:
  struct Entry {
    double value;
    std::uint32_t bits;
  };
  Layout layout_;
  std::vector<Entry> entries_;
  double overflow_ = 0.0;
};

/// FP16 round-to-nearest-even of a double, as a double (inf on overflow).
inline double fp16(double v) {
  static const NearestTable table(kFP16);
  return table.value(table.round(v, 0x7C00u));
}

/// Textbook right-looking LU with partial pivoting where every multiply,
/// subtract and divide is rounded to FP16. Returns LU packed and the row order.
struct PackedLU {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> lu;
  std::vector<Eigen::Index> perm;
};

inline PackedLU fp16_lu(Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a, bool pivot) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = fp16(a(i, j));
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (pivot) {
      Eigen::Index p = k;
      for (Eigen::Index i = k + 1; i < n; ++i) {
        if (std::fabs(a(i, k)) > std::fabs(a(p, k))) p = i;
      }
      if (p != k) {
        a.row(k).swap(a.row(p));
        std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(p)]);
      }
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      a(i, k) = fp16(a(i, k) / a(k, k));
      for (Eigen::Index j = k + 1; j < n; ++j) a(i, j) = fp16(a(i, j) - fp16(a(i, k) * a(k, j)));
    }
  }
  return {a, perm};
}

/// Forward then backward substitution in FP16 on a permuted right-hand side.
inline Eigen::VectorXd fp16_lu_solve(const PackedLU& f, const Eigen::VectorXd& b) {
  const Eigen::Index n = f.lu.rows();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = fp16(b(f.perm[static_cast<std::size_t>(i)]));
    for (Eigen::Index j = 0; j < i; ++j) s = fp16(s - fp16(f.lu(i, j) * y(j)));
    y(i) = s;
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = y(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s = fp16(s - fp16(f.lu(i, j) * x(j)));
    x(i) = fp16(s / f.lu(i, i));
  }
  return x;
}

/// splitmix64, written out from its published constants.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace oracle
