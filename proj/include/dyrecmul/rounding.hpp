#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dyrecmul/errors.hpp"

namespace dyrecmul {

enum class Rounding { HalfUp, HalfEven, Truncate };

/// Divides a non-negative integer by 2^shift under the given rounding mode.
constexpr std::int64_t round_shift(std::int64_t value, int shift, Rounding mode) {
  if (shift <= 0) return value << -shift;
  const std::int64_t quotient = value >> shift;
  const std::int64_t remainder = value & ((std::int64_t{1} << shift) - 1);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  switch (mode) {
    case Rounding::HalfUp:
      return remainder >= half ? quotient + 1 : quotient;
    case Rounding::HalfEven:
      if (remainder > half) return quotient + 1;
      if (remainder == half) return quotient + (quotient & 1);
      return quotient;
    case Rounding::Truncate:
      return quotient;
  }
  return quotient;
}

inline std::string_view to_string(Rounding mode) {
  switch (mode) {
    case Rounding::HalfUp: return "half-up";
    case Rounding::HalfEven: return "half-even";
    case Rounding::Truncate: return "truncate";
  }
  return "?";
}

inline Rounding parse_rounding(std::string_view text) {
  if (text == "half-up") return Rounding::HalfUp;
  if (text == "half-even") return Rounding::HalfEven;
  if (text == "truncate") return Rounding::Truncate;
  throw UsageError("unknown rounding mode '" + std::string(text) + "'");
}

}  // namespace dyrecmul
