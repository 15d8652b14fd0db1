#pragma once

// The DyRecMul pipeline: INT8 -> float(1,2,5) encoder, LUT mantissa
// multiplier, float -> integer decoder and the final sign stage.
//
//   X --encode--> (sign, exp, mnt) --LUTs(|W|)--> zmnt --decode(exp)--> |Z|
//                                                                  \-> sign(X) ^ sign(W)

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "dyrecmul/errors.hpp"
#include "dyrecmul/lut_fabric.hpp"
#include "dyrecmul/rounding.hpp"

namespace dyrecmul {

enum class Mode { Signed, Unsigned };

inline std::string_view to_string(Mode mode) {
  return mode == Mode::Signed ? "signed" : "unsigned";
}

inline Mode parse_mode(std::string_view text) {
  if (text == "signed") return Mode::Signed;
  if (text == "unsigned") return Mode::Unsigned;
  throw UsageError("unknown mode '" + std::string(text) + "'");
}

inline constexpr int kExpBits = 2;
inline constexpr int kMntBits = 5;
inline constexpr int kMaxExp = (1 << kExpBits) - 1;
inline constexpr int kMaxMnt = (1 << kMntBits) - 1;

constexpr int operand_min(Mode mode) { return mode == Mode::Signed ? -128 : 0; }
constexpr int operand_max(Mode mode) { return mode == Mode::Signed ? 127 : 255; }

inline void check_operand(int value, Mode mode, std::string_view name = "operand") {
  if (value < operand_min(mode) || value > operand_max(mode)) {
    throw UsageError(std::string(name) + " " + std::to_string(value) + " out of range [" +
                     std::to_string(operand_min(mode)) + ", " +
                     std::to_string(operand_max(mode)) + "] for " + std::string(to_string(mode)) +
                     " mode");
  }
}

/// Spec of the mantissa multiplier for each mode.
constexpr MultiplierSpec mantissa_spec(Mode mode) {
  return mode == Mode::Signed ? kSignedInt8Spec : kUnsignedInt8Spec;
}

/// Largest decoded magnitude: 7 bits signed, 8 bits unsigned.
constexpr std::uint32_t decode_limit(Mode mode) { return mode == Mode::Signed ? 127u : 255u; }

/// Knobs for calibration experiments. Defaults are the reference datapath.
struct DatapathOptions {
  Rounding encoder_rounding = Rounding::HalfUp;
  Rounding product_rounding = Rounding::HalfUp;
  bool clamp_w128 = false;  ///< map |W| = 128 to 127 before configuration

  friend constexpr bool operator==(const DatapathOptions&, const DatapathOptions&) = default;
};

/// Minifloat with 2-bit exponent and 5-bit mantissa; the sign is unused in
/// unsigned mode, float(0,2,5).
struct Float125 {
  bool sign = false;
  int exp = 0;
  int mnt = 0;

  /// Magnitude represented, mnt * 2^exp.
  constexpr int magnitude() const { return mnt << exp; }
  friend constexpr bool operator==(const Float125&, const Float125&) = default;
};

/// Normalizes |x| so its leading one lands in the top mantissa bit, then
/// rounds away the bits below. A rounding carry to 32 bumps the exponent.
inline Float125 encode(int x, Mode mode, Rounding rounding = Rounding::HalfUp) {
  check_operand(x, mode, "X");
  Float125 f;
  f.sign = mode == Mode::Signed && x < 0;
  const auto magnitude = static_cast<std::uint32_t>(std::abs(x));
  if (magnitude == 0) return f;
  const int msb = std::bit_width(magnitude) - 1;
  f.exp = std::max(0, msb - (kMntBits - 1));
  f.mnt = static_cast<int>(round_shift(magnitude, f.exp, rounding));
  if (f.mnt > kMaxMnt) {
    f.exp += 1;
    f.mnt >>= 1;
  }
  // Unsigned magnitudes >= 248 cannot carry into a fourth exponent step.
  if (f.exp > kMaxExp) {
    f.exp = kMaxExp;
    f.mnt = kMaxMnt;
  }
  return f;
}

/// zmnt << exp, saturated to the output width.
inline std::uint32_t decode(int exp, std::uint32_t zmnt, Mode mode = Mode::Signed) {
  if (exp < 0 || exp > kMaxExp) throw UsageError("exponent out of range");
  if (zmnt > static_cast<std::uint32_t>(kMaxMnt)) throw UsageError("mantissa out of range");
  return std::min(zmnt << exp, decode_limit(mode));
}

inline void check_mantissa_chain(const ConfigChain& chain) {
  const auto& spec = chain.spec();
  if (spec.b1 != kMntBits || spec.k != kMntBits) {
    throw UsageError("mantissa multiplier needs a chain with b1=5 and k=5");
  }
}

/// Result mantissa from the emulated LUT fabric configured for |W|.
inline std::uint32_t mantissa_mul(const Float125& xf, const ConfigChain& w_chain) {
  check_mantissa_chain(w_chain);
  return lut_eval(w_chain, static_cast<std::uint32_t>(xf.mnt));
}

struct ProductTrace {
  Float125 x;
  std::uint32_t w_magnitude = 0;  ///< constant the LUTs were configured with
  std::uint32_t zmnt = 0;
  bool decode_saturated = false;
  bool negative = false;
};

struct ApproxProduct {
  int int8_out = 0;           ///< decoded result, product scaled by 2^-shift
  std::int64_t wide_out = 0;  ///< zmnt * 2^(exp + shift), signed
  std::optional<ProductTrace> trace;

  friend bool operator==(const ApproxProduct& a, const ApproxProduct& b) {
    return a.int8_out == b.int8_out && a.wide_out == b.wide_out;
  }
};

inline std::uint32_t weight_magnitude(int w, const DatapathOptions& options) {
  auto magnitude = static_cast<std::uint32_t>(std::abs(w));
  if (options.clamp_w128 && magnitude == 128) magnitude = 127;
  return magnitude;
}

inline bool product_negative(int x, int w, Mode mode) {
  return mode == Mode::Signed && ((x < 0) != (w < 0));
}

namespace detail {

inline ApproxProduct finish_product(const Float125& xf, std::uint32_t w_magnitude,
                                    std::uint32_t zmnt, bool negative, Mode mode,
                                    bool want_trace) {
  const std::uint32_t raw = zmnt << xf.exp;
  const std::uint32_t magnitude = std::min(raw, decode_limit(mode));
  const std::int64_t wide = static_cast<std::int64_t>(zmnt)
                            << (xf.exp + mantissa_spec(mode).shift());
  ApproxProduct p;
  p.int8_out = negative ? -static_cast<int>(magnitude) : static_cast<int>(magnitude);
  p.wide_out = negative ? -wide : wide;
  if (want_trace) p.trace = ProductTrace{xf, w_magnitude, zmnt, raw != magnitude, negative};
  return p;
}

}  // namespace detail

/// A weight resident in the multiplier: the chain configured for |W| plus
/// the sign bit that feeds the two's-complement stage.
struct LoadedWeight {
  const ConfigChain* chain = nullptr;
  int value = 0;
};

/// Multiplier with its shared configuration memory. The memory is built once;
/// afterwards the object is read-only and safe to share between threads.
class Multiplier {
 public:
  explicit Multiplier(Mode mode = Mode::Signed, DatapathOptions options = {})
      : mode_(mode), options_(options),
        memory_(mantissa_spec(mode), options.product_rounding) {}

  Mode mode() const { return mode_; }
  const DatapathOptions& options() const { return options_; }
  const ConfigMemory& memory() const { return memory_; }

  /// Retrieves the configuration for a new W (a reconfiguration).
  LoadedWeight load(int w) const {
    check_operand(w, mode_, "W");
    return {&memory_.fetch(weight_magnitude(w, options_)), w};
  }

  ApproxProduct multiply(int x, const LoadedWeight& w, bool want_trace = false) const {
    const Float125 xf = encode(x, mode_, options_.encoder_rounding);
    const std::uint32_t zmnt = mantissa_mul(xf, *w.chain);
    return detail::finish_product(xf, *w.chain->op2(), zmnt, product_negative(x, w.value, mode_),
                                  mode_, want_trace);
  }

  ApproxProduct multiply(int x, int w, bool want_trace = false) const {
    return multiply(x, load(w), want_trace);
  }

 private:
  Mode mode_;
  DatapathOptions options_;
  ConfigMemory memory_;
};

/// Single multiplication that configures its own chain.
inline ApproxProduct multiply(int x, int w, Mode mode, const DatapathOptions& options = {},
                              bool want_trace = false) {
  check_operand(x, mode, "X");
  check_operand(w, mode, "W");
  const std::uint32_t w_magnitude = weight_magnitude(w, options);
  const ConfigChain chain =
      gen_config_chain(w_magnitude, mantissa_spec(mode), options.product_rounding);
  const Float125 xf = encode(x, mode, options.encoder_rounding);
  return detail::finish_product(xf, w_magnitude, mantissa_mul(xf, chain),
                                product_negative(x, w, mode), mode, want_trace);
}

/// Same arithmetic without the LUT fabric: encode, round the mantissa
/// product arithmetically, shift back.
inline ApproxProduct multiply_closed_form(int x, int w, Mode mode,
                                          const DatapathOptions& options = {}) {
  check_operand(x, mode, "X");
  check_operand(w, mode, "W");
  const MultiplierSpec spec = mantissa_spec(mode);
  const Float125 xf = encode(x, mode, options.encoder_rounding);
  const std::uint32_t w_magnitude = weight_magnitude(w, options);
  const std::int64_t q = round_shift(std::int64_t{xf.mnt} * w_magnitude, spec.shift(),
                                     options.product_rounding);
  const auto zmnt = static_cast<std::uint32_t>(std::min<std::int64_t>(q, kMaxMnt));
  return detail::finish_product(xf, w_magnitude, zmnt, product_negative(x, w, mode), mode, false);
}

inline std::int64_t exact_multiply(int x, int w, Mode mode) {
  check_operand(x, mode, "X");
  check_operand(w, mode, "W");
  return std::int64_t{x} * w;
}

// Multiply-accumulate with a 32-bit saturating accumulator.

struct Accumulator {
  std::int32_t value = 0;
  bool saturated = false;  ///< sticky
};

inline Accumulator accumulate(Accumulator acc, std::int64_t addend) {
  constexpr std::int64_t kMin = std::numeric_limits<std::int32_t>::min();
  constexpr std::int64_t kMax = std::numeric_limits<std::int32_t>::max();
  std::int64_t sum = std::int64_t{acc.value} + addend;
  if (sum > kMax || sum < kMin) {
    acc.saturated = true;
    sum = std::clamp(sum, kMin, kMax);
  }
  acc.value = static_cast<std::int32_t>(sum);
  return acc;
}

inline Accumulator mac_step(Accumulator acc, int x, const LoadedWeight& w,
                            const Multiplier& multiplier) {
  return accumulate(acc, multiplier.multiply(x, w).wide_out);
}

// Static LUT cost estimate from the component counts of the INT8 design.

enum class Variant { Signed, Unsigned, Mac };

inline std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::Signed: return "signed";
    case Variant::Unsigned: return "unsigned";
    case Variant::Mac: return "mac";
  }
  return "?";
}

inline Variant parse_variant(std::string_view text) {
  if (text == "signed") return Variant::Signed;
  if (text == "unsigned") return Variant::Unsigned;
  if (text == "mac") return Variant::Mac;
  throw UsageError("unknown variant '" + std::string(text) + "'");
}

struct LutCost {
  int cfglut = 0;
  int encoder = 0;
  int decoder = 0;
  int twos_complement = 0;  ///< doubles as the MAC adder/subtractor
  int config_bits = 0;

  /// Plain component sum. Synthesis reports fewer (25 for signed) after
  /// cross-component packing, which this estimate does not model.
  int total_luts() const { return cfglut + encoder + decoder + twos_complement; }
};

inline constexpr int kEncoderLuts = 7;
inline constexpr int kDecoderLuts = 7;
inline constexpr int kTwosComplementLuts = 8;

inline LutCost estimate_lut_cost(const MultiplierSpec& spec, Variant variant) {
  spec.validate();
  LutCost cost;
  cost.cfglut = spec.b1 >= kLutAddressBits ? cfglut_count(spec.b1, spec.k) : spec.k;
  cost.encoder = kEncoderLuts;
  cost.decoder = kDecoderLuts;
  cost.twos_complement = variant == Variant::Unsigned ? 0 : kTwosComplementLuts;
  cost.config_bits = spec.config_bits();
  return cost;
}

/// key=value rendering of one multiplication, one field per line.
inline std::string format_trace(int x, int w, Mode mode, const ApproxProduct& p) {
  std::ostringstream out;
  const std::int64_t exact = std::int64_t{x} * w;
  const std::int64_t abs_error = std::llabs(exact - p.wide_out);
  out << "x=" << x << '\n' << "w=" << w << '\n' << "mode=" << to_string(mode) << '\n';
  if (p.trace) {
    const auto& t = *p.trace;
    out << "x_sign=" << (t.x.sign ? 1 : 0) << '\n'
        << "x_exp=" << t.x.exp << '\n'
        << "x_mnt=" << t.x.mnt << '\n'
        << "w_mag=" << t.w_magnitude << '\n'
        << "z_mnt=" << t.zmnt << '\n'
        << "exp=" << t.x.exp << '\n'
        << "decode_saturated=" << (t.decode_saturated ? 1 : 0) << '\n'
        << "negate=" << (t.negative ? 1 : 0) << '\n';
  }
  out << "int8_out=" << p.int8_out << '\n' << "wide_out=" << p.wide_out << '\n';
  if (p.trace) {
    char rel[32];
    if (exact != 0) {
      std::snprintf(rel, sizeof rel, "%.6g",
                    static_cast<double>(abs_error) / static_cast<double>(std::llabs(exact)));
    } else {
      std::snprintf(rel, sizeof rel, "%s", abs_error == 0 ? "0" : "inf");
    }
    out << "exact=" << exact << '\n' << "abs_error=" << abs_error << '\n' << "rel_error=" << rel
        << '\n';
  }
  return out.str();
}

}  // namespace dyrecmul
