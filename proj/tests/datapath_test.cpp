#include <gtest/gtest.h>

#include <cstdlib>
#include <limits>
#include <numeric>

#include "dyrecmul/datapath.hpp"

namespace dyrecmul {
namespace {

// Oracle for the encoder: the smallest exponent whose rounded mantissa fits
// in 5 bits. No bit scanning.
Float125 oracle_encode(int x) {
  const int m = std::abs(x);
  for (int e = 0; e <= 3; ++e) {
    const int mnt = (2 * m + (1 << e)) / (2 << e);  // round half up of m / 2^e
    if (mnt <= 31) return {x < 0, e, mnt};
  }
  return {x < 0, 3, 31};
}

TEST(Encode, Examples) {
  EXPECT_EQ(encode(0, Mode::Signed), (Float125{false, 0, 0}));
  EXPECT_EQ(encode(-96, Mode::Signed), (Float125{true, 2, 24}));
  EXPECT_EQ(encode(127, Mode::Signed), (Float125{false, 3, 16}));
  EXPECT_EQ(encode(-128, Mode::Signed), (Float125{true, 3, 16}));
  EXPECT_EQ(encode(31, Mode::Signed), (Float125{false, 0, 31}));
  EXPECT_EQ(encode(63, Mode::Signed), (Float125{false, 2, 16}));
}

TEST(Encode, MatchesOracleOnAllSignedInputs) {
  for (int x = -128; x <= 127; ++x) EXPECT_EQ(encode(x, Mode::Signed), oracle_encode(x)) << x;
}

TEST(Encode, UnsignedSaturatesAtTopExponent) {
  EXPECT_EQ(encode(255, Mode::Unsigned), (Float125{false, 3, 31}));
  EXPECT_EQ(encode(248, Mode::Unsigned), (Float125{false, 3, 31}));
  EXPECT_EQ(encode(247, Mode::Unsigned), (Float125{false, 3, 31}));
  EXPECT_EQ(encode(200, Mode::Unsigned), (Float125{false, 3, 25}));
  for (int x = 0; x <= 255; ++x) EXPECT_FALSE(encode(x, Mode::Unsigned).sign);
}

TEST(Encode, ReconstructionBound) {
  for (Mode mode : {Mode::Signed, Mode::Unsigned}) {
    for (int x = operand_min(mode); x <= operand_max(mode); ++x) {
      const Float125 f = encode(x, mode);
      const int err = std::abs(std::abs(x) - f.magnitude());
      if (f.exp == 0) {
        EXPECT_EQ(err, 0) << x;
      } else if (std::abs(x) <= 31 << 3) {
        EXPECT_LE(err, 1 << (f.exp - 1)) << x;
      } else {
        EXPECT_EQ(f.magnitude(), 31 << 3) << x;  // saturated top of the unsigned range
      }
      EXPECT_LE(f.exp, 3);
      EXPECT_LE(f.mnt, 31);
      if (std::abs(x) >= 16) {
        EXPECT_GE(f.mnt, 16) << x;
      }
    }
  }
}

TEST(Encode, RejectsOutOfRange) {
  EXPECT_THROW(encode(128, Mode::Signed), UsageError);
  EXPECT_THROW(encode(-1, Mode::Unsigned), UsageError);
  EXPECT_THROW(encode(256, Mode::Unsigned), UsageError);
}

TEST(Decode, ShiftAndSaturation) {
  for (std::uint32_t m = 0; m <= 31; ++m) EXPECT_EQ(decode(0, m), m);
  EXPECT_EQ(decode(2, 24), 96u);
  EXPECT_EQ(decode(3, 16), 127u);
  EXPECT_EQ(decode(3, 15), 120u);
  EXPECT_EQ(decode(3, 31, Mode::Unsigned), 248u);
  EXPECT_THROW(decode(4, 1), UsageError);
  EXPECT_THROW(decode(0, 32), UsageError);
}

TEST(Decode, MonotoneInMantissa) {
  for (int e = 0; e <= 3; ++e) {
    for (std::uint32_t m = 1; m <= 31; ++m) EXPECT_LE(decode(e, m - 1), decode(e, m));
  }
}

TEST(MantissaMul, Examples) {
  auto q = [](int mnt, std::uint32_t w) {
    return mantissa_mul(Float125{false, 0, mnt}, gen_config_chain(w, kSignedInt8Spec));
  };
  EXPECT_EQ(q(16, 64), 8u);
  EXPECT_EQ(q(0, 99), 0u);
  EXPECT_EQ(q(31, 127), 31u);
  EXPECT_THROW(mantissa_mul(Float125{}, gen_config_chain(3, MultiplierSpec{5, 5, 3})), UsageError);
}

TEST(Multiply, Examples) {
  for (int w = -128; w <= 127; ++w) {
    const ApproxProduct p = multiply(0, w, Mode::Signed);
    EXPECT_EQ(p.int8_out, 0);
    EXPECT_EQ(p.wide_out, 0);
  }
  const ApproxProduct p = multiply(64, 64, Mode::Signed, {}, true);
  EXPECT_EQ(p.wide_out, 4096);
  EXPECT_EQ(p.int8_out, 32);
  ASSERT_TRUE(p.trace);
  EXPECT_EQ(p.trace->x, (Float125{false, 2, 16}));
  EXPECT_EQ(p.trace->zmnt, 8u);

  const ApproxProduct pos = multiply(5, 7, Mode::Signed);
  const ApproxProduct neg = multiply(-5, 7, Mode::Signed);
  EXPECT_EQ(neg.wide_out, -pos.wide_out);
  EXPECT_EQ(neg.int8_out, -pos.int8_out);
}

TEST(Multiply, DecoderSaturationIsTraced) {
  // 127 -> (exp 3, mnt 16); 16 * 127 / 128 rounds to 16; 16 << 3 = 128 -> 127.
  const ApproxProduct p = multiply(127, 127, Mode::Signed, {}, true);
  EXPECT_EQ(p.int8_out, 127);
  EXPECT_EQ(p.wide_out, 16384);
  EXPECT_TRUE(p.trace->decode_saturated);
  EXPECT_EQ(multiply(-128, 127, Mode::Signed).int8_out, -127);
}

TEST(Multiply, SignAntisymmetry) {
  const Multiplier m(Mode::Signed);
  for (int x = -127; x <= 127; ++x) {
    for (int w = -128; w <= 127; ++w) {
      ASSERT_EQ(m.multiply(-x, w).wide_out, -m.multiply(x, w).wide_out) << x << "," << w;
    }
  }
}

TEST(Multiply, XorSignRuleAndRange) {
  const Multiplier m(Mode::Signed);
  for (int x = -128; x <= 127; ++x) {
    for (int w = -128; w <= 127; ++w) {
      const ApproxProduct p = m.multiply(x, w);
      ASSERT_LE(std::abs(p.int8_out), 127);
      if (p.int8_out != 0) {
        ASSERT_EQ(p.int8_out < 0, (x < 0) != (w < 0));
      }
      if (p.wide_out != 0) {
        ASSERT_EQ(p.wide_out < 0, (x < 0) != (w < 0));
      }
      const int exp = encode(x, Mode::Signed).exp;
      ASSERT_EQ(p.wide_out % (std::int64_t{1} << (7 + exp)), 0);
    }
  }
}

TEST(Multiply, LutPathMatchesClosedFormAllVariants) {
  for (Mode mode : {Mode::Signed, Mode::Unsigned}) {
    for (Rounding r : {Rounding::HalfUp, Rounding::HalfEven, Rounding::Truncate}) {
      for (bool clamp : {false, true}) {
        const DatapathOptions options{r, r, clamp};
        const Multiplier m(mode, options);
        for (int x = operand_min(mode); x <= operand_max(mode); ++x) {
          for (int w = operand_min(mode); w <= operand_max(mode); ++w) {
            ASSERT_EQ(m.multiply(x, w), multiply_closed_form(x, w, mode, options)) << x << "," << w;
          }
        }
      }
    }
  }
}

TEST(Multiply, SelfConfiguringPathMatchesCachedMemory) {
  const Multiplier m(Mode::Signed);
  for (int x = -128; x <= 127; x += 7) {
    for (int w = -128; w <= 127; w += 3) ASSERT_EQ(multiply(x, w, Mode::Signed), m.multiply(x, w));
  }
}

// Powers of two 2^a, 2^b (<= 64) multiply exactly once the mantissa product
// keeps its single one-bit above the 7 dropped bits: min(a, 4) + b >= 7.
// Below that the product rounds to 0 or a neighboring power.
TEST(Multiply, PowerOfTwoExactness) {
  const Multiplier m(Mode::Signed);
  int exact_pairs = 0;
  for (int a = 0; a <= 6; ++a) {
    for (int b = 0; b <= 6; ++b) {
      for (int sx : {1, -1}) {
        for (int sw : {1, -1}) {
          const int x = sx * (1 << a), w = sw * (1 << b);
          const bool expect_exact = std::min(a, 4) + b >= 7;
          const std::int64_t approx = m.multiply(x, w).wide_out;
          if (expect_exact) {
            ++exact_pairs;
            EXPECT_EQ(approx, std::int64_t{x} * w) << x << "," << w;
          } else {
            EXPECT_NE(approx, std::int64_t{x} * w) << x << "," << w;
          }
        }
      }
    }
  }
  EXPECT_EQ(exact_pairs, 4 * 18);
}

TEST(Multiply, MaximumRelativeErrorIsPinned) {
  // 65/63, from an exhaustive exact-rational sweep in an independent script.
  const Multiplier m(Mode::Signed);
  std::int64_t best_num = 0, best_den = 1;
  for (int x = -128; x <= 127; ++x) {
    for (int w = -128; w <= 127; ++w) {
      const std::int64_t exact = std::int64_t{x} * w;
      if (exact == 0) continue;
      const std::int64_t num = std::llabs(exact - m.multiply(x, w).wide_out);
      const std::int64_t den = std::llabs(exact);
      if (num * best_den > best_num * den) {
        best_num = num;
        best_den = den;
      }
    }
  }
  const std::int64_t g = std::gcd(best_num, best_den);
  EXPECT_EQ(best_num / g, 65);
  EXPECT_EQ(best_den / g, 63);
}

TEST(Multiply, ClampW128) {
  const DatapathOptions clamp{Rounding::HalfUp, Rounding::HalfUp, true};
  for (int x = -128; x <= 127; ++x) {
    EXPECT_EQ(multiply(x, -128, Mode::Signed, clamp).wide_out,
              -multiply(x, 127, Mode::Signed, clamp).wide_out);
  }
  EXPECT_EQ(multiply(64, -128, Mode::Signed).wide_out, -8192);
}

TEST(Multiply, UnsignedModeHasNoSignStage) {
  const Multiplier m(Mode::Unsigned);
  EXPECT_EQ(m.multiply(255, 255).wide_out, 31 * 256 * 8);  // zmnt saturates at 31
  EXPECT_EQ(m.multiply(128, 128).wide_out, 16384);
  for (int x = 0; x <= 255; x += 5) {
    for (int w = 0; w <= 255; w += 3) ASSERT_GE(m.multiply(x, w).int8_out, 0);
  }
  EXPECT_THROW(m.multiply(-1, 3), UsageError);
}

TEST(Mac, AccumulatesWideProducts) {
  const Multiplier m(Mode::Signed);
  const LoadedWeight w = m.load(64);
  Accumulator acc;
  EXPECT_EQ(mac_step(acc, 0, w, m).value, 0);
  for (int i = 0; i < 3; ++i) acc = mac_step(acc, 64, w, m);
  EXPECT_EQ(acc.value, 12288);
  EXPECT_FALSE(acc.saturated);
}

TEST(Mac, SaturatesWithStickyFlag) {
  const Multiplier m(Mode::Signed);
  Accumulator acc{std::numeric_limits<std::int32_t>::max(), false};
  acc = mac_step(acc, 64, m.load(64), m);
  EXPECT_TRUE(acc.saturated);
  EXPECT_EQ(acc.value, std::numeric_limits<std::int32_t>::max());
  acc = mac_step(acc, -64, m.load(64), m);
  EXPECT_TRUE(acc.saturated);
  EXPECT_EQ(acc.value, std::numeric_limits<std::int32_t>::max() - 4096);

  Accumulator low{std::numeric_limits<std::int32_t>::min(), false};
  low = mac_step(low, -1 * 64, m.load(64), m);
  EXPECT_TRUE(low.saturated);
  EXPECT_EQ(low.value, std::numeric_limits<std::int32_t>::min());
}

TEST(LutCostEstimate, ComponentCounts) {
  const LutCost s = estimate_lut_cost(kSignedInt8Spec, Variant::Signed);
  EXPECT_EQ(s.cfglut, 5);
  EXPECT_EQ(s.encoder, 7);
  EXPECT_EQ(s.decoder, 7);
  EXPECT_EQ(s.twos_complement, 8);
  EXPECT_EQ(s.config_bits, 160);
  EXPECT_EQ(s.total_luts(), 27);

  const LutCost wide = estimate_lut_cost(MultiplierSpec{8, 8, 16}, Variant::Signed);
  EXPECT_EQ(wide.cfglut, 128);
  EXPECT_EQ(wide.config_bits, 4096);

  EXPECT_EQ(estimate_lut_cost(kUnsignedInt8Spec, Variant::Unsigned).twos_complement, 0);
  EXPECT_EQ(estimate_lut_cost(kSignedInt8Spec, Variant::Mac).twos_complement, 8);
  EXPECT_EQ(estimate_lut_cost(MultiplierSpec{3, 7, 5}, Variant::Signed).cfglut, 5);
}

TEST(Trace, ContainsPipelineFields) {
  const std::string t = format_trace(64, 64, Mode::Signed, multiply(64, 64, Mode::Signed, {}, true));
  for (const char* field : {"x_exp=2\n", "x_mnt=16\n", "z_mnt=8\n", "wide_out=4096\n", "exact=4096\n",
                            "abs_error=0\n"}) {
    EXPECT_NE(t.find(field), std::string::npos) << field;
  }
}

}  // namespace
}  // namespace dyrecmul
