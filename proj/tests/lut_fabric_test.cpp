#include <gtest/gtest.h>

#include <sstream>

#include "dyrecmul/lut_fabric.hpp"

namespace dyrecmul {
namespace {

constexpr MultiplierSpec kSmallSpec{5, 5, 3};  // 5-bit x 5-bit, top 3 bits

// Oracle: integer round-half-up of a*op2/2^shift with saturation, written
// without round_shift().
std::uint32_t oracle_q(std::uint32_t a, std::uint32_t op2, int shift, int k) {
  const std::uint64_t num = 2ull * a * op2 + (1ull << shift);
  const std::uint64_t q = num / (2ull << shift);
  const std::uint64_t limit = (1ull << k) - 1;
  return static_cast<std::uint32_t>(q < limit ? q : limit);
}

TEST(LutFabric, SmallChainAddress31) {
  const ConfigChain chain = gen_config_chain(23, kSmallSpec);
  EXPECT_EQ(kSmallSpec.shift(), 7);
  EXPECT_EQ(lut_eval(chain, 31), 6u);  // round(713 / 128)
  EXPECT_FALSE(chain.lut(0, 0).at(31));
  EXPECT_TRUE(chain.lut(0, 1).at(31));
  EXPECT_TRUE(chain.lut(0, 2).at(31));
  EXPECT_EQ(lut_eval(chain, 0), 0u);
}

TEST(LutFabric, SmallChainSerializedImage) {
  // Frozen from an independent script applying the same shift convention.
  EXPECT_EQ(bitstream_to_hex(serialize(gen_config_chain(23, kSmallSpec))), "fff00000800ffe007c0fc1f8");
}

TEST(LutFabric, ZeroOperandGivesZeroTables) {
  for (const MultiplierSpec spec : {kSmallSpec, kSignedInt8Spec, MultiplierSpec{8, 8, 16}}) {
    const ConfigChain chain = gen_config_chain(0, spec);
    ASSERT_EQ(chain.luts().size(), static_cast<std::size_t>(spec.lut_count()));
    for (const auto& lut : chain.luts()) EXPECT_EQ(lut.bits, 0u);
  }
}

TEST(LutFabric, SmallConstantRoundsToZero) {
  EXPECT_EQ(lut_eval(gen_config_chain(1, kSignedInt8Spec), 16), 0u);  // round(16/128)
}

TEST(LutFabric, ExhaustiveOracleEquivalenceInt8) {
  int mismatches = 0;
  for (std::uint32_t op2 = 0; op2 <= 128; ++op2) {
    const ConfigChain chain = gen_config_chain(op2, kSignedInt8Spec);
    for (std::uint32_t a = 0; a < 32; ++a) {
      if (lut_eval(chain, a) != oracle_q(a, op2, 7, 5)) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(LutFabric, SaturatesWhenRoundingReachesTwoToK) {
  // 31 * 31 / 2^5 = 30.03 -> 30 fits; 31 * 32 / 32 = 31; use k=4 to force q >= 16.
  const MultiplierSpec spec{5, 5, 4};  // shift 6
  const ConfigChain chain = gen_config_chain(32, spec);
  EXPECT_EQ(lut_eval(chain, 31), 15u);  // round(992/64) = 16 -> 15
  EXPECT_EQ(lut_eval(chain, 30), 15u);  // 960/64 = 15
  EXPECT_EQ(lut_eval(chain, 2), 1u);
}

TEST(LutFabric, ReplicatedGroupsGiveExact8x8Multiplier) {
  const MultiplierSpec spec{8, 8, 16};
  EXPECT_EQ(spec.shift(), 0);
  EXPECT_EQ(spec.lut_count(), 128);
  EXPECT_EQ(spec.config_bits(), 4096);
  for (std::uint32_t op2 : {0u, 1u, 77u, 200u, 255u}) {
    const ConfigChain chain = gen_config_chain(op2, spec);
    for (std::uint32_t a = 0; a < 256; ++a) ASSERT_EQ(lut_eval(chain, a), a * op2);
  }
}

TEST(LutFabric, NarrowOperandUsesLowAddressesOnly) {
  const MultiplierSpec spec{3, 4, 4};  // shift 3
  const ConfigChain chain = gen_config_chain(13, spec);
  EXPECT_EQ(chain.luts().size(), 4u);
  for (std::uint32_t a = 0; a < 8; ++a) EXPECT_EQ(lut_eval(chain, a), oracle_q(a, 13, 3, 4));
  EXPECT_THROW(lut_eval(chain, 8), UsageError);
}

TEST(LutFabric, RejectsBadArguments) {
  EXPECT_THROW(gen_config_chain(129, kSignedInt8Spec), UsageError);
  EXPECT_NO_THROW(gen_config_chain(128, kSignedInt8Spec));
  EXPECT_THROW(gen_config_chain(1, MultiplierSpec{9, 7, 5}), UsageError);
  EXPECT_THROW(gen_config_chain(1, MultiplierSpec{5, 2, 8}), UsageError);  // negative shift
  EXPECT_THROW(lut_eval(gen_config_chain(3, kSignedInt8Spec), 32), UsageError);
}

TEST(LutFabric, HalfEvenVariant) {
  // 8 * 8 / 128 = 0.5 and 24 * 8 / 128 = 1.5
  const ConfigChain up = gen_config_chain(8, kSignedInt8Spec, Rounding::HalfUp);
  const ConfigChain even = gen_config_chain(8, kSignedInt8Spec, Rounding::HalfEven);
  EXPECT_EQ(lut_eval(up, 8), 1u);
  EXPECT_EQ(lut_eval(even, 8), 0u);
  EXPECT_EQ(lut_eval(up, 24), 2u);
  EXPECT_EQ(lut_eval(even, 24), 2u);
}

TEST(CfglutCount, MatchesReplicationFormula) {
  EXPECT_EQ(cfglut_count(8, 16), 128);
  EXPECT_EQ(cfglut_count(5, 5), 5);
  EXPECT_EQ(cfglut_count(5, 1), 1);
  for (int b1 = 5; b1 <= 8; ++b1) {
    for (int k = 1; k <= 16; ++k) EXPECT_EQ(cfglut_count(b1, k), (1 << (b1 - 5)) * k);
  }
  EXPECT_THROW(cfglut_count(4, 5), UsageError);
}

TEST(SerialReconfigure, RoundTripsEveryInt8Constant) {
  const ConfigChain blank(kSignedInt8Spec);
  for (std::uint32_t op2 = 0; op2 <= 128; ++op2) {
    const ConfigChain chain = gen_config_chain(op2, kSignedInt8Spec);
    const Bitstream bits = serialize(chain);
    ASSERT_EQ(bits.size(), 160u);
    const ConfigChain loaded = serial_reconfigure(blank, bits);
    EXPECT_EQ(loaded, chain);
    EXPECT_EQ(serialize(loaded), bits);
    for (std::uint32_t a = 0; a < 32; ++a) ASSERT_EQ(lut_eval(loaded, a), lut_eval(chain, a));
  }
}

TEST(SerialReconfigure, FirstShiftedBitIsLastLutEntry31) {
  Bitstream bits(160, 0);
  bits[0] = 1;
  const ConfigChain loaded = serial_reconfigure(ConfigChain(kSignedInt8Spec), bits);
  EXPECT_EQ(loaded.lut(0, 4).bits, 0x80000000u);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(loaded.lut(0, j).bits, 0u);
}

TEST(SerialReconfigure, ZeroStreamClearsChain) {
  const ConfigChain loaded =
      serial_reconfigure(gen_config_chain(100, kSignedInt8Spec), Bitstream(160, 0));
  for (std::uint32_t a = 0; a < 32; ++a) EXPECT_EQ(lut_eval(loaded, a), 0u);
  EXPECT_FALSE(loaded.op2().has_value());
}

TEST(SerialReconfigure, Stream64HalvesAddress) {
  const Bitstream bits = serialize(gen_config_chain(64, kSignedInt8Spec));
  const ConfigChain loaded = serial_reconfigure(ConfigChain(kSignedInt8Spec), bits);
  for (std::uint32_t a = 0; a < 32; ++a) EXPECT_EQ(lut_eval(loaded, a), (a + 1) / 2);
}

TEST(SerialReconfigure, RejectsWrongLength) {
  EXPECT_THROW(serial_reconfigure(ConfigChain(kSignedInt8Spec), Bitstream(159, 0)), DataError);
  EXPECT_THROW(serial_reconfigure(ConfigChain(kSignedInt8Spec), Bitstream(161, 0)), DataError);
}

TEST(ConfigImage, WriteReadRoundTrip) {
  const ConfigMemory memory(kSignedInt8Spec);
  std::stringstream image;
  write_config_image(image, memory);
  const std::string text = image.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "# dyrecmul-cfg v1 b1=5 b2=7 k=5");

  const ConfigImage parsed = read_config_image(image);
  EXPECT_EQ(parsed.spec, kSignedInt8Spec);
  ASSERT_EQ(parsed.chains.size(), 129u);
  for (std::uint32_t op2 = 0; op2 <= 128; ++op2) EXPECT_EQ(parsed.chains[op2], memory.fetch(op2));
  EXPECT_EQ(memory.bit_count(), 129u * 160u);
}

TEST(ConfigImage, FrozenLines) {
  std::stringstream image;
  write_config_image(image, ConfigMemory(kSignedInt8Spec));
  std::vector<std::string> lines;
  for (std::string line; std::getline(image, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 130u);
  EXPECT_EQ(lines[1 + 0], std::string(40, '0'));
  EXPECT_EQ(lines[1 + 64], "800000007fff80007f807f807878787866666666");
  EXPECT_EQ(lines[1 + 127], "ffff0000ff00ff00f0f0f0f0ccccccccaaaaaaaa");
  EXPECT_EQ(lines[1 + 128], lines[1 + 127]);
}

TEST(ConfigImage, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_config_image(empty), DataError);
  std::istringstream bad_header("# something else\n");
  EXPECT_THROW(read_config_image(bad_header), DataError);
  std::istringstream short_line("# dyrecmul-cfg v1 b1=5 b2=7 k=5\nabcd\n");
  EXPECT_THROW(read_config_image(short_line), DataError);
  std::istringstream bad_digit("# dyrecmul-cfg v1 b1=5 b2=7 k=5\n" + std::string(39, '0') + "g\n");
  EXPECT_THROW(read_config_image(bad_digit), DataError);
  std::istringstream bad_spec("# dyrecmul-cfg v1 b1=9 b2=7 k=5\n");
  EXPECT_THROW(read_config_image(bad_spec), DataError);
}

}  // namespace
}  // namespace dyrecmul
