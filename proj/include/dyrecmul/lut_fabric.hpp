#pragma once

// Emulation of CFGLUT5-style reconfigurable lookup primitives used as a
// constant-operand multiplier.
//
// A multiplier with a b1-bit streamed operand and a constant second operand
// is realized by k single-output tables, one per result bit. Each table has a
// 5-bit address and 32 truth-table entries. Operands wider than 5 bits are
// handled by replicating each result-bit table 2^(b1-5) times and selecting
// the group with the high address bits.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dyrecmul/errors.hpp"
#include "dyrecmul/rounding.hpp"

namespace dyrecmul {

inline constexpr int kLutAddressBits = 5;
inline constexpr int kLutEntries = 1 << kLutAddressBits;

/// Parameterization of a LUT-based constant multiplier.
struct MultiplierSpec {
  int b1 = 5;  ///< streamed operand width (LUT address)
  int b2 = 7;  ///< constant operand width
  int k = 5;   ///< result width

  constexpr int shift() const { return b1 + b2 - k; }
  constexpr int groups() const { return 1 << std::max(0, b1 - kLutAddressBits); }
  constexpr int lut_count() const { return groups() * k; }
  constexpr int config_bits() const { return kLutEntries * lut_count(); }
  constexpr std::uint32_t max_op2() const { return std::uint32_t{1} << b2; }

  void validate() const {
    if (b1 < 1 || b2 < 1 || k < 1) throw UsageError("multiplier widths must be positive");
    if (b1 > 8) throw UsageError("b1 > 8 is not supported");
    if (b2 > 16 || k > 24) throw UsageError("b2/k too wide");
    if (shift() < 0) throw UsageError("k must not exceed b1 + b2");
  }

  friend constexpr bool operator==(const MultiplierSpec&, const MultiplierSpec&) = default;
};

/// 5-bit magnitude mantissa times a 7-bit magnitude (|W| <= 128), top 5 bits.
inline constexpr MultiplierSpec kSignedInt8Spec{5, 7, 5};
/// Unsigned INT8 weights need 8 magnitude bits, so the product drops 8 bits.
inline constexpr MultiplierSpec kUnsignedInt8Spec{5, 8, 5};

/// Number of CFGLUT5 primitives for a b1-bit operand and k-bit result.
inline int cfglut_count(int b1, int k) {
  if (b1 < kLutAddressBits) {
    throw UsageError("b1 < 5 is not covered by the replication formula (one LUT per result bit)");
  }
  if (k < 1) throw UsageError("k must be positive");
  return (1 << (b1 - kLutAddressBits)) * k;
}

/// Truth table of one 5-input LUT; entry a is bit a of `bits`.
struct LutConfig {
  std::uint32_t bits = 0;

  constexpr bool at(unsigned address) const { return ((bits >> address) & 1u) != 0; }
  constexpr void set(unsigned address, bool value) {
    if (value) {
      bits |= (1u << address);
    } else {
      bits &= ~(1u << address);
    }
  }
  friend constexpr bool operator==(const LutConfig&, const LutConfig&) = default;
};

/// One bit per element, in shift order.
using Bitstream = std::vector<std::uint8_t>;

/// The k (times replication) tables realizing multiplication by one constant.
/// Table index is group * k + result_bit; group 0 holds addresses 0..31.
class ConfigChain {
 public:
  explicit ConfigChain(MultiplierSpec spec)
      : spec_(spec), luts_(static_cast<std::size_t>(spec.lut_count())) {}

  const MultiplierSpec& spec() const { return spec_; }
  /// The constant encoded, when known (unknown after loading a raw bitstream).
  const std::optional<std::uint32_t>& op2() const { return op2_; }
  const std::vector<LutConfig>& luts() const { return luts_; }
  int config_bits() const { return spec_.config_bits(); }

  const LutConfig& lut(int group, int bit) const { return luts_[index(group, bit)]; }
  LutConfig& lut(int group, int bit) { return luts_[index(group, bit)]; }

  friend bool operator==(const ConfigChain& a, const ConfigChain& b) {
    return a.spec_ == b.spec_ && a.luts_ == b.luts_;
  }

 private:
  std::size_t index(int group, int bit) const {
    return static_cast<std::size_t>(group * spec_.k + bit);
  }

  friend ConfigChain gen_config_chain(std::uint32_t, const MultiplierSpec&, Rounding);
  friend ConfigChain serial_reconfigure(const ConfigChain&, const Bitstream&);

  MultiplierSpec spec_;
  std::optional<std::uint32_t> op2_;
  std::vector<LutConfig> luts_;
};

/// Quantized product the tables must reproduce for one address.
inline std::uint32_t quantized_product(std::uint32_t address, std::uint32_t op2,
                                       const MultiplierSpec& spec,
                                       Rounding rounding = Rounding::HalfUp) {
  const std::int64_t limit = (std::int64_t{1} << spec.k) - 1;
  const std::int64_t q = round_shift(std::int64_t{address} * op2, spec.shift(), rounding);
  return static_cast<std::uint32_t>(std::min(q, limit));
}

/// Builds the truth tables for multiplication by the constant `op2`.
inline ConfigChain gen_config_chain(std::uint32_t op2, const MultiplierSpec& spec,
                                    Rounding rounding = Rounding::HalfUp) {
  spec.validate();
  if (op2 > spec.max_op2()) {
    throw UsageError("constant operand " + std::to_string(op2) + " exceeds 2^" +
                     std::to_string(spec.b2));
  }
  ConfigChain chain(spec);
  chain.op2_ = op2;
  const std::uint32_t addresses = std::uint32_t{1} << spec.b1;
  for (std::uint32_t a = 0; a < addresses; ++a) {
    const std::uint32_t q = quantized_product(a, op2, spec, rounding);
    const int group = static_cast<int>(a >> kLutAddressBits);
    const unsigned local = a & (kLutEntries - 1);
    for (int j = 0; j < spec.k; ++j) chain.lut(group, j).set(local, ((q >> j) & 1u) != 0);
  }
  return chain;
}

/// Reads the k-bit result the tables produce for `address`.
inline std::uint32_t lut_eval(const ConfigChain& chain, std::uint32_t address) {
  const auto& spec = chain.spec();
  if (address >= (std::uint32_t{1} << spec.b1)) {
    throw UsageError("LUT address " + std::to_string(address) + " out of range for b1=" +
                     std::to_string(spec.b1));
  }
  const int group = static_cast<int>(address >> kLutAddressBits);
  const unsigned local = address & (kLutEntries - 1);
  std::uint32_t result = 0;
  for (int j = 0; j < spec.k; ++j) {
    if (chain.lut(group, j).at(local)) result |= (1u << j);
  }
  return result;
}

/// Bits in the order they leave the cascaded chain: last table first, and
/// within a table entry 31 first.
inline Bitstream serialize(const ConfigChain& chain) {
  Bitstream out;
  out.reserve(static_cast<std::size_t>(chain.config_bits()));
  const auto& luts = chain.luts();
  for (auto it = luts.rbegin(); it != luts.rend(); ++it) {
    for (int a = kLutEntries - 1; a >= 0; --a) out.push_back(it->at(static_cast<unsigned>(a)) ? 1 : 0);
  }
  return out;
}

/// Shifts `bitstream` into the chain one bit at a time. Each table is a 32-bit
/// shift register; its entry 31 falls out (CDO) into entry 0 of the next
/// table (CDI). After a full load the first bit sits in the last table's
/// entry 31, which makes this the inverse of serialize().
inline ConfigChain serial_reconfigure(const ConfigChain& chain, const Bitstream& bitstream) {
  if (bitstream.size() != static_cast<std::size_t>(chain.config_bits())) {
    throw DataError("bitstream has " + std::to_string(bitstream.size()) + " bits, chain needs " +
                    std::to_string(chain.config_bits()));
  }
  ConfigChain result = chain;
  result.op2_.reset();
  for (std::uint8_t bit : bitstream) {
    std::uint32_t carry = bit & 1u;
    for (auto& lut : result.luts_) {
      const std::uint32_t out = lut.bits >> 31;
      lut.bits = (lut.bits << 1) | carry;
      carry = out;
    }
  }
  return result;
}

inline std::string bitstream_to_hex(const Bitstream& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string hex;
  hex.reserve((bits.size() + 3) / 4);
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    unsigned nibble = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      nibble <<= 1;
      if (i + b < bits.size()) nibble |= bits[i + b] & 1u;
    }
    hex.push_back(kDigits[nibble]);
  }
  return hex;
}

inline Bitstream hex_to_bitstream(const std::string& hex) {
  Bitstream bits;
  bits.reserve(hex.size() * 4);
  for (char c : hex) {
    unsigned nibble = 0;
    if (c >= '0' && c <= '9') {
      nibble = static_cast<unsigned>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      nibble = static_cast<unsigned>(c - 'a' + 10);
    } else if (c >= 'A' && c <= 'F') {
      nibble = static_cast<unsigned>(c - 'A' + 10);
    } else {
      throw DataError(std::string("invalid hex digit '") + c + "'");
    }
    for (int b = 3; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((nibble >> b) & 1u));
  }
  return bits;
}

/// Shared configuration memory: one precomputed chain per constant magnitude
/// 0..2^b2. Fetching a chain models reading its bit sequence from block RAM.
class ConfigMemory {
 public:
  explicit ConfigMemory(MultiplierSpec spec = kSignedInt8Spec,
                        Rounding rounding = Rounding::HalfUp)
      : spec_(spec), rounding_(rounding) {
    spec.validate();
    entries_.reserve(spec.max_op2() + 1);
    for (std::uint32_t op2 = 0; op2 <= spec.max_op2(); ++op2) {
      entries_.push_back(gen_config_chain(op2, spec, rounding));
    }
  }

  const MultiplierSpec& spec() const { return spec_; }
  Rounding rounding() const { return rounding_; }
  std::size_t size() const { return entries_.size(); }

  const ConfigChain& fetch(std::uint32_t op2) const {
    if (op2 >= entries_.size()) {
      throw UsageError("no configuration stored for constant " + std::to_string(op2));
    }
    return entries_[op2];
  }

  /// Data bits needed to store every entry.
  std::size_t bit_count() const {
    return entries_.size() * static_cast<std::size_t>(spec_.config_bits());
  }

 private:
  MultiplierSpec spec_;
  Rounding rounding_;
  std::vector<ConfigChain> entries_;
};

// Config memory image: a header line followed by one hex line per chain.

inline std::string config_image_header(const MultiplierSpec& spec) {
  return "# dyrecmul-cfg v1 b1=" + std::to_string(spec.b1) + " b2=" + std::to_string(spec.b2) +
         " k=" + std::to_string(spec.k);
}

inline void write_config_image(std::ostream& out, const MultiplierSpec& spec,
                               const std::vector<ConfigChain>& chains) {
  out << config_image_header(spec) << '\n';
  for (const auto& chain : chains) {
    if (!(chain.spec() == spec)) throw UsageError("chain spec does not match image header");
    out << bitstream_to_hex(serialize(chain)) << '\n';
  }
}

/// Writes every constant 0..2^b2.
inline void write_config_image(std::ostream& out, const ConfigMemory& memory) {
  std::vector<ConfigChain> chains;
  chains.reserve(memory.size());
  for (std::uint32_t op2 = 0; op2 < memory.size(); ++op2) chains.push_back(memory.fetch(op2));
  write_config_image(out, memory.spec(), chains);
}

struct ConfigImage {
  MultiplierSpec spec;
  std::vector<ConfigChain> chains;
};

inline ConfigImage read_config_image(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("config image is empty");
  MultiplierSpec spec;
  {
    std::istringstream header(line);
    std::string hash, magic, version, b1, b2, k;
    header >> hash >> magic >> version >> b1 >> b2 >> k;
    auto field = [](const std::string& token, const std::string& key) {
      if (token.rfind(key + "=", 0) != 0) throw DataError("config image header: expected " + key);
      try {
        return std::stoi(token.substr(key.size() + 1));
      } catch (const std::exception&) {
        throw DataError("config image header: bad value for " + key);
      }
    };
    if (hash != "#" || magic != "dyrecmul-cfg" || version != "v1") {
      throw DataError("not a dyrecmul-cfg v1 image");
    }
    spec = {field(b1, "b1"), field(b2, "b2"), field(k, "k")};
    try {
      spec.validate();
    } catch (const UsageError& e) {
      throw DataError(std::string("config image header: ") + e.what());
    }
  }
  ConfigImage image{spec, {}};
  const ConfigChain blank(spec);
  const std::size_t expected_hex = static_cast<std::size_t>(spec.config_bits() / 4);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.size() != expected_hex) {
      throw DataError("config image line has " + std::to_string(line.size()) +
                      " hex digits, expected " + std::to_string(expected_hex));
    }
    image.chains.push_back(serial_reconfigure(blank, hex_to_bitstream(line)));
  }
  return image;
}

}  // namespace dyrecmul
