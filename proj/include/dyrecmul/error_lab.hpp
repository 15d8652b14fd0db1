#pragma once

// Exhaustive error analysis of an approximate multiplier against the exact
// product. For N-bit operands every one of the 2^2N pairs is visited.
//
//   ED_i = |exact_i - approx_i|
//   EP   = #{ED_i != 0} / 2^2N
//   MAE  = sum(ED_i) / 2^2N
//   MRE  = sum(ED_i / |exact_i|) / #{exact_i != 0}
//   MSE  = sum(ED_i^2) / 2^2N
//   NED  = MAE / max(ED)

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dyrecmul/datapath.hpp"
#include "dyrecmul/errors.hpp"

namespace dyrecmul {

struct SweepDescriptor {
  Mode mode = Mode::Signed;
  int bits = 8;
  std::string variant = "dyrecmul";

  int min_operand() const { return mode == Mode::Signed ? -(1 << (bits - 1)) : 0; }
  int max_operand() const { return mode == Mode::Signed ? (1 << (bits - 1)) - 1 : (1 << bits) - 1; }
  std::uint64_t pair_count() const { return std::uint64_t{1} << (2 * bits); }

  friend bool operator==(const SweepDescriptor&, const SweepDescriptor&) = default;
};

/// Partial sums over a subset of pairs. Integer fields merge associatively;
/// relative_sum is merged in a fixed row order by sweep() so the floating
/// result does not depend on how rows were split between workers.
struct ErrorAccumulator {
  std::uint64_t pairs = 0;
  std::uint64_t error_count = 0;
  std::uint64_t sum_ed = 0;
  std::uint64_t sum_ed2 = 0;
  std::uint64_t max_ed = 0;
  std::uint64_t zero_exact = 0;
  long double relative_sum = 0.0L;

  void add(std::int64_t exact, std::int64_t approx) {
    const auto ed = static_cast<std::uint64_t>(std::llabs(exact - approx));
    ++pairs;
    if (ed != 0) ++error_count;
    sum_ed += ed;
    sum_ed2 += ed * ed;
    max_ed = std::max(max_ed, ed);
    if (exact == 0) {
      ++zero_exact;
    } else {
      relative_sum += static_cast<long double>(ed) / static_cast<long double>(std::llabs(exact));
    }
  }

  void merge(const ErrorAccumulator& other) {
    pairs += other.pairs;
    error_count += other.error_count;
    sum_ed += other.sum_ed;
    sum_ed2 += other.sum_ed2;
    max_ed = std::max(max_ed, other.max_ed);
    zero_exact += other.zero_exact;
    relative_sum += other.relative_sum;
  }
};

struct ErrorReport {
  SweepDescriptor descriptor;
  double ep = 0.0;
  double mae = 0.0;
  double mre = 0.0;
  double mse = 0.0;
  double ned = 0.0;
  std::uint64_t max_ed = 0;
  std::uint64_t pair_count = 0;
  std::uint64_t zero_exact_excluded = 0;
  std::uint64_t error_count = 0;
  std::uint64_t sum_ed = 0;
  std::uint64_t sum_ed2 = 0;
};

inline ErrorReport make_report(const ErrorAccumulator& acc, SweepDescriptor descriptor) {
  ErrorReport r;
  r.descriptor = std::move(descriptor);
  r.pair_count = acc.pairs;
  r.error_count = acc.error_count;
  r.sum_ed = acc.sum_ed;
  r.sum_ed2 = acc.sum_ed2;
  r.max_ed = acc.max_ed;
  r.zero_exact_excluded = acc.zero_exact;
  if (acc.pairs == 0) return r;
  const auto n = static_cast<double>(acc.pairs);
  r.ep = static_cast<double>(acc.error_count) / n;
  r.mae = static_cast<double>(acc.sum_ed) / n;
  r.mse = static_cast<double>(acc.sum_ed2) / n;
  const std::uint64_t nonzero = acc.pairs - acc.zero_exact;
  r.mre = nonzero == 0 ? 0.0 : static_cast<double>(acc.relative_sum / static_cast<long double>(nonzero));
  r.ned = acc.max_ed == 0 ? 0.0 : r.mae / static_cast<double>(acc.max_ed);
  return r;
}

/// Visits every operand pair of `descriptor`. `approx(x, w)` returns the
/// approximate product at full range. workers == 0 uses the hardware
/// concurrency; the report is bit-identical for any worker count.
template <typename Approx>
ErrorReport sweep(const SweepDescriptor& descriptor, const Approx& approx, unsigned workers = 0) {
  if (descriptor.bits < 1 || descriptor.bits > 12) throw UsageError("sweep width must be 1..12 bits");
  const int lo = descriptor.min_operand();
  const int hi = descriptor.max_operand();
  const auto rows = static_cast<std::size_t>(hi - lo + 1);
  std::vector<ErrorAccumulator> partial(rows);

  auto run_row = [&](std::size_t row) {
    const int x = lo + static_cast<int>(row);
    ErrorAccumulator acc;
    for (int w = lo; w <= hi; ++w) {
      acc.add(std::int64_t{x} * w, static_cast<std::int64_t>(approx(x, w)));
    }
    partial[row] = acc;
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, rows));
  if (workers <= 1) {
    for (std::size_t row = 0; row < rows; ++row) run_row(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t row = next++; row < rows; row = next++) run_row(row);
      });
    }
  }

  ErrorAccumulator total;
  for (const auto& acc : partial) total.merge(acc);
  return make_report(total, descriptor);
}

/// Sweep of the INT8 DyRecMul datapath in wide-product mode.
inline ErrorReport sweep_dyrecmul(Mode mode, const DatapathOptions& options = {},
                                  unsigned workers = 0) {
  const Multiplier multiplier(mode, options);
  std::vector<LoadedWeight> weights;
  for (int w = operand_min(mode); w <= operand_max(mode); ++w) weights.push_back(multiplier.load(w));
  const int lo = operand_min(mode);
  return sweep(SweepDescriptor{mode, 8, "dyrecmul"},
               [&](int x, int w) {
                 return multiplier.multiply(x, weights[static_cast<std::size_t>(w - lo)]).wide_out;
               },
               workers);
}

inline ErrorReport sweep_exact(Mode mode, unsigned workers = 0) {
  return sweep(SweepDescriptor{mode, 8, "exact"},
               [](int x, int w) { return std::int64_t{x} * w; }, workers);
}

// Report comparison.

struct MetricDelta {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double abs_delta = 0.0;            ///< a - b
  std::optional<double> rel_delta;   ///< (a - b) / |b|, absent when b == 0
};

struct ReportDiff {
  SweepDescriptor a;
  SweepDescriptor b;
  std::vector<MetricDelta> deltas;
};

/// Reports must come from the same operand space (mode and width).
inline ReportDiff compare_report(const ErrorReport& a, const ErrorReport& b) {
  if (a.descriptor.mode != b.descriptor.mode || a.descriptor.bits != b.descriptor.bits) {
    throw DataError("cannot compare reports over different operand spaces (" +
                    std::string(to_string(a.descriptor.mode)) + "/" +
                    std::to_string(a.descriptor.bits) + " vs " +
                    std::string(to_string(b.descriptor.mode)) + "/" +
                    std::to_string(b.descriptor.bits) + ")");
  }
  ReportDiff diff{a.descriptor, b.descriptor, {}};
  auto add = [&](const char* name, double va, double vb) {
    MetricDelta d{name, va, vb, va - vb, std::nullopt};
    if (vb != 0.0) d.rel_delta = (va - vb) / std::abs(vb);
    diff.deltas.push_back(d);
  };
  add("EP", a.ep, b.ep);
  add("MAE", a.mae, b.mae);
  add("MRE", a.mre, b.mre);
  add("MSE", a.mse, b.mse);
  add("NED", a.ned, b.ned);
  add("MAX_ED", static_cast<double>(a.max_ed), static_cast<double>(b.max_ed));
  return diff;
}

// Internal consistency of a metric set.

struct MetricSet {
  double ep = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double ned = 0.0;
  std::optional<double> max_ed;  ///< when known
};

inline MetricSet metrics_of(const ErrorReport& r) {
  return {r.ep, r.mae, r.mse, r.ned, static_cast<double>(r.max_ed)};
}

/// Returns a description of every violated relation; empty when consistent.
///  - MSE >= MAE^2 (Jensen)
///  - NED == MAE / max(ED); with max(ED) unknown, the implied MAE / NED must
///    not exceed the largest error possible for N-bit operands (2^2N)
///  - EP, MAE and MSE are zero together
inline std::vector<std::string> check_metric_consistency(const MetricSet& m, int bits = 8) {
  std::vector<std::string> issues;
  constexpr double kRel = 1e-9;
  if (m.mse + kRel * m.mse < m.mae * m.mae) {
    issues.push_back("MSE " + std::to_string(m.mse) + " < MAE^2 " + std::to_string(m.mae * m.mae));
  }
  if (m.max_ed) {
    const double expected = *m.max_ed > 0 ? m.mae / *m.max_ed : 0.0;
    if (std::abs(m.ned - expected) > kRel * std::max(1.0, std::abs(expected))) {
      issues.push_back("NED " + std::to_string(m.ned) + " != MAE/max(ED) " +
                       std::to_string(expected));
    }
  } else if (m.ned > 0.0) {
    const double implied = m.mae / m.ned;
    const double bound = std::ldexp(1.0, 2 * bits);
    if (implied > bound) {
      issues.push_back("MAE/NED implies max(ED) = " + std::to_string(implied) +
                       ", above the largest possible error " + std::to_string(bound));
    }
  }
  const bool ep_zero = m.ep == 0.0, mae_zero = m.mae == 0.0, mse_zero = m.mse == 0.0;
  if (ep_zero != mae_zero || mae_zero != mse_zero) {
    issues.push_back("EP, MAE and MSE are not zero together");
  }
  return issues;
}

// Calibration grid over the rounding-variant knobs.

struct CalibrationRow {
  DatapathOptions options;
  ErrorReport report;
};

inline std::vector<CalibrationRow> calibration_grid(Mode mode, unsigned workers = 0) {
  std::vector<CalibrationRow> rows;
  constexpr Rounding kModes[] = {Rounding::HalfUp, Rounding::HalfEven, Rounding::Truncate};
  for (Rounding enc : kModes) {
    for (Rounding prod : kModes) {
      for (bool clamp : {false, true}) {
        if (clamp && mode == Mode::Unsigned) continue;  // |W| = 128 is not special there
        DatapathOptions options{enc, prod, clamp};
        rows.push_back({options, sweep_dyrecmul(mode, options, workers)});
      }
    }
  }
  return rows;
}

}  // namespace dyrecmul
