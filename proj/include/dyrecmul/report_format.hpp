#pragma once

// Text, CSV and JSON renderings of error reports. Output is byte-stable:
// fixed key order and fixed numeric formatting.

#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyrecmul/error_lab.hpp"
#include "dyrecmul/version.hpp"

namespace dyrecmul {

enum class Format { Text, Csv, Json };

inline Format parse_format(std::string_view text) {
  if (text == "text") return Format::Text;
  if (text == "csv") return Format::Csv;
  if (text == "json") return Format::Json;
  throw UsageError("unknown format '" + std::string(text) + "'");
}

inline std::string format_number(const char* fmt, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, fmt, value);
  return buffer;
}

inline std::string sig6(double value) { return format_number("%.6g", value); }
inline std::string fixed4(double value) { return format_number("%.4f", value); }

inline std::string render_csv(const ErrorReport& r) {
  std::ostringstream out;
  out << "metric,value\n"
      << "EP," << sig6(r.ep) << '\n'
      << "MAE," << sig6(r.mae) << '\n'
      << "MRE," << sig6(r.mre) << '\n'
      << "MSE," << sig6(r.mse) << '\n'
      << "NED," << sig6(r.ned) << '\n'
      << "MAX_ED," << r.max_ed << '\n'
      << "PAIRS," << r.pair_count << '\n'
      << "MRE_EXCLUDED," << r.zero_exact_excluded << '\n';
  return out.str();
}

inline nlohmann::ordered_json to_json(const SweepDescriptor& d) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(d.mode);
  j["bits"] = d.bits;
  j["variant"] = d.variant;
  return j;
}

inline nlohmann::ordered_json to_json(const DatapathOptions& o) {
  nlohmann::ordered_json j;
  j["encoder_rounding"] = to_string(o.encoder_rounding);
  j["product_rounding"] = to_string(o.product_rounding);
  j["clamp_w128"] = o.clamp_w128;
  return j;
}

inline nlohmann::ordered_json to_json(const ErrorReport& r) {
  nlohmann::ordered_json j;
  j["tool"] = "dyrecmul";
  j["version"] = kVersion;
  j["sweep"] = to_json(r.descriptor);
  j["EP"] = r.ep;
  j["MAE"] = r.mae;
  j["MRE"] = r.mre;
  j["MSE"] = r.mse;
  j["NED"] = r.ned;
  j["MAX_ED"] = r.max_ed;
  j["PAIRS"] = r.pair_count;
  j["MRE_EXCLUDED"] = r.zero_exact_excluded;
  return j;
}

inline std::string render_json(const ErrorReport& r) { return to_json(r).dump(2) + "\n"; }

inline std::string render_text(const ErrorReport& r) {
  std::ostringstream out;
  out << "sweep: " << to_string(r.descriptor.mode) << ' ' << r.descriptor.bits << "-bit, "
      << r.descriptor.variant << ", " << r.pair_count << " pairs\n"
      << "  EP      " << fixed4(r.ep) << '\n'
      << "  MAE     " << fixed4(r.mae) << '\n'
      << "  MRE     " << fixed4(r.mre) << "  (" << r.zero_exact_excluded
      << " zero-product pairs excluded)\n"
      << "  MSE     " << fixed4(r.mse) << '\n'
      << "  NED     " << fixed4(r.ned) << '\n'
      << "  max ED  " << r.max_ed << '\n';
  return out.str();
}

inline std::string render(const ErrorReport& r, Format format) {
  switch (format) {
    case Format::Csv: return render_csv(r);
    case Format::Json: return render_json(r);
    case Format::Text: break;
  }
  return render_text(r);
}

inline std::string render(const ReportDiff& diff, Format format) {
  std::ostringstream out;
  if (format == Format::Json) {
    nlohmann::ordered_json j;
    j["a"] = to_json(diff.a);
    j["b"] = to_json(diff.b);
    auto& rows = j["deltas"] = nlohmann::ordered_json::array();
    for (const auto& d : diff.deltas) {
      nlohmann::ordered_json row;
      row["metric"] = d.metric;
      row["a"] = d.a;
      row["b"] = d.b;
      row["abs_delta"] = d.abs_delta;
      row["rel_delta"] = d.rel_delta ? nlohmann::ordered_json(*d.rel_delta) : nlohmann::ordered_json(nullptr);
      rows.push_back(row);
    }
    return j.dump(2) + "\n";
  }
  const bool csv = format == Format::Csv;
  out << (csv ? "metric,a,b,abs_delta,rel_delta\n" : "metric        a            b            delta        rel\n");
  for (const auto& d : diff.deltas) {
    const std::string rel = d.rel_delta ? sig6(*d.rel_delta) : "n/a";
    if (csv) {
      out << d.metric << ',' << sig6(d.a) << ',' << sig6(d.b) << ',' << sig6(d.abs_delta) << ','
          << rel << '\n';
    } else {
      char line[160];
      std::snprintf(line, sizeof line, "%-8s %12.4f %12.4f %12.4f %s\n", d.metric.c_str(), d.a,
                    d.b, d.abs_delta, rel.c_str());
      out << line;
    }
  }
  return out.str();
}

inline std::string render(const std::vector<CalibrationRow>& rows, Format format) {
  std::ostringstream out;
  if (format == Format::Json) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json item = to_json(row.options);
      item["report"] = to_json(row.report);
      j.push_back(item);
    }
    return j.dump(2) + "\n";
  }
  if (format == Format::Csv) {
    out << "encoder_rounding,product_rounding,clamp_w128,EP,MAE,MRE,MSE,NED,MAX_ED\n";
    for (const auto& row : rows) {
      const auto& r = row.report;
      out << to_string(row.options.encoder_rounding) << ',' << to_string(row.options.product_rounding)
          << ',' << (row.options.clamp_w128 ? 1 : 0) << ',' << sig6(r.ep) << ',' << sig6(r.mae)
          << ',' << sig6(r.mre) << ',' << sig6(r.mse) << ',' << sig6(r.ned) << ',' << r.max_ed
          << '\n';
    }
    return out.str();
  }
  out << "| encoder | product | clamp W=-128 | EP | MAE | MRE | MSE | NED | max ED |\n"
      << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << "| " << to_string(row.options.encoder_rounding) << " | "
        << to_string(row.options.product_rounding) << " | "
        << (row.options.clamp_w128 ? "yes" : "no") << " | " << fixed4(r.ep) << " | "
        << fixed4(r.mae) << " | " << fixed4(r.mre) << " | " << fixed4(r.mse) << " | "
        << fixed4(r.ned) << " | " << r.max_ed << " |\n";
  }
  return out.str();
}

}  // namespace dyrecmul
