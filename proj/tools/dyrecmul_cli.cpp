// dyrecmul: command-line front end for the emulator, error lab and
// inference simulator.
//
//   dyrecmul mul 64 64 --trace
//   dyrecmul analyze --mode signed --format json
//   dyrecmul configgen --all --out cfg.hex
//   dyrecmul cost --b1 8 --k 16
//   dyrecmul infer toy synthetic --compare
//
// Exit codes: 0 success, 2 usage error, 3 I/O error, 4 data error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dyrecmul/dyrecmul.hpp"

namespace {

using namespace dyrecmul;
using nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;

struct GlobalFlags {
  std::string format = "text";
  std::string out;
  std::uint64_t seed = 1;
};

struct DatapathFlags {
  std::string round = "half-up";
  bool clamp_w128 = false;

  DatapathOptions options() const {
    const Rounding r = parse_rounding(round);
    return {r, r, clamp_w128};
  }
};

void add_datapath_flags(CLI::App* cmd, DatapathFlags& flags) {
  cmd->add_option("--round", flags.round, "Rounding for encoder and product: half-up, half-even, truncate")
      ->check(CLI::IsMember({"half-up", "half-even", "truncate"}));
  cmd->add_flag("--clamp-w128", flags.clamp_w128, "Configure |W| = 128 as 127");
}

void emit(const GlobalFlags& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream file(g.out, std::ios::binary);
  if (!file) throw IoError("cannot write '" + g.out + "'");
  file << text;
  if (!file) throw IoError("write to '" + g.out + "' failed");
}

// mul

struct MulArgs {
  int x = 0;
  int w = 0;
  bool trace = false;
  std::string mode = "signed";
  DatapathFlags datapath;
};

std::string run_mul(const GlobalFlags& g, const MulArgs& a) {
  const Mode mode = parse_mode(a.mode);
  check_operand(a.x, mode, "X");
  check_operand(a.w, mode, "W");
  const ApproxProduct p = multiply(a.x, a.w, mode, a.datapath.options(), a.trace);
  const Format format = parse_format(g.format);
  if (format == Format::Text) return format_trace(a.x, a.w, mode, p);

  // Machine formats reuse the key=value trace fields.
  ordered_json j;
  std::istringstream lines(format_trace(a.x, a.w, mode, p));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "mode" || key == "rel_error") {
      j[key] = value;
    } else {
      j[key] = std::stoll(value);
    }
  }
  if (format == Format::Json) return j.dump(2) + "\n";
  std::string csv = "key,value\n";
  for (const auto& [key, value] : j.items()) {
    csv += key + "," + (value.is_string() ? value.get<std::string>() : value.dump()) + "\n";
  }
  return csv;
}

// analyze

struct AnalyzeArgs {
  std::string mode = "signed";
  std::string oracle = "dyrecmul";
  unsigned workers = 0;
  bool calibrate = false;
  bool compare_exact = false;
  DatapathFlags datapath;
};

std::string run_analyze(const GlobalFlags& g, const AnalyzeArgs& a) {
  const Mode mode = parse_mode(a.mode);
  const Format format = parse_format(g.format);
  if (a.calibrate) return render(calibration_grid(mode, a.workers), format);
  const ErrorReport report = a.oracle == "exact"
                                 ? sweep_exact(mode, a.workers)
                                 : sweep_dyrecmul(mode, a.datapath.options(), a.workers);
  if (a.compare_exact) return render(compare_report(report, sweep_exact(mode, a.workers)), format);
  return render(report, format);
}

// configgen

struct ConfigArgs {
  std::optional<int> weight;
  bool all = false;
  int b1 = 5;
  int b2 = 7;
  int k = 5;
  std::string round = "half-up";
};

std::string run_configgen(const ConfigArgs& a) {
  const MultiplierSpec spec{a.b1, a.b2, a.k};
  spec.validate();
  const Rounding rounding = parse_rounding(a.round);
  if (a.all == a.weight.has_value()) throw UsageError("give either a weight or --all");
  std::ostringstream out;
  if (a.all) {
    write_config_image(out, ConfigMemory(spec, rounding));
  } else {
    const long magnitude = std::labs(*a.weight);
    if (magnitude > static_cast<long>(spec.max_op2())) {
      throw UsageError("weight " + std::to_string(*a.weight) + " out of range for b2=" +
                       std::to_string(spec.b2));
    }
    write_config_image(out, spec,
                       {gen_config_chain(static_cast<std::uint32_t>(magnitude), spec, rounding)});
  }
  return out.str();
}

// cost

struct CostArgs {
  int b1 = 5;
  std::optional<int> b2;
  int k = 5;
  std::string variant = "signed";
};

std::string run_cost(const GlobalFlags& g, const CostArgs& a) {
  // Without an explicit b2 the constant operand is taken wide enough for k.
  const int b2 = a.b2.value_or(std::max(7, a.k - a.b1));
  const MultiplierSpec spec{a.b1, b2, a.k};
  const Variant variant = parse_variant(a.variant);
  const LutCost cost = estimate_lut_cost(spec, variant);
  const Format format = parse_format(g.format);
  if (format == Format::Json) {
    ordered_json j;
    j["b1"] = spec.b1;
    j["b2"] = spec.b2;
    j["k"] = spec.k;
    j["variant"] = to_string(variant);
    j["cfglut"] = cost.cfglut;
    j["encoder"] = cost.encoder;
    j["decoder"] = cost.decoder;
    j["twos_complement"] = cost.twos_complement;
    j["total_luts"] = cost.total_luts();
    j["config_bits"] = cost.config_bits;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  const char sep = format == Format::Csv ? ',' : '=';
  if (format == Format::Csv) out << "component,value\n";
  out << "b1" << sep << spec.b1 << '\n'
      << "b2" << sep << spec.b2 << '\n'
      << "k" << sep << spec.k << '\n'
      << "variant" << sep << to_string(variant) << '\n'
      << "cfglut" << sep << cost.cfglut << '\n'
      << "encoder" << sep << cost.encoder << '\n'
      << "decoder" << sep << cost.decoder << '\n'
      << "twos_complement" << sep << cost.twos_complement << '\n'
      << "total_luts" << sep << cost.total_luts() << '\n'
      << "config_bits" << sep << cost.config_bits << '\n';
  return out.str();
}

// infer

struct InferArgs {
  std::string model;
  std::string data;
  std::string labels;
  std::string backend = "exact";
  bool compare = false;
  std::size_t samples = 1000;
  unsigned workers = 1;
  std::string export_dir;
  DatapathFlags datapath;
};

std::string default_labels_path(const std::string& images) {
  const auto pos = images.rfind("images");
  if (pos == std::string::npos) throw UsageError("cannot derive labels path from '" + images + "', use --labels");
  std::string labels = images;
  labels.replace(pos, 6, "labels");
  return labels;
}

ordered_json ledger_json(const nn::ReconfigLedger& l) {
  ordered_json j;
  j["reconfig_events"] = l.reconfig_events;
  j["config_bits_shifted"] = l.config_bits_shifted;
  j["mac_ops"] = l.mac_ops;
  j["macs_per_reconfig"] = l.amortization();
  j["accumulator_saturations"] = l.saturations;
  return j;
}

std::string run_infer(const GlobalFlags& g, const InferArgs& a) {
  const Format format = parse_format(g.format);
  if (!a.export_dir.empty()) {
    std::filesystem::create_directories(a.export_dir);
    const auto dir = std::filesystem::path(a.export_dir);
    nn::save_model((dir / "toy.model").string(), nn::make_toy_model());
    const auto [images, labels] = nn::dataset_to_idx(nn::make_synthetic_dataset(a.samples, g.seed));
    nn::save_idx((dir / "toy-images.idx").string(), images);
    nn::save_idx((dir / "toy-labels.idx").string(), labels);
    return "wrote " + (dir / "toy.model").string() + ", " + (dir / "toy-images.idx").string() + ", " +
           (dir / "toy-labels.idx").string() + "\n";
  }
  if (a.model.empty() || a.data.empty()) throw UsageError("infer needs MODEL and DATA (or --export-toy)");

  const nn::ModelGraph model = a.model == "toy" ? nn::make_toy_model() : nn::load_model(a.model);
  nn::Dataset dataset;
  if (a.data == "synthetic") {
    if (model.input_shape != nn::Shape{1, nn::kToySide, nn::kToySide}) {
      throw DataError("synthetic data needs a model with input 1x6x6");
    }
    dataset = nn::make_synthetic_dataset(a.samples, g.seed);
  } else {
    const auto images = nn::load_idx(a.data);
    const auto labels = nn::load_idx(a.labels.empty() ? default_labels_path(a.data) : a.labels);
    dataset = nn::dataset_from_idx(images, labels, model);
  }

  std::vector<nn::InferenceResult> results;
  if (a.compare) {
    results.push_back(nn::run_model(model, dataset, nn::Backend::Exact, a.workers, a.datapath.options()));
    results.push_back(nn::run_model(model, dataset, nn::Backend::DyRecMul, a.workers, a.datapath.options()));
  } else {
    results.push_back(nn::run_model(model, dataset, nn::parse_backend(a.backend), a.workers, a.datapath.options()));
  }

  if (format == Format::Json) {
    ordered_json j;
    j["tool"] = "dyrecmul";
    j["version"] = kVersion;
    j["samples"] = dataset.labels.size();
    auto& runs = j["runs"] = ordered_json::array();
    for (const auto& r : results) {
      ordered_json run;
      run["backend"] = to_string(r.backend);
      run["accuracy"] = r.accuracy();
      run["correct"] = r.correct;
      run["ledger"] = ledger_json(r.ledger);
      runs.push_back(run);
    }
    if (a.compare) j["delta_pp"] = 100.0 * (results[1].accuracy() - results[0].accuracy());
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  if (format == Format::Csv) {
    out << "backend,accuracy,correct,samples,reconfig_events,config_bits_shifted,mac_ops,macs_per_reconfig\n";
    for (const auto& r : results) {
      out << to_string(r.backend) << ',' << sig6(r.accuracy()) << ',' << r.correct << ',' << r.samples
          << ',' << r.ledger.reconfig_events << ',' << r.ledger.config_bits_shifted << ','
          << r.ledger.mac_ops << ',' << sig6(r.ledger.amortization()) << '\n';
    }
    return out.str();
  }
  out << "samples: " << dataset.labels.size() << '\n';
  for (const auto& r : results) {
    out << to_string(r.backend) << ": accuracy " << fixed4(r.accuracy()) << " (" << r.correct << '/'
        << r.samples << "), reconfigurations " << r.ledger.reconfig_events << " ("
        << r.ledger.config_bits_shifted << " config bits), MACs " << r.ledger.mac_ops << ", "
        << format_number("%.1f", r.ledger.amortization()) << " MACs/reconfiguration\n";
  }
  if (a.compare) {
    out << "delta: " << format_number("%+.2f", 100.0 * (results[1].accuracy() - results[0].accuracy()))
        << " pp\n";
  }
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DyRecMul approximate multiplier emulator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));

  GlobalFlags global;
  app.add_option("--format", global.format, "Output format: text, csv, json")
      ->check(CLI::IsMember({"text", "csv", "json"}));
  app.add_option("--out", global.out, "Write output to this file instead of stdout");
  app.add_option("--seed", global.seed, "Seed for the synthetic dataset");

  MulArgs mul;
  auto* mul_cmd = app.add_subcommand("mul", "Multiply two operands and show the datapath trace");
  mul_cmd->add_option("x", mul.x, "Streamed operand X")->required();
  mul_cmd->add_option("w", mul.w, "Constant operand W")->required();
  mul_cmd->add_flag("--trace", mul.trace, "Show every pipeline stage");
  mul_cmd->add_option("--mode", mul.mode)->check(CLI::IsMember({"signed", "unsigned"}));
  add_datapath_flags(mul_cmd, mul.datapath);

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Exhaustive error analysis over all operand pairs");
  analyze_cmd->add_option("--mode", analyze.mode)->check(CLI::IsMember({"signed", "unsigned"}));
  analyze_cmd->add_option("--oracle", analyze.oracle, "Multiplier under test: dyrecmul or exact")
      ->check(CLI::IsMember({"dyrecmul", "exact"}));
  analyze_cmd->add_option("--workers", analyze.workers, "Sweep threads (0 = all cores)");
  analyze_cmd->add_flag("--calibrate", analyze.calibrate, "Sweep every rounding variant");
  analyze_cmd->add_flag("--compare-exact", analyze.compare_exact, "Show deltas against the exact multiplier");
  add_datapath_flags(analyze_cmd, analyze.datapath);

  ConfigArgs config;
  auto* config_cmd = app.add_subcommand("configgen", "Write the LUT configuration memory image");
  config_cmd->add_option("weight", config.weight, "Constant operand (its magnitude is configured)");
  config_cmd->add_flag("--all", config.all, "Every magnitude 0..2^b2");
  config_cmd->add_option("--b1", config.b1);
  config_cmd->add_option("--b2", config.b2);
  config_cmd->add_option("--k", config.k);
  config_cmd->add_option("--round", config.round)->check(CLI::IsMember({"half-up", "half-even", "truncate"}));

  CostArgs cost;
  auto* cost_cmd = app.add_subcommand("cost", "Static LUT cost estimate");
  cost_cmd->add_option("--b1", cost.b1);
  cost_cmd->add_option("--b2", cost.b2);
  cost_cmd->add_option("--k", cost.k);
  cost_cmd->add_option("--variant", cost.variant)->check(CLI::IsMember({"signed", "unsigned", "mac"}));

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Run a quantized model on a dataset");
  infer_cmd->add_option("model", infer.model, "Model file, or 'toy' for the built-in model");
  infer_cmd->add_option("data", infer.data, "IDX images file, or 'synthetic'");
  infer_cmd->add_option("--labels", infer.labels, "IDX labels file (default: images path with 'images' -> 'labels')");
  infer_cmd->add_option("--backend", infer.backend)->check(CLI::IsMember({"exact", "dyrecmul"}));
  infer_cmd->add_flag("--compare", infer.compare, "Run both backends and report the accuracy delta");
  infer_cmd->add_option("--samples", infer.samples, "Synthetic dataset size");
  infer_cmd->add_option("--workers", infer.workers, "Inference threads");
  infer_cmd->add_option("--export-toy", infer.export_dir, "Write toy model and synthetic IDX files to a directory");
  add_datapath_flags(infer_cmd, infer.datapath);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*mul_cmd) emit(global, run_mul(global, mul));
    if (*analyze_cmd) emit(global, run_analyze(global, analyze));
    if (*config_cmd) emit(global, run_configgen(config));
    if (*cost_cmd) emit(global, run_cost(global, cost));
    if (*infer_cmd) emit(global, run_infer(global, infer));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
