#pragma once

// Model text files, IDX datasets, and the bundled synthetic task.
//
// Model grammar (line oriented, '#' starts a comment):
//
//   dyrecmul-model v1
//   input <dim>... scale <real>
//   layer dense <out> <in> w_scale <real> out_scale <real>
//   weights <hex>            two hex digits per weight, two's complement
//   bias <int32>...
//   layer conv2d <out_ch> <in_ch> <kh> <kw> w_scale <real> out_scale <real>
//   weights <hex>
//   bias <int32>...
//   layer relu
//   layer argmax
//   end

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dyrecmul/errors.hpp"
#include "dyrecmul/nn_sim.hpp"

namespace dyrecmul::nn {

inline std::string format_real(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

inline void write_model(std::ostream& out, const ModelGraph& model) {
  static constexpr char kDigits[] = "0123456789abcdef";
  model.validate();
  out << "dyrecmul-model v1\n" << "input";
  for (auto d : model.input_shape) out << ' ' << d;
  out << " scale " << format_real(model.input_scale) << '\n';
  for (const auto& layer : model.layers) {
    out << "layer " << to_string(layer.kind);
    if (layer.weight_sites() == 0) {
      out << '\n';
      continue;
    }
    for (auto d : layer.weights.shape) out << ' ' << d;
    out << " w_scale " << format_real(layer.weights.scale) << " out_scale "
        << format_real(layer.out_scale) << "\nweights ";
    for (std::int8_t w : layer.weights.data) {
      const auto byte = static_cast<std::uint8_t>(w);
      out << kDigits[byte >> 4] << kDigits[byte & 0xf];
    }
    out << "\nbias";
    for (auto b : layer.bias) out << ' ' << b;
    out << '\n';
  }
  out << "end\n";
}

namespace detail {

inline double parse_real(const std::string& token, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw DataError(what);
    return v;
  } catch (const std::logic_error&) {
    throw DataError("model: bad " + what + " '" + token + "'");
  }
}

inline long long parse_int(const std::string& token, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size()) throw DataError(what);
    return v;
  } catch (const std::logic_error&) {
    throw DataError("model: bad " + what + " '" + token + "'");
  }
}

inline std::vector<std::int8_t> parse_hex_bytes(const std::string& hex) {
  if (hex.size() % 2 != 0) throw DataError("model: odd number of hex digits in weights");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw DataError(std::string("model: invalid hex digit '") + c + "'");
  };
  std::vector<std::int8_t> bytes;
  bytes.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    bytes.push_back(static_cast<std::int8_t>(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1]))));
  }
  return bytes;
}

}  // namespace detail

inline ModelGraph read_model(std::istream& in) {
  std::vector<std::vector<std::string>> lines;
  std::string raw;
  while (std::getline(in, raw)) {
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream tokens(raw);
    std::vector<std::string> words;
    for (std::string w; tokens >> w;) words.push_back(w);
    if (!words.empty()) lines.push_back(std::move(words));
  }
  if (lines.empty() || lines[0] != std::vector<std::string>{"dyrecmul-model", "v1"}) {
    throw DataError("model: missing 'dyrecmul-model v1' header");
  }
  ModelGraph model;
  std::size_t i = 1;
  bool ended = false;
  auto expect = [&](const char* keyword) -> const std::vector<std::string>& {
    if (i >= lines.size() || lines[i][0] != keyword) {
      throw DataError(std::string("model: expected '") + keyword + "' line");
    }
    return lines[i++];
  };
  {
    const auto& input = expect("input");
    if (input.size() < 4 || input[input.size() - 2] != "scale") {
      throw DataError("model: input line needs dims and 'scale <real>'");
    }
    for (std::size_t t = 1; t + 2 < input.size(); ++t) {
      const auto d = detail::parse_int(input[t], "input dimension");
      if (d <= 0) throw DataError("model: input dimensions must be positive");
      model.input_shape.push_back(static_cast<std::size_t>(d));
    }
    model.input_scale = detail::parse_real(input.back(), "input scale");
  }
  while (i < lines.size()) {
    const auto& head = lines[i];
    if (head[0] == "end") {
      ended = true;
      ++i;
      break;
    }
    if (head[0] != "layer" || head.size() < 2) throw DataError("model: expected 'layer' line");
    ++i;
    Layer layer;
    const std::string& kind = head[1];
    if (kind == "relu" || kind == "argmax") {
      layer.kind = kind == "relu" ? LayerKind::Relu : LayerKind::Argmax;
      model.layers.push_back(std::move(layer));
      continue;
    }
    std::size_t dims = 0;
    if (kind == "dense") {
      layer.kind = LayerKind::Dense;
      dims = 2;
    } else if (kind == "conv2d") {
      layer.kind = LayerKind::Conv2d;
      dims = 4;
    } else {
      throw DataError("model: unknown layer kind '" + kind + "'");
    }
    if (head.size() != 2 + dims + 4 || head[2 + dims] != "w_scale" || head[4 + dims] != "out_scale") {
      throw DataError("model: malformed " + kind + " layer line");
    }
    Shape shape;
    for (std::size_t d = 0; d < dims; ++d) {
      const auto v = detail::parse_int(head[2 + d], "layer dimension");
      if (v <= 0) throw DataError("model: layer dimensions must be positive");
      shape.push_back(static_cast<std::size_t>(v));
    }
    const double w_scale = detail::parse_real(head[3 + dims], "w_scale");
    layer.out_scale = detail::parse_real(head[5 + dims], "out_scale");
    const auto& weights = expect("weights");
    std::string hex;
    for (std::size_t t = 1; t < weights.size(); ++t) hex += weights[t];
    layer.weights = TensorI8(std::move(shape), detail::parse_hex_bytes(hex), w_scale);
    const auto& bias = expect("bias");
    for (std::size_t t = 1; t < bias.size(); ++t) {
      const auto b = detail::parse_int(bias[t], "bias");
      if (b < INT32_MIN || b > INT32_MAX) throw DataError("model: bias outside 32-bit range");
      layer.bias.push_back(static_cast<std::int32_t>(b));
    }
    model.layers.push_back(std::move(layer));
  }
  if (!ended) throw DataError("model: missing 'end'");
  if (i != lines.size()) throw DataError("model: content after 'end'");
  model.validate();
  return model;
}

inline ModelGraph load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  return read_model(in);
}

inline void save_model(const std::string& path, const ModelGraph& model) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  write_model(out, model);
}

// IDX: big-endian header {0, 0, type, ndims}, ndims x uint32 sizes, payload.

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;
inline constexpr std::uint8_t kIdxSignedByte = 0x09;

struct IdxArray {
  std::uint8_t type = kIdxUnsignedByte;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

inline IdxArray read_idx(std::istream& in) {
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4)) throw DataError("idx: truncated header");
  if (magic[0] != 0 || magic[1] != 0) throw DataError("idx: bad magic");
  IdxArray a;
  a.type = magic[2];
  if (a.type != kIdxUnsignedByte && a.type != kIdxSignedByte) {
    throw DataError("idx: only byte payloads (0x08, 0x09) are supported");
  }
  if (magic[3] == 0) throw DataError("idx: zero dimensions");
  std::size_t count = 1;
  for (int d = 0; d < magic[3]; ++d) {
    unsigned char be[4];
    if (!in.read(reinterpret_cast<char*>(be), 4)) throw DataError("idx: truncated dimensions");
    const std::uint32_t size = std::uint32_t{be[0]} << 24 | std::uint32_t{be[1]} << 16 |
                               std::uint32_t{be[2]} << 8 | be[3];
    a.dims.push_back(size);
    count *= size;
  }
  a.payload.resize(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(a.payload.data()), static_cast<std::streamsize>(count))) {
    throw DataError("idx: truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("idx: trailing bytes");
  return a;
}

inline void write_idx(std::ostream& out, const IdxArray& a) {
  const unsigned char magic[4] = {0, 0, a.type, static_cast<unsigned char>(a.dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (auto d : a.dims) {
    const unsigned char be[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                 static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(be), 4);
  }
  out.write(reinterpret_cast<const char*>(a.payload.data()), static_cast<std::streamsize>(a.payload.size()));
}

inline IdxArray load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open idx file '" + path + "'");
  return read_idx(in);
}

inline void save_idx(const std::string& path, const IdxArray& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write idx file '" + path + "'");
  write_idx(out, a);
}

/// Signed-byte images are taken as INT8 values at the model input scale;
/// unsigned-byte images are read as intensities p/255 and quantized.
inline Dataset dataset_from_idx(const IdxArray& images, const IdxArray& labels, const ModelGraph& model) {
  if (images.dims.size() < 2) throw DataError("idx images need a sample dimension and data dims");
  if (labels.dims.size() != 1 || labels.type != kIdxUnsignedByte) {
    throw DataError("idx labels must be a 1-D unsigned byte array");
  }
  if (images.dims[0] != labels.dims[0]) throw DataError("idx image and label counts differ");
  const std::size_t n = images.dims[0];
  if (images.payload.size() != n * element_count(model.input_shape)) {
    throw DataError("idx image size does not match model input " + shape_string(model.input_shape));
  }
  Shape shape{n};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  Dataset ds;
  ds.images = TensorI8(shape, model.input_scale);
  for (std::size_t i = 0; i < images.payload.size(); ++i) {
    const std::uint8_t byte = images.payload[i];
    ds.images.data[i] = images.type == kIdxSignedByte
                            ? static_cast<std::int8_t>(byte)
                            : saturate_i8(round_half_up(byte / 255.0 / model.input_scale));
  }
  ds.labels.assign(labels.payload.begin(), labels.payload.end());
  return ds;
}

inline std::pair<IdxArray, IdxArray> dataset_to_idx(const Dataset& ds) {
  IdxArray images{kIdxSignedByte, {}, {}};
  for (auto d : ds.images.shape) images.dims.push_back(static_cast<std::uint32_t>(d));
  images.payload.reserve(ds.images.data.size());
  for (auto v : ds.images.data) images.payload.push_back(static_cast<std::uint8_t>(v));
  IdxArray labels{kIdxUnsignedByte, {static_cast<std::uint32_t>(ds.labels.size())}, {}};
  for (int l : ds.labels) labels.payload.push_back(static_cast<std::uint8_t>(l));
  return {images, labels};
}

// Bundled toy task: 6x6 images holding one bright bar on a noisy background,
// horizontal (class 0) or vertical (class 1), classified by a conv net whose
// two 3x3 filters are line detectors.

inline constexpr std::size_t kToySide = 6;
inline constexpr int kToyNoise = 64;
inline constexpr double kToyInputScale = 1.0 / 128.0;

inline Dataset make_synthetic_dataset(std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  Dataset ds;
  ds.images = TensorI8({samples, 1, kToySide, kToySide}, kToyInputScale);
  ds.labels.resize(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const int label = uniform(0, 1);
    const int pos = uniform(1, static_cast<int>(kToySide) - 2);
    const int amplitude = uniform(40, 100);
    std::int8_t* img = ds.images.data.data() + s * kToySide * kToySide;
    for (std::size_t p = 0; p < kToySide * kToySide; ++p) {
      img[p] = static_cast<std::int8_t>(uniform(-kToyNoise, kToyNoise));
    }
    for (std::size_t t = 0; t < kToySide; ++t) {
      const std::size_t p = label == 0 ? static_cast<std::size_t>(pos) * kToySide + t
                                       : t * kToySide + static_cast<std::size_t>(pos);
      img[p] = saturate_i8(img[p] + amplitude);
    }
    ds.labels[s] = label;
  }
  return ds;
}

inline ModelGraph make_toy_model() {
  ModelGraph model;
  model.input_shape = {1, kToySide, kToySide};
  model.input_scale = kToyInputScale;

  const double conv_w_scale = 2.0 / 127.0;
  std::vector<double> filters(2 * 9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      filters[static_cast<std::size_t>(r * 3 + c)] = r == 1 ? 2.0 : -1.0;      // horizontal
      filters[static_cast<std::size_t>(9 + r * 3 + c)] = c == 1 ? 2.0 : -1.0;  // vertical
    }
  }
  Layer conv;
  conv.kind = LayerKind::Conv2d;
  conv.weights = quantize(filters, {2, 1, 3, 3}, conv_w_scale);
  conv.bias = {0, 0};
  // A full-strength bar response (about 3 * 127 * 80) lands near 100.
  conv.out_scale = kToyInputScale * conv_w_scale * 30480.0 / 100.0;

  Layer relu;
  relu.kind = LayerKind::Relu;

  const std::size_t positions = (kToySide - 2) * (kToySide - 2);
  std::vector<double> votes(2 * 2 * positions);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    for (std::size_t k = 0; k < 2 * positions; ++k) votes[cls * 2 * positions + k] = (k / positions == cls) ? 1.0 : -1.0;
  }
  const double dense_w_scale = 1.0 / 127.0;
  Layer dense;
  dense.kind = LayerKind::Dense;
  dense.weights = quantize(votes, {2, 2 * positions}, dense_w_scale);
  dense.bias = {0, 0};
  dense.out_scale = conv.out_scale * dense_w_scale * 50800.0 / 60.0;

  Layer head;
  head.kind = LayerKind::Argmax;
  model.layers = {conv, relu, dense, head};
  return model;
}

}  // namespace dyrecmul::nn
