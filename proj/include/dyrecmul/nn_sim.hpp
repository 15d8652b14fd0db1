#pragma once

// Small INT8 inference engine with a pluggable multiplier backend. Layers run
// weight-stationary: every weight is configured into a multiplier once per
// layer pass and the whole batch streams past it, so the number of
// reconfigurations depends on the model, not on the batch size.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dyrecmul/datapath.hpp"
#include "dyrecmul/errors.hpp"

namespace dyrecmul::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct TensorI8 {
  Shape shape;
  std::vector<std::int8_t> data;
  double scale = 1.0;

  TensorI8() = default;
  TensorI8(Shape s, double sc) : shape(std::move(s)), data(element_count(shape)), scale(sc) {}
  TensorI8(Shape s, std::vector<std::int8_t> d, double sc)
      : shape(std::move(s)), data(std::move(d)), scale(sc) {
    validate();
  }

  void validate() const {
    if (data.size() != element_count(shape)) {
      throw DataError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_string(shape));
    }
    if (!(scale > 0.0)) throw DataError("tensor scale must be positive");
  }
};

inline std::int8_t saturate_i8(double rounded) {
  return static_cast<std::int8_t>(std::clamp(rounded, -128.0, 127.0));
}

inline double round_half_up(double v) { return std::floor(v + 0.5); }

/// Symmetric per-tensor quantization, clamp(round(v / scale)).
inline TensorI8 quantize(std::span<const double> values, Shape shape, double scale) {
  if (!(scale > 0.0)) throw UsageError("quantization scale must be positive");
  if (values.size() != element_count(shape)) throw UsageError("value count does not match shape");
  TensorI8 t(std::move(shape), scale);
  for (std::size_t i = 0; i < values.size(); ++i) t.data[i] = saturate_i8(round_half_up(values[i] / scale));
  return t;
}

inline std::vector<double> dequantize(const TensorI8& t) {
  std::vector<double> out(t.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data[i] * t.scale;
  return out;
}

enum class LayerKind { Dense, Conv2d, Relu, Argmax };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Argmax: return "argmax";
  }
  return "?";
}

/// Dense weights are [out, in]; conv2d weights are [out_ch, in_ch, kh, kw]
/// with stride 1 and no padding. Bias is in accumulator units
/// (input scale * weight scale).
struct Layer {
  LayerKind kind = LayerKind::Relu;
  TensorI8 weights;
  std::vector<std::int32_t> bias;
  double out_scale = 1.0;

  std::size_t weight_sites() const {
    return kind == LayerKind::Dense || kind == LayerKind::Conv2d ? weights.data.size() : 0;
  }
};

/// Per-sample output shape of `layer`, or DataError when `in` does not fit.
inline Shape output_shape(const Layer& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::Dense: {
      if (layer.weights.shape.size() != 2) throw DataError("dense weights must be 2-D");
      const std::size_t out = layer.weights.shape[0], fan_in = layer.weights.shape[1];
      if (element_count(in) != fan_in) {
        throw DataError("dense layer expects " + std::to_string(fan_in) + " inputs, got " +
                        shape_string(in));
      }
      if (layer.bias.size() != out) throw DataError("dense bias length mismatch");
      return {out};
    }
    case LayerKind::Conv2d: {
      const auto& ws = layer.weights.shape;
      if (ws.size() != 4) throw DataError("conv2d weights must be 4-D");
      if (in.size() != 3 || in[0] != ws[1] || in[1] < ws[2] || in[2] < ws[3]) {
        throw DataError("conv2d weights " + shape_string(ws) + " do not fit input " +
                        shape_string(in));
      }
      if (layer.bias.size() != ws[0]) throw DataError("conv2d bias length mismatch");
      return {ws[0], in[1] - ws[2] + 1, in[2] - ws[3] + 1};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::Argmax:
      return {};
  }
  return in;
}

struct ModelGraph {
  Shape input_shape;  ///< per sample
  double input_scale = 1.0;
  std::vector<Layer> layers;

  /// Checks shape compatibility layer by layer; returns the per-sample shape
  /// entering the argmax head.
  Shape validate() const {
    if (input_shape.empty()) throw DataError("model input shape is empty");
    if (!(input_scale > 0.0)) throw DataError("model input scale must be positive");
    if (layers.empty() || layers.back().kind != LayerKind::Argmax) {
      throw DataError("model must end with an argmax head");
    }
    Shape shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& layer = layers[i];
      if (layer.kind == LayerKind::Argmax && i + 1 != layers.size()) {
        throw DataError("argmax must be the last layer");
      }
      if (layer.weight_sites() > 0) {
        layer.weights.validate();
        if (!(layer.out_scale > 0.0)) throw DataError("layer output scale must be positive");
      }
      if (layer.kind == LayerKind::Argmax) return shape;
      shape = output_shape(layer, shape);
    }
    return shape;
  }
};

/// Weight-stationary reconfiguration accounting.
struct ReconfigLedger {
  std::uint64_t reconfig_events = 0;
  std::uint64_t config_bits_shifted = 0;
  std::uint64_t mac_ops = 0;
  std::uint64_t saturations = 0;

  double amortization() const {
    return reconfig_events == 0 ? 0.0
                                : static_cast<double>(mac_ops) / static_cast<double>(reconfig_events);
  }

  void merge(const ReconfigLedger& other) {
    reconfig_events += other.reconfig_events;
    config_bits_shifted += other.config_bits_shifted;
    mac_ops += other.mac_ops;
    saturations += other.saturations;
  }

  friend bool operator==(const ReconfigLedger&, const ReconfigLedger&) = default;
};

enum class Backend { Exact, DyRecMul };

inline std::string_view to_string(Backend backend) {
  return backend == Backend::Exact ? "exact" : "dyrecmul";
}

inline Backend parse_backend(std::string_view text) {
  if (text == "exact") return Backend::Exact;
  if (text == "dyrecmul") return Backend::DyRecMul;
  throw UsageError("unknown backend '" + std::string(text) + "'");
}

/// Signed INT8 multiplier behind the MAC loop. Both backends go through the
/// same load/multiply protocol so schedules and ledgers are identical.
class MacBackend {
 public:
  explicit MacBackend(Backend kind, DatapathOptions options = {})
      : kind_(kind), multiplier_(Mode::Signed, options) {}

  Backend kind() const { return kind_; }

  /// Configuration bits shifted per weight load.
  int config_bits_per_load() const { return multiplier_.memory().spec().config_bits(); }

  LoadedWeight load(int w) const { return multiplier_.load(w); }

  std::int64_t product(int x, const LoadedWeight& w) const {
    if (kind_ == Backend::Exact) return std::int64_t{x} * w.value;
    return multiplier_.multiply(x, w).wide_out;
  }

 private:
  Backend kind_;
  Multiplier multiplier_;
};

namespace detail {

/// Runs fn(begin, end, ledger) over sample ranges; ledgers merge by summation.
template <typename Fn>
void for_samples(std::size_t batch, unsigned workers, ReconfigLedger& ledger, Fn fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(batch, 1)));
  if (workers <= 1) {
    fn(std::size_t{0}, batch, ledger);
    return;
  }
  std::vector<ReconfigLedger> partial(workers);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (batch + workers - 1) / workers;
    for (unsigned t = 0; t < workers; ++t) {
      const std::size_t begin = std::min(batch, t * chunk);
      const std::size_t end = std::min(batch, begin + chunk);
      pool.emplace_back([&fn, &partial, t, begin, end] { fn(begin, end, partial[t]); });
    }
  }
  for (const auto& p : partial) ledger.merge(p);
}

inline std::int8_t requantize(const Accumulator& acc, double factor) {
  return saturate_i8(round_half_up(static_cast<double>(acc.value) * factor));
}

}  // namespace detail

/// Applies one layer to a batch [B, ...sample shape].
inline TensorI8 layer_forward(const Layer& layer, const TensorI8& input, const MacBackend& backend,
                              ReconfigLedger& ledger, unsigned workers = 1) {
  input.validate();
  if (input.shape.empty()) throw DataError("input batch has no batch dimension");
  const std::size_t batch = input.shape[0];
  const Shape in_sample(input.shape.begin() + 1, input.shape.end());
  const Shape out_sample = output_shape(layer, in_sample);
  const std::size_t in_size = element_count(in_sample);

  Shape out_shape{batch};
  out_shape.insert(out_shape.end(), out_sample.begin(), out_sample.end());

  if (layer.kind == LayerKind::Relu) {
    TensorI8 out = input;
    for (auto& v : out.data) v = std::max<std::int8_t>(v, 0);
    return out;
  }
  if (layer.kind == LayerKind::Argmax) {
    TensorI8 out(out_shape, 1.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto first = input.data.begin() + static_cast<std::ptrdiff_t>(b * in_size);
      out.data[b] = static_cast<std::int8_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(in_size)) - first);
    }
    return out;
  }

  // Weight-stationary load: one configuration per weight site for the pass.
  std::vector<LoadedWeight> loaded;
  loaded.reserve(layer.weights.data.size());
  for (std::int8_t w : layer.weights.data) loaded.push_back(backend.load(w));
  ledger.reconfig_events += loaded.size();
  ledger.config_bits_shifted += loaded.size() * static_cast<std::uint64_t>(backend.config_bits_per_load());

  const double factor = input.scale * layer.weights.scale / layer.out_scale;
  TensorI8 out(out_shape, layer.out_scale);
  const std::size_t out_size = element_count(out_sample);

  if (layer.kind == LayerKind::Dense) {
    const std::size_t fan_in = layer.weights.shape[1];
    detail::for_samples(batch, workers, ledger, [&](std::size_t begin, std::size_t end, ReconfigLedger& part) {
      for (std::size_t b = begin; b < end; ++b) {
        const std::int8_t* x = input.data.data() + b * in_size;
        for (std::size_t o = 0; o < out_size; ++o) {
          Accumulator acc{layer.bias[o], false};
          for (std::size_t i = 0; i < fan_in; ++i) {
            acc = accumulate(acc, backend.product(x[i], loaded[o * fan_in + i]));
          }
          part.mac_ops += fan_in;
          if (acc.saturated) ++part.saturations;
          out.data[b * out_size + o] = detail::requantize(acc, factor);
        }
      }
    });
    return out;
  }

  // conv2d, valid padding, stride 1
  const auto& ws = layer.weights.shape;
  const std::size_t oc = ws[0], ic = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t ih = in_sample[1], iw = in_sample[2];
  const std::size_t oh = out_sample[1], ow = out_sample[2];
  detail::for_samples(batch, workers, ledger, [&](std::size_t begin, std::size_t end, ReconfigLedger& part) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::int8_t* x = input.data.data() + b * in_size;
      for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t r = 0; r < oh; ++r) {
          for (std::size_t c = 0; c < ow; ++c) {
            Accumulator acc{layer.bias[o], false};
            for (std::size_t ch = 0; ch < ic; ++ch) {
              for (std::size_t dr = 0; dr < kh; ++dr) {
                for (std::size_t dc = 0; dc < kw; ++dc) {
                  const std::int8_t xv = x[(ch * ih + r + dr) * iw + c + dc];
                  acc = accumulate(acc, backend.product(xv, loaded[((o * ic + ch) * kh + dr) * kw + dc]));
                }
              }
            }
            part.mac_ops += ic * kh * kw;
            if (acc.saturated) ++part.saturations;
            out.data[b * out_size + (o * oh + r) * ow + c] = detail::requantize(acc, factor);
          }
        }
      }
    }
  });
  return out;
}

struct Dataset {
  TensorI8 images;  ///< [N, ...sample shape]
  std::vector<int> labels;
};

struct InferenceResult {
  Backend backend = Backend::Exact;
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::vector<int> predictions;
  ReconfigLedger ledger;

  double accuracy() const {
    return samples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples);
  }
};

/// Forward pass of the whole batch; returns the argmax class per sample.
inline std::vector<int> predict(const ModelGraph& model, const TensorI8& batch,
                                const MacBackend& backend, ReconfigLedger& ledger,
                                unsigned workers = 1) {
  model.validate();
  Shape expected{batch.shape.empty() ? 0 : batch.shape[0]};
  expected.insert(expected.end(), model.input_shape.begin(), model.input_shape.end());
  if (batch.shape.empty() || element_count(batch.shape) != element_count(expected)) {
    throw DataError("input batch " + shape_string(batch.shape) + " does not match model input " +
                    shape_string(model.input_shape));
  }
  TensorI8 activations(expected, batch.data, batch.scale);
  for (const auto& layer : model.layers) {
    activations = layer_forward(layer, activations, backend, ledger, workers);
  }
  return {activations.data.begin(), activations.data.end()};
}

inline InferenceResult run_model(const ModelGraph& model, const Dataset& dataset, Backend backend,
                                 unsigned workers = 1, const DatapathOptions& options = {}) {
  if (dataset.labels.empty()) throw DataError("dataset is empty");
  if (dataset.images.shape.empty() || dataset.images.shape[0] != dataset.labels.size()) {
    throw DataError("image count does not match label count");
  }
  const MacBackend mac(backend, options);
  InferenceResult result;
  result.backend = backend;
  result.samples = dataset.labels.size();
  result.predictions = predict(model, dataset.images, mac, result.ledger, workers);
  for (std::size_t i = 0; i < result.samples; ++i) {
    if (result.predictions[i] == dataset.labels[i]) ++result.correct;
  }
  return result;
}

}  // namespace dyrecmul::nn
