/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QUAKENET_MODEL_HPP_
#define QUAKENET_MODEL_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "quakenet/layers.hpp"
#include "quakenet/random.hpp"
#include "quakenet/tensor.hpp"

namespace quakenet {

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kDefaultImageSize = 224;

template <typename T>
struct ConvLayer {
  ConvSpec<T> spec;
  bool weights_trainable = true;
  bool bias_trainable = true;
};

struct ReluLayer {};

struct PoolLayer {
  PoolSpec spec;
};

struct FlattenLayer {};

template <typename T>
struct DenseLayer {
  DenseSpec<T> spec;
  bool weights_trainable = true;
  bool bias_trainable = true;
};

struct DropoutLayer {
  double rate = 0.5;
};

struct SoftmaxLayer {};

template <typename T>
using LayerOp = std::variant<ConvLayer<T>, ReluLayer, PoolLayer, FlattenLayer, DenseLayer<T>,
                             DropoutLayer, SoftmaxLayer>;

template <typename T>
struct Layer {
  std::string name;
  LayerOp<T> op;
};

template <typename T>
using LayerCache = std::variant<std::monostate, ConvCache<T>, ReluCache, PoolCache, DenseCache<T>,
                                DropoutCache<T>>;

/// Non-owning handle to one parameter tensor and its trainability flag.
template <typename T>
struct ParameterRef {
  std::string name;
  Tensor<T>* value;
  bool* trainable;
};

template <typename T>
struct ConstParameterRef {
  std::string name;
  const Tensor<T>* value;
  bool trainable;
};

/// Ordered layer list with per-tensor trainability. Parameters are named
/// `<layer>.weight` / `<layer>.bias`.
template <typename T>
class Network {
 public:
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {
    if (input_shape_.size() != 3) throw ShapeError("network input shape must be [C,H,W]");
    validate_shape(input_shape_);
  }

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  std::size_t size() const { return layers_.size(); }

  Network& add_conv(std::string name, std::size_t in, std::size_t out) {
    layers_.push_back({std::move(name), ConvLayer<T>{ConvSpec<T>(in, out)}});
    return *this;
  }
  Network& add_relu(std::string name) { return push(std::move(name), ReluLayer{}); }
  Network& add_pool(std::string name) { return push(std::move(name), PoolLayer{}); }
  Network& add_flatten(std::string name) { return push(std::move(name), FlattenLayer{}); }
  Network& add_dense(std::string name, std::size_t in, std::size_t out) {
    layers_.push_back({std::move(name), DenseLayer<T>{DenseSpec<T>(in, out)}});
    return *this;
  }
  Network& add_dropout(std::string name, double rate) {
    DropoutSpec check(rate);  // validates the rate
    return push(std::move(name), DropoutLayer{check.rate});
  }
  Network& add_softmax(std::string name) { return push(std::move(name), SoftmaxLayer{}); }

  std::vector<ParameterRef<T>> parameters() {
    std::vector<ParameterRef<T>> out;
    for (auto& layer : layers_) {
      std::visit(
          [&](auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvLayer<T>> || std::is_same_v<Op, DenseLayer<T>>) {
              out.push_back({layer.name + ".weight", &op.spec.weights, &op.weights_trainable});
              out.push_back({layer.name + ".bias", &op.spec.bias, &op.bias_trainable});
            }
          },
          layer.op);
    }
    return out;
  }

  std::vector<ConstParameterRef<T>> parameters() const {
    std::vector<ConstParameterRef<T>> out;
    for (auto& p : const_cast<Network*>(this)->parameters()) {
      out.push_back({p.name, p.value, *p.trainable});
    }
    return out;
  }

  Tensor<T>* find_parameter(const std::string& name) {
    for (auto& p : parameters()) {
      if (p.name == name) return p.value;
    }
    return nullptr;
  }

  bool layer_has_trainable(std::size_t index) const {
    return std::visit(
        [](const auto& op) {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, ConvLayer<T>> || std::is_same_v<Op, DenseLayer<T>>) {
            return op.weights_trainable || op.bias_trainable;
          } else {
            return false;
          }
        },
        layers_.at(index).op);
  }

  /// Number of leading layers that hold no trainable parameters and behave
  /// identically in training and inference; their output is a pure function
  /// of the input while the current flags hold.
  std::size_t frozen_prefix_length() const {
    std::size_t i = 0;
    for (; i < layers_.size(); ++i) {
      if (layer_has_trainable(i)) break;
      if (std::holds_alternative<DropoutLayer>(layers_[i].op)) break;
      if (std::holds_alternative<SoftmaxLayer>(layers_[i].op)) break;
    }
    return i;
  }

  /// Output shape (without the batch axis) after every layer; throws
  /// ShapeError when consecutive layers do not chain.
  std::vector<Shape> layer_output_shapes() const {
    std::vector<Shape> shapes;
    Shape cur = input_shape_;
    for (const auto& layer : layers_) {
      std::visit(
          [&](const auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvLayer<T>>) {
              if (cur.size() != 3 || cur[0] != op.spec.in_channels) {
                throw ShapeError(layer.name + ": expects " + std::to_string(op.spec.in_channels) +
                                 " channels, got " + shape_to_string(cur));
              }
              cur = {op.spec.out_channels, output_shape(cur[1], 3, 1, 1, layer.name),
                     output_shape(cur[2], 3, 1, 1, layer.name)};
            } else if constexpr (std::is_same_v<Op, PoolLayer>) {
              if (cur.size() != 3) throw ShapeError(layer.name + ": expects a feature map");
              cur = {cur[0], output_shape(cur[1], op.spec.window, op.spec.stride, 0, layer.name),
                     output_shape(cur[2], op.spec.window, op.spec.stride, 0, layer.name)};
            } else if constexpr (std::is_same_v<Op, FlattenLayer>) {
              cur = {shape_numel(cur)};
            } else if constexpr (std::is_same_v<Op, DenseLayer<T>>) {
              if (cur.size() != 1 || cur[0] != op.spec.in_features) {
                throw ShapeError(layer.name + ": expects " + std::to_string(op.spec.in_features) +
                                 " features, got " + shape_to_string(cur));
              }
              cur = {op.spec.out_features};
            } else if constexpr (std::is_same_v<Op, SoftmaxLayer>) {
              if (cur.size() != 1) throw ShapeError(layer.name + ": expects a vector");
            }
          },
          layer.op);
      shapes.push_back(cur);
    }
    return shapes;
  }

 private:
  template <typename Op>
  Network& push(std::string name, Op op) {
    layers_.push_back({std::move(name), LayerOp<T>(std::move(op))});
    return *this;
  }

  Shape input_shape_;
  std::vector<Layer<T>> layers_;
};

/// Total number of scalars in parameters whose name satisfies `pred`.
template <typename T, typename Pred>
std::size_t parameter_count(const Network<T>& net, Pred pred) {
  std::size_t total = 0;
  for (const auto& p : net.parameters()) {
    if (pred(p.name)) total += p.value->size();
  }
  return total;
}

template <typename T>
std::size_t parameter_count(const Network<T>& net) {
  return parameter_count(net, [](const std::string&) { return true; });
}

inline bool is_conv_parameter(const std::string& name) { return name.rfind("block", 0) == 0; }

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases for
/// every dense layer.
template <typename T>
void init_dense_head(Network<T>& net, std::uint64_t seed) {
  std::uint64_t index = 0;
  for (auto& layer : net.layers()) {
    if (auto* dense = std::get_if<DenseLayer<T>>(&layer.op)) {
      Rng rng(derive_seed(seed, {0xde45e, index++}));
      const double limit = 1.0 / std::sqrt(static_cast<double>(dense->spec.in_features));
      for (auto& w : dense->spec.weights) w = static_cast<T>(uniform(rng, -limit, limit));
      dense->spec.bias.fill(T(0));
    }
  }
}

/// Divisor applied to the first convolution's weights by init_conv_random.
/// Inputs are mean-centred pixels in roughly [-128, 128], not unit variance,
/// and without it the flattened features have rms near 165.
inline constexpr double kRandomConvInputScale = 32.0;

/// He-uniform convolution weights (limit sqrt(6 / fan_in), divided by
/// kRandomConvInputScale for the first layer) and zero biases. Used when no
/// pretrained archive is imported.
template <typename T>
void init_conv_random(Network<T>& net, std::uint64_t seed) {
  std::uint64_t index = 0;
  for (auto& layer : net.layers()) {
    if (auto* conv = std::get_if<ConvLayer<T>>(&layer.op)) {
      const bool first = index == 0;
      Rng rng(derive_seed(seed, {0xc0de, index++}));
      const double fan_in = static_cast<double>(conv->spec.in_channels * 9);
      const double limit = std::sqrt(6.0 / fan_in) / (first ? kRandomConvInputScale : 1.0);
      for (auto& w : conv->spec.weights) w = static_cast<T>(uniform(rng, -limit, limit));
      conv->spec.bias.fill(T(0));
    }
  }
}

/// Frozen convolution blocks and trainable head, or everything trainable.
template <typename T>
Network<T>& set_transfer_mode(Network<T>& net, bool frozen_conv) {
  for (auto& layer : net.layers()) {
    if (auto* conv = std::get_if<ConvLayer<T>>(&layer.op)) {
      conv->weights_trainable = !frozen_conv;
      conv->bias_trainable = !frozen_conv;
    } else if (auto* dense = std::get_if<DenseLayer<T>>(&layer.op)) {
      dense->weights_trainable = true;
      dense->bias_trainable = true;
    }
  }
  return net;
}

/// The VGG16 damage classifier: five convolution blocks of 2, 2, 3, 3, 3 3x3
/// convolutions (64, 128, 256, 512, 512 filters) each followed by 2x2 max
/// pooling, then flatten, dense 512, dropout, dense 256, dropout, dense 4 and
/// softmax. ReLU follows every convolution and the two hidden dense layers.
///
/// Convolution parameters start at zero pending import; the head is seeded.
/// The network starts in transfer mode (convolutions frozen). `image_size`
/// other than 224 gives the same network at reduced resolution with the
/// first dense layer resized to 512 * (image_size / 32)^2 inputs.
template <typename T = float>
Network<T> build_vgg16_damage(std::uint64_t init_seed, std::size_t image_size = kDefaultImageSize,
                              double dropout_rate = 0.5) {
  if (image_size < 32 || image_size % 32 != 0) {
    throw ShapeError("image size must be a positive multiple of 32, got " +
                     std::to_string(image_size));
  }
  Network<T> net({3, image_size, image_size});
  constexpr std::size_t kConvsPerBlock[] = {2, 2, 3, 3, 3};
  constexpr std::size_t kFilters[] = {64, 128, 256, 512, 512};
  std::size_t channels = 3;
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t c = 0; c < kConvsPerBlock[b]; ++c) {
      const std::string name = "block" + std::to_string(b + 1) + "_conv" + std::to_string(c + 1);
      net.add_conv(name, channels, kFilters[b]).add_relu(name + "_relu");
      channels = kFilters[b];
    }
    net.add_pool("block" + std::to_string(b + 1) + "_pool");
  }
  const std::size_t side = image_size / 32;
  net.add_flatten("flatten")
      .add_dense("dense1", channels * side * side, 512)
      .add_relu("dense1_relu")
      .add_dropout("dropout1", dropout_rate)
      .add_dense("dense2", 512, 256)
      .add_relu("dense2_relu")
      .add_dropout("dropout2", dropout_rate)
      .add_dense("dense3", 256, kNumClasses)
      .add_softmax("softmax");
  init_dense_head(net, init_seed);
  set_transfer_mode(net, true);
  return net;
}

// ---------------------------------------------------------------------------
// Whole-network passes.

template <typename T>
struct ForwardTrace {
  Mode mode = Mode::kInference;
  std::size_t first_layer = 0;
  std::uint64_t seed = 0;
  Shape input_shape;
  // One entry per executed layer; empty for layers no backward pass reaches.
  std::vector<LayerCache<T>> caches;
  // Full output shape (with batch axis) after each executed layer.
  std::vector<Shape> output_shapes;
  Tensor<T> output{Shape{1}};

  /// Softmax output when the range ended at the softmax layer.
  const Tensor<T>& probabilities() const { return output; }
};

template <typename T>
class GradientSet {
 public:
  void add(std::string name, Tensor<T> grad) { entries_.emplace_back(std::move(name), std::move(grad)); }
  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, g] : entries_) {
      if (n == name) return &g;
    }
    return nullptr;
  }
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  void reverse() { std::reverse(entries_.begin(), entries_.end()); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

namespace detail {

template <typename T>
std::size_t lowest_trainable_layer(const Network<T>& net) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.layer_has_trainable(i)) return i;
  }
  return net.size();
}

}  // namespace detail

/// Runs layers [begin, end) on `x`, which must be the output of layer
/// begin - 1 (or the network input). Dropout layer l draws its mask from
/// derive_seed(seed, {l}), so a range reproduces the same masks as the full
/// pass.
template <typename T>
ForwardTrace<T> forward_range(const Network<T>& net, Tensor<T> x, std::size_t begin,
                              std::size_t end, Mode mode, std::uint64_t seed) {
  if (begin > end || end > net.size()) throw std::out_of_range("invalid layer range");
  ForwardTrace<T> trace;
  trace.mode = mode;
  trace.first_layer = begin;
  trace.seed = seed;
  trace.input_shape = x.shape();
  const bool training = mode == Mode::kTraining;
  const std::size_t cache_from = training ? detail::lowest_trainable_layer(net) : net.size();
  for (std::size_t l = begin; l < end; ++l) {
    const Layer<T>& layer = net.layers()[l];
    const bool keep = l >= cache_from;
    LayerCache<T> cache;
    try {
      std::visit(
          [&](const auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvLayer<T>>) {
              if (keep) {
                auto [y, c] = conv_forward(x, op.spec);
                x = std::move(y);
                cache = std::move(c);
              } else {
                x = conv_apply(x, op.spec);
              }
            } else if constexpr (std::is_same_v<Op, ReluLayer>) {
              auto [y, c] = relu_forward(x, keep);
              x = std::move(y);
              if (keep) cache = std::move(c);
            } else if constexpr (std::is_same_v<Op, PoolLayer>) {
              auto [y, c] = maxpool_forward(x, op.spec, keep);
              x = std::move(y);
              if (keep) cache = std::move(c);
            } else if constexpr (std::is_same_v<Op, FlattenLayer>) {
              x = flatten(std::move(x));
            } else if constexpr (std::is_same_v<Op, DenseLayer<T>>) {
              if (keep) {
                auto [y, c] = dense_forward(x, op.spec);
                x = std::move(y);
                cache = std::move(c);
              } else {
                x = dense_apply(x, op.spec);
              }
            } else if constexpr (std::is_same_v<Op, DropoutLayer>) {
              auto [y, c] = dropout_forward(x, DropoutSpec(op.rate, mode, derive_seed(seed, {l})));
              x = std::move(y);
              if (keep) cache = std::move(c);
            } else if constexpr (std::is_same_v<Op, SoftmaxLayer>) {
              x = softmax(x);
            }
          },
          layer.op);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + layer.name + ": " + e.what());
    }
    trace.output_shapes.push_back(x.shape());
    trace.caches.push_back(std::move(cache));
  }
  trace.output = std::move(x);
  return trace;
}

/// Full pass over an input batch [N, C, H, W] matching the network input.
template <typename T>
ForwardTrace<T> forward(const Network<T>& net, Tensor<T> x, Mode mode, std::uint64_t seed = 0) {
  const Shape& in = net.input_shape();
  if (x.rank() != 4 || x.extent(1) != in[0] || x.extent(2) != in[1] || x.extent(3) != in[2]) {
    throw ShapeError("network input must be [N," + std::to_string(in[0]) + "," +
                     std::to_string(in[1]) + "," + std::to_string(in[2]) + "], got " +
                     shape_to_string(x.shape()));
  }
  return forward_range(net, std::move(x), 0, net.size(), mode, seed);
}

/// Backpropagates `grad` through the traced range and returns gradients
/// for trainable parameters only, in network order.
///
/// When the range ends at the softmax layer, `grad` is the loss gradient with
/// respect to the logits (the softmax input); otherwise it is with respect to
/// the range output.
template <typename T>
GradientSet<T> backward(const Network<T>& net, const ForwardTrace<T>& trace, Tensor<T> grad) {
  if (trace.mode != Mode::kTraining) {
    throw std::logic_error("backward needs a training-mode trace");
  }
  const std::size_t begin = trace.first_layer;
  const std::size_t end = begin + trace.caches.size();
  if (end > net.size()) throw std::logic_error("trace does not belong to this network");
  std::size_t l = end;
  if (l > begin && std::holds_alternative<SoftmaxLayer>(net.layers()[l - 1].op)) --l;
  auto input_shape_of = [&](std::size_t layer) -> const Shape& {
    return layer == begin ? trace.input_shape : trace.output_shapes[layer - begin - 1];
  };
  if (grad.shape() != input_shape_of(l)) {
    throw ShapeError("upstream gradient shape " + shape_to_string(grad.shape()) +
                     " does not match the traced output");
  }

  // need_input[l]: some layer in [begin, l) has trainable parameters.
  std::vector<bool> need_input(net.size() + 1, false);
  for (std::size_t i = begin + 1; i <= end && i <= net.size(); ++i) {
    need_input[i] = need_input[i - 1] || net.layer_has_trainable(i - 1);
  }

  GradientSet<T> grads;
  auto mismatch = [&](const Layer<T>& layer) {
    return std::logic_error("trace does not match network at layer " + layer.name);
  };
  while (l > begin) {
    --l;
    const Layer<T>& layer = net.layers()[l];
    const LayerCache<T>& cache = trace.caches[l - begin];
    const bool want_input = need_input[l];
    if (!want_input && !net.layer_has_trainable(l)) break;
    std::visit(
        [&](const auto& op) {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, ConvLayer<T>>) {
            const auto* c = std::get_if<ConvCache<T>>(&cache);
            if (!c) throw mismatch(layer);
            auto g = conv_backward(grad, *c, op.spec, want_input);
            if (op.bias_trainable) grads.add(layer.name + ".bias", std::move(g.grad_bias));
            if (op.weights_trainable) grads.add(layer.name + ".weight", std::move(g.grad_weights));
            if (want_input) grad = std::move(*g.grad_input);
          } else if constexpr (std::is_same_v<Op, ReluLayer>) {
            const auto* c = std::get_if<ReluCache>(&cache);
            if (!c) throw mismatch(layer);
            grad = relu_backward(grad, *c);
          } else if constexpr (std::is_same_v<Op, PoolLayer>) {
            const auto* c = std::get_if<PoolCache>(&cache);
            if (!c) throw mismatch(layer);
            grad = maxpool_backward(grad, *c, op.spec);
          } else if constexpr (std::is_same_v<Op, FlattenLayer>) {
            grad = reshape(std::move(grad), input_shape_of(l));
          } else if constexpr (std::is_same_v<Op, DenseLayer<T>>) {
            const auto* c = std::get_if<DenseCache<T>>(&cache);
            if (!c) throw mismatch(layer);
            auto g = dense_backward(grad, *c, op.spec, want_input);
            if (op.bias_trainable) grads.add(layer.name + ".bias", std::move(g.grad_bias));
            if (op.weights_trainable) grads.add(layer.name + ".weight", std::move(g.grad_weights));
            if (want_input) grad = std::move(*g.grad_input);
          } else if constexpr (std::is_same_v<Op, DropoutLayer>) {
            const auto* c = std::get_if<DropoutCache<T>>(&cache);
            if (!c) throw mismatch(layer);
            grad = dropout_backward(grad, *c);
          } else if constexpr (std::is_same_v<Op, SoftmaxLayer>) {
            throw std::logic_error("softmax is only supported as the final layer");
          }
        },
        layer.op);
  }
  grads.reverse();
  return grads;
}

}  // namespace quakenet

#endif  // QUAKENET_MODEL_HPP_
