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

#ifndef QUAKENET_LAYERS_HPP_
#define QUAKENET_LAYERS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "quakenet/gemm.hpp"
#include "quakenet/random.hpp"
#include "quakenet/tensor.hpp"

// Forward and backward passes for every layer kind of the network. Activations
// are NCHW; all functions are pure apart from the explicit dropout seed.

namespace quakenet {

enum class Mode { kTraining, kInference };

/// Spatial output extent of a sliding-window layer:
/// O = (I - P + 2 * pad) / S + 1. Throws ShapeError naming `layer` when the
/// window does not tile the padded input exactly.
inline std::size_t output_shape(std::size_t input, std::size_t window, std::size_t stride,
                                std::size_t padding, const std::string& layer = "layer") {
  const std::size_t padded = input + 2 * padding;
  if (stride == 0 || window == 0) {
    throw ShapeError(layer + ": window and stride must be positive");
  }
  if (padded < window) {
    throw ShapeError(layer + ": window " + std::to_string(window) + " exceeds padded input " +
                     std::to_string(padded));
  }
  if ((padded - window) % stride != 0) {
    throw ShapeError(layer + ": input " + std::to_string(input) + " with window " +
                     std::to_string(window) + ", stride " + std::to_string(stride) +
                     " and padding " + std::to_string(padding) + " does not tile evenly");
  }
  return (padded - window) / stride + 1;
}

namespace detail {

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_to_string(shape));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution: 3x3 kernel, stride 1, zero padding 1.

template <typename T>
struct ConvSpec {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 1;
  static constexpr std::size_t kPadding = 1;

  ConvSpec(std::size_t in, std::size_t out)
      : in_channels(in), out_channels(out), weights({out, in, kKernel, kKernel}), bias({out}) {}

  std::size_t in_channels;
  std::size_t out_channels;
  Tensor<T> weights;  // [out, in, 3, 3]
  Tensor<T> bias;     // [out]
};

template <typename T>
struct ConvCache {
  Tensor<T> input;
};

template <typename T>
struct ConvGrads {
  std::optional<Tensor<T>> grad_input;
  Tensor<T> grad_weights;
  Tensor<T> grad_bias;
};

namespace detail {

template <typename T>
void check_conv_input(const Shape& xs, const ConvSpec<T>& spec) {
  require_rank(xs, 4, "convolution");
  if (xs[1] != spec.in_channels) {
    throw ShapeError("convolution expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + shape_to_string(xs));
  }
  if (spec.weights.shape() != Shape{spec.out_channels, spec.in_channels, 3, 3} ||
      spec.bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("convolution parameters inconsistent with channel counts");
  }
}

// col[(c * 9 + ky * 3 + kx) * ld + oy * W + ox] = x[c, oy + ky - 1, ox + kx - 1] or 0.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, T* col, std::size_t ld) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = col + ((c * 3 + ky) * 3 + kx) * ld;
        for (std::size_t oy = 0; oy < h; ++oy) {
          T* dst = row + oy * w;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          // ox + kx - 1 must land in [0, w).
          const std::size_t lo = kx == 0 ? 1 : 0;
          const std::size_t hi = kx == 2 ? w - 1 : w;
          if (lo > 0) dst[0] = T(0);
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox + kx - 1];
          if (hi < w) dst[w - 1] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* x) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = col + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t oy = 0; oy < h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* src = row + oy * w;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const std::size_t lo = kx == 0 ? 1 : 0;
          const std::size_t hi = kx == 2 ? w - 1 : w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox + kx - 1] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

/// Convolution without a backward cache (im2col + GEMM). Small feature maps
/// are stacked side by side so one GEMM covers several samples; every output
/// is still the same ordered sum, so grouping does not change results.
template <typename T>
Tensor<T> conv_apply(const Tensor<T>& x, const ConvSpec<T>& spec) {
  detail::check_conv_input(x.shape(), spec);
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t oh = output_shape(h, 3, 1, 1, "convolution");
  const std::size_t ow = output_shape(w, 3, 1, 1, "convolution");
  const std::size_t oc = spec.out_channels, k = c * 9, hw = oh * ow;
  constexpr std::size_t kTargetColumns = 1024;
  const std::size_t group = std::clamp<std::size_t>(kTargetColumns / hw, 1, n);
  Tensor<T> out({n, oc, oh, ow});
  std::vector<T> col(k * hw * group);
  std::vector<T> stacked(group > 1 ? oc * hw * group : 0);
  for (std::size_t s0 = 0; s0 < n; s0 += group) {
    const std::size_t g = std::min(group, n - s0);
    const std::size_t cols = g * hw;
    for (std::size_t j = 0; j < g; ++j) {
      detail::im2col(x.data() + (s0 + j) * c * h * w, c, h, w, col.data() + j * hw, cols);
    }
    if (g == 1) {
      T* dst = out.data() + s0 * oc * hw;
      gemm(false, false, oc, hw, k, spec.weights.data(), k, col.data(), hw, dst, hw, false);
    } else {
      gemm(false, false, oc, cols, k, spec.weights.data(), k, col.data(), cols, stacked.data(), cols,
           false);
      for (std::size_t j = 0; j < g; ++j) {
        for (std::size_t o = 0; o < oc; ++o) {
          const T* src = stacked.data() + o * cols + j * hw;
          std::copy(src, src + hw, out.data() + ((s0 + j) * oc + o) * hw);
        }
      }
    }
    for (std::size_t j = 0; j < g; ++j) {
      T* dst = out.data() + (s0 + j) * oc * hw;
      for (std::size_t o = 0; o < oc; ++o) {
        const T b = spec.bias[o];
        T* plane = dst + o * hw;
        for (std::size_t i = 0; i < hw; ++i) plane[i] += b;
      }
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, ConvCache<T>> conv_forward(const Tensor<T>& x, const ConvSpec<T>& spec) {
  Tensor<T> out = conv_apply(x, spec);
  return {std::move(out), ConvCache<T>{x}};
}

/// Direct nested-loop convolution; the reference the im2col path must match.
/// Terms are accumulated in (channel, ky, kx) order with fused multiply-adds,
/// then the bias is added.
template <typename T>
Tensor<T> conv_forward_reference(const Tensor<T>& x, const ConvSpec<T>& spec) {
  detail::check_conv_input(x.shape(), spec);
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  Tensor<T> out({n, spec.out_channels, h, w});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w; ++ox) {
          T acc = 0;
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - 1;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                    ix >= static_cast<std::ptrdiff_t>(w)) {
                  continue;
                }
                acc = std::fma(spec.weights.at({o, ci, ky, kx}),
                               x.at({s, ci, static_cast<std::size_t>(iy),
                                     static_cast<std::size_t>(ix)}),
                               acc);
              }
            }
          }
          out.at({s, o, oy, ox}) = acc + spec.bias[o];
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_backward(const Tensor<T>& grad_out, const ConvCache<T>& cache,
                           const ConvSpec<T>& spec, bool need_input_grad = true) {
  const Tensor<T>& x = cache.input;
  detail::check_conv_input(x.shape(), spec);
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t oc = spec.out_channels, k = c * 9, hw = h * w;
  if (grad_out.shape() != Shape{n, oc, h, w}) {
    throw ShapeError("convolution gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match forward output " + shape_to_string({n, oc, h, w}));
  }
  ConvGrads<T> grads{std::nullopt, Tensor<T>(spec.weights.shape()), Tensor<T>({oc})};
  if (need_input_grad) grads.grad_input.emplace(x.shape());

  std::vector<T> col(k * hw);
  for (std::size_t s = 0; s < n; ++s) {
    const T* g = grad_out.data() + s * oc * hw;
    for (std::size_t o = 0; o < oc; ++o) {
      T sum = grads.grad_bias[o];
      for (std::size_t i = 0; i < hw; ++i) sum += g[o * hw + i];
      grads.grad_bias[o] = sum;
    }
    detail::im2col(x.data() + s * c * hw, c, h, w, col.data(), hw);
    gemm(false, true, oc, k, hw, g, hw, col.data(), hw, grads.grad_weights.data(), k, s > 0);
    if (need_input_grad) {
      gemm(true, false, k, hw, oc, spec.weights.data(), k, g, hw, col.data(), hw, false);
      detail::col2im_add(col.data(), c, h, w, grads.grad_input->data() + s * c * hw);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Max pooling.

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct PoolCache {
  Shape input_shape;
  // Winning offset inside each window (dy * window + dx), one per output.
  std::vector<std::uint8_t> argmax;
};

template <typename T>
std::pair<Tensor<T>, PoolCache> maxpool_forward(const Tensor<T>& x, const PoolSpec& spec = {},
                                                bool keep_cache = true) {
  detail::require_rank(x.shape(), 4, "max pooling");
  if (spec.window == 0 || spec.window > 16) throw ShapeError("max pooling window must be in 1..16");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t oh = output_shape(h, spec.window, spec.stride, 0, "max pooling");
  const std::size_t ow = output_shape(w, spec.window, spec.stride, 0, "max pooling");
  Tensor<T> out({n, c, oh, ow});
  PoolCache cache{x.shape(), {}};
  if (keep_cache) cache.argmax.resize(out.size());
  std::size_t idx = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++idx) {
        const std::size_t y0 = oy * spec.stride, x0 = ox * spec.stride;
        T best = src[y0 * w + x0];
        std::uint8_t best_at = 0;
        // Strict comparison keeps the first maximum in row-major scan order.
        for (std::size_t dy = 0; dy < spec.window; ++dy) {
          for (std::size_t dx = 0; dx < spec.window; ++dx) {
            const T v = src[(y0 + dy) * w + x0 + dx];
            if (v > best) {
              best = v;
              best_at = static_cast<std::uint8_t>(dy * spec.window + dx);
            }
          }
        }
        out[idx] = best;
        if (keep_cache) cache.argmax[idx] = best_at;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const PoolCache& cache,
                           const PoolSpec& spec = {}) {
  const Shape& xs = cache.input_shape;
  detail::require_rank(xs, 4, "max pooling backward");
  const std::size_t h = xs[2], w = xs[3];
  const std::size_t oh = output_shape(h, spec.window, spec.stride, 0, "max pooling");
  const std::size_t ow = output_shape(w, spec.window, spec.stride, 0, "max pooling");
  if (grad_out.shape() != Shape{xs[0], xs[1], oh, ow} || cache.argmax.size() != grad_out.size()) {
    throw ShapeError("max pooling gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match the forward cache");
  }
  Tensor<T> grad_in(xs);
  std::size_t idx = 0;
  for (std::size_t plane = 0; plane < xs[0] * xs[1]; ++plane) {
    T* dst = grad_in.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++idx) {
        const std::size_t dy = cache.argmax[idx] / spec.window;
        const std::size_t dx = cache.argmax[idx] % spec.window;
        dst[(oy * spec.stride + dy) * w + ox * spec.stride + dx] += grad_out[idx];
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// ReLU.

struct ReluCache {
  Shape shape;
  std::vector<std::uint8_t> positive;
};

template <typename T>
std::pair<Tensor<T>, ReluCache> relu_forward(const Tensor<T>& x, bool keep_cache = true) {
  Tensor<T> out(x.shape());
  ReluCache cache{x.shape(), {}};
  if (keep_cache) cache.positive.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool pos = x[i] > T(0);
    out[i] = pos ? x[i] : T(0);
    if (keep_cache) cache.positive[i] = pos;
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const ReluCache& cache) {
  if (grad_out.shape() != cache.shape || cache.positive.size() != grad_out.size()) {
    throw ShapeError("relu gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match the forward cache");
  }
  Tensor<T> grad_in(cache.shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = cache.positive[i] ? grad_out[i] : T(0);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Dense (fully connected): y = x W + b with W stored [in, out].

template <typename T>
struct DenseSpec {
  DenseSpec(std::size_t in, std::size_t out)
      : in_features(in), out_features(out), weights({in, out}), bias({out}) {}

  std::size_t in_features;
  std::size_t out_features;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
struct DenseCache {
  Tensor<T> input;
};

template <typename T>
struct DenseGrads {
  std::optional<Tensor<T>> grad_input;
  Tensor<T> grad_weights;
  Tensor<T> grad_bias;
};

template <typename T>
Tensor<T> dense_apply(const Tensor<T>& x, const DenseSpec<T>& spec) {
  detail::require_rank(x.shape(), 2, "dense");
  if (x.extent(1) != spec.in_features) {
    throw ShapeError("dense expects " + std::to_string(spec.in_features) + " features, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t n = x.extent(0);
  Tensor<T> out({n, spec.out_features});
  gemm(false, false, n, spec.out_features, spec.in_features, x.data(), spec.in_features,
       spec.weights.data(), spec.out_features, out.data(), spec.out_features, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.out_features; ++j) out[i * spec.out_features + j] += spec.bias[j];
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, DenseCache<T>> dense_forward(const Tensor<T>& x, const DenseSpec<T>& spec) {
  Tensor<T> out = dense_apply(x, spec);
  return {std::move(out), DenseCache<T>{x}};
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const DenseCache<T>& cache,
                             const DenseSpec<T>& spec, bool need_input_grad = true) {
  const Tensor<T>& x = cache.input;
  const std::size_t n = x.extent(0), in = spec.in_features, out = spec.out_features;
  if (x.shape() != Shape{n, in} || grad_out.shape() != Shape{n, out}) {
    throw ShapeError("dense gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match the forward cache");
  }
  DenseGrads<T> grads{std::nullopt, Tensor<T>({in, out}), Tensor<T>({out})};
  gemm(true, false, in, out, n, x.data(), in, grad_out.data(), out, grads.grad_weights.data(),
       out, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out; ++j) grads.grad_bias[j] += grad_out[i * out + j];
  }
  if (need_input_grad) {
    grads.grad_input.emplace(Shape{n, in});
    gemm(false, true, n, in, out, grad_out.data(), out, spec.weights.data(), out,
         grads.grad_input->data(), in, false);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Inverted dropout.

struct DropoutSpec {
  explicit DropoutSpec(double r = 0.5, Mode m = Mode::kInference, std::uint64_t s = 0)
      : rate(r), mode(m), rng_seed(s) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(r));
    }
  }

  double rate;
  Mode mode;
  std::uint64_t rng_seed;
};

template <typename T>
struct DropoutCache {
  Shape shape;
  // Per-element multiplier (0 or 1 / (1 - rate)); empty after inference.
  std::vector<T> mask;
};

template <typename T>
std::pair<Tensor<T>, DropoutCache<T>> dropout_forward(const Tensor<T>& x, const DropoutSpec& spec) {
  DropoutCache<T> cache{x.shape(), {}};
  if (spec.mode == Mode::kInference) return {x, std::move(cache)};
  const T scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  Rng rng(spec.rng_seed);
  cache.mask.resize(x.size());
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = uniform01(rng) >= spec.rate;
    cache.mask[i] = keep ? scale : T(0);
    out[i] = keep ? x[i] * scale : T(0);
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const DropoutCache<T>& cache) {
  if (cache.mask.empty()) {
    throw std::logic_error("dropout backward needs the mask of a training-mode forward pass");
  }
  if (grad_out.shape() != cache.shape) {
    throw ShapeError("dropout gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match the forward cache");
  }
  Tensor<T> grad_in(cache.shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = grad_out[i] * cache.mask[i];
  return grad_in;
}

// ---------------------------------------------------------------------------
// Flatten and softmax.

template <typename T>
Tensor<T> flatten(Tensor<T> x) {
  const std::size_t n = x.extent(0);
  const std::size_t features = x.size() / n;
  return reshape(std::move(x), {n, features});
}

/// Row-wise exp(z - max z) / sum.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  detail::require_rank(logits.shape(), 2, "softmax");
  const std::size_t n = logits.extent(0), classes = logits.extent(1);
  Tensor<T> probs(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * classes;
    T* p = probs.data() + i * classes;
    T zmax = z[0];
    for (std::size_t j = 0; j < classes; ++j) {
      if (!std::isfinite(z[j])) throw std::domain_error("softmax input is not finite");
      zmax = std::max(zmax, z[j]);
    }
    T sum = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      p[j] = std::exp(z[j] - zmax);
      sum += p[j];
    }
    for (std::size_t j = 0; j < classes; ++j) p[j] /= sum;
  }
  return probs;
}

}  // namespace quakenet

#endif  // QUAKENET_LAYERS_HPP_
