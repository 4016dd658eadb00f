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

// Central finite-difference checks for every backward operation, shared by
// the unit tests and the acceptance runner.

#ifndef QUAKENET_TESTS_GRADCHECK_HPP_
#define QUAKENET_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "quakenet/layers.hpp"
#include "quakenet/model.hpp"
#include "quakenet/optim.hpp"
#include "test_util.hpp"

namespace quakenet::test {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-6;
// Denominator floor for the relative error. Entries whose gradient is
// smaller than this are compared absolutely against kFdTolerance * floor.
inline constexpr double kFdFloor = 1e-5;

struct FdResult {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // description of the worst entry

  void merge(const FdResult& o) {
    if (o.max_error > max_error) {
      max_error = o.max_error;
      worst = o.worst;
    }
    checked += o.checked;
  }
  bool ok() const { return checked > 0 && max_error <= kFdTolerance; }
};

inline double fd_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
  return std::abs(analytic - numeric) / scale;
}

/// Compares `analytic` with central differences of `loss` in each entry of
/// `param`; entries for which `skip(i)` holds are not checked.
inline FdResult fd_compare(TensorD& param, const TensorD& analytic, const std::function<double()>& loss,
                           const std::string& label,
                           const std::function<bool(std::size_t)>& skip = nullptr) {
  FdResult r;
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (skip && skip(i)) continue;
    const double v = param[i];
    param[i] = v + kFdStep;
    const double lp = loss();
    param[i] = v - kFdStep;
    const double lm = loss();
    param[i] = v;
    const double numeric = (lp - lm) / (2 * kFdStep);
    const double err = fd_relative_error(analytic[i], numeric);
    ++r.checked;
    if (err > r.max_error) {
      r.max_error = err;
      r.worst = label + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

/// Projection loss sum_i r_i * y_i; its gradient with respect to y is r.
inline double project(const TensorD& y, const TensorD& r) {
  long double acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<long double>(y[i]) * r[i];
  return static_cast<double>(acc);
}

// sum r * conv(x) for a 3x3 stride-1 pad-1 convolution, accumulated in long
// double so the finite differences are not limited by rounding of the output.
inline double conv_projection(const TensorD& x, const ConvSpec<double>& spec, const TensorD& r) {
  const auto& s = x.shape();
  const std::size_t n = s[0], ic = s[1], h = s[2], w = s[3], oc = spec.out_channels;
  long double acc = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < oc; ++o) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          long double v = spec.bias[o];
          for (std::size_t c = 0; c < ic; ++c) {
            for (std::size_t di = 0; di < 3; ++di) {
              for (std::size_t dj = 0; dj < 3; ++dj) {
                const std::size_t yi = i + di, xj = j + dj;
                if (yi < 1 || xj < 1 || yi > h || xj > w) continue;
                v += static_cast<long double>(spec.weights[((o * ic + c) * 3 + di) * 3 + dj]) *
                     x[((b * ic + c) * h + yi - 1) * w + xj - 1];
              }
            }
          }
          acc += v * r[((b * oc + o) * h + i) * w + j];
        }
      }
    }
  }
  return static_cast<double>(acc);
}

inline FdResult check_conv(std::uint64_t seed, const Shape& input_shape, std::size_t out_channels) {
  std::mt19937_64 rng(seed);
  ConvSpec<double> spec(input_shape[1], out_channels);
  spec.weights = random_tensor<double>(spec.weights.shape(), rng);
  spec.bias = random_tensor<double>(spec.bias.shape(), rng);
  TensorD x = random_tensor<double>(input_shape, rng);
  auto [y, cache] = conv_forward(x, spec);
  const TensorD r = random_tensor<double>(y.shape(), rng);
  const ConvGrads<double> g = conv_backward(r, cache, spec);
  auto loss = [&] { return conv_projection(x, spec, r); };
  FdResult res = fd_compare(x, *g.grad_input, loss, "conv.input");
  res.merge(fd_compare(spec.weights, g.grad_weights, loss, "conv.weight"));
  res.merge(fd_compare(spec.bias, g.grad_bias, loss, "conv.bias"));
  return res;
}

inline FdResult check_maxpool(std::uint64_t seed, const Shape& input_shape) {
  std::mt19937_64 rng(seed);
  TensorD x = random_tensor<double>(input_shape, rng);
  auto [y, cache] = maxpool_forward(x);
  const TensorD r = random_tensor<double>(y.shape(), rng);
  const TensorD gx = maxpool_backward(r, cache);
  const std::size_t h = input_shape[2], w = input_shape[3];
  // Skip every element of a window whose two largest values are within 1e-4.
  std::vector<bool> tied(x.size(), false);
  for (std::size_t plane = 0; plane < input_shape[0] * input_shape[1]; ++plane) {
    for (std::size_t oy = 0; oy < h / 2; ++oy) {
      for (std::size_t ox = 0; ox < w / 2; ++ox) {
        std::vector<std::size_t> idx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) idx.push_back(plane * h * w + (2 * oy + dy) * w + 2 * ox + dx);
        }
        std::vector<double> v;
        for (std::size_t i : idx) v.push_back(x[i]);
        std::sort(v.begin(), v.end());
        if (v[3] - v[2] < 1e-4) {
          for (std::size_t i : idx) tied[i] = true;
        }
      }
    }
  }
  auto loss = [&] { return project(maxpool_forward(x, {}, false).first, r); };
  return fd_compare(x, gx, loss, "maxpool.input", [&](std::size_t i) { return tied[i]; });
}

inline FdResult check_relu(std::uint64_t seed, const Shape& input_shape) {
  std::mt19937_64 rng(seed);
  TensorD x = random_tensor<double>(input_shape, rng);
  auto [y, cache] = relu_forward(x);
  const TensorD r = random_tensor<double>(y.shape(), rng);
  const TensorD gx = relu_backward(r, cache);
  const TensorD x0 = x;
  auto loss = [&] { return project(relu_forward(x, false).first, r); };
  return fd_compare(x, gx, loss, "relu.input", [&](std::size_t i) { return std::abs(x0[i]) < 1e-4; });
}

inline FdResult check_dense(std::uint64_t seed, std::size_t n, std::size_t in, std::size_t out) {
  std::mt19937_64 rng(seed);
  DenseSpec<double> spec(in, out);
  spec.weights = random_tensor<double>(spec.weights.shape(), rng);
  spec.bias = random_tensor<double>(spec.bias.shape(), rng);
  TensorD x = random_tensor<double>({n, in}, rng);
  auto [y, cache] = dense_forward(x, spec);
  const TensorD r = random_tensor<double>(y.shape(), rng);
  const DenseGrads<double> g = dense_backward(r, cache, spec);
  auto loss = [&] { return project(dense_apply(x, spec), r); };
  FdResult res = fd_compare(x, *g.grad_input, loss, "dense.input");
  res.merge(fd_compare(spec.weights, g.grad_weights, loss, "dense.weight"));
  res.merge(fd_compare(spec.bias, g.grad_bias, loss, "dense.bias"));
  return res;
}

inline FdResult check_dropout(std::uint64_t seed, const Shape& input_shape, double rate) {
  std::mt19937_64 rng(seed);
  TensorD x = random_tensor<double>(input_shape, rng);
  const DropoutSpec spec(rate, Mode::kTraining, seed * 7919 + 1);
  auto [y, cache] = dropout_forward(x, spec);
  const TensorD r = random_tensor<double>(y.shape(), rng);
  const TensorD gx = dropout_backward(r, cache);
  // The same seed reproduces the same mask, so the loss is a fixed function of x.
  auto loss = [&] { return project(dropout_forward(x, spec).first, r); };
  return fd_compare(x, gx, loss, "dropout.input");
}

/// Dense layer followed by softmax and mean cross-entropy.
inline FdResult check_dense_softmax_ce(std::uint64_t seed, std::size_t n, std::size_t in) {
  std::mt19937_64 rng(seed);
  DenseSpec<double> spec(in, 4);
  spec.weights = random_tensor<double>(spec.weights.shape(), rng);
  spec.bias = random_tensor<double>(spec.bias.shape(), rng);
  TensorD x = random_tensor<double>({n, in}, rng);
  std::vector<int> labels(n);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int& l : labels) l = cls(rng);
  auto [z, cache] = dense_forward(x, spec);
  const TensorD gz = loss_gradient_at_logits(softmax(z), labels);
  const DenseGrads<double> g = dense_backward(gz, cache, spec);
  auto loss = [&] { return cross_entropy(softmax(dense_apply(x, spec)), labels).loss; };
  FdResult res = fd_compare(x, *g.grad_input, loss, "head.input");
  res.merge(fd_compare(spec.weights, g.grad_weights, loss, "head.weight"));
  res.merge(fd_compare(spec.bias, g.grad_bias, loss, "head.bias"));
  return res;
}

/// A reduced network with every layer kind: conv, relu, pool, flatten, two
/// dense layers with relu and dropout, softmax. Gradients from backward()
/// against differences of the training-mode cross-entropy. Only trainable
/// tensors are checked; `freeze_conv` selects transfer mode.
inline FdResult check_reduced_network(std::uint64_t seed, bool freeze_conv) {
  std::mt19937_64 rng(seed);
  Network<double> net({2, 4, 4});
  net.add_conv("block1_conv1", 2, 3)
      .add_relu("block1_conv1_relu")
      .add_pool("block1_pool")
      .add_flatten("flatten")
      .add_dense("dense1", 12, 6)
      .add_relu("dense1_relu")
      .add_dropout("dropout1", 0.5)
      .add_dense("dense2", 6, 4)
      .add_softmax("softmax");
  for (auto& p : net.parameters()) *p.value = random_tensor<double>(p.value->shape(), rng);
  set_transfer_mode(net, freeze_conv);
  const TensorD x = random_tensor<double>({3, 2, 4, 4}, rng);
  const std::vector<int> labels = {0, 3, 1};
  const std::uint64_t dropout_seed = seed + 1000;
  const ForwardTrace<double> trace = forward(net, x, Mode::kTraining, dropout_seed);
  const GradientSet<double> grads =
      backward(net, trace, loss_gradient_at_logits(trace.probabilities(), labels));
  auto loss = [&] {
    return cross_entropy(forward(net, x, Mode::kTraining, dropout_seed).probabilities(), labels).loss;
  };
  FdResult res;
  std::size_t trainable = 0;
  for (auto& p : net.parameters()) {
    const TensorD* g = grads.find(p.name);
    if (!*p.trainable) {
      if (g) res.merge({1.0, 1, p.name + " is frozen but has a gradient"});
      continue;
    }
    ++trainable;
    if (!g) {
      res.merge({1.0, 1, p.name + " has no gradient"});
      continue;
    }
    res.merge(fd_compare(*p.value, *g, loss, p.name));
  }
  if (grads.size() != trainable) res.merge({1.0, 1, "gradient set has extra entries"});
  return res;
}

/// Random instance no larger than [1,3,8,8].
inline Shape random_small_shape(std::uint64_t seed, bool even_spatial) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> ch(1, 3), sp(1, 8), half(1, 4);
  if (even_spatial) return {1, ch(rng), 2 * half(rng), 2 * half(rng)};
  return {1, ch(rng), sp(rng), sp(rng)};
}

struct LayerKindCheck {
  std::string kind;
  std::function<FdResult(std::uint64_t)> run;
};

/// One entry per layer kind; each run covers one random seed.
inline std::vector<LayerKindCheck> layer_kind_checks() {
  return {
      {"conv", [](std::uint64_t s) {
         // Seed 0 is the canonical 1x2x5x5 instance.
         const Shape shape = s == 0 ? Shape{1, 2, 5, 5} : random_small_shape(s, false);
         return check_conv(s, shape, 1 + s % 3);
       }},
      {"maxpool", [](std::uint64_t s) { return check_maxpool(s, random_small_shape(s, true)); }},
      {"relu", [](std::uint64_t s) { return check_relu(s, random_small_shape(s, false)); }},
      {"dense", [](std::uint64_t s) { return check_dense(s, 1 + s % 3, 2 + s % 7, 1 + s % 5); }},
      {"dropout", [](std::uint64_t s) {
         return check_dropout(s, random_small_shape(s, false), (s % 2) ? 0.5 : 0.25);
       }},
      {"dense+softmax+cross_entropy", [](std::uint64_t s) { return check_dense_softmax_ce(s, 1 + s % 4, 2 + s % 9); }},
  };
}

}  // namespace quakenet::test

#endif  // QUAKENET_TESTS_GRADCHECK_HPP_
