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

#ifndef QUAKENET_OPTIM_HPP_
#define QUAKENET_OPTIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quakenet/model.hpp"
#include "quakenet/tensor.hpp"

namespace quakenet {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossReport {
  double loss = 0.0;  // mean over the batch
  std::size_t correct_count = 0;
  std::size_t batch_size = 0;

  double accuracy() const {
    return batch_size == 0 ? 0.0 : static_cast<double>(correct_count) / batch_size;
  }
};

namespace detail {

template <typename T>
void check_probs_and_labels(const Tensor<T>& probs, std::span<const int> labels) {
  if (probs.rank() != 2) throw ShapeError("probabilities must be [N, classes]");
  const std::size_t n = probs.extent(0), classes = probs.extent(1);
  if (labels.size() != n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " out of range at row " +
                              std::to_string(i));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = probs[i * classes + j];
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("row " + std::to_string(i) + " is not a probability vector");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw std::domain_error("row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace detail

/// Index of the largest entry of row `i`. The lowest index wins ties.
template <typename T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t i) {
  const std::size_t classes = probs.extent(1);
  const T* row = probs.data() + i * classes;
  return static_cast<std::size_t>(std::max_element(row, row + classes) - row);
}

/// Mean categorical cross-entropy -log p[label] with p clamped to 1e-12, and
/// argmax accuracy.
template <typename T>
LossReport cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
  detail::check_probs_and_labels(probs, labels);
  const std::size_t n = probs.extent(0), classes = probs.extent(1);
  LossReport report;
  report.batch_size = n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::max(static_cast<double>(probs[i * classes + labels[i]]), kProbabilityFloor);
    total -= std::log(p);
    if (argmax_row(probs, i) == static_cast<std::size_t>(labels[i])) ++report.correct_count;
  }
  report.loss = total / static_cast<double>(n);
  return report;
}

/// d(mean cross-entropy)/d(logits) through softmax: (probs - onehot) / N.
template <typename T>
Tensor<T> loss_gradient_at_logits(const Tensor<T>& probs, std::span<const int> labels) {
  detail::check_probs_and_labels(probs, labels);
  const std::size_t n = probs.extent(0), classes = probs.extent(1);
  Tensor<T> grad(probs.shape());
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      const T onehot = static_cast<std::size_t>(labels[i]) == j ? T(1) : T(0);
      grad[i * classes + j] = (probs[i * classes + j] - onehot) * inv_n;
    }
  }
  return grad;
}

/// Classic momentum SGD: v <- mu * v - lr * g; w <- w + v.
/// No Nesterov term, dampening or weight decay.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw std::invalid_argument("momentum must be in [0, 1)");
    }
  }

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

  /// Velocity for a parameter, or nullptr before its first update.
  const Tensor<T>* velocity(const std::string& name) const {
    auto it = velocity_.find(name);
    return it == velocity_.end() ? nullptr : &it->second;
  }

  /// Updates one tensor in place.
  void step(const std::string& name, Tensor<T>& param, const Tensor<T>& grad) {
    if (param.shape() != grad.shape()) {
      throw ShapeError("gradient for " + name + " has shape " + shape_to_string(grad.shape()) +
                       ", parameter is " + shape_to_string(param.shape()));
    }
    auto it = velocity_.find(name);
    if (it == velocity_.end()) it = velocity_.emplace(name, Tensor<T>(param.shape())).first;
    Tensor<T>& v = it->second;
    if (v.shape() != param.shape()) {
      throw ShapeError("velocity for " + name + " no longer matches the parameter shape");
    }
    const T mu = static_cast<T>(momentum_);
    const T lr = static_cast<T>(learning_rate_);
    for (std::size_t i = 0; i < param.size(); ++i) {
      v[i] = mu * v[i] - lr * grad[i];
      param[i] = param[i] + v[i];
    }
  }

  /// Applies every gradient in the set to the matching network parameter.
  /// Only names present in the set are touched.
  void step(Network<T>& net, const GradientSet<T>& grads) {
    auto params = net.parameters();
    for (const auto& [name, grad] : grads) {
      auto it = std::find_if(params.begin(), params.end(),
                             [&](const ParameterRef<T>& p) { return p.name == name; });
      if (it == params.end()) throw std::invalid_argument("no parameter named " + name);
      if (!*it->trainable) throw std::logic_error("gradient supplied for frozen parameter " + name);
      step(name, *it->value, grad);
    }
  }

 private:
  double learning_rate_;
  double momentum_;
  std::map<std::string, Tensor<T>> velocity_;
};

}  // namespace quakenet

#endif  // QUAKENET_OPTIM_HPP_
