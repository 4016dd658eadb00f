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

#ifndef QUAKENET_TRAIN_HPP_
#define QUAKENET_TRAIN_HPP_

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quakenet/dataset.hpp"
#include "quakenet/model.hpp"
#include "quakenet/optim.hpp"
#include "quakenet/random.hpp"
#include "quakenet/tensor.hpp"

namespace quakenet {

/// Failure inside the training loop, tagged with where it happened.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 20;
  double learning_rate = 1e-5;
  double momentum = 0.9;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  bool freeze_conv = true;
  std::size_t image_size = kDefaultImageSize;
  // Compute the output of the frozen leading layers once per image instead
  // of every epoch. The result is identical because those layers are
  // deterministic and never updated.
  bool cache_frozen_features = true;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw std::invalid_argument("dropout rate must be in [0, 1)");
    }
    if (image_size < 32 || image_size % 32 != 0) {
      throw std::invalid_argument("image size must be a positive multiple of 32");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"dropout_rate", c.dropout_rate},
          {"seed", c.seed},
          {"freeze_conv", c.freeze_conv},
          {"image_size", c.image_size}};
}

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct History {
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  std::vector<double> epoch_seconds;
  std::vector<std::size_t> batches_per_epoch;
};

namespace detail {

// Supplies minibatch inputs at layer `start` of the network: either decoded
// images (start == 0) or precomputed outputs of the frozen prefix.
template <typename T>
class BatchSource {
 public:
  BatchSource(const Network<T>& net, const DatasetIndex& index, std::size_t image_size,
              std::size_t prefix, std::size_t chunk)
      : index_(&index), image_size_(image_size), start_(prefix) {
    if (prefix == 0) return;
    Shape per = net.layer_output_shapes().at(prefix - 1);
    per_size_ = shape_numel(per);
    sample_shape_ = per;
    features_.resize(index.size() * per_size_);
    for (const auto& plan : sequential_batches(index.size(), chunk)) {
      Batch b = load_batch(index, plan, image_size);
      auto trace = forward_range(net, b.images.template cast<T>(), 0, prefix, Mode::kInference, 0);
      std::copy(trace.output.begin(), trace.output.end(),
                features_.begin() + static_cast<std::ptrdiff_t>(plan.front() * per_size_));
    }
  }

  std::size_t start_layer() const { return start_; }

  std::pair<Tensor<T>, std::vector<int>> get(const BatchPlan& plan) const {
    std::vector<int> labels;
    for (std::size_t i : plan) labels.push_back(static_cast<int>(index_->entries.at(i).label));
    if (start_ == 0) {
      Batch b = load_batch(*index_, plan, image_size_);
      return {b.images.template cast<T>(), std::move(labels)};
    }
    Shape shape{plan.size()};
    shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
    Tensor<T> x(shape);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto src = features_.begin() + static_cast<std::ptrdiff_t>(plan[i] * per_size_);
      std::copy(src, src + static_cast<std::ptrdiff_t>(per_size_),
                x.data() + i * per_size_);
    }
    return {std::move(x), std::move(labels)};
  }

 private:
  const DatasetIndex* index_;
  std::size_t image_size_;
  std::size_t start_;
  std::size_t per_size_ = 0;
  Shape sample_shape_;
  std::vector<T> features_;
};

template <typename T>
EpochMetrics evaluate_source(const Network<T>& net, const BatchSource<T>& source, std::size_t count,
                             std::size_t batch_size) {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& plan : sequential_batches(count, batch_size)) {
    auto [x, labels] = source.get(plan);
    auto trace = forward_range(net, std::move(x), source.start_layer(), net.size(), Mode::kInference, 0);
    const LossReport r = cross_entropy(trace.probabilities(), labels);
    loss_sum += r.loss * static_cast<double>(r.batch_size);
    correct += r.correct_count;
  }
  EpochMetrics m;
  m.val_loss = loss_sum / static_cast<double>(count);
  m.val_accuracy = static_cast<double>(correct) / static_cast<double>(count);
  return m;
}

}  // namespace detail

/// Inference-mode loss and accuracy over a whole dataset at the network's
/// input resolution; fills the validation fields only.
template <typename T>
EpochMetrics evaluate(const Network<T>& net, const DatasetIndex& index, std::size_t batch_size) {
  if (index.entries.empty()) throw DataError("cannot evaluate an empty dataset");
  detail::BatchSource<T> source(net, index, net.input_shape()[1], 0, batch_size);
  return detail::evaluate_source(net, source, index.size(), batch_size);
}

/// Runs the epoch loop in place on `net`: seeded shuffle, then forward,
/// backward and momentum SGD per minibatch, then a validation pass. Train
/// metrics are means over the epoch's minibatches weighted by batch size.
template <typename T>
History train(Network<T>& net, const DatasetIndex& train_index, const DatasetIndex& val_index,
              const TrainConfig& config,
              const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  config.validate();
  if (net.input_shape() != Shape{3, config.image_size, config.image_size}) {
    throw std::invalid_argument("config image size " + std::to_string(config.image_size) +
                                " does not match the network input " +
                                shape_to_string(net.input_shape()));
  }
  History history;
  history.config = config;
  if (config.epochs == 0) return history;
  if (train_index.entries.empty()) throw DataError("training dataset is empty");
  if (val_index.entries.empty()) throw DataError("validation dataset is empty");

  set_transfer_mode(net, config.freeze_conv);
  for (auto& layer : net.layers()) {
    if (auto* d = std::get_if<DropoutLayer>(&layer.op)) d->rate = config.dropout_rate;
  }

  const std::size_t prefix = config.cache_frozen_features ? net.frozen_prefix_length() : 0;
  std::unique_ptr<detail::BatchSource<T>> train_source, val_source;
  try {
    train_source = std::make_unique<detail::BatchSource<T>>(net, train_index, config.image_size,
                                                            prefix, config.batch_size);
    val_source = std::make_unique<detail::BatchSource<T>>(net, val_index, config.image_size, prefix,
                                                          config.batch_size);
  } catch (const std::exception& e) {
    throw TrainingError(std::string("while precomputing frozen features: ") + e.what());
  }

  SgdMomentum<T> optimizer(config.learning_rate, config.momentum);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = make_batches(train_index, config.batch_size, derive_seed(config.seed, {1, epoch}));
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        auto [x, labels] = train_source->get(batches[b]);
        auto trace = forward_range(net, std::move(x), train_source->start_layer(), net.size(),
                                   Mode::kTraining, derive_seed(config.seed, {2, epoch, b}));
        const LossReport report = cross_entropy(trace.probabilities(), labels);
        const GradientSet<T> grads =
            backward(net, trace, loss_gradient_at_logits(trace.probabilities(), labels));
        optimizer.step(net, grads);
        loss_sum += report.loss * static_cast<double>(report.batch_size);
        correct += report.correct_count;
        seen += report.batch_size;
      } catch (const std::exception& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                            ": " + e.what());
      }
    }
    EpochMetrics m;
    try {
      m = detail::evaluate_source(net, *val_source, val_index.size(), config.batch_size);
    } catch (const std::exception& e) {
      throw TrainingError("epoch " + std::to_string(epoch) + ", validation: " + e.what());
    }
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    history.epochs.push_back(m);
    history.batches_per_epoch.push_back(batches.size());
    history.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (on_epoch) on_epoch(m);
  }
  return history;
}

inline constexpr const char* kHistoryHeader = "epoch,train_loss,train_accuracy,val_loss,val_accuracy";

/// One CSV row: losses with 6 decimals, accuracies with 4.
inline std::string format_history_row(const EpochMetrics& m) {
  char line[160];
  std::snprintf(line, sizeof(line), "%zu,%.6f,%.4f,%.6f,%.4f", m.epoch, m.train_loss,
                m.train_accuracy, m.val_loss, m.val_accuracy);
  return line;
}

/// Writes the CSV history and a `<path>.json` sidecar with the configuration
/// and per-epoch wall-clock times.
inline void write_history(const History& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << kHistoryHeader << '\n';
  for (const auto& m : history.epochs) out << format_history_row(m) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);

  nlohmann::json sidecar = {{"config", to_json(history.config)},
                            {"epochs", history.epochs.size()},
                            {"batches_per_epoch", history.batches_per_epoch},
                            {"epoch_seconds", history.epoch_seconds}};
  std::ofstream side(path + ".json", std::ios::binary | std::ios::trunc);
  if (!side) throw std::runtime_error("cannot open " + path + ".json for writing");
  side << sidecar.dump(2) << '\n';
}

inline std::vector<EpochMetrics> read_history(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) {
    throw std::runtime_error(path + " is not a history file");
  }
  std::vector<EpochMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    EpochMetrics m;
    char c1, c2, c3, c4;
    if (!(row >> m.epoch >> c1 >> m.train_loss >> c2 >> m.train_accuracy >> c3 >> m.val_loss >> c4 >>
          m.val_accuracy) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw std::runtime_error("malformed history row: " + line);
    }
    rows.push_back(m);
  }
  return rows;
}

}  // namespace quakenet

#endif  // QUAKENET_TRAIN_HPP_
