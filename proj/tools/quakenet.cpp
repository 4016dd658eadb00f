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

// quakenet: train, evaluate and run the building-damage classifier.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "quakenet/quakenet.hpp"

namespace {

using quakenet::ArchiveEntry;
using quakenet::Network;
using ordered_json = nlohmann::ordered_json;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

// Usage problems found after parsing (flag combinations, config ranges).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  // train
  std::string train_data, val_data, pretrained, out_model, history;
  bool random_conv = false;
  // eval / predict / inspect-weights
  std::string model, image, data, archive;
  bool json = false;
  quakenet::TrainConfig config;
};

// The resolved configuration goes to stdout, or to stderr when stdout
// carries JSON.
void print_config(const Options& opt, const ordered_json& config) {
  (opt.json ? std::cerr : std::cout) << "config: " << config.dump() << std::endl;
}

ordered_json optional_path(const std::string& path) {
  return path.empty() ? ordered_json() : ordered_json(path);
}

// Image side of a saved model, from the first dense layer's input width
// 512 * (side / 32)^2.
std::size_t image_size_of(const std::vector<ArchiveEntry>& entries) {
  for (const auto& e : entries) {
    if (e.name != "dense1.weight") continue;
    if (e.shape.size() != 2 || e.shape[0] % 512 != 0) break;
    const auto cells = static_cast<std::size_t>(std::lround(std::sqrt(e.shape[0] / 512.0)));
    if (cells == 0 || cells * cells * 512 != e.shape[0]) break;
    return cells * 32;
  }
  if (std::none_of(entries.begin(), entries.end(),
                   [](const ArchiveEntry& e) { return e.name == "dense1.weight"; })) {
    throw quakenet::ArchiveError(quakenet::ArchiveError::Kind::kMalformed,
                                 "model archive is missing dense1.weight");
  }
  throw quakenet::ArchiveError(quakenet::ArchiveError::Kind::kMalformed,
                               "dense1.weight does not have a VGG16 input width");
}

Network<float> load_model(const std::string& path) {
  const auto entries = quakenet::load_archive(path);
  Network<float> net = quakenet::build_vgg16_damage(0, image_size_of(entries));
  quakenet::load_network_parameters(net, entries);
  return net;
}

int cmd_train(Options& opt) {
  quakenet::TrainConfig& c = opt.config;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (c.freeze_conv && opt.pretrained.empty() && !opt.random_conv) {
    throw UsageError("--freeze-conv needs --pretrained <archive> (or --random-conv)");
  }
  if (!opt.pretrained.empty() && opt.random_conv) {
    throw UsageError("--pretrained and --random-conv are mutually exclusive");
  }
  ordered_json config = {{"command", "train"},
                         {"train_data", opt.train_data},
                         {"val_data", opt.val_data},
                         {"pretrained", optional_path(opt.pretrained)},
                         {"random_conv", opt.random_conv},
                         {"out_model", opt.out_model},
                         {"history", optional_path(opt.history)}};
  const nlohmann::json resolved = quakenet::to_json(c);
  for (const auto& [k, v] : resolved.items()) config[k] = v;
  print_config(opt, config);

  const auto train_index = quakenet::scan_dataset(opt.train_data, quakenet::Split::kTraining);
  const auto val_index = quakenet::scan_dataset(opt.val_data, quakenet::Split::kValidation);
  for (const auto* index : {&train_index, &val_index}) {
    for (const auto& w : index->warnings) std::cerr << "warning: " << w << '\n';
  }

  Network<float> net = quakenet::build_vgg16_damage(c.seed, c.image_size, c.dropout_rate);
  if (!opt.pretrained.empty()) {
    const auto report = quakenet::import_pretrained(net, quakenet::load_archive(opt.pretrained));
    std::cerr << "imported " << report.size() << " tensors from " << opt.pretrained << '\n';
  } else {
    quakenet::init_conv_random(net, quakenet::derive_seed(c.seed, {3}));
  }

  if (!opt.json) std::cout << quakenet::kHistoryHeader << '\n';
  const quakenet::History history =
      quakenet::train(net, train_index, val_index, c, [&](const quakenet::EpochMetrics& m) {
        if (opt.json) {
          std::cout << ordered_json{{"epoch", m.epoch},
                                    {"train_loss", m.train_loss},
                                    {"train_accuracy", m.train_accuracy},
                                    {"val_loss", m.val_loss},
                                    {"val_accuracy", m.val_accuracy}}
                           .dump()
                    << std::endl;
        } else {
          std::cout << quakenet::format_history_row(m) << std::endl;
        }
      });
  if (!opt.history.empty()) quakenet::write_history(history, opt.history);
  quakenet::save_archive(quakenet::archive_from_network(net), opt.out_model);
  std::cerr << "wrote " << opt.out_model << '\n';
  return 0;
}

int cmd_eval(Options& opt) {
  if (opt.config.batch_size == 0) throw UsageError("--batch-size must be positive");
  print_config(opt, {{"command", "eval"},
                     {"model", opt.model},
                     {"data", opt.data},
                     {"batch_size", opt.config.batch_size}});
  const Network<float> net = load_model(opt.model);
  const auto index = quakenet::scan_dataset(opt.data, quakenet::Split::kValidation);
  for (const auto& w : index.warnings) std::cerr << "warning: " << w << '\n';
  const auto m = quakenet::evaluate(net, index, opt.config.batch_size);
  if (opt.json) {
    std::cout << ordered_json{{"loss", m.val_loss}, {"accuracy", m.val_accuracy}, {"n", index.size()}}.dump()
              << '\n';
  } else {
    std::printf("loss=%.6f accuracy=%.4f n=%zu\n", m.val_loss, m.val_accuracy, index.size());
  }
  return 0;
}

int cmd_predict(Options& opt) {
  print_config(opt, {{"command", "predict"}, {"model", opt.model}, {"image", opt.image}});
  const Network<float> net = load_model(opt.model);
  const std::size_t size = net.input_shape()[1];
  const quakenet::TensorF x = quakenet::reshape(quakenet::load_image(opt.image, size), {1, 3, size, size});
  const auto trace = quakenet::forward(net, x, quakenet::Mode::kInference);
  const auto& p = trace.probabilities();
  const auto predicted = quakenet::class_from_index(static_cast<int>(quakenet::argmax_row(p, 0)));
  if (opt.json) {
    ordered_json probs;
    for (auto c : quakenet::kDamageClasses) {
      probs[std::string(quakenet::class_name(c))] = static_cast<double>(p[static_cast<std::size_t>(c)]);
    }
    std::cout << ordered_json{{"probabilities", probs}, {"predicted", quakenet::class_name(predicted)}}.dump()
              << '\n';
  } else {
    for (auto c : quakenet::kDamageClasses) {
      std::printf("%-13s %.6f\n", std::string(quakenet::class_name(c)).c_str(),
                  static_cast<double>(p[static_cast<std::size_t>(c)]));
    }
    std::printf("predicted: %s\n", std::string(quakenet::class_name(predicted)).c_str());
  }
  return 0;
}

int cmd_inspect(Options& opt) {
  print_config(opt, {{"command", "inspect-weights"}, {"archive", opt.archive}});
  const auto entries = quakenet::load_archive(opt.archive);
  std::size_t values = 0;
  ordered_json list = ordered_json::array();
  for (const auto& e : entries) {
    values += e.values.size();
    if (opt.json) {
      list.push_back({{"name", e.name}, {"shape", e.shape}, {"count", e.values.size()}});
    } else {
      std::printf("%-22s %-18s %zu\n", e.name.c_str(), quakenet::shape_to_string(e.shape).c_str(),
                  e.values.size());
    }
  }
  if (opt.json) {
    std::cout << ordered_json{{"entries", list}, {"total_entries", entries.size()},
                              {"total_values", values}, {"checksum", "ok"}}
                     .dump()
              << '\n';
  } else {
    std::printf("entries=%zu values=%zu\nchecksum: ok\n", entries.size(), values);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  quakenet::TrainConfig& c = opt.config;
  CLI::App app{"VGG16 transfer-learning classifier for post-earthquake building damage"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  CLI::App* train = app.add_subcommand("train", "Train the dense head (or the whole network)");
  train->add_option("--train-data", opt.train_data, "Training dataset root")->required();
  train->add_option("--val-data", opt.val_data, "Validation dataset root")->required();
  train->add_option("--pretrained", opt.pretrained, "Archive with the 26 convolution tensors");
  train->add_flag("--random-conv", opt.random_conv, "Seeded random convolution weights instead of --pretrained");
  train->add_option("--out-model", opt.out_model, "Where to write the trained model archive")->required();
  train->add_option("--history", opt.history, "Where to write the per-epoch history CSV");
  train->add_option("--epochs", c.epochs, "Number of epochs");
  train->add_option("--batch-size", c.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", c.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--momentum", c.momentum, "Momentum coefficient in [0, 1)");
  train->add_option("--dropout", c.dropout_rate, "Dropout rate in [0, 1)");
  train->add_option("--seed", c.seed, "Seed for initialization, shuffling and dropout");
  train->add_flag("--freeze-conv,!--no-freeze-conv", c.freeze_conv, "Keep convolution weights fixed");
  train->add_option("--image-size", c.image_size, "Input side in pixels (multiple of 32)");
  train->add_flag("--json", opt.json, "JSON lines on stdout");

  CLI::App* eval = app.add_subcommand("eval", "Loss and accuracy of a model on a dataset");
  eval->add_option("--model", opt.model, "Model archive")->required();
  eval->add_option("--data", opt.data, "Dataset root")->required();
  eval->add_option("--batch-size", c.batch_size, "Evaluation batch size")->check(CLI::PositiveNumber);
  eval->add_flag("--json", opt.json, "JSON on stdout");

  CLI::App* predict = app.add_subcommand("predict", "Class probabilities for one image");
  predict->add_option("--model", opt.model, "Model archive")->required();
  predict->add_option("--image", opt.image, "Image file (PNG or JPEG)")->required();
  predict->add_flag("--json", opt.json, "JSON on stdout");

  CLI::App* inspect = app.add_subcommand("inspect-weights", "List the tensors of a weight archive");
  inspect->add_option("--archive", opt.archive, "Weight archive")->required();
  inspect->add_flag("--json", opt.json, "JSON on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(opt);
    if (*eval) return cmd_eval(opt);
    if (*predict) return cmd_predict(opt);
    return cmd_inspect(opt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kDataError;
  }
}
