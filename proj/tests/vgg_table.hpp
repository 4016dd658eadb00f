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

// The published VGG16 damage-classifier architecture table, transcribed as
// (layer, output shape at N = 2). ReLU and softmax layers are not listed in
// the table; they keep the shape of the row before them.

#ifndef QUAKENET_TESTS_VGG_TABLE_HPP_
#define QUAKENET_TESTS_VGG_TABLE_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "quakenet/model.hpp"

namespace quakenet::test {

struct TableRow {
  std::string layer;  // "input" for the first row
  Shape shape;
};

inline const std::vector<TableRow>& vgg16_table() {
  static const std::vector<TableRow> rows = {
      {"input", {2, 3, 224, 224}},
      {"block1_conv1", {2, 64, 224, 224}},
      {"block1_conv2", {2, 64, 224, 224}},
      {"block1_pool", {2, 64, 112, 112}},
      {"block2_conv1", {2, 128, 112, 112}},
      {"block2_conv2", {2, 128, 112, 112}},
      {"block2_pool", {2, 128, 56, 56}},
      {"block3_conv1", {2, 256, 56, 56}},
      {"block3_conv2", {2, 256, 56, 56}},
      {"block3_conv3", {2, 256, 56, 56}},
      {"block3_pool", {2, 256, 28, 28}},
      {"block4_conv1", {2, 512, 28, 28}},
      {"block4_conv2", {2, 512, 28, 28}},
      {"block4_conv3", {2, 512, 28, 28}},
      {"block4_pool", {2, 512, 14, 14}},
      {"block5_conv1", {2, 512, 14, 14}},
      {"block5_conv2", {2, 512, 14, 14}},
      {"block5_conv3", {2, 512, 14, 14}},
      {"block5_pool", {2, 512, 7, 7}},
      {"flatten", {2, 25088}},
      {"dense1", {2, 512}},
      {"dropout1", {2, 512}},
      {"dense2", {2, 256}},
      {"dropout2", {2, 256}},
      {"dense3", {2, 4}},
  };
  return rows;
}

struct TableMismatch {
  std::string layer;
  Shape expected;
  Shape actual;
};

/// Compares a traced N = 2 forward pass against every table row.
template <typename T>
std::vector<TableMismatch> compare_with_table(const Network<T>& net, const ForwardTrace<T>& trace) {
  std::vector<TableMismatch> out;
  for (const TableRow& row : vgg16_table()) {
    Shape actual;
    if (row.layer == "input") {
      actual = trace.input_shape;
    } else {
      std::size_t i = 0;
      while (i < net.size() && net.layers()[i].name != row.layer) ++i;
      if (i == net.size()) {
        out.push_back({row.layer, row.shape, {}});
        continue;
      }
      actual = trace.output_shapes.at(i);
    }
    if (actual != row.shape) out.push_back({row.layer, row.shape, actual});
  }
  return out;
}

/// Parameters of the convolution stack from the table's filter counts:
/// sum over convolutions of 3 * 3 * in * out + out.
inline std::size_t table_conv_parameter_count() {
  const std::size_t filters[] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
  std::size_t in = 3, total = 0;
  for (std::size_t out : filters) {
    total += 3 * 3 * in * out + out;
    in = out;
  }
  return total;
}

}  // namespace quakenet::test

#endif  // QUAKENET_TESTS_VGG_TABLE_HPP_
