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

#ifndef QUAKENET_DATASET_HPP_
#define QUAKENET_DATASET_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quakenet/image.hpp"
#include "quakenet/random.hpp"
#include "quakenet/tensor.hpp"

namespace quakenet {

/// Directory layout problems, unreadable files, empty datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DamageClass : int { kNoDamage = 0, kMinorDamage = 1, kMajorDamage = 2, kCollapse = 3 };

inline constexpr std::array<DamageClass, 4> kDamageClasses = {
    DamageClass::kNoDamage, DamageClass::kMinorDamage, DamageClass::kMajorDamage,
    DamageClass::kCollapse};

/// Directory / report name of a class.
inline std::string_view class_name(DamageClass c) {
  switch (c) {
    case DamageClass::kNoDamage: return "no_damage";
    case DamageClass::kMinorDamage: return "minor_damage";
    case DamageClass::kMajorDamage: return "major_damage";
    case DamageClass::kCollapse: return "collapse";
  }
  throw std::out_of_range("invalid damage class");
}

inline std::string_view class_description(DamageClass c) {
  switch (c) {
    case DamageClass::kNoDamage: return "No structural and non-structural damage";
    case DamageClass::kMinorDamage: return "Non-structural damage such as cracks in non-load bearing walls";
    case DamageClass::kMajorDamage: return "Both structural and non-structural damage but no collapse";
    case DamageClass::kCollapse: return "Structure collapsed";
  }
  throw std::out_of_range("invalid damage class");
}

inline DamageClass class_from_index(int index) {
  if (index < 0 || index > 3) throw std::out_of_range("class index " + std::to_string(index));
  return static_cast<DamageClass>(index);
}

inline std::optional<DamageClass> class_from_name(std::string_view name) {
  for (DamageClass c : kDamageClasses) {
    if (class_name(c) == name) return c;
  }
  return std::nullopt;
}

enum class Split { kTraining, kValidation };

struct Sample {
  std::string path;
  DamageClass label;
};

struct DatasetIndex {
  Split split = Split::kTraining;
  std::vector<Sample> entries;
  std::array<std::size_t, 4> counts{};
  // Files skipped because of their extension.
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
};

namespace detail {

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

}  // namespace detail

/// Indexes `<root>/{no_damage,minor_damage,major_damage,collapse}/*.(jpg|jpeg|png)`.
/// Entries are sorted by class, then by file name. Other files are skipped
/// and listed in `warnings`.
inline DatasetIndex scan_dataset(const std::string& root, Split split = Split::kTraining) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("dataset root is not a readable directory: " + root);
  DatasetIndex index;
  index.split = split;
  for (DamageClass c : kDamageClasses) {
    const fs::path dir = fs::path(root) / std::string(class_name(c));
    if (!fs::is_directory(dir, ec)) {
      throw DataError("dataset root " + root + " is missing class directory " +
                      std::string(class_name(c)));
    }
    std::vector<std::string> names;
    for (const auto& item : fs::directory_iterator(dir, ec)) {
      if (!item.is_regular_file()) continue;
      if (!detail::has_image_extension(item.path())) {
        index.warnings.push_back("ignoring " + item.path().string() + ": not a jpg/jpeg/png file");
        continue;
      }
      names.push_back(item.path().filename().string());
    }
    if (ec) throw DataError("cannot list " + dir.string() + ": " + ec.message());
    if (names.empty()) {
      throw DataError("class " + std::string(class_name(c)) + " has no images in " + dir.string());
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
      const std::string path = (dir / name).string();
      if (!std::ifstream(path, std::ios::binary)) throw DataError("cannot read " + path);
      index.entries.push_back({path, c});
    }
    index.counts[static_cast<int>(c)] = names.size();
  }
  std::sort(index.warnings.begin(), index.warnings.end());
  return index;
}

/// Entry positions of one minibatch.
using BatchPlan = std::vector<std::size_t>;

/// Seeded shuffle of all entries cut into consecutive chunks of
/// `batch_size`; the last chunk is short when the count does not divide.
inline std::vector<BatchPlan> make_batches(const DatasetIndex& index, std::size_t batch_size,
                                           std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (index.entries.empty()) throw DataError("cannot batch an empty dataset");
  std::vector<std::size_t> order(index.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed);
  shuffle_in_place(order, rng);
  std::vector<BatchPlan> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// Unshuffled consecutive chunks, for evaluation.
inline std::vector<BatchPlan> sequential_batches(std::size_t count, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<BatchPlan> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    BatchPlan plan(std::min(batch_size, count - i));
    std::iota(plan.begin(), plan.end(), i);
    batches.push_back(std::move(plan));
  }
  return batches;
}

struct Batch {
  Tensor<float> images;  // [B, 3, size, size], preprocessed
  std::vector<int> labels;
};

/// Decodes and preprocesses the planned entries.
inline Batch load_batch(const DatasetIndex& index, std::span<const std::size_t> plan,
                        std::size_t image_size = 224) {
  if (plan.empty()) throw DataError("empty batch");
  const std::size_t per = 3 * image_size * image_size;
  Batch batch{Tensor<float>({plan.size(), 3, image_size, image_size}), {}};
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Sample& s = index.entries.at(plan[i]);
    Tensor<float> img = load_image(s.path, image_size);
    std::copy(img.begin(), img.end(), batch.images.data() + i * per);
    batch.labels.push_back(static_cast<int>(s.label));
  }
  return batch;
}

}  // namespace quakenet

#endif  // QUAKENET_DATASET_HPP_
