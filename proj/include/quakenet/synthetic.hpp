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

#ifndef QUAKENET_SYNTHETIC_HPP_
#define QUAKENET_SYNTHETIC_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include "quakenet/dataset.hpp"
#include "quakenet/image.hpp"
#include "quakenet/random.hpp"

// Four visually separable pattern classes laid out like a real damage
// dataset: no_damage = solid colour, minor_damage = horizontal stripes,
// major_damage = vertical stripes, collapse = checkerboard. Colours, stripe
// period and phase are jittered per image, plus mild pixel noise.

namespace quakenet {

namespace detail {

inline std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
}

}  // namespace detail

inline RgbImage synthetic_pattern(DamageClass c, std::size_t size, Rng& rng) {
  static constexpr double kBase[4][2][3] = {
      {{70, 150, 70}, {70, 150, 70}},
      {{210, 200, 60}, {40, 40, 160}},
      {{220, 90, 60}, {30, 140, 150}},
      {{230, 230, 230}, {30, 30, 30}},
  };
  const int k = static_cast<int>(c);
  double colour[2][3];
  for (int s = 0; s < 2; ++s) {
    for (int ch = 0; ch < 3; ++ch) colour[s][ch] = kBase[k][s][ch] + uniform(rng, -25.0, 25.0);
  }
  const std::size_t period = 8 + uniform_index(rng, 17);  // 8..24 px
  const std::size_t phase = uniform_index(rng, period);
  RgbImage img = make_image(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int which = 0;
      switch (c) {
        case DamageClass::kNoDamage: which = 0; break;
        case DamageClass::kMinorDamage: which = ((y + phase) / (period / 2)) % 2; break;
        case DamageClass::kMajorDamage: which = ((x + phase) / (period / 2)) % 2; break;
        case DamageClass::kCollapse:
          which = (((x + phase) / period) + ((y + phase) / period)) % 2;
          break;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.at(y, x, ch) = detail::clamp_byte(colour[which][ch] + uniform(rng, -8.0, 8.0));
      }
    }
  }
  return img;
}

/// Writes `per_class` PNG images into each class directory under `root`.
inline void generate_synthetic_dataset(const std::string& root, std::size_t per_class,
                                       std::uint64_t seed, std::size_t size = 224) {
  namespace fs = std::filesystem;
  for (DamageClass c : kDamageClasses) {
    const fs::path dir = fs::path(root) / std::string(class_name(c));
    fs::create_directories(dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), i}));
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04zu.png", std::string(class_name(c)).c_str(), i);
      write_png(synthetic_pattern(c, size, rng), (dir / name).string());
    }
  }
}

}  // namespace quakenet

#endif  // QUAKENET_SYNTHETIC_HPP_
