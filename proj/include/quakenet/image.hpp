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

#ifndef QUAKENET_IMAGE_HPP_
#define QUAKENET_IMAGE_HPP_

#include <algorithm>
#include <csetjmp>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "quakenet/tensor.hpp"

namespace quakenet {

/// Undecodable, unreadable or degenerate image file.
class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

inline RgbImage make_image(std::size_t width, std::size_t height) {
  return {width, height, std::vector<std::uint8_t>(width * height * 3, 0)};
}

/// ImageNet RGB channel means on the 0-255 scale, subtracted during
/// preprocessing to match the distribution pretrained VGG16 weights expect.
inline constexpr float kChannelMeans[3] = {123.68f, 116.779f, 103.939f};

namespace detail {

inline RgbImage decode_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageError("cannot decode PNG " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;  // expands gray and palette, drops alpha
  RgbImage out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError("cannot decode PNG " + path + ": " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void quakenet_jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Plain-C decode step; no object with a destructor lives in this frame
// across setjmp. Returns false and fills `message` on failure.
inline bool decode_jpeg_raw(std::FILE* file, std::vector<std::uint8_t>& pixels, std::size_t& width,
                            std::size_t& height, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = quakenet_jpeg_error_exit;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    std::strcpy(message, err.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;  // grayscale sources are expanded
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  if (cinfo.output_components != 3) {
    std::strcpy(message, "unsupported JPEG colour layout");
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  pixels.resize(width * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline RgbImage decode_jpeg(const std::string& path) {
  std::FILE* file = std::fopen(path.c_str(), "rb");
  if (!file) throw ImageError("cannot open " + path);
  RgbImage out;
  char message[JMSG_LENGTH_MAX] = {0};
  const bool ok = decode_jpeg_raw(file, out.pixels, out.width, out.height, message);
  std::fclose(file);
  if (!ok) throw ImageError("cannot decode JPEG " + path + ": " + message);
  return out;
}

}  // namespace detail

/// Decodes a PNG or JPEG file (detected from its signature) to RGB.
inline RgbImage decode_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path);
  unsigned char sig[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(sig), 4);
  in.close();
  static constexpr unsigned char kPng[4] = {0x89, 'P', 'N', 'G'};
  RgbImage img;
  if (std::memcmp(sig, kPng, 4) == 0) {
    img = detail::decode_png(path);
  } else if (sig[0] == 0xff && sig[1] == 0xd8 && sig[2] == 0xff) {
    img = detail::decode_jpeg(path);
  } else {
    throw ImageError("unrecognized image format: " + path);
  }
  if (img.width == 0 || img.height == 0) throw ImageError("image has zero size: " + path);
  return img;
}

/// Bilinear resize with half-pixel centres and edge clamping; returns
/// interleaved RGB floats on the 0-255 scale.
inline std::vector<float> resize_bilinear(const RgbImage& img, std::size_t out_w, std::size_t out_h) {
  if (img.width == 0 || img.height == 0 || out_w == 0 || out_h == 0) {
    throw ImageError("cannot resize an empty image");
  }
  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(src);
      result[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return result;
  };
  const auto xs = taps(img.width, out_w);
  const auto ys = taps(img.height, out_h);
  std::vector<float> out(out_w * out_h * 3);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(ty.i0, tx.i0, c) +
                           tx.frac * (img.at(ty.i0, tx.i1, c) - img.at(ty.i0, tx.i0, c));
        const double bottom = img.at(ty.i1, tx.i0, c) +
                              tx.frac * (img.at(ty.i1, tx.i1, c) - img.at(ty.i1, tx.i0, c));
        out[(y * out_w + x) * 3 + c] = static_cast<float>(top + ty.frac * (bottom - top));
      }
    }
  }
  return out;
}

/// Resized, mean-subtracted [3, size, size] tensor.
inline Tensor<float> preprocess_image(const RgbImage& img, std::size_t size) {
  const std::vector<float> rgb = resize_bilinear(img, size, size);
  Tensor<float> out({3, size, size});
  const std::size_t plane = size * size;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = rgb[i * 3 + c] - kChannelMeans[c];
  }
  return out;
}

inline Tensor<float> load_image(const std::string& path, std::size_t size = 224) {
  return preprocess_image(decode_image(path), size);
}

inline void write_png(const RgbImage& img, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw ImageError("cannot write PNG " + path + ": " + image.message);
  }
}

/// Grayscale PNG from the first channel; exercises the gray-to-RGB path.
inline void write_gray_png(const RgbImage& img, const std::string& path) {
  std::vector<std::uint8_t> gray(img.width * img.height);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = img.pixels[i * 3];
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr)) {
    throw ImageError("cannot write PNG " + path + ": " + image.message);
  }
}

inline void write_jpeg(const RgbImage& img, const std::string& path, int quality = 95) {
  std::FILE* file = std::fopen(path.c_str(), "wb");
  if (!file) throw ImageError("cannot open " + path + " for writing");
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(img.pixels.data()) +
                   static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(file);
}

}  // namespace quakenet

#endif  // QUAKENET_IMAGE_HPP_
