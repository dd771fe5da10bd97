/* Copyright 2026 The MVFormer Kit Authors. All Rights Reserved.

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
#include "mvformer/image_io.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

namespace mvformer {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const uint8_t> b) : bytes_(b) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    long v = 0;
    size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw FormatError(fmt::format("pnm: {} too large", what));
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(fmt::format("pnm: missing {}", what));
    return v;
  }

  size_t pos() const { return pos_; }
  void advance(size_t n) { pos_ += n; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: expected binary P5 or P6 magic");
  }
  Image img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.advance(2);
  const long w = r.number("width");
  const long h = r.number("height");
  const long maxval = r.number("maxval");
  if (w < 1 || h < 1) throw FormatError("pnm: empty image");
  if (maxval < 1 || maxval > 65535) {
    throw FormatError(fmt::format("pnm: maxval {} out of range", maxval));
  }
  if (r.pos() >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[r.pos()]))) {
    throw FormatError("pnm: missing whitespace after maxval");
  }
  r.advance(1);
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  const size_t samples = static_cast<size_t>(w) * h * img.channels;
  const size_t sample_bytes = maxval > 255 ? 2 : 1;
  if (bytes.size() - r.pos() < samples * sample_bytes) {
    throw IntegrityError(fmt::format("pnm: truncated raster, need {} bytes",
                                     samples * sample_bytes));
  }
  img.pixels.resize(samples);
  const uint8_t* p = bytes.data() + r.pos();
  for (size_t i = 0; i < samples; ++i) {
    const long v = sample_bytes == 2 ? (p[2 * i] << 8) | p[2 * i + 1] : p[i];
    img.pixels[i] = maxval == 255
                        ? static_cast<uint8_t>(v)
                        : static_cast<uint8_t>(std::lround(
                              255.0 * std::min(v, maxval) / maxval));
  }
  return img;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError(fmt::format("pnm: unsupported channel count {}",
                                  img.channels));
  }
  if (img.pixels.size() !=
      static_cast<size_t>(img.width) * img.height * img.channels) {
    throw DimensionError("pnm: pixel buffer does not match image size");
  }
  const std::string header = fmt::format(
      "P{}\n{} {}\n255\n", img.channels == 3 ? 6 : 5, img.width, img.height);
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Tensor<float> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("images_to_tensor: no images");
  const Image& f = images.front();
  for (const Image& im : images) {
    if (im.width != f.width || im.height != f.height ||
        im.channels != f.channels) {
      throw DimensionError(fmt::format(
          "images_to_tensor: image {}x{}x{} differs from first image {}x{}x{}",
          im.width, im.height, im.channels, f.width, f.height, f.channels));
    }
  }
  Tensor<float> t(Shape{static_cast<int64_t>(images.size()), f.channels,
                        f.height, f.width});
  for (size_t n = 0; n < images.size(); ++n) {
    const auto& px = images[n].pixels;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        for (int c = 0; c < f.channels; ++c) {
          t.at(static_cast<int64_t>(n), c, y, x) =
              px[(static_cast<size_t>(y) * f.width + x) * f.channels + c] /
              255.0f;
        }
  }
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& x, int64_t n) {
  const Shape& s = x.shape();
  if (s.c != 1 && s.c != 3) {
    throw DimensionError("tensor_to_image: need 1 or 3 channels, got " +
                         s.str());
  }
  if (n < 0 || n >= s.n) throw IndexError("tensor_to_image: sample out of range");
  Image img;
  img.width = static_cast<int>(s.w);
  img.height = static_cast<int>(s.h);
  img.channels = static_cast<int>(s.c);
  img.pixels.resize(static_cast<size_t>(s.c * s.h * s.w));
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t xx = 0; xx < s.w; ++xx)
      for (int64_t c = 0; c < s.c; ++c) {
        const double v = std::clamp<double>(x.at(n, c, y, xx), 0.0, 1.0);
        img.pixels[static_cast<size_t>((y * s.w + xx) * s.c + c)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

template Image tensor_to_image(const Tensor<float>&, int64_t);
template Image tensor_to_image(const Tensor<double>&, int64_t);

}  // namespace mvformer
