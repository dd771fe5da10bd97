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
#include <gtest/gtest.h>

#include "mvformer/image_io.h"
#include "support/scratch.h"

namespace mvformer {
namespace {

std::vector<uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

TEST(PnmTest, EncodeDecodeRoundTrip) {
  Image img{3, 2, 3, {}};
  for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<uint8_t>(i * 13));
  const auto enc = encode_pnm(img);
  EXPECT_EQ(std::string(enc.begin(), enc.begin() + 11), "P6\n3 2\n255\n");
  EXPECT_EQ(decode_pnm(enc), img);
  Image gray{2, 2, 1, {0, 64, 128, 255}};
  EXPECT_EQ(decode_pnm(encode_pnm(gray)), gray);
}

TEST(PnmTest, CommentsAndSixteenBitSamples) {
  std::string s = "P5 # gray\n# size follows\n2 1\n# depth\n65535\n";
  s += std::string{'\xff', '\xff', '\x80', '\x00'};
  const Image img = decode_pnm(bytes_of(s));
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.pixels, (std::vector<uint8_t>{255, 128}));
}

TEST(PnmTest, RejectsMalformedInput) {
  EXPECT_THROW(decode_pnm(bytes_of("P3\n1 1\n255\n0 0 0")), FormatError);
  EXPECT_THROW(decode_pnm(bytes_of("P6\n1 1\n70000\n")), FormatError);
  EXPECT_THROW(decode_pnm(bytes_of("P6\n2 2\n255\nabc")), IntegrityError);
  EXPECT_THROW(decode_pnm(bytes_of("P6\n0 2\n255\n")), FormatError);
  EXPECT_THROW(decode_pnm(bytes_of("P6\n")), FormatError);
}

TEST(PnmTest, TensorConversionAndFiles) {
  testing::ScratchDir dir;
  Image a{2, 2, 3, std::vector<uint8_t>(12, 0)};
  a.pixels[3] = 255;  // pixel (0, 1), red
  Image b{2, 2, 3, std::vector<uint8_t>(12, 51)};
  const std::vector<Image> imgs = {a, b};
  const auto t = images_to_tensor(imgs);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_FLOAT_EQ(t.at(0, 0, 0, 1), 1.0f);
  EXPECT_FLOAT_EQ(t.at(1, 2, 1, 1), 0.2f);
  EXPECT_EQ(tensor_to_image(t, 0), a);
  EXPECT_EQ(tensor_to_image(t, 1), b);

  write_pnm(dir / "a.ppm", a);
  EXPECT_EQ(read_pnm(dir / "a.ppm"), a);
  EXPECT_THROW(read_pnm(dir / "missing.ppm"), IoError);

  const std::vector<Image> mixed = {a, Image{1, 1, 3, {0, 0, 0}}};
  EXPECT_THROW(images_to_tensor(mixed), DimensionError);
}

}  // namespace
}  // namespace mvformer
