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

#include <cmath>
#include <vector>

#include "mvformer/ops.h"
#include "support/reference.h"

namespace mvformer {
namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(ShapeTest, NumelAndIndexing) {
  const Shape s{2, 3, 4, 5};
  EXPECT_EQ(s.numel(), 120);
  EXPECT_EQ(s[1], 3);
  Tensor<float> t(s);
  t.at(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t[t.numel() - 1], 7.0f);
  EXPECT_THROW(Tensor<float>(s, std::vector<float>(3)), DimensionError);
}

TEST(ConvTest, MatchesDirectLoopsOnRandomGeometry) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int groups = 1 + static_cast<int>(rng() % 3);
    const int64_t cin = groups * (1 + static_cast<int64_t>(rng() % 3));
    const int64_t cout = groups * (1 + static_cast<int64_t>(rng() % 3));
    const int kh = 1 + static_cast<int>(rng() % 5), kw = 1 + static_cast<int>(rng() % 5);
    const int sh = 1 + static_cast<int>(rng() % 3), sw = 1 + static_cast<int>(rng() % 3);
    const int ph = static_cast<int>(rng() % (kh / 2 + 1)), pw = static_cast<int>(rng() % (kw / 2 + 1));
    const int64_t h = kh + static_cast<int64_t>(rng() % 7), w = kw + static_cast<int64_t>(rng() % 7);
    const auto x = ref::random_tensor({2, cin, h, w}, rng);
    const auto wt = ref::random_tensor({cout, cin / groups, kh, kw}, rng);
    const auto b = ref::random_tensor({1, cout, 1, 1}, rng);
    const Conv2dGeometry g{sh, sw, ph, pw, groups};
    const auto got = conv2d(x, wt, &b, g);
    const auto want = ref::conv2d(x, wt, &b, sh, sw, ph, pw, groups);
    ASSERT_LT(max_abs_diff(got, want), 1e-12) << "trial " << trial;
  }
}

TEST(ConvTest, OutputShapeValidation) {
  EXPECT_EQ(conv2d_output_shape({1, 3, 224, 224}, {64, 3, 7, 7}, Conv2dGeometry::square(4, 2)),
            (Shape{1, 64, 56, 56}));
  EXPECT_THROW(conv2d_output_shape({1, 3, 8, 8}, {4, 2, 3, 3}, {}), DimensionError);
  EXPECT_THROW(conv2d_output_shape({1, 4, 2, 2}, {4, 4, 5, 5}, {}), DimensionError);
  EXPECT_THROW(conv2d_output_shape({1, 6, 8, 8}, {4, 3, 3, 3}, Conv2dGeometry::square(1, 1, 4)),
               DimensionError);
}

TEST(MomentsTest, PopulationVarianceAlongEachAxisSet) {
  Rng rng(3);
  const auto x = ref::random_tensor({3, 4, 5, 6}, rng, 2.0, 1.5);
  const auto m = moments(x, AxisSet{Axis::kN, Axis::kH, Axis::kW});
  ASSERT_EQ(m.mean.shape(), (Shape{1, 4, 1, 1}));
  for (int64_t c = 0; c < 4; ++c) {
    double s = 0, sq = 0;
    for (int64_t n = 0; n < 3; ++n)
      for (int64_t h = 0; h < 5; ++h)
        for (int64_t w = 0; w < 6; ++w) s += x.at(n, c, h, w);
    const double mean = s / 90;
    for (int64_t n = 0; n < 3; ++n)
      for (int64_t h = 0; h < 5; ++h)
        for (int64_t w = 0; w < 6; ++w) sq += std::pow(x.at(n, c, h, w) - mean, 2);
    EXPECT_NEAR(m.mean[c], mean, 1e-12);
    EXPECT_NEAR(m.var[c], sq / 90, 1e-12);
  }
}

TEST(ChannelTest, SplitConcatRoundTripWithEmptyGroups) {
  Rng rng(5);
  const auto x = ref::random_tensor({2, 8, 3, 3}, rng);
  const std::vector<int64_t> sizes = {0, 3, 5, 0};
  const auto parts = channel_split(x, sizes);
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[0].shape().c, 0);
  EXPECT_EQ(parts[2].shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(channel_concat<double>(parts).vec(), x.vec());
  const std::vector<int64_t> bad = {3, 3};
  EXPECT_THROW(channel_split(x, bad), SplitError);
  const std::vector<Tensor<double>> mismatched = {Tensor<double>({1, 2, 3, 3}),
                                                  Tensor<double>({1, 2, 4, 3})};
  EXPECT_THROW(channel_concat<double>(mismatched), ConcatError);
}

TEST(BroadcastTest, ChannelVectorAndRejection) {
  Tensor<double> a({2, 3, 2, 2}, 1.0);
  const std::vector<double> cv = {1, 2, 3};
  const auto y = mul(a, Tensor<double>::channel_vector(cv));
  EXPECT_EQ(y.at(1, 2, 1, 1), 3.0);
  EXPECT_THROW(add(a, Tensor<double>({1, 2, 1, 1})), BroadcastError);
  EXPECT_THROW(add(a, Tensor<double>({2, 3, 2, 1})), BroadcastError);
}

TEST(PoolTest, GlobalAveragePool) {
  Tensor<double> x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 10, 10, 10, 14});
  const auto y = global_avg_pool(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  EXPECT_DOUBLE_EQ(y[1], 11.0);
}

}  // namespace
}  // namespace mvformer
