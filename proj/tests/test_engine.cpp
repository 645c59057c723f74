// Copyright 2026 The uncertseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gradcheck.hpp"
#include "uncertseg/ops.hpp"
#include "uncertseg/optim.hpp"
#include "uncertseg/rng.hpp"

namespace uncertseg {
namespace {

using testing::batchnorm_ref;
using testing::conv2d_ref;
using testing::finite_difference_check;
using testing::finite_difference_check_ref;
using testing::project_ref;
using testing::to_double;
using testing::project;
using testing::random_tensor;
using testing::separated_tensor;

constexpr double kTol = 1e-3;
constexpr int kSeeds = 10;

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(43);
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
}

TEST(Rng, StreamsAreDistinct) {
  EXPECT_NE(Rng::stream(7, 0).next_u64(), Rng::stream(7, 1).next_u64());
  EXPECT_EQ(Rng::stream(7, 3).next_u64(), Rng::stream(7, 3).next_u64());
  // A raw root ^ index scheme would collide here.
  EXPECT_NE(Rng::stream(6, 1).next_u64(), Rng::stream(7, 0).next_u64());
}

TEST(Rng, BelowIsInRangeAndRoughlyUniform) {
  Rng rng(5);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[rng.below(6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

// ------------------------------------------------------------------ conv2d

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 5, 6}, rng);
  Tensor w({3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0f;
  Tensor b({3});
  EXPECT_EQ(ops::conv2d(x, w, b, 1), x);
}

TEST(Conv2d, ConstantInputAllOnesKernel) {
  const float c = 0.75f;
  Tensor x({1, 1, 5, 5}, c);
  Tensor w({1, 1, 3, 3}, 1.0f);
  Tensor y = ops::conv2d(x, w, Tensor({1}), 1);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2, 2), 9 * c);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 4 * c);
  EXPECT_FLOAT_EQ(y.at(0, 0, 4, 4), 4 * c);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 2), 6 * c);
}

TEST(Conv2d, MatchesDirectLoop) {
  Rng rng(3);
  Tensor x = random_tensor({2, 3, 6, 4}, rng);
  Tensor w = random_tensor({5, 3, 3, 3}, rng);
  Tensor b = random_tensor({5}, rng);
  Tensor y = ops::conv2d(x, w, b, 1);
  ASSERT_EQ(y.shape(), (Shape{2, 5, 6, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 5; ++o)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = b[o];
          for (std::size_t c = 0; c < 3; ++c)
            for (int di = 0; di < 3; ++di)
              for (int dj = 0; dj < 3; ++dj) {
                const int yi = i + di - 1, xj = j + dj - 1;
                if (yi < 0 || yi >= 6 || xj < 0 || xj >= 4) continue;
                s += static_cast<double>(w.at(o, c, di, dj)) * x.at(n, c, yi, xj);
              }
          EXPECT_NEAR(y.at(n, o, i, j), s, 1e-5);
        }
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(ops::conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1),
               std::invalid_argument);
  EXPECT_THROW(ops::conv2d(Tensor({1, 1, 4, 4}), Tensor({1, 1, 5, 5}), Tensor({1}), 2),
               std::invalid_argument);
}

class Conv2dGrad : public ::testing::TestWithParam<int> {};

TEST_P(Conv2dGrad, FiniteDifferences) {
  Rng rng(100 + GetParam());
  for (int k : {3, 1}) {
    const int pad = k == 3 ? 1 : 0;
    const auto ks = static_cast<std::size_t>(k);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor w = random_tensor({3, 2, ks, ks}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor proj = random_tensor({1, 3, 4, 4}, rng);
    const auto xd = to_double(x), wd = to_double(w), bd = to_double(b);

    // The reference forward agrees with the float op.
    const auto yref = conv2d_ref(xd, x.shape(), wd, w.shape(), bd, pad);
    const Tensor y = ops::conv2d(x, w, b, pad);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], yref[i], 1e-5);

    auto g = ops::conv2d_backward(x, w, proj, pad);
    auto rx = finite_difference_check_ref(xd, g.input, [&](const std::vector<double>& p) {
      return project_ref(conv2d_ref(p, x.shape(), wd, w.shape(), bd, pad), proj);
    });
    auto rw = finite_difference_check_ref(wd, g.weight, [&](const std::vector<double>& p) {
      return project_ref(conv2d_ref(xd, x.shape(), p, w.shape(), bd, pad), proj);
    });
    auto rb = finite_difference_check_ref(bd, g.bias, [&](const std::vector<double>& p) {
      return project_ref(conv2d_ref(xd, x.shape(), wd, w.shape(), p, pad), proj);
    });
    EXPECT_TRUE(rx.ok(kTol)) << "input k=" << k << " err " << rx.max_rel_error;
    EXPECT_TRUE(rw.ok(kTol)) << "weight k=" << k << " err " << rw.max_rel_error;
    EXPECT_TRUE(rb.ok(kTol)) << "bias k=" << k << " err " << rb.max_rel_error;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, Conv2dGrad, ::testing::Range(0, kSeeds));

// ----------------------------------------------------------------- maxpool

TEST(MaxPool, SingleWindow) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto r = ops::maxpool2(x);
  ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(r.output[0], 4.0f);
}

TEST(MaxPool, ConstantInputRoutesToFirstElement) {
  Tensor x({1, 2, 4, 4}, 3.0f);
  auto r = ops::maxpool2(x);
  for (float v : r.output.data()) EXPECT_EQ(v, 3.0f);
  Tensor g = ops::maxpool2_backward(Tensor(r.output.shape(), 1.0f), r.argmax, x.shape());
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_EQ(g.at(0, c, i, j), (i % 2 == 0 && j % 2 == 0) ? 1.0f : 0.0f);
}

TEST(MaxPool, OddSizeThrows) {
  EXPECT_THROW(ops::maxpool2(Tensor({1, 1, 3, 4})), std::invalid_argument);
  EXPECT_THROW(ops::maxpool2(Tensor({1, 1, 4, 5})), std::invalid_argument);
}

class MaxPoolGrad : public ::testing::TestWithParam<int> {};

TEST_P(MaxPoolGrad, FiniteDifferences) {
  Rng rng(200 + GetParam());
  Tensor x = separated_tensor({1, 1, 4, 4}, rng);
  Tensor proj = random_tensor({1, 1, 2, 2}, rng);
  auto r = ops::maxpool2(x);
  Tensor g = ops::maxpool2_backward(proj, r.argmax, x.shape());
  auto obj = [&] { return project(ops::maxpool2(x).output, proj); };
  EXPECT_TRUE(finite_difference_check(x, g, obj).ok(kTol));
}

INSTANTIATE_TEST_SUITE_P(Seeds, MaxPoolGrad, ::testing::Range(0, kSeeds));

// ---------------------------------------------------------------- upsample

TEST(Upsample, Replicates) {
  Tensor y = ops::upsample_nearest2(Tensor({1, 1, 1, 1}, {5}));
  EXPECT_EQ(y, Tensor({1, 1, 2, 2}, 5.0f));
}

TEST(Upsample, MaxPoolInvertsUpsample) {
  Rng rng(9);
  Tensor x = random_tensor({2, 3, 3, 5}, rng);
  EXPECT_EQ(ops::maxpool2(ops::upsample_nearest2(x)).output, x);
}

TEST(Upsample, AdjointOfSumIsFour) {
  Tensor x({1, 2, 3, 3});
  Tensor g = ops::upsample_nearest2_backward(Tensor({1, 2, 6, 6}, 1.0f));
  EXPECT_EQ(g, Tensor(x.shape(), 4.0f));
}

class UpsampleGrad : public ::testing::TestWithParam<int> {};

TEST_P(UpsampleGrad, FiniteDifferences) {
  Rng rng(300 + GetParam());
  Tensor x = random_tensor({1, 2, 2, 3}, rng);
  Tensor proj = random_tensor({1, 2, 4, 6}, rng);
  Tensor g = ops::upsample_nearest2_backward(proj);
  auto obj = [&] { return project(ops::upsample_nearest2(x), proj); };
  EXPECT_TRUE(finite_difference_check(x, g, obj).ok(kTol));
}

INSTANTIATE_TEST_SUITE_P(Seeds, UpsampleGrad, ::testing::Range(0, kSeeds));

// --------------------------------------------------------------- batchnorm

TEST(BatchNorm, IdentityOnNormalizedInput) {
  // Four values per channel with mean 0 and biased variance 1.
  Tensor x({1, 2, 2, 2}, {1, -1, 1, -1, 1, 1, -1, -1});
  auto r = ops::batchnorm_train(x, Tensor({2}, 1.0f), Tensor({2}, 0.0f));
  const float scale = 1.0f / std::sqrt(1.0f + ops::kBatchNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_FLOAT_EQ(r.output[i], x[i] * scale);
    EXPECT_NEAR(r.output[i], x[i], 1e-5);
  }
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(4);
  Tensor x = random_tensor({2, 3, 2, 2}, rng);
  Tensor beta({3}, {0.5f, -2.0f, 7.0f});
  auto r = ops::batchnorm_train(x, Tensor({3}, 0.0f), beta);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.output.at(n, c, i / 2, i % 2), beta[c]);
}

TEST(BatchNorm, ConstantChannelStaysFinite) {
  Tensor x({2, 1, 2, 2}, 3.0f);
  auto r = ops::batchnorm_train(x, Tensor({1}, 1.0f), Tensor({1}, 0.0f));
  EXPECT_TRUE(r.output.all_finite());
  for (float v : r.output.data()) EXPECT_EQ(v, 0.0f);
  auto g = ops::batchnorm_backward(Tensor(x.shape(), 1.0f), r.cache, Tensor({1}, 1.0f));
  EXPECT_TRUE(g.input.all_finite());
}

TEST(BatchNorm, RunningStatistics) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 6});  // mean 3, unbiased var 14/3
  auto r = ops::batchnorm_train(x, Tensor({1}, 1.0f), Tensor({1}, 0.0f));
  Tensor rm({1}, 0.0f), rv({1}, 1.0f);
  ops::batchnorm_update_running(r.cache, rm, rv);
  EXPECT_FLOAT_EQ(rm[0], 0.3f);
  EXPECT_FLOAT_EQ(rv[0], 0.9f + 0.1f * 14.0f / 3.0f);
}

TEST(BatchNorm, InferUsesRunningStats) {
  Tensor x({1, 1, 1, 2}, {2, 4});
  Tensor y = ops::batchnorm_infer(x, Tensor({1}, 2.0f), Tensor({1}, 1.0f), Tensor({1}, 3.0f),
                                  Tensor({1}, 4.0f - ops::kBatchNormEps));
  EXPECT_NEAR(y[0], 0.0f, 1e-6);
  EXPECT_NEAR(y[1], 2.0f, 1e-6);
}

class BatchNormGrad : public ::testing::TestWithParam<int> {};

TEST_P(BatchNormGrad, FiniteDifferences) {
  Rng rng(400 + GetParam());
  Tensor x = random_tensor({2, 3, 2, 2}, rng, -2.0f, 2.0f);
  Tensor gamma = random_tensor({3}, rng, 0.5f, 1.5f);
  Tensor beta = random_tensor({3}, rng);
  Tensor proj = random_tensor(x.shape(), rng);
  const double eps = ops::kBatchNormEps;
  const auto xd = to_double(x), gd = to_double(gamma), bd = to_double(beta);

  auto r = ops::batchnorm_train(x, gamma, beta);
  const auto yref = batchnorm_ref(xd, x.shape(), gd, bd, eps);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(r.output[i], yref[i], 1e-5);

  auto g = ops::batchnorm_backward(proj, r.cache, gamma);
  auto rx = finite_difference_check_ref(xd, g.input, [&](const std::vector<double>& p) {
    return project_ref(batchnorm_ref(p, x.shape(), gd, bd, eps), proj);
  });
  auto rg = finite_difference_check_ref(gd, g.gamma, [&](const std::vector<double>& p) {
    return project_ref(batchnorm_ref(xd, x.shape(), p, bd, eps), proj);
  });
  auto rb = finite_difference_check_ref(bd, g.beta, [&](const std::vector<double>& p) {
    return project_ref(batchnorm_ref(xd, x.shape(), gd, p, eps), proj);
  });
  EXPECT_TRUE(rx.ok(kTol)) << "input err " << rx.max_rel_error;
  EXPECT_TRUE(rg.ok(kTol)) << "gamma err " << rg.max_rel_error;
  EXPECT_TRUE(rb.ok(kTol)) << "beta err " << rb.max_rel_error;
}

INSTANTIATE_TEST_SUITE_P(Seeds, BatchNormGrad, ::testing::Range(0, kSeeds));

// -------------------------------------------------------------- leaky relu

TEST(LeakyRelu, Definition) {
  Tensor y = ops::leaky_relu(Tensor({3}, {-1, 0, 2}), 0.01f);
  EXPECT_FLOAT_EQ(y[0], -0.01f);
  EXPECT_EQ(y[1], 0.0f);
  EXPECT_EQ(y[2], 2.0f);
}

TEST(LeakyRelu, UnitSlopeIsIdentity) {
  Rng rng(6);
  Tensor x = random_tensor({50}, rng);
  EXPECT_EQ(ops::leaky_relu(x, 1.0f), x);
}

TEST(LeakyRelu, Gradient) {
  Tensor g = ops::leaky_relu_backward(Tensor({3}, {-3, 0, 1}), Tensor({3}, 1.0f), 0.01f);
  EXPECT_FLOAT_EQ(g[0], 0.01f);
  EXPECT_FLOAT_EQ(g[1], 0.01f);
  EXPECT_FLOAT_EQ(g[2], 1.0f);
}

class LeakyReluGrad : public ::testing::TestWithParam<int> {};

TEST_P(LeakyReluGrad, FiniteDifferences) {
  Rng rng(500 + GetParam());
  Tensor x = separated_tensor({1, 2, 3, 3}, rng, 0.1f);
  Tensor proj = random_tensor(x.shape(), rng);
  Tensor g = ops::leaky_relu_backward(x, proj);
  auto obj = [&] { return project(ops::leaky_relu(x), proj); };
  EXPECT_TRUE(finite_difference_check(x, g, obj).ok(kTol));
}

INSTANTIATE_TEST_SUITE_P(Seeds, LeakyReluGrad, ::testing::Range(0, kSeeds));

// ----------------------------------------------------------------- dropout

TEST(Dropout, ZeroRateIsIdentity) {
  Rng rng(1);
  Tensor x = random_tensor({100}, rng);
  const auto before = rng.draws();
  auto r = ops::dropout(x, 0.0f, rng, true);
  EXPECT_EQ(r.output, x);
  EXPECT_EQ(rng.draws(), before);
}

TEST(Dropout, InactiveIsIdentity) {
  Rng rng(1);
  Tensor x = random_tensor({100}, rng);
  EXPECT_EQ(ops::dropout(x, 0.5f, rng, false).output, x);
}

TEST(Dropout, InvalidRateThrows) {
  Rng rng(1);
  EXPECT_THROW(ops::dropout(Tensor({4}), 1.0f, rng, true), std::invalid_argument);
  EXPECT_THROW(ops::dropout(Tensor({4}), -0.1f, rng, true), std::invalid_argument);
}

TEST(Dropout, HalfRateStatistics) {
  Rng rng(2024);
  const std::size_t n = 1000000;
  auto r = ops::dropout(Tensor({n}, 1.0f), 0.5f, rng, true);
  double sum = 0;
  std::size_t zeros = 0;
  for (float v : r.output.data()) {
    sum += v;
    zeros += v == 0.0f;
    ASSERT_TRUE(v == 0.0f || v == 2.0f);
  }
  // Each element is 0 or 2 with probability 1/2: std of the mean is 1/sqrt(n).
  const double se_mean = 1.0 / std::sqrt(static_cast<double>(n));
  const double se_frac = 0.5 / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(sum / n - 1.0), 3 * se_mean);
  EXPECT_LT(std::abs(static_cast<double>(zeros) / n - 0.5), 3 * se_frac);
}

TEST(Dropout, SameSeedSameMask) {
  Tensor x({1000}, 1.0f);
  Rng a(77), b(77);
  auto ra = ops::dropout(x, 0.3f, a, true);
  auto rb = ops::dropout(x, 0.3f, b, true);
  EXPECT_TRUE(bit_identical(ra.output, rb.output));
  EXPECT_EQ(ra.mask, rb.mask);
}

TEST(Dropout, ExpectationConvergesElementwise) {
  Rng rng(8);
  Tensor x = random_tensor({20}, rng, -2.0f, 2.0f);
  const float p = 0.3f;
  const int samples = 10000;
  std::vector<double> mean(x.size(), 0.0);
  for (int s = 0; s < samples; ++s) {
    auto r = ops::dropout(x, p, rng, true);
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] += r.output[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean[i] /= samples;
    // Var of one sample: x^2 * p / (1 - p).
    const double se = std::abs(x[i]) * std::sqrt(p / (1.0 - p) / samples);
    EXPECT_LE(std::abs(mean[i] - x[i]), 4 * se + 1e-7) << i;
  }
}

class DropoutGrad : public ::testing::TestWithParam<int> {};

TEST_P(DropoutGrad, FiniteDifferencesWithFixedMask) {
  Rng seed_rng(600 + GetParam());
  Tensor x = random_tensor({1, 2, 3, 3}, seed_rng);
  Tensor proj = random_tensor(x.shape(), seed_rng);
  const std::uint64_t seed = seed_rng.next_u64();
  Rng rng(seed);
  auto r = ops::dropout(x, 0.4f, rng, true);
  Tensor g = ops::dropout_backward(proj, r.mask);
  auto obj = [&] {
    Rng again(seed);
    return project(ops::dropout(x, 0.4f, again, true).output, proj);
  };
  EXPECT_TRUE(finite_difference_check(x, g, obj).ok(kTol));
}

INSTANTIATE_TEST_SUITE_P(Seeds, DropoutGrad, ::testing::Range(0, kSeeds));

// ------------------------------------------------------------------ concat

TEST(Concat, SplitInvertsConcat) {
  Rng rng(12);
  Tensor a = random_tensor({2, 3, 2, 2}, rng);
  Tensor b = random_tensor({2, 1, 2, 2}, rng);
  Tensor c = ops::concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 4, 2, 2}));
  EXPECT_EQ(c.at(1, 3, 1, 0), b.at(1, 0, 1, 0));
  EXPECT_EQ(c.at(1, 2, 0, 1), a.at(1, 2, 0, 1));
  auto [ga, gb] = ops::split_channels(c, 3);
  EXPECT_EQ(ga, a);
  EXPECT_EQ(gb, b);
  EXPECT_THROW(ops::concat_channels(a, Tensor({2, 1, 2, 3})), std::invalid_argument);
}

// -------------------------------------------------------------------- loss

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  Tensor logits({2, 2, 3, 3}, 0.7f);
  Tensor target({2, 3, 3});
  for (std::size_t i = 0; i < target.size(); i += 2) target[i] = 1.0f;
  EXPECT_NEAR(ops::softmax_cross_entropy(logits, target).loss, std::log(2.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectTendsToZero) {
  double previous = std::numeric_limits<double>::infinity();
  for (float gap : {5.0f, 10.0f, 20.0f}) {
    Tensor logits({1, 2, 1, 1}, {0.0f, gap});
    const double loss = ops::softmax_cross_entropy(logits, Tensor({1, 1, 1}, 1.0f)).loss;
    EXPECT_GT(loss, 0.0);
    EXPECT_LT(loss, previous);
    EXPECT_NEAR(loss, std::log1p(std::exp(-static_cast<double>(gap))), 1e-12);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-8);
}

TEST(CrossEntropy, HugeLogitsStayFinite) {
  Tensor logits({1, 2, 1, 2}, {1e4f, -1e4f, -1e4f, 1e4f});
  auto r = ops::softmax_cross_entropy(logits, Tensor({1, 1, 2}, {1.0f, 0.0f}));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad.all_finite());
  EXPECT_NEAR(r.loss, 2e4, 1e-6);
}

TEST(CrossEntropy, ExtraChannelsGetZeroGradient) {
  Rng rng(3);
  Tensor logits = random_tensor({1, 3, 2, 2}, rng);
  auto r = ops::softmax_cross_entropy(logits, Tensor({1, 2, 2}, 1.0f));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.grad[8 + i], 0.0f);
}

class CrossEntropyGrad : public ::testing::TestWithParam<int> {};

TEST_P(CrossEntropyGrad, FiniteDifferences) {
  Rng rng(700 + GetParam());
  Tensor logits = random_tensor({1, 2, 2, 2}, rng, -3.0f, 3.0f);
  Tensor target({1, 2, 2});
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = static_cast<float>(rng.below(2));
  auto r = ops::softmax_cross_entropy(logits, target);
  EXPECT_GE(r.loss, 0.0);
  auto obj = [&] { return ops::softmax_cross_entropy(logits, target).loss; };
  EXPECT_TRUE(finite_difference_check(logits, r.grad, obj).ok(kTol));
}

INSTANTIATE_TEST_SUITE_P(Seeds, CrossEntropyGrad, ::testing::Range(0, kSeeds));

TEST(ForegroundProbability, MatchesSoftmax) {
  Tensor logits({1, 2, 1, 2}, {0.0f, 1.0f, 2.0f, -1.0f});
  Tensor p = ops::foreground_probability(logits);
  ASSERT_EQ(p.shape(), (Shape{1, 1, 2}));
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-7);
  EXPECT_NEAR(p[1], 1.0 / (1.0 + std::exp(2.0)), 1e-7);
}

// -------------------------------------------------------------------- adam

TEST(Adam, ZeroGradientNoDecayIsFixedPoint) {
  std::vector<Parameter> params{Parameter("w", Tensor({3}, {1.0f, -2.0f, 3.0f}))};
  AdamConfig cfg;
  cfg.weight_decay = 0.0f;
  for (long t = 1; t <= 3; ++t) adam_step(params, cfg, t);
  EXPECT_EQ(params[0].value, Tensor({3}, {1.0f, -2.0f, 3.0f}));
}

TEST(Adam, FirstStepIsSignTimesLr) {
  std::vector<Parameter> params{Parameter("w", Tensor({3}, 0.0f))};
  params[0].grad = Tensor({3}, {5.0f, -0.3f, 1e-3f});
  AdamConfig cfg;
  cfg.lr = 0.01f;
  cfg.weight_decay = 0.0f;
  adam_step(params, cfg, 1);
  EXPECT_NEAR(params[0].value[0], -0.01f, 1e-8);
  EXPECT_NEAR(params[0].value[1], 0.01f, 1e-8);
  EXPECT_NEAR(params[0].value[2], -0.01f, 1e-6);
  EXPECT_EQ(params[0].grad, Tensor({3}, 0.0f));
}

TEST(Adam, TwoStepHandTrace) {
  // Scalar trace computed by hand in double from the update rule.
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.1;
  double x = 0.5, m = 0, v = 0;
  const double grads[2] = {0.2, -0.4};
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1] + wd * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  std::vector<Parameter> params{Parameter("w", Tensor({1}, 0.5f))};
  AdamConfig cfg{static_cast<float>(lr), 0.9f, 0.999f, 1e-8f, 0.1f};
  params[0].grad[0] = 0.2f;
  adam_step(params, cfg, 1);
  params[0].grad[0] = -0.4f;
  adam_step(params, cfg, 2);
  EXPECT_NEAR(params[0].value[0], x, 1e-6);
}

TEST(Adam, RejectsStepZero) {
  std::vector<Parameter> params{Parameter("w", Tensor({1}))};
  EXPECT_THROW(adam_step(params, AdamConfig{}, 0), std::invalid_argument);
}

TEST(Parameter, MomentsStartAtZero) {
  Parameter p("w", Tensor({2, 3}, 1.5f));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  EXPECT_EQ(p.m, Tensor({2, 3}, 0.0f));
  EXPECT_EQ(p.v, Tensor({2, 3}, 0.0f));
}

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
  EXPECT_EQ(Tensor({2, 3}).size(), 6u);
  EXPECT_THROW(Tensor({2, 3}).reshaped({7}), std::invalid_argument);
  Tensor t({2}, {1.0f, std::nanf("")});
  EXPECT_THROW(require_finite(t, "t"), std::domain_error);
}

TEST(Tensor, BitIdenticalSeesSignedZero) {
  EXPECT_FALSE(bit_identical(Tensor({1}, {0.0f}), Tensor({1}, {-0.0f})));
  EXPECT_TRUE(Tensor({1}, {0.0f}) == Tensor({1}, {-0.0f}));
}

}  // namespace
}  // namespace uncertseg
