// Copyright 2026 The difflabel Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "difflabel/dap.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>

#include "test_support.hpp"

namespace difflabel {
namespace {

const ProjectedBox kBox = inverse_reparameterize({0.4, 0.3, 0.6, 0.7});

TEST(PerturbCorners, AllOnesWithFixedSigns) {
  const auto p = perturb_corners(kBox, uniform_scores(1.0), 0.4, {1, 1, -1, -1});
  EXPECT_NEAR(p.perturbed.x_l, 0.44, 1e-12);
  EXPECT_NEAR(p.perturbed.y_t, 0.38, 1e-12);
  EXPECT_NEAR(p.perturbed.x_r, 0.56, 1e-12);
  EXPECT_NEAR(p.perturbed.y_b, 0.62, 1e-12);
  EXPECT_NEAR(p.delta[0], 0.04, 1e-15);
  EXPECT_NEAR(p.delta[1], 0.08, 1e-15);
  EXPECT_NEAR(p.delta[2], -0.04, 1e-15);
  EXPECT_NEAR(p.delta[3], -0.08, 1e-15);
}

TEST(PerturbCorners, ClipBranch) {
  // x_l = 0.05 with o_l = 0.10: 0.05 - 0.04 stays inside.
  const ProjectedBox a{0.15, 0.5, 0.10, 0.1, 0.1, 0.1};
  EXPECT_NEAR(perturb_corners(a, uniform_scores(1.0), 0.4, {-1, 1, 1, 1}).perturbed.x_l, 0.01, 1e-12);
  // x_l = 0.02 with o_l = 0.10 and a stretched offset: -0.02 clips to 0.
  const ProjectedBox b{0.12, 0.5, 0.10, 0.1, 0.1, 0.1};
  const auto p = perturb_corners(b, uniform_scores(1.0), 0.4, {-1, 1, 1, 1});
  EXPECT_NEAR(p.clean.x_l + p.delta[0], -0.02, 1e-12);
  EXPECT_EQ(p.perturbed.x_l, 0.0);
}

TEST(PerturbBbox, ZeroScoresIsIdentity) {
  CounterRng rng(1);
  for (int i = 0; i < 100; ++i) {
    const ProjectedBox b = testing::random_box(rng);
    const CornerBox out = reparameterize(perturb_bbox(b, uniform_scores(0.0), 0.4, rng));
    const CornerBox in = reparameterize(b);
    EXPECT_NEAR(out.x_l, in.x_l, 1e-15);
    EXPECT_NEAR(out.y_t, in.y_t, 1e-15);
    EXPECT_NEAR(out.x_r, in.x_r, 1e-15);
    EXPECT_NEAR(out.y_b, in.y_b, 1e-15);
  }
}

TEST(PerturbBbox, SignOrderIsLeftTopRightBottom) {
  CounterRng a(31);
  CounterRng b(31);
  const ProjectedBox out = perturb_bbox(kBox, uniform_scores(1.0), 0.4, a);
  std::array<int, 4> signs{};
  for (int& s : signs) s = b.sign();
  const CornerBox want = perturb_corners(kBox, uniform_scores(1.0), 0.4, signs).perturbed;
  const CornerBox got = reparameterize(out);
  EXPECT_NEAR(got.x_l, want.x_l, 1e-15);
  EXPECT_NEAR(got.y_b, want.y_b, 1e-15);
  EXPECT_EQ(a.draws(), 4u);
}

TEST(PerturbBbox, RejectsGammaOutsideOpenInterval) {
  CounterRng rng(1);
  EXPECT_THROW(perturb_bbox(kBox, uniform_scores(1.0), 1.0, rng), Error);
  EXPECT_THROW(perturb_bbox(kBox, uniform_scores(1.0), 0.0, rng), Error);
}

TEST(PerturbBbox, ConstraintsHoldOnRandomInputs) {
  CounterRng rng(123);
  for (int i = 0; i < 20000; ++i) {
    const ProjectedBox b = testing::random_box(rng);
    const DifficultyScores s = testing::random_scores(rng);
    const double gamma = rng.uniform(1e-3, 0.999);
    const CornerBox c = reparameterize(perturb_bbox(b, s, gamma, rng));
    ASSERT_LE(0.0, c.x_l);
    ASSERT_LT(c.x_l, b.x_proj);
    ASSERT_LT(b.x_proj, c.x_r);
    ASSERT_LE(c.x_r, 1.0);
    ASSERT_LE(0.0, c.y_t);
    ASSERT_LT(c.y_t, b.y_proj);
    ASSERT_LT(b.y_proj, c.y_b);
    ASSERT_LE(c.y_b, 1.0);
  }
}

TEST(PerturbCorners, MagnitudeMonotoneInScore) {
  CounterRng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const ProjectedBox b = testing::random_box(rng);
    const std::array<int, 4> signs = {rng.sign(), rng.sign(), rng.sign(), rng.sign()};
    const double lo = rng.uniform();
    const double hi = rng.uniform(lo, 1.0);
    const auto p_lo = perturb_corners(b, uniform_scores(lo), 0.4, signs);
    const auto p_hi = perturb_corners(b, uniform_scores(hi), 0.4, signs);
    const std::array<double, 4> offsets = {b.o_l, b.o_t, b.o_r, b.o_b};
    for (std::size_t v = 0; v < 4; ++v) {
      ASSERT_LE(std::abs(p_lo.delta[v]), std::abs(p_hi.delta[v]));
      ASSERT_LT(std::abs(p_hi.delta[v]), offsets[v]);
    }
  }
}

TEST(PerturbDepth, Examples) {
  EXPECT_NEAR(apply_depth_perturbation(10.0, 0.5, 0.8, +1), 14.0, 1e-12);
  EXPECT_NEAR(apply_depth_perturbation(10.0, 0.5, 0.8, -1), 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(apply_depth_perturbation(17.3, 0.0, 0.8, -1), 17.3);
  EXPECT_DOUBLE_EQ(apply_depth_perturbation(0.0, 1.0, 0.8, 1), 0.0);
  EXPECT_THROW(apply_depth_perturbation(NAN, 0.5, 0.8, 1), Error);
}

TEST(PerturbDepth, RelativeBoundAndPositivity) {
  CounterRng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double d = rng.uniform(-30.0, 80.0);
    const double c = rng.uniform();
    const double g = rng.uniform(1e-3, 0.999);
    const double out = perturb_depth(d, c, g, rng);
    ASSERT_LE(std::abs(out - d), g * std::abs(d) * (1 + 1e-15));
    if (d > 0) ASSERT_GT(out, 0.0);
  }
}

TEST(FlipClass, NeverFlipsAtZero) {
  CounterRng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(flip_class(1, 3, 0.0, rng), 1);
}

TEST(FlipClass, ForcedComplementForTwoClasses) {
  CounterRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(flip_class(0, 2, 1.0, rng), 1);
    EXPECT_EQ(flip_class(1, 2, 1.0, rng), 0);
  }
}

TEST(FlipClass, SingleClassRaises) {
  CounterRng rng(3);
  try {
    flip_class(0, 1, 0.5, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClass);
  }
  EXPECT_EQ(flip_class(0, 1, 0.0, rng), 0);
}

TEST(FlipClass, UniformOverOtherClassesChiSquare) {
  CounterRng rng(2026);
  const int trials = 30000;
  std::array<int, 3> counts{};
  for (int i = 0; i < trials; ++i) ++counts[static_cast<std::size_t>(flip_class(0, 3, 1.0, rng))];
  EXPECT_EQ(counts[0], 0);
  const double expected = trials / 2.0;
  const double chi2 = std::pow(counts[1] - expected, 2) / expected +
                      std::pow(counts[2] - expected, 2) / expected;
  // One degree of freedom: chi2 < 6.635 is p > 0.01.
  EXPECT_LT(chi2, 6.635) << counts[1] << " vs " << counts[2];
}

TEST(FlipClass, FlipRateMatchesProbability) {
  CounterRng rng(11);
  int flips = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) flips += flip_class(2, 5, 0.2, rng) != 2;
  const double sd = std::sqrt(n * 0.2 * 0.8);
  EXPECT_LT(std::abs(flips - 0.2 * n), 4 * sd);
}

CleanLabel fixture_label() {
  const ObjectLabel l = parse_label_line(
      "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59");
  const CameraCalib cal{721.5377, 721.5377, 609.5593, 172.854, 1242, 375};
  const CornerBox c = normalize_clipped(l.bbox, cal);
  return {inverse_reparameterize(c), l.loc.z, geometric_depth(l.h, l.bbox.height(), cal.fy), 0};
}

TEST(MakePerturbedLabel, FullIdentity) {
  DapConfig cfg;
  cfg.class_flip_prob = 0.0;
  cfg.depth_mode = DepthMode::Absolute;
  CounterRng rng(42);
  const CleanLabel clean = fixture_label();
  const PerturbedLabel p = make_perturbed_label(clean, uniform_scores(0.0), cfg, 3, rng);
  const CornerBox a = reparameterize(p.box);
  const CornerBox b = reparameterize(clean.box);
  EXPECT_NEAR(a.x_l, b.x_l, 1e-15);
  EXPECT_NEAR(a.y_b, b.y_b, 1e-15);
  EXPECT_DOUBLE_EQ(p.depth, clean.depth_gt);
  EXPECT_EQ(p.class_idx, 0);
  EXPECT_EQ(p.class_onehot, (std::vector<double>{1, 0, 0}));
}

TEST(MakePerturbedLabel, DeterministicForSeed) {
  const DapConfig cfg;
  const CleanLabel clean = fixture_label();
  CounterRng r1(42);
  CounterRng r2(42);
  const PerturbedLabel a = make_perturbed_label(clean, uniform_scores(0.7), cfg, 3, r1);
  const PerturbedLabel b = make_perturbed_label(clean, uniform_scores(0.7), cfg, 3, r2);
  EXPECT_EQ(std::memcmp(&a.box, &b.box, sizeof a.box), 0);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.class_onehot, b.class_onehot);
}

TEST(MakePerturbedLabel, ResidualBaseDepth) {
  DapConfig cfg;
  cfg.depth_mode = DepthMode::Residual;
  const CleanLabel clean{kBox, 20.0, 21.0, 1};
  EXPECT_DOUBLE_EQ(depth_target(clean, cfg.depth_mode), -1.0);
  PerturbationDraw draw;
  draw.box_signs = {1, 1, 1, 1};
  draw.depth_sign = 1;
  draw.class_idx = 1;
  const PerturbedLabel p = apply_perturbation(clean, uniform_scores(0.5), cfg, 3, draw);
  EXPECT_NEAR(p.depth, -1.0 * (1 + 0.5 * 0.8), 1e-15);
}

TEST(MakePerturbedLabel, DrawOrder) {
  // Four box signs, one depth sign, one flip draw, one class choice on flip.
  DapConfig cfg;
  cfg.class_flip_prob = 1.0;
  CounterRng rng(5);
  make_perturbed_label(fixture_label(), uniform_scores(0.5), cfg, 3, rng);
  EXPECT_EQ(rng.draws(), 7u);
  cfg.class_flip_prob = 0.0;
  CounterRng rng2(5);
  make_perturbed_label(fixture_label(), uniform_scores(0.5), cfg, 3, rng2);
  EXPECT_EQ(rng2.draws(), 6u);
}

TEST(DapConfig, Validation) {
  DapConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.gamma_d = 1.0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = DapConfig{};
  cfg.class_flip_prob = 1.5;
  EXPECT_THROW(validate(cfg), Error);
}

TEST(OneHot, Shape) {
  EXPECT_EQ(one_hot(2, 4), (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(one_hot(4, 4), (std::vector<double>{0, 0, 0, 0}));
}

}  // namespace
}  // namespace difflabel
