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

#include "difflabel/geometry.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "test_support.hpp"

namespace difflabel {
namespace {

void expect_corners(const CornerBox& c, double xl, double yt, double xr, double yb, double tol = 1e-12) {
  EXPECT_NEAR(c.x_l, xl, tol);
  EXPECT_NEAR(c.y_t, yt, tol);
  EXPECT_NEAR(c.x_r, xr, tol);
  EXPECT_NEAR(c.y_b, yb, tol);
}

TEST(Reparameterize, SubtractsAndAddsOffsets) {
  expect_corners(reparameterize({0.5, 0.5, 0.1, 0.2, 0.1, 0.2}), 0.4, 0.3, 0.6, 0.7);
}

TEST(Reparameterize, MinimalOffsets) {
  expect_corners(reparameterize({0.5, 0.5, 1e-6, 1e-6, 1e-6, 1e-6}), 0.499999, 0.499999, 0.500001,
                 0.500001, 1e-15);
}

TEST(Reparameterize, FullFrame) {
  expect_corners(reparameterize({0.3, 0.7, 0.3, 0.7, 0.7, 0.3}), 0.0, 0.0, 1.0, 1.0);
}

TEST(InverseReparameterize, MidpointAndOffsets) {
  const ProjectedBox b = inverse_reparameterize({0.4, 0.3, 0.6, 0.7});
  EXPECT_NEAR(b.x_proj, 0.5, 1e-15);
  EXPECT_NEAR(b.y_proj, 0.5, 1e-15);
  EXPECT_NEAR(b.o_l, 0.1, 1e-15);
  EXPECT_NEAR(b.o_t, 0.2, 1e-15);
  EXPECT_NEAR(b.o_r, 0.1, 1e-15);
  EXPECT_NEAR(b.o_b, 0.2, 1e-15);
}

TEST(InverseReparameterize, FullFrameIsSymmetric) {
  const ProjectedBox b = inverse_reparameterize({0.0, 0.0, 1.0, 1.0});
  for (double v : {b.x_proj, b.y_proj, b.o_l, b.o_t, b.o_r, b.o_b}) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(InverseReparameterize, RoundTripsCorners) {
  expect_corners(reparameterize(inverse_reparameterize({0.4, 0.3, 0.6, 0.7})), 0.4, 0.3, 0.6, 0.7);
}

TEST(InverseReparameterize, RejectsNarrowBoxes) {
  try {
    inverse_reparameterize({0.5, 0.1, 0.5 + 2e-6, 0.9});
    FAIL() << "expected DegenerateBox";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBox);
  }
  EXPECT_THROW(inverse_reparameterize({0.1, 0.5, 0.9, 0.5}), Error);
  EXPECT_THROW(inverse_reparameterize({0.6, 0.1, 0.4, 0.9}), Error);
}

TEST(GeometryProperty, ReparameterizeRoundTripOnRandomCornerBoxes) {
  CounterRng rng(17);
  for (int i = 0; i < 20000; ++i) {
    const double xl = rng.uniform(0.0, 0.99);
    const double xr = rng.uniform(xl + 1e-5, 1.0);
    const double yt = rng.uniform(0.0, 0.99);
    const double yb = rng.uniform(yt + 1e-5, 1.0);
    const CornerBox c = reparameterize(inverse_reparameterize({xl, yt, xr, yb}));
    ASSERT_NEAR(c.x_l, xl, 1e-12);
    ASSERT_NEAR(c.y_t, yt, 1e-12);
    ASSERT_NEAR(c.x_r, xr, 1e-12);
    ASSERT_NEAR(c.y_b, yb, 1e-12);
  }
}

TEST(GeometryProperty, ValidProjectedBoxesGiveOrderedCorners) {
  CounterRng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const ProjectedBox b = testing::random_box(rng);
    ASSERT_TRUE(is_valid(b));
    ASSERT_TRUE(is_valid(reparameterize(b)));
  }
}

const CameraCalib kCam{700.0, 700.0, 640.0, 192.0, 1280.0, 384.0};

TEST(ProjectBox3D, OnAxisBoxIsCentered) {
  const ProjectedBox b = project_box3d({0.0, 0.0, 20.0, 2.0, 2.0, 4.0, 0.0}, kCam);
  EXPECT_NEAR(b.x_proj, 0.5, 1e-12);
  EXPECT_NEAR(b.y_proj, 0.5, 1e-12);
}

TEST(ProjectBox3D, FartherBoxIsContained) {
  const CornerBox near = reparameterize(project_box3d({0.0, 0.0, 20.0, 2.0, 2.0, 4.0, 0.0}, kCam));
  const CornerBox far = reparameterize(project_box3d({0.0, 0.0, 40.0, 2.0, 2.0, 4.0, 0.0}, kCam));
  EXPECT_GT(far.x_l, near.x_l);
  EXPECT_GT(far.y_t, near.y_t);
  EXPECT_LT(far.x_r, near.x_r);
  EXPECT_LT(far.y_b, near.y_b);
}

TEST(ProjectBox3D, MatchesHandProjectedCorners) {
  // Corners enumerated by hand: x in 1 +- 1.95, y in 1.5 +- 0.75, z in 20 +- 0.8.
  const Box3D box{1.0, 1.5, 20.0, 1.5, 1.6, 3.9, 0.0};
  expect_corners(reparameterize(project_box3d(box, kCam)), 0.4729410807291667, 0.5657301682692307,
                 0.5840250651041667, 0.713623046875, 1e-9);
}

// Independent oracle: homogeneous projection P = K [R | t] applied to every
// sign combination of the half extents.
CornerBox oracle_projection(const Box3D& b, const CameraCalib& cal) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double rot[3][3] = {{c, 0.0, s}, {0.0, 1.0, 0.0}, {-s, 0.0, c}};
  const double kmat[3][3] = {{cal.fx, 0.0, cal.cx}, {0.0, cal.fy, cal.cy}, {0.0, 0.0, 1.0}};
  double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        const double local[3] = {sx * b.l / 2, sy * b.h / 2, sz * b.w / 2};
        double cam[3] = {b.x, b.y, b.z};
        for (int r = 0; r < 3; ++r) {
          for (int k = 0; k < 3; ++k) cam[r] += rot[r][k] * local[k];
        }
        double img[3] = {0, 0, 0};
        for (int r = 0; r < 3; ++r) {
          for (int k = 0; k < 3; ++k) img[r] += kmat[r][k] * cam[k];
        }
        const double u = img[0] / img[2];
        const double v = img[1] / img[2];
        u0 = std::min(u0, u);
        u1 = std::max(u1, u);
        v0 = std::min(v0, v);
        v1 = std::max(v1, v);
      }
    }
  }
  auto clip = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  return {clip(u0 / cal.img_w), clip(v0 / cal.img_h), clip(u1 / cal.img_w), clip(v1 / cal.img_h)};
}

TEST(ProjectBox3D, AgreesWithMatrixOracleOnRandomBoxes) {
  CounterRng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const Box3D b{rng.uniform(-8, 8), rng.uniform(0.5, 2.0), rng.uniform(6, 60), rng.uniform(1, 3),
                  rng.uniform(0.5, 2.5), rng.uniform(0.5, 5), rng.uniform(-3.14, 3.14)};
    const CornerBox want = oracle_projection(b, kCam);
    if (!(want.x_r - want.x_l > 1e-5) || !(want.y_b - want.y_t > 1e-5)) continue;
    const CornerBox got = reparameterize(project_box3d(b, kCam));
    ASSERT_NEAR(got.x_l, want.x_l, 1e-9);
    ASSERT_NEAR(got.y_t, want.y_t, 1e-9);
    ASSERT_NEAR(got.x_r, want.x_r, 1e-9);
    ASSERT_NEAR(got.y_b, want.y_b, 1e-9);
  }
}

TEST(ProjectBox3D, BehindCameraIsRejected) {
  try {
    project_box3d({0.0, 0.0, 1.0, 1.5, 4.0, 4.0, 0.0}, kCam);
    FAIL() << "expected BehindCamera";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BehindCamera);
  }
}

TEST(ProjectBox3D, OffscreenBoxCollapses) {
  EXPECT_THROW(project_box3d({200.0, 0.0, 10.0, 1.5, 1.6, 3.9, 0.0}, kCam), Error);
}

TEST(ProjectBox3D, TranslationMovesCenterRight) {
  double prev = -1.0;
  for (double x = -6.0; x <= 6.0; x += 0.5) {
    const double xp = project_box3d({x, 1.0, 30.0, 1.5, 1.6, 3.9, 0.0}, kCam).x_proj;
    EXPECT_GT(xp, prev);
    prev = xp;
  }
}

TEST(GeometricDepth, Examples) {
  EXPECT_NEAR(geometric_depth(1.5, 52.5, 700.0), 20.0, 1e-12);
  EXPECT_NEAR(geometric_depth(1.5, 700.0 * 1.5, 700.0), 1.0, 1e-12);
  EXPECT_NEAR(geometric_depth(1.7, 30.0, 721.0), 2.0 * geometric_depth(1.7, 60.0, 721.0), 1e-12);
}

TEST(GeometricDepth, InvertsPinholeRelation) {
  CounterRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double h = rng.uniform(0.3, 4.0);
    const double px = rng.uniform(1.0, 400.0);
    const double fy = rng.uniform(300.0, 1500.0);
    EXPECT_NEAR(geometric_depth(h, px, fy) * px / fy / h, 1.0, 1e-12);
  }
}

TEST(GeometricDepth, RejectsNonPositiveHeight) {
  EXPECT_THROW(geometric_depth(1.5, 0.0, 700.0), Error);
  EXPECT_THROW(geometric_depth(1.5, -3.0, 700.0), Error);
}

TEST(ClipUnit, ClampsToUnitInterval) {
  EXPECT_EQ(clip_unit(0.5), 0.5);
  EXPECT_EQ(clip_unit(-0.2), 0.0);
  EXPECT_EQ(clip_unit(1.7), 1.0);
}

TEST(ClipUnit, RejectsNonFinite) {
  for (double bad : {NAN, INFINITY, -INFINITY}) {
    try {
      clip_unit(bad);
      FAIL() << "expected NonFinite";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonFinite);
    }
  }
}

TEST(CameraCalib, ValidationRejectsZeroFocal) {
  EXPECT_THROW(project_box3d({0, 0, 10, 1, 1, 1, 0}, CameraCalib{0, 700, 640, 192, 1280, 384}), Error);
}

}  // namespace
}  // namespace difflabel
