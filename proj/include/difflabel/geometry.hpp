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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "difflabel/error.hpp"

namespace difflabel {

/// Smallest admissible distance from a projected center to any box side.
inline constexpr double kMinOffset = 1e-6;

struct CameraCalib {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double img_w = 0.0;
  double img_h = 0.0;
};

/// 3D object in camera coordinates (x right, y down, z forward). (x, y, z)
/// is the geometric center of the box; yaw rotates about the camera y axis.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  double yaw = 0.0;
};

/// Center plus distances to the four sides, all on the normalized image plane.
struct ProjectedBox {
  double x_proj = 0.0;
  double y_proj = 0.0;
  double o_l = 0.0;
  double o_t = 0.0;
  double o_r = 0.0;
  double o_b = 0.0;
};

/// Top-left / bottom-right corners on the normalized image plane.
struct CornerBox {
  double x_l = 0.0;
  double y_t = 0.0;
  double x_r = 0.0;
  double y_b = 0.0;
};

/// Pixel-space rectangle (left, top, right, bottom), not clipped.
struct PixelBox {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline void validate(const CameraCalib& cal) {
  if (!(cal.fx > 0.0 && cal.fy > 0.0 && cal.img_w > 0.0 && cal.img_h > 0.0)) {
    fail(ErrorCode::DegenerateBox, "camera focal lengths and image size must be positive");
  }
}

inline bool is_valid(const CornerBox& c) {
  return 0.0 <= c.x_l && c.x_l < c.x_r && c.x_r <= 1.0 && 0.0 <= c.y_t && c.y_t < c.y_b &&
         c.y_b <= 1.0;
}

/// Checks the ProjectedBox invariants. `tol` absorbs rounding in the
/// center +/- offset sums of boxes produced by recentering.
inline bool is_valid(const ProjectedBox& b, double tol = 1e-12) {
  const bool offsets = b.o_l > kMinOffset && b.o_t > kMinOffset && b.o_r > kMinOffset &&
                       b.o_b > kMinOffset;
  return offsets && b.x_proj - b.o_l >= -tol && b.x_proj + b.o_r <= 1.0 + tol &&
         b.y_proj - b.o_t >= -tol && b.y_proj + b.o_b <= 1.0 + tol;
}

inline void validate(const ProjectedBox& b) {
  if (!is_valid(b)) {
    fail(ErrorCode::DegenerateBox, "projected box violates [0,1] bounds or minimum offset");
  }
}

/// CLIP to the unit interval.
inline double clip_unit(double x) {
  if (!std::isfinite(x)) fail(ErrorCode::NonFinite, "clip_unit input is not finite");
  return std::min(std::max(x, 0.0), 1.0);
}

inline CornerBox reparameterize(const ProjectedBox& b) {
  return {b.x_proj - b.o_l, b.y_proj - b.o_t, b.x_proj + b.o_r, b.y_proj + b.o_b};
}

namespace detail {

// Midpoint recentering without the minimum-width check; perturbed and
// negative boxes may legitimately be narrower than 2 * kMinOffset.
inline ProjectedBox recenter(const CornerBox& c) {
  const double xc = 0.5 * (c.x_l + c.x_r);
  const double yc = 0.5 * (c.y_t + c.y_b);
  return {xc, yc, xc - c.x_l, yc - c.y_t, c.x_r - xc, c.y_b - yc};
}

}  // namespace detail

/// Recenters at the corner-box midpoint; the original center is not kept.
inline ProjectedBox inverse_reparameterize(const CornerBox& c) {
  if (!(c.x_r - c.x_l > 2.0 * kMinOffset) || !(c.y_b - c.y_t > 2.0 * kMinOffset)) {
    fail(ErrorCode::DegenerateBox, "corner box narrower than the minimum width");
  }
  return detail::recenter(c);
}

/// The eight corners of `b` in camera coordinates. Ordering follows the
/// KITTI devkit: four bottom corners then four top corners.
inline std::array<Vec3, 8> box3d_corners(const Box3D& b) {
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  const double hh = 0.5 * b.h;
  const std::array<double, 8> dx = {hl, hl, -hl, -hl, hl, hl, -hl, -hl};
  const std::array<double, 8> dy = {hh, hh, hh, hh, -hh, -hh, -hh, -hh};
  const std::array<double, 8> dz = {hw, -hw, -hw, hw, hw, -hw, -hw, hw};
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  std::array<Vec3, 8> out{};
  for (std::size_t i = 0; i < 8; ++i) {
    out[i] = {b.x + c * dx[i] + s * dz[i], b.y + dy[i], b.z - s * dx[i] + c * dz[i]};
  }
  return out;
}

/// Tight pixel rectangle around the projected corners, before clipping.
inline PixelBox project_box3d_pixels(const Box3D& b, const CameraCalib& cal) {
  validate(cal);
  PixelBox px{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const Vec3& p : box3d_corners(b)) {
    if (!(p.z > 0.0)) fail(ErrorCode::BehindCamera, "box corner at or behind the image plane");
    const double u = cal.fx * p.x / p.z + cal.cx;
    const double v = cal.fy * p.y / p.z + cal.cy;
    px.left = std::min(px.left, u);
    px.right = std::max(px.right, u);
    px.top = std::min(px.top, v);
    px.bottom = std::max(px.bottom, v);
  }
  return px;
}

inline CornerBox normalize_clipped(const PixelBox& px, const CameraCalib& cal) {
  return {clip_unit(px.left / cal.img_w), clip_unit(px.top / cal.img_h),
          clip_unit(px.right / cal.img_w), clip_unit(px.bottom / cal.img_h)};
}

inline ProjectedBox project_box3d(const Box3D& b, const CameraCalib& cal) {
  return inverse_reparameterize(normalize_clipped(project_box3d_pixels(b, cal), cal));
}

/// Depth from the pinhole relation d = fy * H / h.
inline double geometric_depth(double h3d, double pixel_height, double fy) {
  if (!(pixel_height > 0.0)) fail(ErrorCode::DegenerateBox, "pixel height must be positive");
  return fy * h3d / pixel_height;
}

}  // namespace difflabel
