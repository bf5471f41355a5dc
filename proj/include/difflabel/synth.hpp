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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"
#include "difflabel/kitti_io.hpp"
#include "difflabel/rng.hpp"

namespace difflabel {

struct ClassPrior {
  Category category = Category::Car;
  double weight = 1.0;
  double h_mean = 1.5, h_std = 0.1;
  double w_mean = 1.6, w_std = 0.1;
  double l_mean = 3.9, l_std = 0.3;
};

/// Default dimension priors follow the KITTI training-set class means.
inline std::vector<ClassPrior> default_class_priors() {
  return {{Category::Car, 0.7, 1.53, 0.10, 1.63, 0.10, 3.88, 0.30},
          {Category::Pedestrian, 0.15, 1.76, 0.10, 0.66, 0.08, 0.84, 0.15},
          {Category::Cyclist, 0.15, 1.74, 0.10, 0.60, 0.08, 1.76, 0.15}};
}

inline constexpr std::size_t kNumStrata = 3;

struct SceneConfig {
  int min_objects = 3;
  int max_objects = 8;
  double depth_min = 5.0;
  double depth_max = 50.0;
  std::vector<ClassPrior> classes = default_class_priors();
  double occlusion_prob = 0.2;
  double truncation_prob = 0.1;
  /// Per-stratum annotation noise: depth in meters, box corners in pixels.
  std::array<double, kNumStrata> noise_depth = {0.1, 0.5, 1.5};
  std::array<double, kNumStrata> noise_box_px = {0.1, 0.2, 0.3};
  double camera_height = 1.65;
  double yaw_max = 0.0;
  CameraCalib camera{721.5377, 721.5377, 609.5593, 172.854, 1242.0, 375.0};
  std::uint64_t seed = 0;

  /// Depth thresholds separating the strata: equal thirds of the range.
  std::array<double, kNumStrata - 1> stratum_bounds() const {
    const double step = (depth_max - depth_min) / static_cast<double>(kNumStrata);
    return {depth_min + step, depth_min + 2.0 * step};
  }

  int stratum_of(double depth) const {
    int s = 0;
    for (double b : stratum_bounds()) s += depth >= b ? 1 : 0;
    return s;
  }
};

inline void validate(const SceneConfig& cfg) {
  validate(cfg.camera);
  if (!(cfg.depth_min > 0.0 && cfg.depth_max > cfg.depth_min)) {
    fail(ErrorCode::ConfigError, "depth range must be positive and nonempty");
  }
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    fail(ErrorCode::ConfigError, "bad object count range");
  }
  for (double p : {cfg.occlusion_prob, cfg.truncation_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::ConfigError, "probabilities must be in [0,1]");
  }
  if (cfg.classes.empty()) fail(ErrorCode::ConfigError, "no object classes configured");
}

struct SynthObject {
  Box3D box;                // noise-free geometry
  ObjectLabel truth;        // noise-free label, two-decimal quantized
  ObjectLabel annotated;    // truth plus stratum-dependent annotation noise
  DifficultyLevel level = DifficultyLevel::Easy;
  int stratum = 0;
};

struct SynthScene {
  std::vector<SynthObject> objects;
  CameraCalib calib;

  std::vector<ObjectLabel> annotated_labels() const {
    std::vector<ObjectLabel> out;
    for (const auto& o : objects) out.push_back(o.annotated);
    return out;
  }
  std::vector<ObjectLabel> truth_labels() const {
    std::vector<ObjectLabel> out;
    for (const auto& o : objects) out.push_back(o.truth);
    return out;
  }
};

namespace detail {

inline ObjectLabel quantize(const ObjectLabel& l) { return parse_label_line(serialize_label(l)); }

inline double sample_dim(CounterRng& rng, double mean, double stddev) {
  return std::max(0.3 * mean, mean + stddev * rng.normal());
}

struct BevRect {
  double x0, z0, x1, z1;
};

inline BevRect bev_footprint(const Box3D& b, double margin) {
  const double c = std::abs(std::cos(b.yaw));
  const double s = std::abs(std::sin(b.yaw));
  const double hx = 0.5 * (b.l * c + b.w * s) + margin;
  const double hz = 0.5 * (b.l * s + b.w * c) + margin;
  return {b.x - hx, b.z - hz, b.x + hx, b.z + hz};
}

inline bool overlaps(const BevRect& a, const BevRect& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.z0 < b.z1 && b.z0 < a.z1;
}

}  // namespace detail

/// Places objects on the ground plane, projects them, and derives KITTI
/// labels. Each object gets up to 100 placement attempts.
inline SynthScene gen_scene(const SceneConfig& cfg, CounterRng& rng) {
  validate(cfg);
  const CameraCalib& cam = cfg.camera;
  SynthScene scene;
  scene.calib = cam;

  double total_weight = 0.0;
  for (const auto& c : cfg.classes) total_weight += c.weight;

  const int n = cfg.min_objects +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
  std::vector<detail::BevRect> occupied;
  for (int i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      double pick = rng.uniform() * total_weight;
      const ClassPrior* prior = &cfg.classes.back();
      for (const auto& c : cfg.classes) {
        if (pick < c.weight) {
          prior = &c;
          break;
        }
        pick -= c.weight;
      }
      Box3D box;
      box.h = detail::sample_dim(rng, prior->h_mean, prior->h_std);
      box.w = detail::sample_dim(rng, prior->w_mean, prior->w_std);
      box.l = detail::sample_dim(rng, prior->l_mean, prior->l_std);
      box.z = rng.uniform(cfg.depth_min, cfg.depth_max);
      box.y = cfg.camera_height - 0.5 * box.h;
      box.yaw = cfg.yaw_max > 0.0 ? rng.uniform(-cfg.yaw_max, cfg.yaw_max) : 0.0;
      const bool truncate = rng.bernoulli(cfg.truncation_prob);
      const double half_px = 0.5 * cam.fx * std::max(box.l, box.w) / box.z;
      double u_center = 0.0;
      if (truncate) {
        const double edge = rng.bernoulli(0.5) ? 0.0 : cam.img_w;
        u_center = edge + rng.uniform(-0.6, 0.6) * half_px;
      } else {
        u_center = rng.uniform(0.0, cam.img_w);
      }
      box.x = (u_center - cam.cx) * box.z / cam.fx;
      const int occluded = rng.bernoulli(cfg.occlusion_prob) ? 1 + static_cast<int>(rng.below(2)) : 0;
      const std::array<double, 6> noise = {rng.normal(), rng.normal(), rng.normal(),
                                           rng.normal(), rng.normal(), 0.0};

      PixelBox raw;
      try {
        raw = project_box3d_pixels(box, cam);
      } catch (const Error&) {
        continue;
      }
      const PixelBox clipped{std::clamp(raw.left, 0.0, cam.img_w), std::clamp(raw.top, 0.0, cam.img_h),
                             std::clamp(raw.right, 0.0, cam.img_w),
                             std::clamp(raw.bottom, 0.0, cam.img_h)};
      if (clipped.width() < 4.0 || clipped.height() < 4.0) continue;
      const double trunc = 1.0 - (clipped.width() * clipped.height()) / (raw.width() * raw.height());
      if (!truncate && trunc > 0.0) continue;
      if (truncate && (trunc <= 0.0 || trunc > 0.7)) continue;
      const auto footprint = detail::bev_footprint(box, 0.5);
      if (std::any_of(occupied.begin(), occupied.end(),
                      [&](const auto& r) { return detail::overlaps(r, footprint); })) {
        continue;
      }

      SynthObject obj;
      obj.box = box;
      obj.stratum = cfg.stratum_of(box.z);
      ObjectLabel& t = obj.truth;
      t.category = prior->category;
      t.truncated = trunc;
      t.occluded = occluded;
      t.alpha = box.yaw - std::atan2(box.x, box.z);
      t.bbox = clipped;
      t.h = box.h;
      t.w = box.w;
      t.l = box.l;
      t.loc = {box.x, box.y + 0.5 * box.h, box.z};
      t.rotation_y = box.yaw;
      t = detail::quantize(t);

      // Annotation error moves the box along its viewing ray; the 2D box is
      // the projection of the annotated 3D box plus per-corner jitter.
      ObjectLabel a = t;
      const double sd = cfg.noise_depth[static_cast<std::size_t>(obj.stratum)];
      const double sp = cfg.noise_box_px[static_cast<std::size_t>(obj.stratum)];
      Box3D abox = box;
      abox.z = std::max(1.0, box.z + sd * noise[0]);
      abox.x = box.x * abox.z / box.z;
      a.loc.x = abox.x;
      a.loc.z = abox.z;
      PixelBox proj = t.bbox;
      try {
        const PixelBox p = project_box3d_pixels(abox, cam);
        proj = {std::clamp(p.left, 0.0, cam.img_w), std::clamp(p.top, 0.0, cam.img_h),
                std::clamp(p.right, 0.0, cam.img_w), std::clamp(p.bottom, 0.0, cam.img_h)};
      } catch (const Error&) {
      }
      PixelBox nb{std::clamp(proj.left + sp * noise[1], 0.0, cam.img_w),
                  std::clamp(proj.top + sp * noise[2], 0.0, cam.img_h),
                  std::clamp(proj.right + sp * noise[3], 0.0, cam.img_w),
                  std::clamp(proj.bottom + sp * noise[4], 0.0, cam.img_h)};
      if (nb.width() >= 2.0 && nb.height() >= 2.0) a.bbox = nb;
      obj.annotated = detail::quantize(a);
      obj.level = assign_difficulty(obj.annotated);

      occupied.push_back(footprint);
      scene.objects.push_back(obj);
      break;
    }
  }
  if (scene.objects.empty()) fail(ErrorCode::EmptyScene, "no object could be placed in frame");
  return scene;
}

inline std::string scene_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.txt", index);
  return buf;
}

/// Scene i draws from stream (cfg.seed, i), so scenes are independent of
/// each other and of generation order.
inline std::vector<SynthScene> gen_scenes(std::size_t n_scenes, const SceneConfig& cfg) {
  if (n_scenes < 1) fail(ErrorCode::ConfigError, "need at least one scene");
  std::vector<SynthScene> scenes;
  scenes.reserve(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i) {
    CounterRng rng = CounterRng::stream(cfg.seed, i);
    scenes.push_back(gen_scene(cfg, rng));
  }
  return scenes;
}

/// Writes label_2/, label_truth/ and calib/ in KITTI layout under `root`.
inline std::vector<SynthScene> gen_dataset(std::size_t n_scenes, const SceneConfig& cfg,
                                           const std::filesystem::path& root) {
  auto scenes = gen_scenes(n_scenes, cfg);
  std::error_code ec;
  for (const char* sub : {"label_2", "label_truth", "calib"}) {
    std::filesystem::create_directories(root / sub, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + (root / sub).string());
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string name = scene_file_name(i);
    write_text_file(root / "label_2" / name, serialize_label_file(scenes[i].annotated_labels()));
    write_text_file(root / "label_truth" / name, serialize_label_file(scenes[i].truth_labels()));
    write_text_file(root / "calib" / name, serialize_calib(scenes[i].calib));
  }
  return scenes;
}

}  // namespace difflabel
