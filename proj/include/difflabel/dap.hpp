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

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"
#include "difflabel/rng.hpp"
#include "difflabel/uncertainty.hpp"

namespace difflabel {

/// Depth label fed to the query: absolute metric depth, or the residual
/// d_gt - d_geo against the pinhole depth of the 2D box.
enum class DepthMode { Absolute, Residual };

constexpr std::string_view to_string(DepthMode m) {
  return m == DepthMode::Absolute ? "absolute" : "residual";
}

struct DapConfig {
  double gamma_b = 0.4;
  double gamma_d = 0.8;
  double class_flip_prob = 0.2;
  DepthMode depth_mode = DepthMode::Residual;
  std::uint64_t seed = 0;
};

inline void validate(const DapConfig& cfg) {
  if (!(cfg.gamma_b > 0.0 && cfg.gamma_b < 1.0)) {
    fail(ErrorCode::ConfigError, "gamma_b must lie strictly inside (0,1)");
  }
  if (!(cfg.gamma_d > 0.0 && cfg.gamma_d < 1.0)) {
    fail(ErrorCode::ConfigError, "gamma_d must lie strictly inside (0,1)");
  }
  if (!(cfg.class_flip_prob >= 0.0 && cfg.class_flip_prob <= 1.0)) {
    fail(ErrorCode::ConfigError, "class_flip_prob must lie in [0,1]");
  }
}

/// Ground-truth object as seen by the perturbation stage.
struct CleanLabel {
  ProjectedBox box;
  double depth_gt = 0.0;
  double depth_geo = 0.0;
  int class_idx = 0;
};

inline double depth_target(const CleanLabel& l, DepthMode mode) {
  return mode == DepthMode::Absolute ? l.depth_gt : l.depth_gt - l.depth_geo;
}

struct PerturbedLabel {
  ProjectedBox box;
  double depth = 0.0;
  int class_idx = 0;
  std::vector<double> class_onehot;
};

/// Random choices behind one perturbed label, in draw order.
struct PerturbationDraw {
  std::array<int, 4> box_signs{};  // l, t, r, b
  int depth_sign = 1;
  int class_idx = 0;
  bool flipped = false;
};

/// Clean and perturbed corners plus the pre-clip displacement per side.
struct CornerPerturbation {
  CornerBox clean;
  CornerBox perturbed;
  std::array<double, 4> delta{};  // l, t, r, b
};

inline int flip_class(int class_idx, int num_classes, double p_flip, CounterRng& rng) {
  if (num_classes < 2 && p_flip > 0.0) {
    fail(ErrorCode::SingleClass, "class flipping needs at least two classes");
  }
  if (rng.uniform() >= p_flip) return class_idx;
  const int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes - 1)));
  return other >= class_idx ? other + 1 : other;
}

inline PerturbationDraw draw_perturbation(CounterRng& rng, int class_idx, int num_classes,
                                          double p_flip) {
  PerturbationDraw d;
  for (int& s : d.box_signs) s = rng.sign();
  d.depth_sign = rng.sign();
  d.class_idx = flip_class(class_idx, num_classes, p_flip, rng);
  d.flipped = d.class_idx != class_idx;
  return d;
}

/// Shifts each corner by o * (c_hat * gamma_b + extra_scale) * sign and
/// clips to [0,1]. extra_scale is 0 for positive queries and 1 for their
/// negative counterparts; with extra_scale = 0 the corners keep straddling
/// the original center. Inverted negative corners are swapped back.
inline CornerPerturbation perturb_corners(const ProjectedBox& b, const DifficultyScores& scores,
                                          double gamma_b, const std::array<int, 4>& signs,
                                          double extra_scale = 0.0) {
  CornerPerturbation out;
  out.clean = reparameterize(b);
  const std::array<double, 4> offsets = {b.o_l, b.o_t, b.o_r, b.o_b};
  const std::array<double, 4> c_hat = {scores[Attribute::Left], scores[Attribute::Top],
                                       scores[Attribute::Right], scores[Attribute::Bottom]};
  const std::array<double, 4> coords = {out.clean.x_l, out.clean.y_t, out.clean.x_r,
                                        out.clean.y_b};
  std::array<double, 4> moved{};
  for (std::size_t v = 0; v < 4; ++v) {
    out.delta[v] = offsets[v] * (c_hat[v] * gamma_b + extra_scale) * signs[v];
    moved[v] = clip_unit(coords[v] + out.delta[v]);
  }
  out.perturbed = {moved[0], moved[1], moved[2], moved[3]};
  if (out.perturbed.x_l > out.perturbed.x_r) std::swap(out.perturbed.x_l, out.perturbed.x_r);
  if (out.perturbed.y_t > out.perturbed.y_b) std::swap(out.perturbed.y_t, out.perturbed.y_b);
  return out;
}

inline ProjectedBox perturb_bbox(const ProjectedBox& b, const DifficultyScores& scores,
                                 double gamma_b, CounterRng& rng) {
  if (!(gamma_b > 0.0 && gamma_b < 1.0)) fail(ErrorCode::ConfigError, "gamma_b not in (0,1)");
  std::array<int, 4> signs{};
  for (int& s : signs) s = rng.sign();
  return detail::recenter(perturb_corners(b, scores, gamma_b, signs).perturbed);
}

inline double apply_depth_perturbation(double d, double c_hat_d, double gamma_d, int sign,
                                       double extra_scale = 0.0) {
  if (!std::isfinite(d)) fail(ErrorCode::NonFinite, "depth is not finite");
  return d + d * (c_hat_d * gamma_d + extra_scale) * sign;
}

inline double perturb_depth(double d, double c_hat_d, double gamma_d, CounterRng& rng) {
  return apply_depth_perturbation(d, c_hat_d, gamma_d, rng.sign());
}

inline std::vector<double> one_hot(int index, int num_classes) {
  std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
  if (index >= 0 && index < num_classes) v[static_cast<std::size_t>(index)] = 1.0;
  return v;
}

/// Builds the perturbed label for a fixed set of draws.
inline PerturbedLabel apply_perturbation(const CleanLabel& clean, const DifficultyScores& scores,
                                         const DapConfig& cfg, int num_classes,
                                         const PerturbationDraw& draw, double extra_scale = 0.0) {
  PerturbedLabel out;
  out.box = detail::recenter(
      perturb_corners(clean.box, scores, cfg.gamma_b, draw.box_signs, extra_scale).perturbed);
  out.depth = apply_depth_perturbation(depth_target(clean, cfg.depth_mode),
                                       scores[Attribute::Depth], cfg.gamma_d, draw.depth_sign,
                                       extra_scale);
  out.class_idx = draw.class_idx;
  out.class_onehot = one_hot(draw.class_idx, num_classes);
  return out;
}

/// RNG order: four box signs (l, t, r, b), one depth sign, one flip draw,
/// and one class choice only when the flip fires.
inline PerturbedLabel make_perturbed_label(const CleanLabel& clean, const DifficultyScores& scores,
                                           const DapConfig& cfg, int num_classes,
                                           CounterRng& rng) {
  validate(cfg);
  const PerturbationDraw draw =
      draw_perturbation(rng, clean.class_idx, num_classes, cfg.class_flip_prob);
  return apply_perturbation(clean, scores, cfg, num_classes, draw);
}

}  // namespace difflabel
