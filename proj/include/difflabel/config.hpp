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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "difflabel/eval.hpp"
#include "difflabel/error.hpp"
#include "difflabel/kitti_io.hpp"
#include "difflabel/rng.hpp"
#include "difflabel/synth.hpp"
#include "difflabel/training.hpp"

namespace difflabel {

/// Everything a command needs. Sub-seeds derive from `seed` only.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t scenes = 50;
  std::vector<Category> classes = default_classes();
  SceneConfig scene;
  TrainConfig train;
  EvalConfig eval;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;

  /// Fills the per-module seeds from the root seed.
  void derive_seeds() {
    scene.seed = CounterRng::stream(seed, 1).next_u64();
    train.seed = CounterRng::stream(seed, 2).next_u64();
    train.dap.seed = train.seed;
    eval.seed = CounterRng::stream(seed, 3).next_u64();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T config_number(std::string_view key, std::string_view value) {
  try {
    return parse_number<T>(value, key);
  } catch (const Error&) {
    fail(ErrorCode::ConfigError, "bad value for '" + std::string(key) + "': '" + std::string(value) + "'");
  }
}

inline std::vector<std::string_view> split_commas(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto end = v.find(',', start);
    out.push_back(trim(v.substr(start, end == std::string_view::npos ? v.size() - start : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <std::size_t N>
std::array<double, N> config_triple(std::string_view key, std::string_view value) {
  const auto parts = split_commas(value);
  if (parts.size() != N) fail(ErrorCode::ConfigError, "'" + std::string(key) + "' needs " + std::to_string(N) + " values");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = config_number<double>(key, parts[i]);
  return out;
}

template <typename E>
E config_enum(std::string_view key, std::string_view value,
              std::initializer_list<std::pair<std::string_view, E>> options) {
  for (const auto& [name, e] : options) {
    if (value == name) return e;
  }
  fail(ErrorCode::ConfigError, "bad value for '" + std::string(key) + "': '" + std::string(value) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

inline const std::map<std::string, Setter, std::less<>>& config_setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> m;
    auto num = [&m](const char* key, auto member) {
      m[key] = [member](RunConfig& c, std::string_view k, std::string_view v) {
        auto& field = member(c);
        field = config_number<std::remove_reference_t<decltype(field)>>(k, v);
      };
    };
    num("seed", [](RunConfig& c) -> auto& { return c.seed; });
    num("scenes", [](RunConfig& c) -> auto& { return c.scenes; });
    num("min_objects", [](RunConfig& c) -> auto& { return c.scene.min_objects; });
    num("max_objects", [](RunConfig& c) -> auto& { return c.scene.max_objects; });
    num("depth_min", [](RunConfig& c) -> auto& { return c.scene.depth_min; });
    num("depth_max", [](RunConfig& c) -> auto& { return c.scene.depth_max; });
    num("occlusion_prob", [](RunConfig& c) -> auto& { return c.scene.occlusion_prob; });
    num("truncation_prob", [](RunConfig& c) -> auto& { return c.scene.truncation_prob; });
    num("camera_height", [](RunConfig& c) -> auto& { return c.scene.camera_height; });
    num("yaw_max", [](RunConfig& c) -> auto& { return c.scene.yaw_max; });
    num("fx", [](RunConfig& c) -> auto& { return c.scene.camera.fx; });
    num("fy", [](RunConfig& c) -> auto& { return c.scene.camera.fy; });
    num("cx", [](RunConfig& c) -> auto& { return c.scene.camera.cx; });
    num("cy", [](RunConfig& c) -> auto& { return c.scene.camera.cy; });
    num("img_w", [](RunConfig& c) -> auto& { return c.scene.camera.img_w; });
    num("img_h", [](RunConfig& c) -> auto& { return c.scene.camera.img_h; });
    num("gamma_b", [](RunConfig& c) -> auto& { return c.train.dap.gamma_b; });
    num("gamma_d", [](RunConfig& c) -> auto& { return c.train.dap.gamma_d; });
    num("class_flip_prob", [](RunConfig& c) -> auto& { return c.train.dap.class_flip_prob; });
    num("hidden", [](RunConfig& c) -> auto& { return c.train.hidden; });
    num("learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; });
    num("epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    num("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    num("beta", [](RunConfig& c) -> auto& { return c.train.beta; });
    num("groups", [](RunConfig& c) -> auto& { return c.train.groups; });
    num("uniform_score", [](RunConfig& c) -> auto& { return c.train.uniform_score; });
    num("background_anchors", [](RunConfig& c) -> auto& { return c.train.background_anchors; });
    num("anchor_jitter", [](RunConfig& c) -> auto& { return c.train.anchor_jitter; });
    num("grad_clip", [](RunConfig& c) -> auto& { return c.train.grad_clip; });
    num("lambda_bbox", [](RunConfig& c) -> auto& { return c.train.weights.lambda_bbox; });
    num("lambda_d", [](RunConfig& c) -> auto& { return c.train.weights.lambda_d; });
    num("lambda_cls", [](RunConfig& c) -> auto& { return c.train.weights.lambda_cls; });
    num("iou_thresh", [](RunConfig& c) -> auto& { return c.eval.iou_thresh; });
    m["noise_depth"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.scene.noise_depth = config_triple<kNumStrata>(k, v);
    };
    m["noise_box_px"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.scene.noise_box_px = config_triple<kNumStrata>(k, v);
    };
    m["depth_bins"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.eval.depth_bins.clear();
      for (auto part : split_commas(v)) c.eval.depth_bins.push_back(config_number<double>(k, part));
    };
    m["classes"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.classes.clear();
      for (auto part : split_commas(v)) {
        const auto cat = category_from_string(part);
        if (!cat || *cat == Category::DontCare) {
          fail(ErrorCode::ConfigError, "bad value for '" + std::string(k) + "': '" + std::string(part) + "'");
        }
        c.classes.push_back(*cat);
      }
    };
    m["depth_mode"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.dap.depth_mode =
          config_enum<DepthMode>(k, v, {{"absolute", DepthMode::Absolute}, {"residual", DepthMode::Residual}});
    };
    m["score_mode"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.score_mode =
          config_enum<ScoreMode>(k, v, {{"adaptive", ScoreMode::Adaptive}, {"uniform", ScoreMode::Uniform}});
    };
    m["supervision"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.supervision = config_enum<Supervision>(
          k, v, {{"annotated", Supervision::Annotated}, {"truth", Supervision::Truth}});
    };
    m["data"] = [](RunConfig& c, std::string_view, std::string_view v) { c.data_dir = std::string(v); };
    m["out"] = [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); };
    m["checkpoint"] = [](RunConfig& c, std::string_view, std::string_view v) { c.checkpoint = std::string(v); };
    return m;
  }();
  return table;
}

}  // namespace detail

/// Sets one key. Unknown keys and unparsable values are ConfigError.
inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = detail::config_setters();
  const auto it = table.find(key);
  if (it == table.end()) fail(ErrorCode::ConfigError, "unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

/// `key = value` lines; `#` starts a comment; blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
      }
      const auto key = detail::trim(line.substr(0, eq));
      const auto value = detail::trim(line.substr(eq + 1));
      if (key.empty()) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
      out.emplace_back(std::string(key), std::string(value));
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

/// Config file (if any), then overrides in order; validates the result.
inline RunConfig load_run_config(const std::filesystem::path& file,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!file.empty()) {
    if (!std::filesystem::is_regular_file(file)) fail(ErrorCode::ConfigError, "no config file " + file.string());
    for (const auto& [k, v] : parse_config_text(read_text_file(file))) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.derive_seeds();
  if (cfg.classes.empty()) fail(ErrorCode::ConfigError, "no classes configured");
  validate(cfg.scene);
  validate(cfg.train);
  return cfg;
}

}  // namespace difflabel
