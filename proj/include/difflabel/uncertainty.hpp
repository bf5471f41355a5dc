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
#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/kitti_io.hpp"

namespace difflabel {

/// Attributes whose uncertainty drives the perturbation scale: depth plus
/// the four corner coordinates of the reparameterized projected box.
enum class Attribute { Depth = 0, Left = 1, Top = 2, Right = 3, Bottom = 4 };

inline constexpr std::size_t kNumAttributes = 5;
inline constexpr std::array<Attribute, kNumAttributes> kAttributes = {
    Attribute::Depth, Attribute::Left, Attribute::Top, Attribute::Right, Attribute::Bottom};

constexpr std::string_view to_string(Attribute a) {
  constexpr std::array<std::string_view, kNumAttributes> names = {"d", "l", "t", "r", "b"};
  return names[static_cast<std::size_t>(a)];
}

template <typename T>
struct PerAttribute {
  std::array<T, kNumAttributes> values{};

  T& operator[](Attribute a) { return values[static_cast<std::size_t>(a)]; }
  const T& operator[](Attribute a) const { return values[static_cast<std::size_t>(a)]; }
  bool operator==(const PerAttribute&) const = default;
};

/// Natural log of the predicted Laplace scale for each attribute.
using LogVariances = PerAttribute<double>;

/// Normalized certainty in [0,1]; higher means easier.
using DifficultyScores = PerAttribute<double>;

inline DifficultyScores uniform_scores(double value) {
  DifficultyScores s;
  s.values.fill(value);
  return s;
}

/// EMA-tracked certainty extrema, one (min, max) pair per attribute.
struct RunningExtrema {
  PerAttribute<double> c_min;
  PerAttribute<double> c_max;
  bool initialized = false;

  bool operator==(const RunningExtrema&) const = default;
};

inline constexpr double kDefaultEmaBeta = 0.8;

inline double certainty(double log_sigma) {
  if (!std::isfinite(log_sigma)) fail(ErrorCode::NonFinite, "log sigma is not finite");
  return std::exp(-log_sigma);
}

/// Min-max normalization clamped to [0,1]; a collapsed range maps to 0.5.
inline double normalize(double c, double c_min, double c_max) {
  const double range = c_max - c_min;
  if (range < 1e-12) return 0.5;
  return std::clamp((c - c_min) / range, 0.0, 1.0);
}

inline double normalize(double c, const RunningExtrema& state, Attribute a) {
  if (!state.initialized) fail(ErrorCode::Uninitialized, "running extrema not seeded");
  return normalize(c, state.c_min[a], state.c_max[a]);
}

/// One EMA step. `batch` holds the certainties of every object in the
/// batch; the first call copies the batch extrema verbatim.
inline RunningExtrema ema_update(const RunningExtrema& state,
                                 std::span<const PerAttribute<double>> batch, double beta) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "ema_update needs at least one object");
  if (!(beta >= 0.0 && beta < 1.0)) fail(ErrorCode::ConfigError, "EMA beta must be in [0,1)");
  RunningExtrema next = state;
  for (Attribute a : kAttributes) {
    double lo = batch.front()[a];
    double hi = lo;
    for (const auto& c : batch) {
      lo = std::min(lo, c[a]);
      hi = std::max(hi, c[a]);
    }
    if (!state.initialized) {
      next.c_min[a] = lo;
      next.c_max[a] = hi;
    } else {
      next.c_min[a] = beta * state.c_min[a] + (1.0 - beta) * lo;
      next.c_max[a] = beta * state.c_max[a] + (1.0 - beta) * hi;
    }
    if (next.c_min[a] > next.c_max[a]) std::swap(next.c_min[a], next.c_max[a]);
  }
  next.initialized = true;
  return next;
}

inline PerAttribute<double> certainties(const LogVariances& lv) {
  PerAttribute<double> c;
  for (Attribute a : kAttributes) c[a] = certainty(lv[a]);
  return c;
}

inline DifficultyScores scores_from_logvars(const LogVariances& lv, const RunningExtrema& state) {
  if (!state.initialized) fail(ErrorCode::Uninitialized, "running extrema not seeded");
  DifficultyScores s;
  for (Attribute a : kAttributes) s[a] = normalize(certainty(lv[a]), state, a);
  return s;
}

/// Checkpoint section: a header line then "attr min max" per attribute,
/// numbers in shortest round-trip form.
inline std::string serialize_extrema(const RunningExtrema& state) {
  std::string out = state.initialized ? "extrema initialized\n" : "extrema uninitialized\n";
  char buf[64];
  for (Attribute a : kAttributes) {
    out += to_string(a);
    for (double v : {state.c_min[a], state.c_max[a]}) {
      out += ' ';
      out.append(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    }
    out += '\n';
  }
  return out;
}

inline RunningExtrema parse_extrema(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.size() != 1 + kNumAttributes) {
    fail(ErrorCode::MalformedLine, "extrema section needs 6 lines");
  }
  RunningExtrema state;
  const auto head = detail::split_ws(lines[0]);
  if (head.size() != 2 || head[0] != "extrema" ||
      (head[1] != "initialized" && head[1] != "uninitialized")) {
    fail(ErrorCode::MalformedLine, "bad extrema header");
  }
  state.initialized = head[1] == "initialized";
  for (std::size_t i = 0; i < kNumAttributes; ++i) {
    const auto tok = detail::split_ws(lines[i + 1]);
    if (tok.size() != 3 || tok[0] != to_string(kAttributes[i])) {
      fail(ErrorCode::MalformedLine, "bad extrema row for attribute " +
                                         std::string(to_string(kAttributes[i])));
    }
    state.c_min[kAttributes[i]] = detail::parse_number<double>(tok[1], "extrema");
    state.c_max[kAttributes[i]] = detail::parse_number<double>(tok[2], "extrema");
  }
  return state;
}

}  // namespace difflabel
