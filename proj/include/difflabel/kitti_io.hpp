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
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"

namespace difflabel {

enum class Category { Car, Pedestrian, Cyclist, Van, Truck, Person_sitting, Tram, Misc, DontCare };

inline constexpr std::array<std::string_view, 9> kCategoryNames = {
    "Car", "Pedestrian", "Cyclist", "Van", "Truck", "Person_sitting", "Tram", "Misc", "DontCare"};

constexpr std::string_view to_string(Category c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

inline std::optional<Category> category_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  }
  return std::nullopt;
}

enum class DifficultyLevel { Easy = 0, Moderate = 1, Hard = 2, Ignored = 3 };

constexpr std::string_view to_string(DifficultyLevel d) {
  switch (d) {
    case DifficultyLevel::Easy: return "Easy";
    case DifficultyLevel::Moderate: return "Moderate";
    case DifficultyLevel::Hard: return "Hard";
    case DifficultyLevel::Ignored: return "Ignored";
  }
  return "Ignored";
}

/// One line of a KITTI label file. `loc` is the bottom-center of the 3D box
/// in camera coordinates, as in the devkit.
struct ObjectLabel {
  Category category = Category::Car;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  PixelBox bbox;
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  Vec3 loc;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool operator==(const ObjectLabel& o) const {
    return category == o.category && truncated == o.truncated && occluded == o.occluded &&
           alpha == o.alpha && bbox.left == o.bbox.left && bbox.top == o.bbox.top &&
           bbox.right == o.bbox.right && bbox.bottom == o.bbox.bottom && h == o.h && w == o.w &&
           l == o.l && loc.x == o.loc.x && loc.y == o.loc.y && loc.z == o.loc.z &&
           rotation_y == o.rotation_y && score == o.score;
  }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::string_view field) {
  T value{};
  // from_chars rejects a leading '+', which some writers emit.
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(ErrorCode::BadNumber, "cannot parse '" + std::string(tok) + "' as " + std::string(field));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      fail(ErrorCode::BadNumber, "non-finite " + std::string(field) + " '" + std::string(tok) + "'");
    }
  }
  return value;
}

inline void append_fixed2(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  out += buf;
}

inline void append_shortest(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace detail

inline ObjectLabel parse_label_line(std::string_view line) {
  const auto tok = detail::split_ws(line);
  if (tok.size() != 15 && tok.size() != 16) {
    fail(ErrorCode::MalformedLine,
         "expected 15 or 16 fields, found " + std::to_string(tok.size()));
  }
  ObjectLabel l;
  const auto cat = category_from_string(tok[0]);
  if (!cat) fail(ErrorCode::UnknownCategory, "unknown object type '" + std::string(tok[0]) + "'");
  l.category = *cat;
  using detail::parse_number;
  l.truncated = parse_number<double>(tok[1], "truncated");
  l.occluded = parse_number<int>(tok[2], "occluded");
  l.alpha = parse_number<double>(tok[3], "alpha");
  l.bbox = {parse_number<double>(tok[4], "bbox"), parse_number<double>(tok[5], "bbox"),
            parse_number<double>(tok[6], "bbox"), parse_number<double>(tok[7], "bbox")};
  l.h = parse_number<double>(tok[8], "dimensions");
  l.w = parse_number<double>(tok[9], "dimensions");
  l.l = parse_number<double>(tok[10], "dimensions");
  l.loc = {parse_number<double>(tok[11], "location"), parse_number<double>(tok[12], "location"),
           parse_number<double>(tok[13], "location")};
  l.rotation_y = parse_number<double>(tok[14], "rotation_y");
  if (tok.size() == 16) l.score = parse_number<double>(tok[15], "score");

  if (l.category != Category::DontCare) {
    if (!(l.bbox.left < l.bbox.right && l.bbox.top < l.bbox.bottom)) {
      fail(ErrorCode::MalformedLine, "2D box corners out of order");
    }
    if (!(l.h > 0.0 && l.w > 0.0 && l.l > 0.0)) {
      fail(ErrorCode::MalformedLine, "object dimensions must be positive");
    }
    if (l.occluded < 0 || l.occluded > 3) fail(ErrorCode::MalformedLine, "occlusion not in 0..3");
    if (!(l.truncated >= 0.0 && l.truncated <= 1.0)) {
      fail(ErrorCode::MalformedLine, "truncation not in [0,1]");
    }
  }
  return l;
}

/// Two-decimal rendering as in published KITTI files. DontCare sentinels
/// (-1, -10, -1000) keep their shortest form so devkit lines round-trip
/// byte for byte.
inline std::string serialize_label(const ObjectLabel& l) {
  std::string out(to_string(l.category));
  const bool sentinel = l.category == Category::DontCare;
  auto scalar = [&](double v) {
    out += ' ';
    if (sentinel) {
      detail::append_shortest(out, v);
    } else {
      detail::append_fixed2(out, v);
    }
  };
  scalar(l.truncated);
  out += ' ';
  out += std::to_string(l.occluded);
  scalar(l.alpha);
  for (double v : {l.bbox.left, l.bbox.top, l.bbox.right, l.bbox.bottom}) {
    out += ' ';
    detail::append_fixed2(out, v);
  }
  for (double v : {l.h, l.w, l.l, l.loc.x, l.loc.y, l.loc.z, l.rotation_y}) scalar(v);
  if (l.score) {
    out += ' ';
    detail::append_fixed2(out, *l.score);
  }
  return out;
}

/// Parses a whole label file; blank lines are skipped. Errors are re-raised
/// with the 1-based line number prepended.
inline std::vector<ObjectLabel> parse_label_file(std::string_view text) {
  std::vector<ObjectLabel> out;
  std::size_t start = 0;
  std::size_t lineno = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    const std::string_view line = text.substr(start, end - start);
    if (!detail::split_ws(line).empty()) {
      try {
        out.push_back(parse_label_line(line));
      } catch (const Error& e) {
        throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline std::string serialize_label_file(const std::vector<ObjectLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += serialize_label(l);
    out += '\n';
  }
  return out;
}

/// Reads fx, fy, cx, cy from the P2 row. Image size is not part of the
/// calib format and is supplied by the caller.
inline CameraCalib parse_calib(std::string_view text, double img_w = 0.0, double img_h = 0.0) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto tok = detail::split_ws(text.substr(start, end - start));
    if (!tok.empty() && tok[0] == "P2:") {
      if (tok.size() != 13) {
        fail(ErrorCode::BadNumber, "P2 needs 12 numbers, found " + std::to_string(tok.size() - 1));
      }
      std::array<double, 12> p{};
      for (std::size_t i = 0; i < 12; ++i) p[i] = detail::parse_number<double>(tok[i + 1], "P2");
      return {p[0], p[5], p[2], p[6], img_w, img_h};
    }
    start = end + 1;
  }
  fail(ErrorCode::MissingP2, "no P2 row in calibration text");
}

/// Writes a full devkit-style calib file with P0..P3 set to the same
/// intrinsics and identity rectification / extrinsics.
inline std::string serialize_calib(const CameraCalib& cal) {
  auto row = [](std::string_view key, const std::vector<double>& v) {
    std::string s(key);
    char buf[64];
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.12e", x);
      s += buf;
    }
    return s + '\n';
  };
  const std::vector<double> p = {cal.fx, 0, cal.cx, 0, 0, cal.fy, cal.cy, 0, 0, 0, 1, 0};
  const std::vector<double> eye34 = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  return row("P0:", p) + row("P1:", p) + row("P2:", p) + row("P3:", p) +
         row("R0_rect:", {1, 0, 0, 0, 1, 0, 0, 0, 1}) + row("Tr_velo_to_cam:", eye34) +
         row("Tr_imu_to_velo:", eye34);
}

/// KITTI benchmark difficulty from box height, occlusion and truncation.
inline DifficultyLevel assign_difficulty(const ObjectLabel& l, double pixel_height) {
  if (pixel_height >= 40.0 && l.occluded <= 0 && l.truncated <= 0.15) {
    return DifficultyLevel::Easy;
  }
  if (pixel_height >= 25.0 && l.occluded <= 1 && l.truncated <= 0.30) {
    return DifficultyLevel::Moderate;
  }
  if (pixel_height >= 25.0 && l.occluded <= 2 && l.truncated <= 0.50) {
    return DifficultyLevel::Hard;
  }
  return DifficultyLevel::Ignored;
}

inline DifficultyLevel assign_difficulty(const ObjectLabel& l) {
  return assign_difficulty(l, l.bbox.height());
}

/// Geometric center of the labelled box (KITTI stores the bottom center).
inline Box3D box3d_from_label(const ObjectLabel& l) {
  return {l.loc.x, l.loc.y - 0.5 * l.h, l.loc.z, l.h, l.w, l.l, l.rotation_y};
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace difflabel
