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

#include "difflabel/kitti_io.hpp"

#include <gtest/gtest.h>

#include <array>
#include <sstream>
#include <string>

#include "test_support.hpp"

namespace difflabel {
namespace {

constexpr const char* kCarLine =
    "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";
constexpr const char* kDontCareLine =
    "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10";

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

// Oracle: whitespace tokenization with an istringstream and std::stod,
// mapping fields by their documented positions.
std::vector<double> numeric_fields(const std::string& line) {
  std::istringstream in(line);
  std::string tok;
  in >> tok;  // type
  std::vector<double> out;
  while (in >> tok) out.push_back(std::stod(tok));
  return out;
}

void expect_positional(const ObjectLabel& l, const std::string& line) {
  const auto f = numeric_fields(line);
  ASSERT_GE(f.size(), 14u);
  EXPECT_DOUBLE_EQ(l.truncated, f[0]);
  EXPECT_EQ(l.occluded, static_cast<int>(f[1]));
  EXPECT_DOUBLE_EQ(l.alpha, f[2]);
  EXPECT_DOUBLE_EQ(l.bbox.left, f[3]);
  EXPECT_DOUBLE_EQ(l.bbox.top, f[4]);
  EXPECT_DOUBLE_EQ(l.bbox.right, f[5]);
  EXPECT_DOUBLE_EQ(l.bbox.bottom, f[6]);
  EXPECT_DOUBLE_EQ(l.h, f[7]);
  EXPECT_DOUBLE_EQ(l.w, f[8]);
  EXPECT_DOUBLE_EQ(l.l, f[9]);
  EXPECT_DOUBLE_EQ(l.loc.x, f[10]);
  EXPECT_DOUBLE_EQ(l.loc.y, f[11]);
  EXPECT_DOUBLE_EQ(l.loc.z, f[12]);
  EXPECT_DOUBLE_EQ(l.rotation_y, f[13]);
  if (f.size() == 15) {
    ASSERT_TRUE(l.score.has_value());
    EXPECT_DOUBLE_EQ(*l.score, f[14]);
  } else {
    EXPECT_FALSE(l.score.has_value());
  }
}

TEST(ParseLabelLine, CarFieldsArePositional) {
  const ObjectLabel l = parse_label_line(kCarLine);
  EXPECT_EQ(l.category, Category::Car);
  EXPECT_DOUBLE_EQ(l.loc.z, 46.70);
  EXPECT_DOUBLE_EQ(l.h, 1.65);
  expect_positional(l, kCarLine);
}

TEST(ParseLabelLine, DontCareKeepsSentinels) {
  const ObjectLabel l = parse_label_line(kDontCareLine);
  EXPECT_EQ(l.category, Category::DontCare);
  EXPECT_EQ(l.occluded, -1);
  EXPECT_DOUBLE_EQ(l.alpha, -10.0);
  EXPECT_DOUBLE_EQ(l.loc.x, -1000.0);
  expect_positional(l, kDontCareLine);
}

TEST(ParseLabelLine, FourteenFieldsIsMalformed) {
  EXPECT_EQ(code_of([] {
              parse_label_line("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70");
            }),
            ErrorCode::MalformedLine);
}

TEST(ParseLabelLine, AcceptsPlusSignAndExtraPrecision) {
  const ObjectLabel l = parse_label_line(
      "Van +0.125 1 0.5 10.5 20.25 30.125 40.0625 2.0 1.9 5.0 +1.5 1.6 20.333 0.1");
  EXPECT_DOUBLE_EQ(l.truncated, 0.125);
  EXPECT_DOUBLE_EQ(l.loc.x, 1.5);
  EXPECT_DOUBLE_EQ(l.loc.z, 20.333);
}

TEST(ParseLabelLine, ToleratesTabsAndTrailingCarriageReturn) {
  std::string line = kCarLine;
  for (char& c : line) {
    if (c == ' ') c = '\t';
  }
  line += "\r";
  expect_positional(parse_label_line(line), kCarLine);
}

TEST(SerializeLabel, CarRoundTripIsByteIdentical) {
  EXPECT_EQ(serialize_label(parse_label_line(kCarLine)), kCarLine);
}

TEST(SerializeLabel, DontCareRoundTripIsByteIdentical) {
  EXPECT_EQ(serialize_label(parse_label_line(kDontCareLine)), kDontCareLine);
}

TEST(SerializeLabel, ScoreAddsSixteenthField) {
  ObjectLabel l = parse_label_line(kCarLine);
  l.score = 0.87;
  const std::string s = serialize_label(l);
  EXPECT_EQ(detail::split_ws(s).size(), 16u);
  EXPECT_EQ(s, std::string(kCarLine) + " 0.87");
  EXPECT_DOUBLE_EQ(*parse_label_line(s).score, 0.87);
}

TEST(SerializeLabel, RendersTwoDecimals) {
  ObjectLabel l = parse_label_line(kCarLine);
  l.loc.z = 12.3456;
  l.truncated = 0.1;
  const std::string line = serialize_label(l);
  const auto tok = detail::split_ws(line);
  EXPECT_EQ(tok[13], "12.35");
  EXPECT_EQ(tok[1], "0.10");
}

TEST(Corpus, EveryMalformedLineRaisesItsCategory) {
  const auto cases = testing::malformed_corpus();
  ASSERT_GE(cases.size(), 10u);
  for (const auto& [expected, line] : cases) {
    const ErrorCode got = code_of([&] { parse_label_line(line); });
    EXPECT_EQ(to_string(got), expected) << "line: " << line;
  }
}

TEST(Corpus, FixtureFilesAreIdempotent) {
  const auto files = testing::fixture_label_files();
  ASSERT_GE(files.size(), 10u);
  for (const auto& path : files) {
    const auto first = parse_label_file(read_text_file(path));
    ASSERT_FALSE(first.empty()) << path;
    const std::string once = serialize_label_file(first);
    const auto second = parse_label_file(once);
    EXPECT_EQ(serialize_label_file(second), once) << path;
    ASSERT_EQ(first.size(), second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      EXPECT_EQ(serialize_label(first[i]), serialize_label(second[i]));
    }
  }
}

TEST(Corpus, FixtureFilesAreAlreadyNormalized) {
  for (const auto& path : testing::fixture_label_files()) {
    const std::string text = read_text_file(path);
    EXPECT_EQ(serialize_label_file(parse_label_file(text)), text) << path;
  }
}

TEST(ParseLabelFile, ErrorsCarryLineNumber) {
  const std::string text = std::string(kCarLine) + "\n\n" + "Car 1 2 3\n";
  try {
    parse_label_file(text);
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseLabelFile, SkipsBlankLines) {
  const std::string text = std::string("\n") + kCarLine + "\n   \n" + kDontCareLine + "\n";
  EXPECT_EQ(parse_label_file(text).size(), 2u);
}

TEST(ParseCalib, ReadsP2Intrinsics) {
  const CameraCalib cal = parse_calib(read_text_file(testing::fixture("kitti/calib/000000.txt")), 1242, 375);
  EXPECT_DOUBLE_EQ(cal.fx, 721.5377);
  EXPECT_DOUBLE_EQ(cal.fy, 721.5377);
  EXPECT_DOUBLE_EQ(cal.cx, 609.5593);
  EXPECT_DOUBLE_EQ(cal.cy, 172.854);
  EXPECT_DOUBLE_EQ(cal.img_w, 1242);
  EXPECT_DOUBLE_EQ(cal.img_h, 375);
}

TEST(ParseCalib, SecondFixture) {
  const CameraCalib cal = parse_calib(read_text_file(testing::fixture("kitti/calib/000001.txt")));
  EXPECT_DOUBLE_EQ(cal.fx, 707.0493);
}

TEST(ParseCalib, MissingP2) {
  EXPECT_EQ(code_of([] { parse_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP1: 1 0 0 0 0 1 0 0 0 0 1 0\n"); }),
            ErrorCode::MissingP2);
  EXPECT_EQ(code_of([] { parse_calib(""); }), ErrorCode::MissingP2);
}

TEST(ParseCalib, ElevenNumbersIsBadNumber) {
  EXPECT_EQ(code_of([] { parse_calib("P2: 721.5377 0 609.5 0 0 721.5 172.8 0 0 0 1\n"); }),
            ErrorCode::BadNumber);
  EXPECT_EQ(code_of([] { parse_calib("P2: 721.5377 0 609.5 0 0 x 172.8 0 0 0 1 0\n"); }),
            ErrorCode::BadNumber);
}

TEST(SerializeCalib, RoundTrips) {
  const CameraCalib cal{700.25, 701.5, 640.125, 190.0, 1280, 384};
  const CameraCalib back = parse_calib(serialize_calib(cal), 1280, 384);
  EXPECT_DOUBLE_EQ(back.fx, cal.fx);
  EXPECT_DOUBLE_EQ(back.fy, cal.fy);
  EXPECT_DOUBLE_EQ(back.cx, cal.cx);
  EXPECT_DOUBLE_EQ(back.cy, cal.cy);
}

ObjectLabel with_factors(int occluded, double truncated) {
  ObjectLabel l = parse_label_line(kCarLine);
  l.occluded = occluded;
  l.truncated = truncated;
  return l;
}

TEST(AssignDifficulty, Examples) {
  EXPECT_EQ(assign_difficulty(with_factors(0, 0.0), 60), DifficultyLevel::Easy);
  EXPECT_EQ(assign_difficulty(with_factors(1, 0.2), 30), DifficultyLevel::Moderate);
  EXPECT_EQ(assign_difficulty(with_factors(2, 0.4), 20), DifficultyLevel::Ignored);
}

TEST(AssignDifficulty, Thresholds) {
  EXPECT_EQ(assign_difficulty(with_factors(0, 0.15), 40), DifficultyLevel::Easy);
  EXPECT_EQ(assign_difficulty(with_factors(0, 0.16), 40), DifficultyLevel::Moderate);
  EXPECT_EQ(assign_difficulty(with_factors(0, 0.0), 39.9), DifficultyLevel::Moderate);
  EXPECT_EQ(assign_difficulty(with_factors(2, 0.5), 25), DifficultyLevel::Hard);
  EXPECT_EQ(assign_difficulty(with_factors(3, 0.0), 100), DifficultyLevel::Ignored);
  EXPECT_EQ(assign_difficulty(with_factors(0, 0.51), 100), DifficultyLevel::Ignored);
}

// Oracle: table of (min height, max occlusion, max truncation) per level.
DifficultyLevel table_level(double px, int occ, double trunc) {
  struct Row {
    double px;
    int occ;
    double trunc;
    DifficultyLevel level;
  };
  constexpr std::array<Row, 3> rows = {{{40, 0, 0.15, DifficultyLevel::Easy},
                                        {25, 1, 0.30, DifficultyLevel::Moderate},
                                        {25, 2, 0.50, DifficultyLevel::Hard}}};
  for (const Row& r : rows) {
    if (px >= r.px && occ <= r.occ && trunc <= r.trunc) return r.level;
  }
  return DifficultyLevel::Ignored;
}

TEST(AssignDifficulty, MatchesTableAndIsMonotone) {
  const std::array<double, 7> heights = {10, 24.9, 25, 30, 39.9, 40, 80};
  const std::array<double, 7> truncs = {0.0, 0.1, 0.15, 0.2, 0.3, 0.45, 0.8};
  for (double px : heights) {
    for (int occ = 0; occ <= 3; ++occ) {
      for (double tr : truncs) {
        const auto lv = assign_difficulty(with_factors(occ, tr), px);
        ASSERT_EQ(lv, table_level(px, occ, tr));
        // Worsening any single factor never improves the level.
        EXPECT_GE(static_cast<int>(assign_difficulty(with_factors(occ, tr), px * 0.8)),
                  static_cast<int>(lv));
        if (occ < 3) {
          EXPECT_GE(static_cast<int>(assign_difficulty(with_factors(occ + 1, tr), px)),
                    static_cast<int>(lv));
        }
        EXPECT_GE(static_cast<int>(assign_difficulty(with_factors(occ, std::min(1.0, tr + 0.1)), px)),
                  static_cast<int>(lv));
      }
    }
  }
}

TEST(AssignDifficulty, DefaultsToBoxHeight) {
  const ObjectLabel l = parse_label_line(kCarLine);  // 26.79 px, occluded 0
  EXPECT_EQ(assign_difficulty(l), DifficultyLevel::Moderate);
}

TEST(Box3DFromLabel, LiftsBottomCenterByHalfHeight) {
  const Box3D b = box3d_from_label(parse_label_line(kCarLine));
  EXPECT_DOUBLE_EQ(b.y, 1.71 - 0.825);
  EXPECT_DOUBLE_EQ(b.z, 46.70);
  EXPECT_DOUBLE_EQ(b.l, 3.64);
}

TEST(TextFiles, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { read_text_file("/nonexistent/dir/file.txt"); }), ErrorCode::IoError);
}

}  // namespace
}  // namespace difflabel
