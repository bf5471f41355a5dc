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

#include <stdexcept>
#include <string>
#include <string_view>

namespace difflabel {

enum class ErrorCode {
  DegenerateBox,
  BehindCamera,
  NonFinite,
  MalformedLine,
  BadNumber,
  UnknownCategory,
  MissingP2,
  Uninitialized,
  EmptyBatch,
  SingleClass,
  EmptyLabels,
  ShapeMismatch,
  EmptyScene,
  IoError,
  ConfigError,
  CheckpointMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::BadNumber: return "BadNumber";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::MissingP2: return "MissingP2";
    case ErrorCode::Uninitialized: return "Uninitialized";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyLabels: return "EmptyLabels";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyScene: return "EmptyScene";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace difflabel
