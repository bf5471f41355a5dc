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
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/querygen.hpp"
#include "difflabel/rng.hpp"
#include "difflabel/uncertainty.hpp"

namespace difflabel {

// Per-query denoiser: (7+C) -> H -> H -> heads, tanh hidden units.
// Raw output layout:
//   [0, 4)    box corner pre-activations (l, t, r, b), squashed by a sigmoid
//   [4, 8)    box log sigma (l, t, r, b)
//   8         depth
//   9         depth log sigma
//   [10, 11+C) class logits, index C is "no object"

inline constexpr std::size_t kOutBoxLogSigma = 4;
inline constexpr std::size_t kOutDepth = 8;
inline constexpr std::size_t kOutDepthLogSigma = 9;
inline constexpr std::size_t kOutLogits = 10;

struct MlpParams {
  int num_classes = 0;
  int hidden = 0;
  /// Depth feature is divided by this on input and the depth head output
  /// multiplied by it; fixed at construction, not trained.
  double depth_scale = 1.0;
  std::vector<double> values;

  std::size_t input_dim() const { return query_dim(num_classes); }
  std::size_t output_dim() const { return kOutLogits + static_cast<std::size_t>(num_classes) + 1; }
  std::size_t h() const { return static_cast<std::size_t>(hidden); }

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return w1() + h() * input_dim(); }
  std::size_t w2() const { return b1() + h(); }
  std::size_t b2() const { return w2() + h() * h(); }
  std::size_t w3() const { return b2() + h(); }
  std::size_t b3() const { return w3() + output_dim() * h(); }
  std::size_t size() const { return b3() + output_dim(); }

  static MlpParams zeros(int num_classes, int hidden, double depth_scale = 1.0) {
    if (num_classes < 1 || hidden < 1) fail(ErrorCode::ShapeMismatch, "bad network dimensions");
    MlpParams p;
    p.num_classes = num_classes;
    p.hidden = hidden;
    p.depth_scale = depth_scale;
    p.values.assign(p.size(), 0.0);
    return p;
  }

  /// Glorot-uniform weights, zero biases.
  static MlpParams init(int num_classes, int hidden, std::uint64_t seed, double depth_scale = 1.0) {
    MlpParams p = zeros(num_classes, hidden, depth_scale);
    CounterRng rng = CounterRng::stream(seed, 0x4D4C50);
    auto fill = [&](std::size_t offset, std::size_t rows, std::size_t cols) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (std::size_t i = 0; i < rows * cols; ++i) p.values[offset + i] = rng.uniform(-a, a);
    };
    fill(p.w1(), p.h(), p.input_dim());
    fill(p.w2(), p.h(), p.h());
    fill(p.w3(), p.output_dim(), p.h());
    return p;
  }
};

struct HeadOutputs {
  std::array<double, 4> corners{};        // l, t, r, b in (0, 1)
  std::array<double, 4> box_log_sigma{};  // l, t, r, b
  double depth = 0.0;
  double depth_log_sigma = 0.0;
  std::vector<double> logits;

  CornerBox corner_box() const { return {corners[0], corners[1], corners[2], corners[3]}; }

  LogVariances log_variances() const {
    LogVariances lv;
    lv[Attribute::Depth] = depth_log_sigma;
    lv[Attribute::Left] = box_log_sigma[0];
    lv[Attribute::Top] = box_log_sigma[1];
    lv[Attribute::Right] = box_log_sigma[2];
    lv[Attribute::Bottom] = box_log_sigma[3];
    return lv;
  }
};

/// d loss / d (head outputs); corners are taken after the sigmoid.
struct HeadGrad {
  std::array<double, 4> corners{};
  std::array<double, 4> box_log_sigma{};
  double depth = 0.0;
  double depth_log_sigma = 0.0;
  std::vector<double> logits;

  explicit HeadGrad(int num_classes) : logits(static_cast<std::size_t>(num_classes) + 1, 0.0) {}
};

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<double> input;
  std::vector<double> hidden1;
  std::vector<double> hidden2;
  HeadOutputs out;
};

/// Fixed input standardization: centers map to [-1, 1], offsets are
/// scaled by kOffsetInputScale, depth is divided by depth_scale.
inline constexpr double kOffsetInputScale = 10.0;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline ForwardCache forward_cached(std::span<const double> query, const MlpParams& p) {
  if (query.size() != p.input_dim()) {
    fail(ErrorCode::ShapeMismatch, "query length does not match 7 + C");
  }
  const std::size_t in = p.input_dim();
  const std::size_t h = p.h();
  const std::size_t od = p.output_dim();
  const double* v = p.values.data();

  ForwardCache c;
  c.input.assign(query.begin(), query.end());
  c.input[kQueryXProj] = 2.0 * c.input[kQueryXProj] - 1.0;
  c.input[kQueryYProj] = 2.0 * c.input[kQueryYProj] - 1.0;
  for (std::size_t k = 0; k < 4; ++k) c.input[kQueryOffsets + k] *= kOffsetInputScale;
  c.input[kQueryDepth] /= p.depth_scale;
  c.hidden1.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    double s = v[p.b1() + i];
    const double* row = v + p.w1() + i * in;
    for (std::size_t j = 0; j < in; ++j) s += row[j] * c.input[j];
    c.hidden1[i] = std::tanh(s);
  }
  c.hidden2.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    double s = v[p.b2() + i];
    const double* row = v + p.w2() + i * h;
    for (std::size_t j = 0; j < h; ++j) s += row[j] * c.hidden1[j];
    c.hidden2[i] = std::tanh(s);
  }
  std::vector<double> raw(od);
  for (std::size_t i = 0; i < od; ++i) {
    double s = v[p.b3() + i];
    const double* row = v + p.w3() + i * h;
    for (std::size_t j = 0; j < h; ++j) s += row[j] * c.hidden2[j];
    raw[i] = s;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    c.out.corners[k] = sigmoid(raw[k]);
    c.out.box_log_sigma[k] = raw[kOutBoxLogSigma + k];
  }
  c.out.depth = raw[kOutDepth] * p.depth_scale;
  c.out.depth_log_sigma = raw[kOutDepthLogSigma];
  c.out.logits.assign(raw.begin() + static_cast<std::ptrdiff_t>(kOutLogits), raw.end());
  return c;
}

inline HeadOutputs forward(std::span<const double> query, const MlpParams& p) {
  return forward_cached(query, p).out;
}

inline HeadOutputs forward(const LabelQuery& q, const MlpParams& p) { return forward(q.vec, p); }

/// Accumulates d loss / d params into `grad` (same layout as p.values).
inline void backward(const ForwardCache& c, const HeadGrad& g, const MlpParams& p,
                     std::span<double> grad) {
  if (grad.size() != p.size() || g.logits.size() != static_cast<std::size_t>(p.num_classes) + 1) {
    fail(ErrorCode::ShapeMismatch, "gradient buffer does not match the network");
  }
  const std::size_t in = p.input_dim();
  const std::size_t h = p.h();
  const std::size_t od = p.output_dim();
  const double* v = p.values.data();

  std::vector<double> d_raw(od, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    const double s = c.out.corners[k];
    d_raw[k] = g.corners[k] * s * (1.0 - s);
    d_raw[kOutBoxLogSigma + k] = g.box_log_sigma[k];
  }
  d_raw[kOutDepth] = g.depth * p.depth_scale;
  d_raw[kOutDepthLogSigma] = g.depth_log_sigma;
  for (std::size_t k = 0; k < g.logits.size(); ++k) d_raw[kOutLogits + k] = g.logits[k];

  std::vector<double> d_h2(h, 0.0);
  for (std::size_t i = 0; i < od; ++i) {
    const double d = d_raw[i];
    if (d == 0.0) continue;
    grad[p.b3() + i] += d;
    double* grow = grad.data() + p.w3() + i * h;
    const double* row = v + p.w3() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      grow[j] += d * c.hidden2[j];
      d_h2[j] += d * row[j];
    }
  }
  std::vector<double> d_h1(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double d = d_h2[i] * (1.0 - c.hidden2[i] * c.hidden2[i]);
    grad[p.b2() + i] += d;
    double* grow = grad.data() + p.w2() + i * h;
    const double* row = v + p.w2() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      grow[j] += d * c.hidden1[j];
      d_h1[j] += d * row[j];
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    const double d = d_h1[i] * (1.0 - c.hidden1[i] * c.hidden1[i]);
    grad[p.b1() + i] += d;
    double* grow = grad.data() + p.w1() + i * in;
    for (std::size_t j = 0; j < in; ++j) grow[j] += d * c.input[j];
  }
}

}  // namespace difflabel
