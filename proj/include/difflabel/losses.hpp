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
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"

namespace difflabel {

// Laplacian aleatoric regression losses, parameterized by log sigma (the
// log Laplace scale). All batch losses are sums over instances, reduced
// left to right.

struct LaplacianTerm {
  double value = 0.0;
  double grad_pred = 0.0;
  double grad_log_sigma = 0.0;
};

/// sqrt(2) / sigma * |gt - pred| + log sigma, with subgradient 0 at gt == pred.
inline LaplacianTerm laplacian_term(double pred, double gt, double log_sigma) {
  if (!std::isfinite(pred) || !std::isfinite(gt) || !std::isfinite(log_sigma)) {
    fail(ErrorCode::NonFinite, "laplacian_term input is not finite");
  }
  const double inv_scale = std::numbers::sqrt2 * std::exp(-log_sigma);
  const double residual = gt - pred;
  const double abs_res = std::abs(residual);
  const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
  return {inv_scale * abs_res + log_sigma, -inv_scale * sign, 1.0 - inv_scale * abs_res};
}

struct DepthSample {
  double gt = 0.0;
  double pred = 0.0;
  double log_sigma = 0.0;
};

struct DepthLoss {
  double value = 0.0;
  std::vector<double> grad_pred;
  std::vector<double> grad_log_sigma;
};

inline DepthLoss depth_recon_loss(std::span<const DepthSample> batch) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "depth loss over an empty batch");
  DepthLoss out;
  out.grad_pred.reserve(batch.size());
  out.grad_log_sigma.reserve(batch.size());
  for (const auto& s : batch) {
    const LaplacianTerm t = laplacian_term(s.pred, s.gt, s.log_sigma);
    out.value += t.value;
    out.grad_pred.push_back(t.grad_pred);
    out.grad_log_sigma.push_back(t.grad_log_sigma);
  }
  return out;
}

/// Corner order everywhere below: l (x_l), t (y_t), r (x_r), b (y_b).
inline std::array<double, 4> corner_array(const CornerBox& c) { return {c.x_l, c.y_t, c.x_r, c.y_b}; }

struct BoxSample {
  CornerBox gt;
  CornerBox recon;
  std::array<double, 4> log_sigma{};
};

struct BoxLoss {
  double value = 0.0;
  std::vector<std::array<double, 4>> grad_recon;
  std::vector<std::array<double, 4>> grad_log_sigma;
};

inline BoxLoss bbox_recon_loss(std::span<const BoxSample> batch) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "box loss over an empty batch");
  BoxLoss out;
  out.grad_recon.reserve(batch.size());
  out.grad_log_sigma.reserve(batch.size());
  for (const auto& s : batch) {
    const auto gt = corner_array(s.gt);
    const auto rc = corner_array(s.recon);
    std::array<double, 4> gp{};
    std::array<double, 4> gs{};
    for (std::size_t v = 0; v < 4; ++v) {
      const LaplacianTerm t = laplacian_term(rc[v], gt[v], s.log_sigma[v]);
      out.value += t.value;
      gp[v] = t.grad_pred;
      gs[v] = t.grad_log_sigma;
    }
    out.grad_recon.push_back(gp);
    out.grad_log_sigma.push_back(gs);
  }
  return out;
}

struct ClassLoss {
  double value = 0.0;
  std::vector<double> grad;
};

/// Softmax cross-entropy over C + 1 logits (index C is "no object").
inline ClassLoss class_ce(std::span<const double> logits, int target) {
  if (logits.empty()) fail(ErrorCode::ShapeMismatch, "no logits");
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    fail(ErrorCode::ShapeMismatch, "class target outside the logit range");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) fail(ErrorCode::NonFinite, "logit is not finite");
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - zmax);
  const double log_denom = std::log(denom);
  ClassLoss out;
  out.value = log_denom - (logits[static_cast<std::size_t>(target)] - zmax);
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = std::exp(logits[i] - zmax - log_denom);
  }
  out.grad[static_cast<std::size_t>(target)] -= 1.0;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorCode::ShapeMismatch, "no logits");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) denom += out[i] = std::exp(logits[i] - zmax);
  for (double& v : out) v /= denom;
  return out;
}

struct LossWeights {
  double lambda_bbox = 1.0;
  double lambda_d = 1.0;
  double lambda_cls = 1.0;
};

inline void validate(const LossWeights& w) {
  if (!(w.lambda_bbox >= 0.0 && w.lambda_d >= 0.0 && w.lambda_cls >= 0.0)) {
    fail(ErrorCode::ConfigError, "loss weights must be nonnegative");
  }
}

struct ReconParts {
  double bbox = 0.0;
  double depth = 0.0;
  double cls = 0.0;
};

inline double total_recon(const ReconParts& parts, const LossWeights& w) {
  return w.lambda_bbox * parts.bbox + w.lambda_d * parts.depth + w.lambda_cls * parts.cls;
}

inline double total_loss(double recon, double det) { return recon + det; }

struct LossReport {
  double total = 0.0;
  double recon_bbox = 0.0;
  double recon_depth = 0.0;
  double recon_class = 0.0;
  double det = 0.0;
  std::vector<double> grad;

  double recon(const LossWeights& w) const {
    return total_recon({recon_bbox, recon_depth, recon_class}, w);
  }
};

inline LossReport make_report(const ReconParts& parts, const LossWeights& w, double det) {
  LossReport r;
  r.recon_bbox = parts.bbox;
  r.recon_depth = parts.depth;
  r.recon_class = parts.cls;
  r.det = det;
  r.total = total_loss(total_recon(parts, w), det);
  return r;
}

inline constexpr const char* kTrainLogHeader =
    "epoch,step,recon_bbox,recon_depth,recon_class,det,total\n";

inline std::string train_log_row(int epoch, int step, const LossReport& r) {
  std::string out = std::to_string(epoch) + ',' + std::to_string(step);
  char buf[64];
  for (double v : {r.recon_bbox, r.recon_depth, r.recon_class, r.det, r.total}) {
    out += ',';
    out.append(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  }
  return out + '\n';
}

}  // namespace difflabel
