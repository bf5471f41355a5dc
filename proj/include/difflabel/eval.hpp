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
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflabel/error.hpp"
#include "difflabel/kitti_io.hpp"
#include "difflabel/synth.hpp"
#include "difflabel/training.hpp"
#include "difflabel/uncertainty.hpp"

namespace difflabel {

/// Axis-aligned ground-plane rectangle, meters.
struct GroundRect {
  double x0 = 0.0;
  double z0 = 0.0;
  double x1 = 0.0;
  double z1 = 0.0;

  double area() const { return (x1 - x0) * (z1 - z0); }
};

/// Axis-aligned hull of a footprint of length `l` along x at yaw 0.
inline GroundRect ground_rect(double x, double z, double w, double l, double yaw) {
  const double c = std::abs(std::cos(yaw));
  const double s = std::abs(std::sin(yaw));
  const double hx = 0.5 * (l * c + w * s);
  const double hz = 0.5 * (l * s + w * c);
  return {x - hx, z - hz, x + hx, z + hz};
}

inline GroundRect ground_rect(const ObjectLabel& l) {
  return ground_rect(l.loc.x, l.loc.z, l.w, l.l, l.rotation_y);
}

inline double bev_iou(const GroundRect& a, const GroundRect& b) {
  if (!(a.area() > 0.0) || !(b.area() > 0.0)) fail(ErrorCode::DegenerateBox, "empty BEV rectangle");
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.z1, b.z1) - std::max(a.z0, b.z0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct Detection {
  GroundRect box_bev;
  double depth = 0.0;
  int class_idx = 0;
  double score = 0.0;
  std::size_t image = 0;
};

struct GroundTruth {
  GroundRect box_bev;
  double depth = 0.0;
  int class_idx = 0;
  DifficultyLevel level = DifficultyLevel::Easy;
  std::size_t image = 0;
  bool ignored = false;  // excluded from matching and from the GT count
};

inline constexpr int kRecallPositions = 40;

/// Greedy score-ordered matching within each image; AP is the mean of the
/// right-max interpolated precision at recall 1/40 .. 40/40. Absent when no
/// counted ground truth exists.
inline std::optional<double> ap_r40(std::span<const Detection> dets,
                                    std::span<const GroundTruth> gts, double iou_thresh) {
  std::size_t num_gt = 0;
  for (const auto& g : gts) num_gt += g.ignored ? 0 : 1;
  if (num_gt == 0) return std::nullopt;

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> used(gts.size(), false);
  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Detection& d = dets[order[rank]];
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].ignored || gts[g].image != d.image) continue;
      const double iou = bev_iou(d.box_bev, gts[g].box_bev);
      if (iou >= iou_thresh && iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      used[best_g] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
  }
  // Right-max envelope: best precision at this recall or any later one.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  std::size_t j = 0;
  for (int r = 1; r <= kRecallPositions; ++r) {
    const double target = static_cast<double>(r) / kRecallPositions;
    while (j < recall.size() && recall[j] < target - 1e-12) ++j;
    if (j < recall.size()) sum += precision[j];
  }
  return sum / kRecallPositions;
}

struct DepthPair {
  double pred = 0.0;
  double gt = 0.0;
};

struct DepthMae {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::vector<std::optional<double>> mae;  // absent for empty bins
  std::size_t total_count = 0;
  std::optional<double> overall;
};

/// Bins are [edges[i], edges[i+1]) by ground-truth depth, the last one
/// closed. Pairs outside the edges count only toward the overall MAE.
inline DepthMae depth_mae(std::span<const DepthPair> pairs, std::span<const double> edges) {
  if (edges.size() < 2) fail(ErrorCode::ConfigError, "need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) fail(ErrorCode::ConfigError, "bin edges must increase");
  }
  DepthMae out;
  out.edges.assign(edges.begin(), edges.end());
  const std::size_t nb = edges.size() - 1;
  out.counts.assign(nb, 0);
  std::vector<double> sums(nb, 0.0);
  double total = 0.0;
  for (const auto& p : pairs) {
    const double e = std::abs(p.pred - p.gt);
    total += e;
    ++out.total_count;
    if (p.gt < edges.front() || p.gt > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), p.gt);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin()) - 1;
    if (bin >= nb) bin = nb - 1;
    sums[bin] += e;
    ++out.counts[bin];
  }
  out.mae.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (out.counts[b] > 0) out.mae[b] = sums[b] / static_cast<double>(out.counts[b]);
  }
  if (out.total_count > 0) out.overall = total / static_cast<double>(out.total_count);
  return out;
}

/// Linear-interpolated quantile of sorted data (q in [0,1]).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::EmptyBatch, "quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

/// Pearson correlation of average ranks; 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "spearman inputs differ in length");
  if (a.size() < 2) fail(ErrorCode::EmptyBatch, "spearman needs two or more points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Uncertainty tables

struct UncertaintyRow {
  std::string group;
  Attribute attribute = Attribute::Depth;
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> q1;
  std::optional<double> median;
  std::optional<double> q3;
};

struct ObjectUncertainty {
  LogVariances log_sigma;
  DifficultyLevel level = DifficultyLevel::Easy;
  int stratum = 0;
};

/// Clean-label forward pass over every object in the dataset.
inline std::vector<ObjectUncertainty> object_uncertainties(const Dataset& ds, const MlpParams& p,
                                                           DepthMode mode) {
  std::vector<ObjectUncertainty> out;
  for (const auto& s : ds.scenes) {
    for (const auto& o : s.objects) {
      out.push_back({forward(clean_query(o.query, mode, p.num_classes), p).log_variances(),
                     o.level, o.stratum});
    }
  }
  return out;
}

/// One row per (group, attribute), groups in the given order.
inline std::vector<UncertaintyRow> uncertainty_table(std::span<const ObjectUncertainty> objs,
                                                     std::span<const std::string> group_names,
                                                     const std::function<int(const ObjectUncertainty&)>& group_of) {
  std::vector<UncertaintyRow> rows;
  for (std::size_t gi = 0; gi < group_names.size(); ++gi) {
    for (Attribute a : kAttributes) {
      std::vector<double> vals;
      for (const auto& o : objs) {
        if (group_of(o) == static_cast<int>(gi)) vals.push_back(o.log_sigma[a]);
      }
      UncertaintyRow row;
      row.group = group_names[gi];
      row.attribute = a;
      row.count = vals.size();
      if (!vals.empty()) {
        std::sort(vals.begin(), vals.end());
        row.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        row.q1 = quantile_sorted(vals, 0.25);
        row.median = quantile_sorted(vals, 0.5);
        row.q3 = quantile_sorted(vals, 0.75);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

/// Levels Easy, Moderate, Hard times the five attributes.
inline std::vector<UncertaintyRow> uncertainty_by_difficulty(const MlpParams& p, const Dataset& ds,
                                                             DepthMode mode) {
  const auto objs = object_uncertainties(ds, p, mode);
  const std::vector<std::string> names = {"Easy", "Moderate", "Hard"};
  return uncertainty_table(objs, names, [](const ObjectUncertainty& o) {
    return o.level == DifficultyLevel::Ignored ? -1 : static_cast<int>(o.level);
  });
}

inline std::vector<UncertaintyRow> uncertainty_by_stratum(const MlpParams& p, const Dataset& ds,
                                                          DepthMode mode, int num_strata) {
  const auto objs = object_uncertainties(ds, p, mode);
  std::vector<std::string> names;
  for (int s = 0; s < num_strata; ++s) names.push_back(std::to_string(s));
  return uncertainty_table(objs, names, [](const ObjectUncertainty& o) { return o.stratum; });
}

// ---------------------------------------------------------------------------
// Full evaluation of a trained state

struct EvalConfig {
  double iou_thresh = 0.5;
  std::vector<double> depth_bins = {0, 10, 20, 30, 40, 50, 60, 70, 80};
  std::uint64_t seed = 0x5EED;
  std::vector<ClassPrior> priors = default_class_priors();
};

struct ApEntry {
  Category category = Category::Car;
  DifficultyLevel level = DifficultyLevel::Easy;
  std::size_t num_gt = 0;
  std::optional<double> ap;
};

struct EvalReport {
  std::vector<ApEntry> ap;
  DepthMae depth;
  std::vector<UncertaintyRow> uncertainty;
};

namespace detail {

inline std::optional<ClassPrior> prior_for(const std::vector<ClassPrior>& priors, Category c) {
  for (const auto& p : priors) {
    if (p.category == c) return p;
  }
  return std::nullopt;
}

}  // namespace detail

/// Decodes one head output into a ground-plane detection. Residual depth is
/// anchored on the pinhole depth of the predicted box with the class-mean
/// height; footprints use class-mean width and length at yaw 0.
inline Detection decode_detection(const HeadOutputs& o, const CameraCalib& cal,
                                  const std::vector<Category>& classes,
                                  const std::vector<ClassPrior>& priors, DepthMode mode,
                                  std::size_t image) {
  const int num_classes = static_cast<int>(classes.size());
  const std::vector<double> prob = softmax(o.logits);
  Detection d;
  d.image = image;
  d.score = std::clamp(1.0 - prob[static_cast<std::size_t>(num_classes)], 0.0, 1.0);
  int best = 0;
  for (int k = 1; k < num_classes; ++k) {
    if (o.logits[static_cast<std::size_t>(k)] > o.logits[static_cast<std::size_t>(best)]) best = k;
  }
  d.class_idx = best;
  const auto prior = detail::prior_for(priors, classes[static_cast<std::size_t>(best)]);
  const double h3 = prior ? prior->h_mean : 1.5;
  const double w3 = prior ? prior->w_mean : 1.6;
  const double l3 = prior ? prior->l_mean : 3.9;
  const double u = 0.5 * (o.corners[0] + o.corners[2]) * cal.img_w;
  const double h_px = std::max((o.corners[3] - o.corners[1]) * cal.img_h, 1e-3);
  double z = o.depth;
  if (mode == DepthMode::Residual) z += cal.fy * h3 / h_px;
  z = std::max(z, 0.1);
  d.depth = z;
  const double x = (u - cal.cx) * z / cal.fx;
  d.box_bev = ground_rect(x, z, w3, l3, 0.0);
  return d;
}

inline EvalReport evaluate(const Dataset& ds, const TrainState& state, const TrainConfig& tcfg,
                           const EvalConfig& ecfg) {
  const MlpParams& p = state.params;
  const DepthMode mode = tcfg.dap.depth_mode;
  const int num_classes = ds.num_classes();
  if (num_classes != p.num_classes) fail(ErrorCode::CheckpointMismatch, "class count differs");

  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  std::vector<DepthPair> pairs;
  for (std::size_t si = 0; si < ds.scenes.size(); ++si) {
    const auto& scene = ds.scenes[si];
    for (const auto& o : scene.objects) {
      gts.push_back({ground_rect(o.target_label), o.target.depth_gt, o.query.class_idx, o.level,
                     si, o.level == DifficultyLevel::Ignored});
    }
    if (scene.objects.empty()) continue;
    CounterRng rng = CounterRng::stream(ecfg.seed, si);
    const auto anchors = make_anchors(scene, tcfg, num_classes, rng);
    const auto match = match_anchors(anchors, scene);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const HeadOutputs o = forward(anchors[a], p);
      dets.push_back(decode_detection(o, scene.calib, ds.classes, ecfg.priors, mode, si));
      if (match[a]) pairs.push_back({dets.back().depth, scene.objects[*match[a]].target.depth_gt});
    }
  }

  EvalReport rep;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Detection> dc;
    for (const auto& d : dets) {
      if (d.class_idx == c) dc.push_back(d);
    }
    for (DifficultyLevel lvl : {DifficultyLevel::Easy, DifficultyLevel::Moderate, DifficultyLevel::Hard}) {
      std::vector<GroundTruth> gc;
      for (auto g : gts) {
        if (g.class_idx != c) continue;
        g.ignored = g.ignored || static_cast<int>(g.level) > static_cast<int>(lvl);
        gc.push_back(g);
      }
      ApEntry e;
      e.category = ds.classes[static_cast<std::size_t>(c)];
      e.level = lvl;
      e.num_gt = static_cast<std::size_t>(
          std::count_if(gc.begin(), gc.end(), [](const GroundTruth& g) { return !g.ignored; }));
      e.ap = ap_r40(dc, gc, ecfg.iou_thresh);
      rep.ap.push_back(e);
    }
  }
  rep.depth = depth_mae(pairs, ecfg.depth_bins);
  rep.uncertainty = uncertainty_by_difficulty(p, ds, mode);
  return rep;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_number(std::optional<double> v) {
  if (!v) return {};
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, *v).ptr);
}

}  // namespace detail

inline std::string ap_csv(const EvalReport& r) {
  std::string out = "class,difficulty,num_gt,ap_r40\n";
  for (const auto& e : r.ap) {
    out += std::string(to_string(e.category)) + ',' + std::string(to_string(e.level)) + ',' +
           std::to_string(e.num_gt) + ',' + detail::csv_number(e.ap) + '\n';
  }
  return out;
}

inline std::string depth_mae_csv(const DepthMae& m) {
  std::string out = "bin_lo,bin_hi,count,mae\n";
  for (std::size_t b = 0; b + 1 < m.edges.size(); ++b) {
    out += detail::csv_number(m.edges[b]) + ',' + detail::csv_number(m.edges[b + 1]) + ',' +
           std::to_string(m.counts[b]) + ',' + detail::csv_number(m.mae[b]) + '\n';
  }
  out += "all,all," + std::to_string(m.total_count) + ',' + detail::csv_number(m.overall) + '\n';
  return out;
}

inline std::string uncertainty_csv(std::span<const UncertaintyRow> rows, std::string_view group_header) {
  std::string out(group_header);
  out += ",attribute,count,mean_log_sigma,q1,median,q3\n";
  for (const auto& r : rows) {
    out += r.group + ',' + std::string(to_string(r.attribute)) + ',' + std::to_string(r.count) + ',' +
           detail::csv_number(r.mean) + ',' + detail::csv_number(r.q1) + ',' +
           detail::csv_number(r.median) + ',' + detail::csv_number(r.q3) + '\n';
  }
  return out;
}

}  // namespace difflabel
