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
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflabel/dap.hpp"
#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"
#include "difflabel/rng.hpp"

namespace difflabel {

enum class QueryKind { Anchor, PositivePerturbed, NegativePerturbed };

constexpr std::string_view to_string(QueryKind k) {
  switch (k) {
    case QueryKind::Anchor: return "anchor";
    case QueryKind::PositivePerturbed: return "positive";
    case QueryKind::NegativePerturbed: return "negative";
  }
  return "anchor";
}

/// Layout of LabelQuery::vec. The class one-hot occupies [kClassOffset, 7+C).
inline constexpr std::size_t kQueryXProj = 0;
inline constexpr std::size_t kQueryYProj = 1;
inline constexpr std::size_t kQueryOffsets = 2;
inline constexpr std::size_t kQueryDepth = 6;
inline constexpr std::size_t kClassOffset = 7;

inline constexpr int kDefaultGroups = 7;

struct LabelQuery {
  std::vector<double> vec;
  QueryKind kind = QueryKind::Anchor;
  int group = 0;
  std::optional<std::size_t> gt_index;
};

inline std::size_t query_dim(int num_classes) { return 7 + static_cast<std::size_t>(num_classes); }

inline LabelQuery make_query(const ProjectedBox& box, double depth,
                             const std::vector<double>& class_onehot, QueryKind kind, int group,
                             std::optional<std::size_t> gt_index) {
  LabelQuery q;
  q.vec = {box.x_proj, box.y_proj, box.o_l, box.o_t, box.o_r, box.o_b, depth};
  q.vec.insert(q.vec.end(), class_onehot.begin(), class_onehot.end());
  q.kind = kind;
  q.group = group;
  q.gt_index = gt_index;
  return q;
}

/// [b_proj, d, one-hot class] of length 7 + C.
inline LabelQuery build_dab_query(const ProjectedBox& box, double depth, int class_idx,
                                  int num_classes) {
  return make_query(box, depth, one_hot(class_idx, num_classes), QueryKind::Anchor, 0,
                    std::nullopt);
}

/// Block structure over [perturbed queries..., anchors...]: each group is
/// one block and the anchors form a final block. Queries may only attend
/// within their own block.
struct AttentionMask {
  std::vector<int> block;

  std::size_t size() const { return block.size(); }
  bool blocked(std::size_t from, std::size_t to) const { return block[from] != block[to]; }
};

/// Positive/negative perturbed queries for all groups. Within group g the
/// K positives come first, followed by their K negatives in the same order.
struct PerturbGroupSet {
  std::vector<LabelQuery> queries;
  int num_groups = 0;
  std::size_t num_objects = 0;
  int num_classes = 0;
  std::vector<PerturbationDraw> draws;              // index g * K + k
  std::vector<std::array<double, 4>> box_deltas;    // per query, pre-clip, l t r b

  std::size_t positive_index(int g, std::size_t k) const {
    return static_cast<std::size_t>(g) * 2 * num_objects + k;
  }
  std::size_t negative_index(int g, std::size_t k) const {
    return positive_index(g, k) + num_objects;
  }

  AttentionMask attention_mask(std::size_t num_anchors) const {
    AttentionMask m;
    m.block.reserve(queries.size() + num_anchors);
    for (const auto& q : queries) m.block.push_back(q.group);
    m.block.insert(m.block.end(), num_anchors, num_groups);
    return m;
  }
};

/// Draws fresh signs per (group, object). The positive query scales each
/// side by c_hat * gamma, the negative by c_hat * gamma + 1 with the same
/// signs and class input; negatives target the no-object class C.
inline PerturbGroupSet build_groups(std::span<const CleanLabel> labels,
                                    std::span<const DifficultyScores> scores, const DapConfig& cfg,
                                    int num_classes, int num_groups, CounterRng& rng) {
  if (labels.empty()) fail(ErrorCode::EmptyLabels, "build_groups needs at least one label");
  if (scores.size() != labels.size()) {
    fail(ErrorCode::ShapeMismatch, "one DifficultyScores entry per label is required");
  }
  if (num_groups < 1) fail(ErrorCode::ConfigError, "need at least one perturbation group");
  validate(cfg);

  PerturbGroupSet set;
  set.num_groups = num_groups;
  set.num_objects = labels.size();
  set.num_classes = num_classes;
  const std::size_t k_count = labels.size();
  set.queries.reserve(2 * k_count * static_cast<std::size_t>(num_groups));
  set.draws.reserve(k_count * static_cast<std::size_t>(num_groups));

  const CounterRng base = rng.fork(rng.next_u64());
  for (int g = 0; g < num_groups; ++g) {
    CounterRng group_rng = base.fork(static_cast<std::uint64_t>(g));
    std::vector<LabelQuery> negatives;
    std::vector<std::array<double, 4>> negative_deltas;
    for (std::size_t k = 0; k < k_count; ++k) {
      const PerturbationDraw draw =
          draw_perturbation(group_rng, labels[k].class_idx, num_classes, cfg.class_flip_prob);
      set.draws.push_back(draw);
      for (double extra : {0.0, 1.0}) {
        const PerturbedLabel p =
            apply_perturbation(labels[k], scores[k], cfg, num_classes, draw, extra);
        const auto deltas =
            perturb_corners(labels[k].box, scores[k], cfg.gamma_b, draw.box_signs, extra).delta;
        if (extra == 0.0) {
          set.queries.push_back(
              make_query(p.box, p.depth, p.class_onehot, QueryKind::PositivePerturbed, g, k));
          set.box_deltas.push_back(deltas);
        } else {
          negatives.push_back(
              make_query(p.box, p.depth, p.class_onehot, QueryKind::NegativePerturbed, g, k));
          negative_deltas.push_back(deltas);
        }
      }
    }
    set.queries.insert(set.queries.end(), negatives.begin(), negatives.end());
    set.box_deltas.insert(set.box_deltas.end(), negative_deltas.begin(), negative_deltas.end());
  }
  return set;
}

struct ReconTarget {
  std::size_t query = 0;
  std::size_t gt_index = 0;
  int class_target = 0;
  bool regress = false;  // box/depth reconstruction applies
};

/// Known-by-construction targets; anchors are not part of the set.
inline std::vector<ReconTarget> reconstruction_targets(const PerturbGroupSet& set,
                                                       std::span<const CleanLabel> clean) {
  std::vector<ReconTarget> out;
  out.reserve(set.queries.size());
  for (std::size_t i = 0; i < set.queries.size(); ++i) {
    const LabelQuery& q = set.queries[i];
    if (q.kind == QueryKind::Anchor || !q.gt_index) continue;
    const std::size_t k = *q.gt_index;
    if (q.kind == QueryKind::PositivePerturbed) {
      out.push_back({i, k, clean[k].class_idx, true});
    } else {
      out.push_back({i, k, set.num_classes, false});
    }
  }
  return out;
}

inline std::string groups_to_csv(const PerturbGroupSet& set) {
  std::string out = "kind,group,gt_index";
  for (std::size_t j = 0; j < query_dim(set.num_classes); ++j) out += ",q" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (const auto& q : set.queries) {
    out += to_string(q.kind);
    out += ',' + std::to_string(q.group) + ',';
    if (q.gt_index) out += std::to_string(*q.gt_index);
    for (double v : q.vec) {
      out += ',';
      out.append(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    }
    out += '\n';
  }
  return out;
}

}  // namespace difflabel
