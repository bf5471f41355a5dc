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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflabel/dap.hpp"
#include "difflabel/error.hpp"
#include "difflabel/geometry.hpp"
#include "difflabel/kitti_io.hpp"
#include "difflabel/losses.hpp"
#include "difflabel/querygen.hpp"
#include "difflabel/rng.hpp"
#include "difflabel/synth.hpp"
#include "difflabel/toymodel.hpp"
#include "difflabel/uncertainty.hpp"

namespace difflabel {

/// Annotated: queries and targets both come from the label files.
/// Truth: queries come from the annotated labels, targets from noise-free
/// truth, so annotation noise becomes irreducible (heteroscedastic) error.
enum class Supervision { Annotated, Truth };

/// Adaptive: Stage-1 difficulty scores. Uniform: every score pinned to
/// TrainConfig::uniform_score, i.e. difficulty-agnostic noise.
enum class ScoreMode { Adaptive, Uniform };

struct TrainConfig {
  int hidden = 16;
  double learning_rate = 0.1;
  int epochs = 200;
  int batch_size = 2;
  std::uint64_t seed = 0;
  DapConfig dap;
  LossWeights weights;
  double beta = kDefaultEmaBeta;
  int groups = kDefaultGroups;
  ScoreMode score_mode = ScoreMode::Adaptive;
  double uniform_score = 0.5;
  Supervision supervision = Supervision::Annotated;
  int background_anchors = 4;
  double anchor_jitter = 0.3;
  double grad_clip = 0.5;
};

inline void validate(const TrainConfig& cfg) {
  validate(cfg.dap);
  validate(cfg.weights);
  if (cfg.hidden < 1 || cfg.batch_size < 1 || cfg.groups < 1 || cfg.epochs < 0) {
    fail(ErrorCode::ConfigError, "sizes must be positive");
  }
  if (!(cfg.learning_rate >= 0.0)) fail(ErrorCode::ConfigError, "learning rate must be >= 0");
  if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) fail(ErrorCode::ConfigError, "beta must be in [0,1)");
  if (!(cfg.uniform_score >= 0.0 && cfg.uniform_score <= 1.0)) {
    fail(ErrorCode::ConfigError, "uniform_score must be in [0,1]");
  }
  if (cfg.background_anchors < 0 || !(cfg.anchor_jitter >= 0.0 && cfg.anchor_jitter < 1.0)) {
    fail(ErrorCode::ConfigError, "bad anchor settings");
  }
}

inline double default_depth_scale(DepthMode mode) { return mode == DepthMode::Absolute ? 20.0 : 1.0; }

// ---------------------------------------------------------------------------
// Dataset

struct TrainingObject {
  CleanLabel query;
  CleanLabel target;
  ObjectLabel label;         // annotated label as read from disk
  ObjectLabel target_label;  // label the targets were built from
  int stratum = 0;
  DifficultyLevel level = DifficultyLevel::Easy;
};

struct TrainingScene {
  std::vector<TrainingObject> objects;
  CameraCalib calib;
};

struct Dataset {
  std::vector<Category> classes;
  std::vector<TrainingScene> scenes;

  int num_classes() const { return static_cast<int>(classes.size()); }

  std::size_t num_objects() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.objects.size();
    return n;
  }
};

inline std::vector<Category> default_classes() {
  return {Category::Car, Category::Pedestrian, Category::Cyclist};
}

inline std::optional<int> class_index(const std::vector<Category>& classes, Category c) {
  const auto it = std::find(classes.begin(), classes.end(), c);
  if (it == classes.end()) return std::nullopt;
  return static_cast<int>(it - classes.begin());
}

/// Normalized projected box and depths of a label. Boxes whose offsets fall
/// below kMinOffset are rejected with DegenerateBox.
inline CleanLabel clean_label_from(const ObjectLabel& l, const CameraCalib& cal, int class_idx) {
  const CornerBox c{clip_unit(l.bbox.left / cal.img_w), clip_unit(l.bbox.top / cal.img_h),
                    clip_unit(l.bbox.right / cal.img_w), clip_unit(l.bbox.bottom / cal.img_h)};
  CleanLabel out;
  out.box = inverse_reparameterize(c);
  out.depth_gt = l.loc.z;
  out.depth_geo = geometric_depth(l.h, l.bbox.height(), cal.fy);
  out.class_idx = class_idx;
  return out;
}

/// Builds a training scene from annotated labels and, optionally, the
/// matching noise-free labels (same order, same categories). DontCare and
/// categories outside `classes` are dropped.
inline TrainingScene make_training_scene(const std::vector<ObjectLabel>& annotated,
                                         const std::vector<ObjectLabel>* truth,
                                         const CameraCalib& cal,
                                         const std::vector<Category>& classes,
                                         Supervision supervision, const SceneConfig& strata) {
  if (truth && truth->size() != annotated.size()) {
    fail(ErrorCode::ShapeMismatch, "truth and annotated label counts differ");
  }
  if (supervision == Supervision::Truth && !truth) {
    fail(ErrorCode::ConfigError, "truth supervision needs noise-free labels");
  }
  TrainingScene scene;
  scene.calib = cal;
  for (std::size_t i = 0; i < annotated.size(); ++i) {
    const ObjectLabel& a = annotated[i];
    const auto cls = class_index(classes, a.category);
    if (!cls || a.category == Category::DontCare) continue;
    if (truth && (*truth)[i].category != a.category) {
      fail(ErrorCode::ShapeMismatch, "truth and annotated categories differ");
    }
    TrainingObject obj;
    obj.label = a;
    obj.target_label = a;
    obj.query = clean_label_from(a, cal, *cls);
    obj.target = obj.query;
    if (supervision == Supervision::Truth) {
      const CleanLabel t = clean_label_from((*truth)[i], cal, *cls);
      obj.target.box = t.box;
      obj.target.depth_gt = t.depth_gt;
      obj.target_label = (*truth)[i];
      // The residual target stays relative to the query's own pinhole depth.
    }
    obj.stratum = strata.stratum_of(truth ? (*truth)[i].loc.z : a.loc.z);
    obj.level = assign_difficulty(a);
    scene.objects.push_back(obj);
  }
  return scene;
}

inline Dataset dataset_from_synth(const std::vector<SynthScene>& scenes, const SceneConfig& cfg,
                                  Supervision supervision,
                                  std::vector<Category> classes = default_classes()) {
  Dataset ds;
  ds.classes = std::move(classes);
  for (const auto& s : scenes) {
    const auto annotated = s.annotated_labels();
    const auto truth = s.truth_labels();
    ds.scenes.push_back(
        make_training_scene(annotated, &truth, s.calib, ds.classes, supervision, cfg));
  }
  return ds;
}

/// Reads label_2/*.txt with calib/ (and label_truth/ when present) from a
/// KITTI-layout directory. Image size comes from `scene_cfg.camera`.
inline Dataset load_dataset(const std::filesystem::path& root, const SceneConfig& scene_cfg,
                            Supervision supervision,
                            std::vector<Category> classes = default_classes()) {
  const auto label_dir = root / "label_2";
  if (!std::filesystem::is_directory(label_dir)) {
    fail(ErrorCode::IoError, "missing directory " + label_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(label_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const bool has_truth = std::filesystem::is_directory(root / "label_truth");
  Dataset ds;
  ds.classes = std::move(classes);
  for (const auto& f : files) {
    const auto name = f.filename();
    CameraCalib cal = parse_calib(read_text_file(root / "calib" / name), scene_cfg.camera.img_w,
                                  scene_cfg.camera.img_h);
    const auto annotated = parse_label_file(read_text_file(f));
    std::optional<std::vector<ObjectLabel>> truth;
    if (has_truth) truth = parse_label_file(read_text_file(root / "label_truth" / name));
    ds.scenes.push_back(make_training_scene(annotated, truth ? &*truth : nullptr, cal, ds.classes,
                                            supervision, scene_cfg));
  }
  if (ds.scenes.empty()) fail(ErrorCode::IoError, "no label files under " + label_dir.string());
  return ds;
}

// ---------------------------------------------------------------------------
// Training state

struct TrainState {
  MlpParams params;
  RunningExtrema extrema;
  int epoch = 0;
  std::int64_t ema_updates = 0;
  std::int64_t steps = 0;
};

inline TrainState init_state(int num_classes, const TrainConfig& cfg) {
  TrainState s;
  s.params = MlpParams::init(num_classes, cfg.hidden, cfg.seed,
                             default_depth_scale(cfg.dap.depth_mode));
  return s;
}

inline LabelQuery clean_query(const CleanLabel& l, DepthMode mode, int num_classes) {
  return build_dab_query(l.box, depth_target(l, mode), l.class_idx, num_classes);
}

/// Stage 1: read-only forward of the clean label queries, one EMA update
/// over the batch, then normalized difficulty scores per label.
inline std::vector<DifficultyScores> stage1_scores(std::span<const CleanLabel> labels,
                                                   const MlpParams& p, RunningExtrema& state,
                                                   double beta, DepthMode mode) {
  std::vector<LogVariances> lvs;
  std::vector<PerAttribute<double>> certs;
  lvs.reserve(labels.size());
  for (const auto& l : labels) {
    lvs.push_back(forward(clean_query(l, mode, p.num_classes), p).log_variances());
    certs.push_back(certainties(lvs.back()));
  }
  state = ema_update(state, certs, beta);
  std::vector<DifficultyScores> out;
  out.reserve(labels.size());
  for (const auto& lv : lvs) out.push_back(scores_from_logvars(lv, state));
  return out;
}

/// Scores against frozen extrema (evaluation time; no EMA update).
inline std::vector<DifficultyScores> frozen_scores(std::span<const CleanLabel> labels,
                                                   const MlpParams& p,
                                                   const RunningExtrema& state, DepthMode mode) {
  std::vector<DifficultyScores> out;
  for (const auto& l : labels) {
    out.push_back(scores_from_logvars(
        forward(clean_query(l, mode, p.num_classes), p).log_variances(), state));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Anchors (3D-DAB queries) and the stand-in detection loss

/// Per object one proposal (its label with uniform corner/depth jitter),
/// plus `background_anchors` random boxes. Proposals come first, in
/// object order.
inline std::vector<LabelQuery> make_anchors(const TrainingScene& scene, const TrainConfig& cfg,
                                            int num_classes, CounterRng& rng) {
  std::vector<LabelQuery> out;
  const DepthMode mode = cfg.dap.depth_mode;
  const double j = cfg.anchor_jitter;
  for (const auto& obj : scene.objects) {
    const ProjectedBox& b = obj.query.box;
    const CornerBox c = reparameterize(b);
    CornerBox moved{clip_unit(c.x_l + rng.uniform(-j, j) * b.o_l),
                    clip_unit(c.y_t + rng.uniform(-j, j) * b.o_t),
                    clip_unit(c.x_r + rng.uniform(-j, j) * b.o_r),
                    clip_unit(c.y_b + rng.uniform(-j, j) * b.o_b)};
    const double d = depth_target(obj.query, mode) * (1.0 + rng.uniform(-j, j));
    out.push_back(build_dab_query(detail::recenter(moved), d, obj.query.class_idx, num_classes));
  }
  for (int i = 0; i < cfg.background_anchors && !scene.objects.empty(); ++i) {
    const double xc = rng.uniform(0.1, 0.9);
    const double yc = rng.uniform(0.3, 0.7);
    const double ox = rng.uniform(0.005, 0.05);
    const double oy = rng.uniform(0.02, 0.2);
    const ProjectedBox box{xc, yc, ox, oy, ox, oy};
    const auto& src = scene.objects[rng.below(scene.objects.size())];
    const double d = depth_target(src.query, mode) * rng.uniform(0.5, 1.5);
    const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes)));
    out.push_back(build_dab_query(box, d, cls, num_classes));
  }
  return out;
}

/// Greedy nearest-center assignment: all (anchor, gt) pairs in ascending
/// center distance, each side used at most once. Ties break by index.
inline std::vector<std::optional<std::size_t>> greedy_center_match(
    std::span<const std::array<double, 2>> anchors, std::span<const std::array<double, 2>> gts) {
  struct Pair {
    double dist;
    std::size_t a;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  pairs.reserve(anchors.size() * gts.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      pairs.push_back({std::hypot(anchors[a][0] - gts[g][0], anchors[a][1] - gts[g][1]), a, g});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& x, const Pair& y) { return x.dist < y.dist; });
  std::vector<std::optional<std::size_t>> match(anchors.size());
  std::vector<bool> gt_used(gts.size(), false);
  std::size_t assigned = 0;
  for (const auto& p : pairs) {
    if (assigned == std::min(anchors.size(), gts.size())) break;
    if (match[p.a] || gt_used[p.g]) continue;
    match[p.a] = p.g;
    gt_used[p.g] = true;
    ++assigned;
  }
  return match;
}

inline std::vector<std::optional<std::size_t>> match_anchors(const std::vector<LabelQuery>& anchors,
                                                             const TrainingScene& scene) {
  std::vector<std::array<double, 2>> ac;
  std::vector<std::array<double, 2>> gc;
  for (const auto& q : anchors) ac.push_back({q.vec[kQueryXProj], q.vec[kQueryYProj]});
  for (const auto& o : scene.objects) gc.push_back({o.target.box.x_proj, o.target.box.y_proj});
  return greedy_center_match(ac, gc);
}

// ---------------------------------------------------------------------------
// Gradient step

namespace detail {

struct QueryLoss {
  double bbox = 0.0;
  double depth = 0.0;
  double cls = 0.0;
};

/// Laplacian box/depth terms (when `target` is set) and CE on `class_target`.
/// Head gradients are scaled by the given weights before backprop.
inline QueryLoss query_loss(const ForwardCache& cache, const CleanLabel* target,
                            int class_target, DepthMode mode, double w_bbox, double w_depth,
                            double w_cls, HeadGrad& g) {
  QueryLoss out;
  const HeadOutputs& o = cache.out;
  if (target) {
    const BoxSample bs{reparameterize(target->box), o.corner_box(), o.box_log_sigma};
    const BoxLoss bl = bbox_recon_loss(std::span(&bs, 1));
    out.bbox = bl.value;
    for (std::size_t v = 0; v < 4; ++v) {
      g.corners[v] = w_bbox * bl.grad_recon[0][v];
      g.box_log_sigma[v] = w_bbox * bl.grad_log_sigma[0][v];
    }
    const DepthSample ds{depth_target(*target, mode), o.depth, o.depth_log_sigma};
    const DepthLoss dl = depth_recon_loss(std::span(&ds, 1));
    out.depth = dl.value;
    g.depth = w_depth * dl.grad_pred[0];
    g.depth_log_sigma = w_depth * dl.grad_log_sigma[0];
  }
  const ClassLoss cl = class_ce(o.logits, class_target);
  out.cls = cl.value;
  for (std::size_t k = 0; k < cl.grad.size(); ++k) g.logits[k] = w_cls * cl.grad[k];
  return out;
}

inline void clip_and_apply(std::vector<double>& grad, MlpParams& p, double lr, double clip) {
  double norm2 = 0.0;
  for (double g : grad) norm2 += g * g;
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm)) fail(ErrorCode::NonFinite, "non-finite gradient");
  const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  for (std::size_t i = 0; i < grad.size(); ++i) p.values[i] -= lr * scale * grad[i];
}

}  // namespace detail

/// One optimization step over a batch of scenes: Stage-1 scoring, group
/// construction, reconstruction and anchor-detection losses, one
/// gradient-descent update. Reported loss parts are per-query means.
inline LossReport train_step(std::span<const TrainingScene* const> batch, TrainState& state,
                             const TrainConfig& cfg, CounterRng& rng) {
  const MlpParams& p = state.params;
  const int num_classes = p.num_classes;
  const DepthMode mode = cfg.dap.depth_mode;

  std::vector<CleanLabel> queries;
  std::vector<CleanLabel> targets;
  for (const TrainingScene* s : batch) {
    for (const auto& o : s->objects) {
      queries.push_back(o.query);
      targets.push_back(o.target);
    }
  }
  if (queries.empty()) fail(ErrorCode::EmptyBatch, "batch holds no objects");

  std::vector<DifficultyScores> scores =
      stage1_scores(queries, p, state.extrema, cfg.beta, mode);
  ++state.ema_updates;
  if (cfg.score_mode == ScoreMode::Uniform) {
    std::fill(scores.begin(), scores.end(), uniform_scores(cfg.uniform_score));
  }

  const PerturbGroupSet set = build_groups(queries, scores, cfg.dap, num_classes, cfg.groups, rng);
  const auto recon = reconstruction_targets(set, targets);

  std::vector<double> grad(p.size(), 0.0);
  const double positives = static_cast<double>(set.num_objects) * cfg.groups;
  const double all_perturbed = static_cast<double>(recon.size());
  ReconParts parts;
  for (const auto& t : recon) {
    const ForwardCache cache = forward_cached(set.queries[t.query].vec, p);
    HeadGrad g(num_classes);
    const auto ql = detail::query_loss(
        cache, t.regress ? &targets[t.gt_index] : nullptr, t.class_target, mode,
        cfg.weights.lambda_bbox / positives, cfg.weights.lambda_d / positives,
        cfg.weights.lambda_cls / all_perturbed, g);
    parts.bbox += ql.bbox;
    parts.depth += ql.depth;
    parts.cls += ql.cls;
    backward(cache, g, p, grad);
  }
  parts.bbox /= positives;
  parts.depth /= positives;
  parts.cls /= all_perturbed;

  // Anchor stream: separate forward passes, so perturbed and anchor queries
  // never exchange information (block-diagonal mask).
  std::vector<std::vector<LabelQuery>> anchors;
  std::size_t anchor_count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CounterRng arng = rng.fork(0xA0000 + i);
    anchors.push_back(make_anchors(*batch[i], cfg, num_classes, arng));
    anchor_count += anchors.back().size();
  }
  double det = 0.0;
  const double wa = anchor_count > 0 ? 1.0 / static_cast<double>(anchor_count) : 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto match = match_anchors(anchors[i], *batch[i]);
    for (std::size_t a = 0; a < anchors[i].size(); ++a) {
      const ForwardCache cache = forward_cached(anchors[i][a].vec, p);
      HeadGrad g(num_classes);
      const CleanLabel* tgt = match[a] ? &batch[i]->objects[*match[a]].target : nullptr;
      const int cls = tgt ? tgt->class_idx : num_classes;
      const auto ql = detail::query_loss(cache, tgt, cls, mode, wa, wa, wa, g);
      det += ql.bbox + ql.depth + ql.cls;
      backward(cache, g, p, grad);
    }
  }
  det *= wa;

  LossReport report = make_report(parts, cfg.weights, det);
  if (!std::isfinite(report.total)) fail(ErrorCode::NonFinite, "training loss diverged");
  detail::clip_and_apply(grad, state.params, cfg.learning_rate, cfg.grad_clip);
  report.grad = std::move(grad);
  ++state.steps;
  return report;
}

struct EpochResult {
  std::vector<LossReport> steps;
  LossReport mean;
};

/// Scenes are visited in a seeded per-epoch permutation and split into
/// batches of `batch_size`.
inline EpochResult train_epoch(const Dataset& ds, TrainState& state, const TrainConfig& cfg) {
  if (ds.scenes.empty()) fail(ErrorCode::EmptyBatch, "empty dataset");
  const CounterRng epoch_rng =
      CounterRng::stream(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(state.epoch));
  CounterRng perm_rng = epoch_rng.fork(0);
  std::vector<std::size_t> order(ds.scenes.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[perm_rng.below(i)]);

  EpochResult res;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0, step = 0; start < order.size(); start += bs, ++step) {
    std::vector<const TrainingScene*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
      if (!ds.scenes[order[i]].objects.empty()) batch.push_back(&ds.scenes[order[i]]);
    }
    if (batch.empty()) continue;
    CounterRng step_rng = epoch_rng.fork(step + 1);
    res.steps.push_back(train_step(batch, state, cfg, step_rng));
    res.steps.back().grad.clear();
  }
  const double n = static_cast<double>(res.steps.size());
  for (const auto& r : res.steps) {
    res.mean.recon_bbox += r.recon_bbox / n;
    res.mean.recon_depth += r.recon_depth / n;
    res.mean.recon_class += r.recon_class / n;
    res.mean.det += r.det / n;
    res.mean.total += r.total / n;
  }
  ++state.epoch;
  return res;
}

/// Runs cfg.epochs epochs. `on_step(epoch, step, report)` sees every step.
inline TrainState train(const Dataset& ds, const TrainConfig& cfg, std::vector<LossReport>* epoch_means = nullptr,
                        const std::function<void(int, int, const LossReport&)>& on_step = {}) {
  validate(cfg);
  TrainState state = init_state(ds.num_classes(), cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochResult r = train_epoch(ds, state, cfg);
    if (on_step) {
      for (std::size_t s = 0; s < r.steps.size(); ++s) on_step(e + 1, static_cast<int>(s), r.steps[s]);
    }
    if (epoch_means) epoch_means->push_back(r.mean);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Held-out reconstruction

struct DepthErrorRecord {
  std::size_t scene = 0;
  int stratum = 0;
  DifficultyLevel level = DifficultyLevel::Easy;
  double depth_gt = 0.0;
  double depth_pred = 0.0;

  double error() const { return std::abs(depth_pred - depth_gt); }
};

inline double absolute_depth(double predicted, const CleanLabel& ref, DepthMode mode) {
  return mode == DepthMode::Absolute ? predicted : predicted + ref.depth_geo;
}

/// Reconstructs one positive perturbed query per object (frozen extrema,
/// seeded signs) and reports metric depth against the target label.
inline std::vector<DepthErrorRecord> reconstruction_depth_errors(const Dataset& ds,
                                                                 const TrainState& state,
                                                                 const TrainConfig& cfg,
                                                                 std::uint64_t seed) {
  std::vector<DepthErrorRecord> out;
  const MlpParams& p = state.params;
  const DepthMode mode = cfg.dap.depth_mode;
  for (std::size_t si = 0; si < ds.scenes.size(); ++si) {
    const auto& scene = ds.scenes[si];
    if (scene.objects.empty()) continue;
    std::vector<CleanLabel> queries;
    for (const auto& o : scene.objects) queries.push_back(o.query);
    std::vector<DifficultyScores> scores =
        cfg.score_mode == ScoreMode::Uniform || !state.extrema.initialized
            ? std::vector<DifficultyScores>(queries.size(), uniform_scores(cfg.uniform_score))
            : frozen_scores(queries, p, state.extrema, mode);
    CounterRng rng = CounterRng::stream(seed, si);
    const PerturbGroupSet set = build_groups(queries, scores, cfg.dap, p.num_classes, 1, rng);
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
      const auto& obj = scene.objects[k];
      const HeadOutputs o = forward(set.queries[set.positive_index(0, k)], p);
      out.push_back({si, obj.stratum, obj.level, obj.target.depth_gt,
                     absolute_depth(o.depth, obj.target, mode)});
    }
  }
  return out;
}

/// Depth head on seeded proposal anchors matched to their objects. The
/// residual is added to the target's own pinhole depth, so models are
/// compared on identical inputs and references.
inline std::vector<DepthErrorRecord> anchor_depth_errors(const Dataset& ds, const TrainState& state,
                                                         const TrainConfig& cfg,
                                                         std::uint64_t seed) {
  std::vector<DepthErrorRecord> out;
  const MlpParams& p = state.params;
  for (std::size_t si = 0; si < ds.scenes.size(); ++si) {
    const auto& scene = ds.scenes[si];
    if (scene.objects.empty()) continue;
    CounterRng rng = CounterRng::stream(seed, si);
    const auto anchors = make_anchors(scene, cfg, p.num_classes, rng);
    const auto match = match_anchors(anchors, scene);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (!match[a]) continue;
      const auto& obj = scene.objects[*match[a]];
      const HeadOutputs o = forward(anchors[a], p);
      out.push_back({si, obj.stratum, obj.level, obj.target.depth_gt,
                     absolute_depth(o.depth, obj.target, cfg.dap.depth_mode)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::string_view kCheckpointMagic = "difflabel-checkpoint 1";

inline std::string serialize_checkpoint(const TrainState& s, DepthMode mode,
                                        const std::vector<Category>& classes,
                                        std::uint64_t seed) {
  std::string out(kCheckpointMagic);
  out += "\nclasses";
  for (Category c : classes) {
    out += ' ';
    out += to_string(c);
  }
  char buf[64];
  auto num = [&](double v) { return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr); };
  out += "\nhidden " + std::to_string(s.params.hidden);
  out += "\ndepth_scale " + num(s.params.depth_scale);
  out += "\ndepth_mode " + std::string(to_string(mode));
  out += "\nseed " + std::to_string(seed);
  out += "\nepoch " + std::to_string(s.epoch);
  out += "\nparams " + std::to_string(s.params.values.size()) + '\n';
  for (double v : s.params.values) out += num(v) + '\n';
  out += serialize_extrema(s.extrema);
  return out;
}

struct Checkpoint {
  TrainState state;
  DepthMode depth_mode = DepthMode::Residual;
  std::vector<Category> classes;
  std::uint64_t seed = 0;
};

inline Checkpoint parse_checkpoint(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  auto bad = [](const std::string& why) { fail(ErrorCode::CheckpointMismatch, why); };
  if (lines.size() < 8 || lines[0] != kCheckpointMagic) bad("not a checkpoint file");
  auto field = [&](std::size_t i, std::string_view key) {
    const auto tok = detail::split_ws(lines[i]);
    if (tok.empty() || tok[0] != key) bad("expected '" + std::string(key) + "' on line " + std::to_string(i + 1));
    return tok;
  };
  Checkpoint ck;
  const auto cls = field(1, "classes");
  for (std::size_t i = 1; i < cls.size(); ++i) {
    const auto c = category_from_string(cls[i]);
    if (!c) bad("unknown class in checkpoint");
    ck.classes.push_back(*c);
  }
  const int hidden = detail::parse_number<int>(field(2, "hidden").at(1), "hidden");
  const double depth_scale = detail::parse_number<double>(field(3, "depth_scale").at(1), "depth_scale");
  const auto mode = field(4, "depth_mode").at(1);
  ck.depth_mode = mode == "absolute" ? DepthMode::Absolute : DepthMode::Residual;
  ck.seed = detail::parse_number<std::uint64_t>(field(5, "seed").at(1), "seed");
  ck.state.epoch = detail::parse_number<int>(field(6, "epoch").at(1), "epoch");
  const auto count = detail::parse_number<std::size_t>(field(7, "params").at(1), "params");
  ck.state.params = MlpParams::zeros(static_cast<int>(ck.classes.size()), hidden, depth_scale);
  if (count != ck.state.params.size() || lines.size() < 8 + count) bad("parameter count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    ck.state.params.values[i] = detail::parse_number<double>(lines[8 + i], "parameter");
  }
  std::string rest;
  for (std::size_t i = 8 + count; i < lines.size(); ++i) {
    rest.append(lines[i]);
    rest += '\n';
  }
  ck.state.extrema = parse_extrema(rest);
  return ck;
}

}  // namespace difflabel
