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

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "difflabel/config.hpp"
#include "difflabel/dap.hpp"
#include "difflabel/error.hpp"
#include "difflabel/eval.hpp"
#include "difflabel/kitti_io.hpp"
#include "difflabel/synth.hpp"
#include "difflabel/training.hpp"

namespace difflabel::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kDiverged = 4, kMismatch = 5 };

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError: return kConfig;
    case ErrorCode::NonFinite: return kDiverged;
    case ErrorCode::CheckpointMismatch:
    case ErrorCode::ShapeMismatch: return kMismatch;
    default: return kIo;
  }
}

/// Turns leftover `--key=value` / `--key value` tokens into overrides.
inline std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3) {
      fail(ErrorCode::ConfigError, "unexpected argument '" + tok + "'");
    }
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(tok.substr(2), extras[++i]);
    } else {
      fail(ErrorCode::ConfigError, "missing value for '" + tok + "'");
    }
  }
  return out;
}

inline std::string describe_seeds(const RunConfig& cfg) {
  std::string out;
  out += "seed = " + std::to_string(cfg.seed) + '\n';
  out += "scene_seed = " + std::to_string(cfg.scene.seed) + '\n';
  out += "train_seed = " + std::to_string(cfg.train.seed) + '\n';
  out += "eval_seed = " + std::to_string(cfg.eval.seed) + '\n';
  return out;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) fail(ErrorCode::IoError, "cannot create " + dir.string());
}

inline int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  ensure_dir(cfg.out_dir);
  const auto scenes = gen_dataset(cfg.scenes, cfg.scene, cfg.out_dir);
  std::size_t objects = 0;
  std::string per_scene;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    objects += scenes[i].objects.size();
    per_scene += "scene " + scene_file_name(i) + " stream " + std::to_string(i) + " objects " +
                 std::to_string(scenes[i].objects.size()) + '\n';
  }
  std::string manifest = "# difflabel gen manifest\n" + describe_seeds(cfg);
  manifest += "scenes = " + std::to_string(scenes.size()) + '\n';
  manifest += "objects = " + std::to_string(objects) + '\n';
  manifest += per_scene;
  write_text_file(cfg.out_dir / "manifest.txt", manifest);
  out << "wrote " << scenes.size() << " scenes (" << objects << " objects) to " << cfg.out_dir.string() << '\n';
  return kOk;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Dataset ds = load_dataset(cfg.data_dir, cfg.scene, cfg.train.supervision, cfg.classes);
  ensure_dir(cfg.out_dir);
  std::string log = kTrainLogHeader;
  LossReport last;
  const TrainState state = train(ds, cfg.train, nullptr, [&](int epoch, int step, const LossReport& r) {
    log += train_log_row(epoch, step, r);
    last = r;
  });
  write_text_file(cfg.out_dir / "train_log.csv", log);
  write_text_file(cfg.out_dir / "checkpoint.txt",
                  serialize_checkpoint(state, cfg.train.dap.depth_mode, cfg.classes, cfg.train.seed));
  std::string manifest = "# difflabel train manifest\n" + describe_seeds(cfg);
  manifest += "scenes = " + std::to_string(ds.scenes.size()) + '\n';
  manifest += "objects = " + std::to_string(ds.num_objects()) + '\n';
  manifest += "epochs = " + std::to_string(state.epoch) + '\n';
  manifest += "steps = " + std::to_string(state.steps) + '\n';
  write_text_file(cfg.out_dir / "manifest.txt", manifest);
  out << "epochs " << state.epoch << " steps " << state.steps << '\n'
      << "recon_bbox " << last.recon_bbox << "\nrecon_depth " << last.recon_depth << "\nrecon_class "
      << last.recon_class << "\ndet " << last.det << "\ntotal " << last.total << '\n';
  return kOk;
}

inline Checkpoint load_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) fail(ErrorCode::ConfigError, "--checkpoint is required");
  Checkpoint ck = parse_checkpoint(read_text_file(cfg.checkpoint));
  if (ck.classes != cfg.classes) {
    fail(ErrorCode::CheckpointMismatch, "checkpoint has " + std::to_string(ck.classes.size()) +
                                            " classes, configuration has " + std::to_string(cfg.classes.size()));
  }
  return ck;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(cfg);
  const Dataset ds = load_dataset(cfg.data_dir, cfg.scene, cfg.train.supervision, cfg.classes);
  TrainConfig tc = cfg.train;
  tc.dap.depth_mode = ck.depth_mode;
  const EvalReport rep = evaluate(ds, ck.state, tc, cfg.eval);
  ensure_dir(cfg.out_dir);
  write_text_file(cfg.out_dir / "ap.csv", ap_csv(rep));
  write_text_file(cfg.out_dir / "depth_mae.csv", depth_mae_csv(rep.depth));
  write_text_file(cfg.out_dir / "uncertainty_by_difficulty.csv", uncertainty_csv(rep.uncertainty, "difficulty"));
  out << "evaluated " << ds.scenes.size() << " scenes; depth MAE "
      << (rep.depth.overall ? std::to_string(*rep.depth.overall) : std::string("n/a")) << '\n';
  return kOk;
}

struct PerturbArgs {
  std::filesystem::path labels;
  std::filesystem::path calib;
  std::filesystem::path out;
  std::filesystem::path csv;
  std::optional<std::uint64_t> seed;
  std::optional<double> score;
};

inline int cmd_perturb(const RunConfig& cfg, const PerturbArgs& args, std::ostream& out) {
  const auto labels = parse_label_file(read_text_file(args.labels));
  const CameraCalib cal = parse_calib(read_text_file(args.calib), cfg.scene.camera.img_w, cfg.scene.camera.img_h);
  const int num_classes = static_cast<int>(cfg.classes.size());
  DapConfig dap = cfg.train.dap;
  if (args.seed) dap.seed = *args.seed;

  std::optional<Checkpoint> ck;
  if (!cfg.checkpoint.empty()) {
    ck = load_checkpoint(cfg);
    dap.depth_mode = ck->depth_mode;
  }
  if (args.score && !(*args.score >= 0.0 && *args.score <= 1.0)) {
    fail(ErrorCode::ConfigError, "--score must be in [0,1]");
  }

  CounterRng rng(dap.seed);
  std::vector<ObjectLabel> result;
  std::string csv = "index,category,coordinate,clean,perturbed,delta\n";
  char buf[64];
  auto num = [&](double v) { return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr); };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ObjectLabel& l = labels[i];
    const auto cls = class_index(cfg.classes, l.category);
    if (!cls || l.category == Category::DontCare) {
      result.push_back(l);
      continue;
    }
    const CleanLabel clean = clean_label_from(l, cal, *cls);
    DifficultyScores scores = uniform_scores(0.5);
    if (args.score) {
      scores = uniform_scores(*args.score);
    } else if (ck && ck->state.extrema.initialized) {
      scores = frozen_scores(std::span(&clean, 1), ck->state.params, ck->state.extrema, dap.depth_mode)[0];
    }
    const PerturbationDraw draw = draw_perturbation(rng, *cls, num_classes, dap.class_flip_prob);
    const PerturbedLabel p = apply_perturbation(clean, scores, dap, num_classes, draw);

    ObjectLabel o = l;
    const CornerBox c0 = reparameterize(clean.box);
    const CornerBox c1 = reparameterize(p.box);
    o.bbox = {c1.x_l * cal.img_w, c1.y_t * cal.img_h, c1.x_r * cal.img_w, c1.y_b * cal.img_h};
    const double z = dap.depth_mode == DepthMode::Residual ? clean.depth_geo + p.depth : p.depth;
    if (!(z > 0.0)) fail(ErrorCode::NonFinite, "perturbed depth is not positive");
    o.loc.x = l.loc.x * z / l.loc.z;
    o.loc.z = z;
    o.category = cfg.classes[static_cast<std::size_t>(p.class_idx)];
    result.push_back(o);

    const std::string head = std::to_string(i) + ',' + std::string(to_string(l.category)) + ',';
    const std::array<std::pair<const char*, std::pair<double, double>>, 5> rows = {{
        {"x_l", {c0.x_l, c1.x_l}},
        {"y_t", {c0.y_t, c1.y_t}},
        {"x_r", {c0.x_r, c1.x_r}},
        {"y_b", {c0.y_b, c1.y_b}},
        {"depth", {l.loc.z, z}},
    }};
    for (const auto& [name, v] : rows) {
      csv += head + name + ',' + num(v.first) + ',' + num(v.second) + ',' + num(v.second - v.first) + '\n';
    }
  }
  if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());
  write_text_file(args.out, serialize_label_file(result));
  write_text_file(args.csv, csv);
  out << "perturbed " << labels.size() << " labels -> " << args.out.string() << '\n';
  return kOk;
}

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Label-query denoising toolkit for monocular 3D detection"};
  app.require_subcommand(1);
  std::string config;
  std::string out_dir;
  std::string data_dir;
  std::string checkpoint;
  std::optional<std::size_t> scenes;
  PerturbArgs pargs;
  std::string labels, calib, csv;

  auto* gen = app.add_subcommand("gen", "generate a synthetic KITTI-layout dataset");
  gen->add_option("--scenes", scenes, "number of scenes");
  gen->add_option("--config", config, "key = value config file");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train the denoiser");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--config", config, "key = value config file");
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--config", config, "key = value config file");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* perturb = app.add_subcommand("perturb", "perturb KITTI labels");
  perturb->add_option("--labels", labels, "KITTI label file")->required();
  perturb->add_option("--calib", calib, "KITTI calib file")->required();
  perturb->add_option("--seed", pargs.seed, "perturbation seed");
  perturb->add_option("--out", out_dir, "output label file")->required();
  perturb->add_option("--csv", csv, "per-coordinate CSV (default: output with .csv extension)");
  perturb->add_option("--score", pargs.score, "uniform difficulty score override in [0,1]");
  perturb->add_option("--checkpoint", checkpoint, "checkpoint supplying difficulty scores");
  perturb->add_option("--config", config, "key = value config file");

  for (auto* sub : {gen, train_cmd, eval_cmd, perturb}) sub->allow_extras();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    auto overrides = parse_overrides(sub->remaining());
    if (scenes) overrides.emplace_back("scenes", std::to_string(*scenes));
    RunConfig cfg = load_run_config(config, overrides);
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (sub == perturb) {
      pargs.labels = labels;
      pargs.calib = calib;
      pargs.out = out_dir;
      pargs.csv = csv;
      if (pargs.csv.empty()) {
        pargs.csv = pargs.out;
        pargs.csv.replace_extension(".csv");
        if (pargs.csv == pargs.out) pargs.csv += ".delta.csv";
      }
      return cmd_perturb(cfg, pargs, out);
    }
    cfg.out_dir = out_dir;
    if (sub == gen) return cmd_gen(cfg, out);
    if (sub == train_cmd) return cmd_train(cfg, out);
    return cmd_eval(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace difflabel::cli
