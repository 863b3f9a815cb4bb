// Copyright 2026 The occkit Authors
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

#include <bit>
#include <cstdint>
#include <filesystem>
#include <set>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "occkit/io.hpp"
#include "occkit/oracle.hpp"
#include "occkit/pipeline.hpp"

namespace occkit::cli {

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir.string() + ": " +
                  ec.message());
  }
}

inline void write_tensor_f64(const std::filesystem::path& path,
                             const DenseTensor& t) {
  std::string bytes(t.size() * 8, '\0');
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(t.data()[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
  }
  io::write_bytes(path, bytes);
}

inline nlohmann::json shape_json(const DenseTensor& t) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t d : t.shape()) j.push_back(d);
  return j;
}

}  // namespace detail

inline PipelineConfig load_config(const std::string& config_path) {
  PipelineConfig cfg = PipelineConfig::desk_profile();
  if (!config_path.empty()) {
    const std::string bytes = io::read_bytes(config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + config_path + ": " + e.what());
    }
    cfg.apply_json(j);
  }
  cfg.validate();
  return cfg;
}

struct GenOptions {
  std::string out_dir;
  std::string config_path;
  std::uint64_t seed = 1;
};

/// Generate one synthetic frame: scene.json, points.bin, gt.grid (with the
/// camera-visibility mask embedded) and a manifest over all three.
inline int cmd_gen(const GenOptions& opt) {
  const PipelineConfig cfg = load_config(opt.config_path);
  const std::filesystem::path dir(opt.out_dir);
  detail::ensure_dir(dir);

  const SceneBundle bundle = make_scene_bundle(cfg, opt.seed);
  io::write_scene((dir / "scene.json").string(), bundle.scene);
  io::write_point_cloud((dir / "points.bin").string(), bundle.cloud);
  io::write_grid((dir / "gt.grid").string(), bundle.gt);
  io::write_manifest(dir.string(), {"scene.json", "points.bin", "gt.grid"});

  std::cout << "gen: seed " << opt.seed << ", " << bundle.scene.objects.size()
            << " objects, " << bundle.cloud.size() << " points -> "
            << dir.string() << "\n";
  return 0;
}

struct RunOptions {
  std::string scene_dir;
  std::string out_dir;
  std::string config_path;
  bool fit = false;
  bool detach_det = false;
};

/// Run the forward pipeline on a generated frame and write report.json,
/// tensor dumps, and (with --fit) the fitted prediction grid.
inline int cmd_run(const RunOptions& opt) {
  const PipelineConfig cfg = load_config(opt.config_path);
  const std::filesystem::path in(opt.scene_dir);
  const std::filesystem::path dir(opt.out_dir);
  detail::ensure_dir(dir);

  const scenegen::Scene scene = io::read_scene((in / "scene.json").string());
  const voxel::PointCloud cloud =
      io::read_point_cloud((in / "points.bin").string());
  const eval::OccupancyGrid gt = io::read_grid((in / "gt.grid").string());
  if (!cfg.occ.same_lattice(gt.spec)) {
    throw ContractError("cmd_run: gt.grid lattice does not match the "
                        "configured occupancy grid");
  }

  const scenegen::SensorRig rig = build_rig(cfg);
  const lift::CameraFeatureSet cams =
      scenegen::render_camera_features(scene, rig, cfg.c_cam);

  const PipelineWeights weights = PipelineWeights::seeded(cfg);
  const ForwardResult fwd = run_forward(cfg, weights, cloud, cams);
  const std::vector<std::uint8_t> mask = supervision_mask(cfg, gt);
  const TrainingSignals sig =
      compute_losses(cfg, fwd, gt, mask, det_boxes(scene), opt.detach_det);
  const DenseTensor grad_f_r =
      total_gradient_f_r(cfg, weights, fwd, sig, opt.detach_det);

  nlohmann::json report;
  report["seed"] = cfg.seed;
  report["detach_det"] = opt.detach_det;
  report["use_camera_mask"] = cfg.use_camera_mask;
  report["shapes"]["f_l"] = detail::shape_json(fwd.f_l);
  report["shapes"]["f_c"] = detail::shape_json(fwd.f_c);
  report["shapes"]["f_f"] = detail::shape_json(fwd.f_f.data);
  report["shapes"]["f_r"] = detail::shape_json(fwd.f_r.data);
  report["shapes"]["f_occ"] = detail::shape_json(fwd.f_occ.data);
  report["shapes"]["logits"] = detail::shape_json(fwd.logits);
  report["losses"]["ce"] = sig.losses.ce;
  report["losses"]["cls"] = sig.losses.cls;
  report["losses"]["loc"] = sig.losses.loc;
  report["losses"]["det"] = sig.losses.det;
  report["losses"]["total"] = sig.losses.total;
  report["num_objects"] = sig.losses.num_objects;
  report["supervised_voxels"] = sig.losses.supervised;
  report["grad_f_r_norm"] = l2_norm(grad_f_r);
  report["warnings"] = sig.targets.warnings;

  detail::write_tensor_f64(dir / "f_l.bin", fwd.f_l);
  detail::write_tensor_f64(dir / "f_c.bin", fwd.f_c);
  detail::write_tensor_f64(dir / "f_f.bin", fwd.f_f.data);
  detail::write_tensor_f64(dir / "f_r.bin", fwd.f_r.data);
  detail::write_tensor_f64(dir / "f_occ.bin", fwd.f_occ.data);
  detail::write_tensor_f64(dir / "logits.bin", fwd.logits);
  std::vector<std::string> files = {"report.json", "f_l.bin",  "f_c.bin",
                                    "f_f.bin",     "f_r.bin",  "f_occ.bin",
                                    "logits.bin"};

  if (opt.fit) {
    const heads::FitResult fr = heads::fit_last_layer(
        fwd.f_occ, gt.labels, mask, cfg.classes, cfg.occ.nz, cfg.fit);
    const DenseTensor fit_logits = fr.logits(fwd.f_occ, cfg.classes,
                                             cfg.occ.nz);
    const eval::OccupancyGrid pred = predict_grid(cfg, fit_logits);
    io::write_grid((dir / "pred.grid").string(), pred);
    files.push_back("pred.grid");

    const double initial_ce = fr.loss_trace.front();
    const double final_ce = fr.loss_trace.back();
    report["fit"]["initial_ce"] = initial_ce;
    report["fit"]["final_ce"] = final_ce;
    report["fit"]["steps"] = cfg.fit.steps;
    // Score on the same footing the fit was supervised: within the camera
    // mask when it drove supervision, over the whole scene otherwise.
    report["fit"]["voxel_iou"] = eval::voxel_iou(pred, gt, cfg.use_camera_mask);
    report["fit"]["miou"] = eval::miou(pred, gt, cfg.use_camera_mask).mean;
  }

  io::write_bytes((dir / "report.json").string(), report.dump(2) + "\n");
  io::write_manifest(dir.string(), files);

  std::cout << "run: L_ce " << sig.losses.ce << ", L_det " << sig.losses.det
            << ", L_total " << sig.losses.total << " -> " << dir.string()
            << "\n";
  return 0;
}

struct EvalOptions {
  std::string gt_path;
  std::string pred_path;
  std::string out_path;  // optional metrics.json
  bool use_mask = true;
  int ray_azimuths = 96;
  int ray_elevations = 5;
};

/// Compare two grid files: voxel IoU, per-class IoU / mIoU, and RayIoU at
/// 1, 2, and 4 m. Mismatched headers abort with the differing field named.
inline int cmd_eval(const EvalOptions& opt) {
  const eval::OccupancyGrid gt = io::read_grid(opt.gt_path);
  const eval::OccupancyGrid pred = io::read_grid(opt.pred_path);
  const std::string field = io::header_mismatch(gt, pred);
  if (!field.empty()) {
    throw ContractError("cmd_eval: grid headers differ in " + field);
  }

  const PipelineConfig cfg = PipelineConfig::desk_profile();
  const eval::RaySet rays = eval::default_rayset(
      cfg.lidar.origin, opt.ray_azimuths, opt.ray_elevations);

  nlohmann::json out;
  out["voxel_iou"] = eval::voxel_iou(pred, gt, opt.use_mask);
  const eval::MiouResult m = eval::miou(pred, gt, opt.use_mask);
  out["miou"] = m.mean;
  for (int k = 0; k < gt.class_count; ++k) {
    if (m.counted[k]) {
      out["class_iou"][std::to_string(k)] = m.class_iou[k];
    }
  }
  const eval::RayIouResult r = eval::rayiou(gt, pred, rays, {1.0, 2.0, 4.0});
  double mean_ray = 0.0;
  for (const eval::RayIouAtTau& at : r.per_tau) {
    out["rayiou"][std::to_string(at.tau)] = at.mean;
    mean_ray += at.mean;
  }
  out["rayiou_mean"] = mean_ray / static_cast<double>(r.per_tau.size());

  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!opt.out_path.empty()) {
    io::write_bytes(opt.out_path, text);
  }
  return 0;
}

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  double tol = 1e-4;
  bool corrupt = false;  // negative control: must fail when set
};

/// Finite-difference audit of every analytic gradient. Prints one row per
/// term; exits nonzero if any row exceeds tolerance.
inline int cmd_gradcheck(const GradcheckOptions& opt) {
  const std::vector<oracle::GradCheckRow> rows =
      oracle::run_gradcheck(opt.seed, opt.instances, opt.tol, opt.corrupt);
  bool all_pass = true;
  for (const oracle::GradCheckRow& row : rows) {
    std::cout << row.name << "  max_rel_err " << row.max_rel_err << "  "
              << (row.pass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && row.pass;
  }
  return all_pass ? 0 : 1;
}

struct PlotOptions {
  std::string grid_path;
  std::string out_path;
  int z = 2;
};

inline int cmd_plot(const PlotOptions& opt) {
  const eval::OccupancyGrid grid = io::read_grid(opt.grid_path);
  io::write_slice_ppm(opt.out_path, grid, opt.z);
  std::cout << "plot: z " << opt.z << " -> " << opt.out_path << "\n";
  return 0;
}

struct OracleOptions {
  std::uint64_t seed = 1;
  int conv_trials = 25;
  int ray_grids = 10;
  int rays_per_grid = 50;
};

/// Standalone sweep of the brute-force references against the production
/// kernels; the same comparisons the test suite freezes.
inline int cmd_oracle(const OracleOptions& opt) {
  bool ok = true;

  double conv_max = 0.0;
  for (int t = 0; t < opt.conv_trials; ++t) {
    SeededStream s(opt.seed, "oracle/conv/" + std::to_string(t));
    const int nx = 2 + static_cast<int>(s.below(7));
    const int ny = 2 + static_cast<int>(s.below(7));
    const int nz = 2 + static_cast<int>(s.below(7));
    const voxel::GridSpec spec = voxel::GridSpec::from_dims(
        Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0.5, 0.5, 0.5), nx, ny, nz);
    voxel::SparseVoxelGrid grid;
    grid.spec = spec;
    grid.channels = 3;
    std::set<voxel::Coord3> taken;
    const int active = 1 + static_cast<int>(s.below(12));
    for (int a = 0; a < active; ++a) {
      voxel::Coord3 c = {static_cast<int>(s.below(nz)),
                         static_cast<int>(s.below(ny)),
                         static_cast<int>(s.below(nx))};
      if (!taken.insert(c).second) continue;  // coords must be unique
      grid.coords.push_back(c);
      for (int ch = 0; ch < 3; ++ch) {
        grid.features.push_back(s.uniform(-1.0, 1.0));
      }
    }
    const bool sub = s.below(2) == 0;
    voxel::ConvKernel3D k = voxel::ConvKernel3D::seeded(
        opt.seed, "oracle/conv/w" + std::to_string(t), 2, 3, 3,
        sub ? voxel::Coord3{1, 1, 1}
            : voxel::Coord3{1 + static_cast<int>(s.below(2)), 1, 2},
        sub ? voxel::ConvMode::kSubmanifold : voxel::ConvMode::kRegular);
    const voxel::SparseVoxelGrid out = voxel::sparse_conv3d(grid, k);
    const DenseTensor got = voxel::densify(out);
    const DenseTensor want = oracle::dense_conv3d_reference(grid, k);
    conv_max = std::max(conv_max, max_abs_diff(got, want));
  }
  ok = ok && conv_max <= 1e-5;
  std::cout << "conv  max_abs_diff " << conv_max
            << (conv_max <= 1e-5 ? "  PASS" : "  FAIL") << "\n";

  int ray_mismatches = 0;
  int ray_total = 0;
  for (int g = 0; g < opt.ray_grids; ++g) {
    SeededStream s(opt.seed, "oracle/ray/" + std::to_string(g));
    eval::OccupancyGrid grid;
    grid.spec = bevfuse::OccGridSpec::make(Eigen::Vector3d(-1.0, -1.0, -1.0),
                                           Eigen::Vector3d(1.0, 1.0, 1.0),
                                           0.25);
    grid.class_count = 3;
    grid.labels.assign(grid.spec.voxel_count(), 0);
    for (std::uint8_t& v : grid.labels) {
      if (s.uniform() < 0.2) v = static_cast<std::uint8_t>(1 + s.below(2));
    }
    for (int r = 0; r < opt.rays_per_grid; ++r) {
      Eigen::Vector3d origin(s.uniform(-2.0, 2.0), s.uniform(-2.0, 2.0),
                             s.uniform(-2.0, 2.0));
      Eigen::Vector3d dir(s.normal(), s.normal(), s.normal());
      if (dir.norm() < 1e-6) dir = Eigen::Vector3d(1, 0, 0);
      dir.normalize();
      ++ray_total;
      const auto fast = eval::raycast_first_hit(grid, origin, dir);
      const auto slow = oracle::ray_march_first_hit(grid, origin, dir);
      const bool both = fast.has_value() && slow.has_value();
      if (fast.has_value() != slow.has_value()) {
        ++ray_mismatches;
      } else if (both) {
        const bool same_voxel = fast->ix == slow->ix && fast->iy == slow->iy &&
                                fast->iz == slow->iz;
        const bool close_depth =
            std::abs(fast->depth - slow->depth) <= grid.spec.res / 100.0;
        if (!same_voxel || !close_depth) ++ray_mismatches;
      }
    }
  }
  ok = ok && ray_mismatches == 0;
  std::cout << "ray   mismatches " << ray_mismatches << "/" << ray_total
            << (ray_mismatches == 0 ? "  PASS" : "  FAIL") << "\n";

  double bi_max = 0.0;
  for (int t = 0; t < 10; ++t) {
    SeededStream s(opt.seed, "oracle/bilinear/" + std::to_string(t));
    bevfuse::BevTensor f_r;
    f_r.data = DenseTensor({2, 8, 8});
    f_r.min_xy = Eigen::Vector2d(-2.0, -2.0);
    f_r.max_xy = Eigen::Vector2d(2.0, 2.0);
    oracle::detail::fill_normal(f_r.data, s);
    const bevfuse::OccGridSpec occ = bevfuse::OccGridSpec::make(
        Eigen::Vector3d(-2.0, -2.0, -0.5), Eigen::Vector3d(2.0, 2.0, 0.5),
        0.25);
    const bevfuse::BevTensor got = bevfuse::bvre_sample(f_r, occ);
    const double w = static_cast<double>(f_r.data.dim(2));
    const double h = static_cast<double>(f_r.data.dim(1));
    for (int x = 0; x < occ.nx; ++x) {
      for (int y = 0; y < occ.ny; ++y) {
        const Eigen::Vector3d p = occ.center(x, y, 0);
        const double nx_ = geom::normalize_coord(p.x(), f_r.min_xy.x(),
                                                 f_r.max_xy.x());
        const double ny_ = geom::normalize_coord(p.y(), f_r.min_xy.y(),
                                                 f_r.max_xy.y());
        const double u = 0.5 * (nx_ + 1.0) * w - 0.5;
        const double v = 0.5 * (ny_ + 1.0) * h - 0.5;
        // The tent reference has no border padding; stay inside the hull.
        if (u < 0.0 || u > w - 1.0 || v < 0.0 || v > h - 1.0) continue;
        const std::vector<double> want =
            oracle::bilinear_reference(f_r.data, u, v);
        for (int c = 0; c < 2; ++c) {
          bi_max = std::max(bi_max, std::abs(got.data(c, x, y) - want[c]));
        }
      }
    }
  }
  ok = ok && bi_max <= 1e-12;
  std::cout << "bvre  max_abs_diff " << bi_max
            << (bi_max <= 1e-12 ? "  PASS" : "  FAIL") << "\n";

  return ok ? 0 : 1;
}

}  // namespace occkit::cli
