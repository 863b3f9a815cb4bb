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

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "occkit/bevfuse.hpp"
#include "occkit/common.hpp"
#include "occkit/eval.hpp"
#include "occkit/geom.hpp"
#include "occkit/heads.hpp"
#include "occkit/lift.hpp"
#include "occkit/scenegen.hpp"
#include "occkit/tensor.hpp"
#include "occkit/voxel.hpp"

namespace occkit::cli {

/// Full pipeline configuration. Defaults are the desk profile: a 25.6 m
/// square footprint that satisfies every divisibility contract at laptop
/// scale (LiDAR grid 128x128x16, occupancy 64x64x12).
struct PipelineConfig {
  std::uint64_t seed = 7;  // weights + dropout; scene seed is per command

  voxel::GridSpec lidar_grid = voxel::GridSpec::make(
      Eigen::Vector3d(-12.8, -12.8, -2.4), Eigen::Vector3d(12.8, 12.8, 2.4),
      Eigen::Vector3d(0.2, 0.2, 0.3));
  bevfuse::OccGridSpec occ = bevfuse::OccGridSpec::make(
      Eigen::Vector3d(-12.8, -12.8, -2.4), Eigen::Vector3d(12.8, 12.8, 2.4),
      0.4);
  int lift_z = 8;

  int c_lidar = 32;
  int c_cam = 16;
  int c_r = 64;
  int classes = scenegen::kClassCount;
  int det_classes = scenegen::kDetClassCount;
  int max_points = 10;

  int camera_count = 6;
  double camera_ring_radius = 1.0;
  double camera_height = 0.2;
  int feature_width = 44;
  int feature_height = 16;
  double focal_px = 28.7;

  scenegen::GenSpec scene;
  scenegen::LidarSpec lidar;

  heads::FocalParams focal_params;
  heads::LossWeights loss_weights;
  double dropout_ratio = 0.8;
  bool use_camera_mask = true;
  heads::FitOptions fit;

  int ray_azimuths = 96;
  int ray_elevations = 5;

  static PipelineConfig desk_profile() { return {}; }

  int bev_nx() const { return lidar_grid.nx / 8; }
  int bev_ny() const { return lidar_grid.ny / 8; }
  int fuse_channels() const { return c_cam + c_lidar; }

  Eigen::Vector2d bev_min() const { return lidar_grid.min_bound.head<2>(); }
  Eigen::Vector2d bev_max() const { return lidar_grid.max_bound.head<2>(); }

  lift::LiftSpec lift_spec() const {
    lift::LiftSpec s;
    s.min_bound = lidar_grid.min_bound;
    s.max_bound = lidar_grid.max_bound;
    s.nx = bev_nx();
    s.ny = bev_ny();
    s.nz = lift_z;
    return s;
  }

  heads::BevGrid2D det_grid() const {
    heads::BevGrid2D g;
    g.min_xy = bev_min();
    g.max_xy = bev_max();
    g.nx = bev_nx();
    g.ny = bev_ny();
    return g;
  }

  void validate() const {
    if (lidar_grid.nz % 16 != 0 || lidar_grid.ny % 8 != 0 ||
        lidar_grid.nx % 8 != 0) {
      throw ConfigError("PipelineConfig: LiDAR dims must satisfy D%16 == "
                        "H%8 == W%8 == 0");
    }
    if (bev_nx() % 4 != 0 || bev_ny() % 4 != 0) {
      throw ConfigError("PipelineConfig: BEV dims must be divisible by 4");
    }
    if (c_cam < classes) {
      throw ConfigError("PipelineConfig: C_p must cover the class count");
    }
    if (det_classes != classes - scenegen::kFirstObjectClass) {
      throw ConfigError("PipelineConfig: det class count inconsistent");
    }
    if (lift_z < 1 || camera_count < 1) {
      throw ConfigError("PipelineConfig: counts must be >= 1");
    }
  }

  /// Merge a partial JSON override into the defaults.
  void apply_json(const nlohmann::json& j) {
    seed = j.value("seed", seed);
    max_points = j.value("max_points", max_points);
    dropout_ratio = j.value("dropout_ratio", dropout_ratio);
    use_camera_mask = j.value("use_camera_mask", use_camera_mask);
    lift_z = j.value("lift_z", lift_z);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      loss_weights.lambda = w.value("lambda", loss_weights.lambda);
      loss_weights.lambda_l = w.value("lambda_l", loss_weights.lambda_l);
    }
    if (j.contains("focal")) {
      const auto& f = j.at("focal");
      focal_params.alpha = f.value("alpha", focal_params.alpha);
      focal_params.beta = f.value("beta", focal_params.beta);
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      fit.steps = f.value("steps", fit.steps);
      fit.lr = f.value("lr", fit.lr);
    }
    if (j.contains("rays")) {
      const auto& r = j.at("rays");
      ray_azimuths = r.value("azimuths", ray_azimuths);
      ray_elevations = r.value("elevations", ray_elevations);
    }
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      scene.min_boxes = s.value("min_boxes", scene.min_boxes);
      scene.max_boxes = s.value("max_boxes", scene.max_boxes);
      scene.ground_z = s.value("ground_z", scene.ground_z);
    }
    if (j.contains("lidar_beams")) {
      const auto& l = j.at("lidar_beams");
      lidar.azimuths = l.value("azimuths", lidar.azimuths);
      lidar.elevations = l.value("elevations", lidar.elevations);
      lidar.max_range = l.value("max_range", lidar.max_range);
    }
    validate();
  }
};

/// Outward-facing ring camera i of n: +z looks along the ring azimuth,
/// +x right, +y down.
inline geom::CameraModel make_ring_camera(const PipelineConfig& cfg, int i) {
  const double theta = 2.0 * M_PI * i / cfg.camera_count;
  const double c = std::cos(theta), s = std::sin(theta);
  const Eigen::Vector3d pos(cfg.camera_ring_radius * c,
                            cfg.camera_ring_radius * s, cfg.camera_height);
  Eigen::Matrix3d rot;  // world -> camera, rows are camera axes in world
  rot << s, -c, 0.0,
         0.0, 0.0, -1.0,
         c, s, 0.0;
  geom::CameraModel cam;
  cam.fx = cfg.focal_px;
  cam.fy = cfg.focal_px;
  cam.cx = 0.5 * (cfg.feature_width - 1);
  cam.cy = 0.5 * (cfg.feature_height - 1);
  cam.feature_width = cfg.feature_width;
  cam.feature_height = cfg.feature_height;
  cam.extrinsic.rotation = rot;
  cam.extrinsic.translation = -(rot * pos);
  return cam;
}

inline scenegen::SensorRig build_rig(const PipelineConfig& cfg) {
  scenegen::SensorRig rig;
  rig.lidar = cfg.lidar;
  rig.cameras.reserve(cfg.camera_count);
  for (int i = 0; i < cfg.camera_count; ++i) {
    rig.cameras.push_back(make_ring_camera(cfg, i));
  }
  return rig;
}

/// Everything one synthetic frame provides: the scene, its LiDAR sweep,
/// camera features, and GT occupancy with the camera-visibility mask.
struct SceneBundle {
  scenegen::Scene scene;
  voxel::PointCloud cloud;
  lift::CameraFeatureSet cams;
  eval::OccupancyGrid gt;  // gt.mask holds camera visibility
};

inline SceneBundle make_scene_bundle(const PipelineConfig& cfg,
                                     std::uint64_t scene_seed) {
  cfg.validate();
  const scenegen::SensorRig rig = build_rig(cfg);
  SceneBundle b;
  b.scene = scenegen::generate_scene(scene_seed, cfg.scene);
  b.cloud = scenegen::simulate_lidar(b.scene, rig);
  b.cams = scenegen::render_camera_features(b.scene, rig, cfg.c_cam);
  b.gt = scenegen::rasterize_gt(b.scene, cfg.occ);
  b.gt.mask = scenegen::camera_visibility_mask(b.gt, rig);
  return b;
}

struct PipelineWeights {
  voxel::LidarEncoder lidar_encoder;
  DenseTensor lidar_compress;  // C x (C * D/16) x 1 x 1
  DenseTensor cam_compress;    // C_p x (C_p * Z) x 1 x 1
  DenseTensor fuse;            // 48 x 48 x 3 x 3 at desk scale
  bevfuse::BevEncoderWeights bev;
  DenseTensor occ_head;  // (K * Z_o) x C_r x 1 x 1
  DenseTensor det_hm;    // K_det x C_r x 1 x 1
  DenseTensor det_reg;   // 8 x C_r x 1 x 1

  static PipelineWeights seeded(const PipelineConfig& cfg) {
    PipelineWeights w;
    w.lidar_encoder = voxel::LidarEncoder::seeded(cfg.seed, 4, cfg.c_lidar);
    const std::size_t d16 = static_cast<std::size_t>(cfg.lidar_grid.nz) / 16;
    w.lidar_compress = bevfuse::seeded_conv2d_weights(
        cfg.seed, "lidar_compress", cfg.c_lidar, cfg.c_lidar * d16, 1);
    w.cam_compress = bevfuse::seeded_conv2d_weights(
        cfg.seed, "cam_compress", cfg.c_cam,
        static_cast<std::size_t>(cfg.c_cam) * cfg.lift_z, 1);
    w.fuse = bevfuse::seeded_conv2d_weights(cfg.seed, "fuse",
                                            cfg.fuse_channels(),
                                            cfg.fuse_channels(), 3);
    w.bev = bevfuse::BevEncoderWeights::seeded(cfg.seed, cfg.fuse_channels(),
                                               cfg.c_r, cfg.c_r);
    w.occ_head = bevfuse::seeded_conv2d_weights(
        cfg.seed, "occ_head",
        static_cast<std::size_t>(cfg.classes) * cfg.occ.nz, cfg.c_r, 1);
    w.det_hm = bevfuse::seeded_conv2d_weights(cfg.seed, "det/hm",
                                              cfg.det_classes, cfg.c_r, 1);
    w.det_reg = bevfuse::seeded_conv2d_weights(cfg.seed, "det/reg", 8,
                                               cfg.c_r, 1);
    return w;
  }
};

struct ForwardResult {
  DenseTensor f_l;           // C x D/16 x H/8 x W/8
  DenseTensor f_c;           // C_p x Z x H/8 x W/8
  bevfuse::BevTensor f_f;    // fused BEV
  bevfuse::BevTensor f_r;    // refined BEV, C_r channels
  bevfuse::BevTensor f_occ;  // C_r x X_o x Y_o
  DenseTensor logits;        // K x Z_o x X_o x Y_o
  DenseTensor det_hm_raw;    // K_det x H' x W' (pre-sigmoid)
  DenseTensor det_reg;       // 8 x H' x W'
};

inline ForwardResult run_forward(const PipelineConfig& cfg,
                                 const PipelineWeights& w,
                                 const voxel::PointCloud& cloud,
                                 const lift::CameraFeatureSet& cams) {
  cfg.validate();
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  ForwardResult r;

  const voxel::SparseVoxelGrid sparse =
      voxel::voxelize(cloud, cfg.lidar_grid, cfg.max_points);
  r.f_l = w.lidar_encoder.encode(sparse);
  require_shape(r.f_l,
                {u(cfg.c_lidar), u(cfg.lidar_grid.nz / 16), u(cfg.bev_ny()),
                 u(cfg.bev_nx())},
                "F_l");

  r.f_c = lift::lift_features(cams, cfg.lift_spec());
  require_shape(r.f_c,
                {u(cfg.c_cam), u(cfg.lift_z), u(cfg.bev_ny()), u(cfg.bev_nx())},
                "F_c");

  const bevfuse::BevTensor bev_lidar = bevfuse::height_compress(
      r.f_l, w.lidar_compress, cfg.bev_min(), cfg.bev_max());
  const bevfuse::BevTensor bev_cam = bevfuse::height_compress(
      r.f_c, w.cam_compress, cfg.bev_min(), cfg.bev_max());
  r.f_f = bevfuse::fuse_bev(bev_cam, bev_lidar, w.fuse);
  require_shape(r.f_f.data,
                {u(cfg.fuse_channels()), u(cfg.bev_ny()), u(cfg.bev_nx())},
                "F_f");

  r.f_r = bevfuse::bev_encode(r.f_f, w.bev);
  require_shape(r.f_r.data, {u(cfg.c_r), u(cfg.bev_ny()), u(cfg.bev_nx())},
                "F_r");

  r.f_occ = bevfuse::bvre_sample(r.f_r, cfg.occ);
  require_shape(r.f_occ.data, {u(cfg.c_r), u(cfg.occ.nx), u(cfg.occ.ny)},
                "F_occ");

  r.logits = bevfuse::occ_logits(r.f_occ, w.occ_head, cfg.classes, cfg.occ.nz);
  require_shape(r.logits,
                {u(cfg.classes), u(cfg.occ.nz), u(cfg.occ.nx), u(cfg.occ.ny)},
                "logits");

  r.det_hm_raw = bevfuse::conv2d(r.f_r.data, w.det_hm);
  r.det_reg = bevfuse::conv2d(r.f_r.data, w.det_reg);
  return r;
}

/// Supervision mask: the camera-visibility mask when enabled, otherwise
/// seeded empty-voxel dropout.
inline std::vector<std::uint8_t> supervision_mask(
    const PipelineConfig& cfg, const eval::OccupancyGrid& gt) {
  if (cfg.use_camera_mask && !gt.mask.empty()) return gt.mask;
  return heads::empty_voxel_dropout(gt.labels, gt.free_class,
                                    cfg.dropout_ratio, cfg.seed);
}

struct LossBundle {
  double ce = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double det = 0.0;
  double total = 0.0;
  int num_objects = 0;
  std::size_t supervised = 0;
};

struct TrainingSignals {
  heads::DetectionTargets targets;
  heads::LossResult ce;
  heads::LossResult focal;
  heads::LossResult l1;
  heads::SigmoidResult sig;
  LossBundle losses;
};

inline std::vector<heads::Box3D> det_boxes(const scenegen::Scene& scene) {
  std::vector<heads::Box3D> boxes;
  boxes.reserve(scene.objects.size());
  for (const scenegen::SceneObject& obj : scene.objects) {
    boxes.push_back(obj.box);
  }
  return boxes;
}

inline TrainingSignals compute_losses(const PipelineConfig& cfg,
                                      const ForwardResult& fwd,
                                      const eval::OccupancyGrid& gt,
                                      const std::vector<std::uint8_t>& mask,
                                      const std::vector<heads::Box3D>& boxes,
                                      bool detach_det = false) {
  TrainingSignals out;
  out.ce = heads::ce_loss(fwd.logits, gt.labels, mask);
  out.losses.ce = out.ce.value;
  for (std::uint8_t m : mask) out.losses.supervised += m != 0;

  if (!detach_det) {
    out.targets = heads::detection_targets(boxes, cfg.det_grid(),
                                           cfg.det_classes);
    out.sig = heads::sigmoid_clamp(fwd.det_hm_raw);
    out.focal = heads::focal_loss(out.sig.value, out.targets.heatmap,
                                  cfg.focal_params, out.targets.num_objects);
    out.l1 = heads::l1_loss(fwd.det_reg, out.targets.regression,
                            out.targets.mask, out.targets.num_objects);
    out.losses.cls = out.focal.value;
    out.losses.loc = out.l1.value;
    out.losses.num_objects = out.targets.num_objects;
  }
  out.losses.det = heads::det_loss(out.losses.cls, out.losses.loc,
                                   cfg.loss_weights);
  out.losses.total = heads::total_loss(out.losses.ce,
                                       detach_det ? 0.0 : out.losses.det,
                                       cfg.loss_weights);
  return out;
}

/// Assemble dL_total/dF_r: the cross-entropy path back through the
/// occupancy head and the grid sampler, plus (unless detached) the
/// lambda-weighted detection paths through the 1x1 heads.
inline DenseTensor total_gradient_f_r(const PipelineConfig& cfg,
                                      const PipelineWeights& w,
                                      const ForwardResult& fwd,
                                      const TrainingSignals& sig,
                                      bool detach_det = false) {
  const bevfuse::BevTensor up_wide = bevfuse::height_to_channel(
      sig.ce.grad, fwd.f_occ.min_xy, fwd.f_occ.max_xy);
  const heads::HeadGradients occ_grads =
      heads::head_backprop(fwd.f_occ.data, w.occ_head, up_wide.data);
  bevfuse::BevTensor grad_occ;
  grad_occ.data = occ_grads.grad_input;
  DenseTensor g = bevfuse::bvre_backward(fwd.f_r, cfg.occ, grad_occ.data);

  if (!detach_det && cfg.loss_weights.lambda != 0.0 &&
      sig.losses.num_objects > 0) {
    DenseTensor up_hm(fwd.det_hm_raw.shape());
    for (std::size_t i = 0; i < up_hm.size(); ++i) {
      up_hm.data()[i] = sig.focal.grad.data()[i] * sig.sig.dvalue.data()[i];
    }
    const heads::HeadGradients hm_grads =
        heads::head_backprop(fwd.f_r.data, w.det_hm, up_hm);
    const heads::HeadGradients reg_grads =
        heads::head_backprop(fwd.f_r.data, w.det_reg, sig.l1.grad);
    const double lam = cfg.loss_weights.lambda;
    const double lam_l = cfg.loss_weights.lambda_l;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.data()[i] += lam * (hm_grads.grad_input.data()[i] +
                            lam_l * reg_grads.grad_input.data()[i]);
    }
  }
  return g;
}

inline double l2_norm(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

/// Argmax labels from logits, packaged on the configured occupancy lattice.
inline eval::OccupancyGrid predict_grid(const PipelineConfig& cfg,
                                        const DenseTensor& logits) {
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  require_shape(logits,
                {u(cfg.classes), u(cfg.occ.nz), u(cfg.occ.nx), u(cfg.occ.ny)},
                "predict_grid: logits");
  eval::OccupancyGrid grid;
  grid.spec = cfg.occ;
  grid.class_count = cfg.classes;
  grid.free_class = scenegen::kFree;
  grid.labels.assign(cfg.occ.voxel_count(), 0);
  for (int x = 0; x < cfg.occ.nx; ++x) {
    for (int y = 0; y < cfg.occ.ny; ++y) {
      for (int z = 0; z < cfg.occ.nz; ++z) {
        int best = 0;
        double best_v = logits(0, z, x, y);
        for (int k = 1; k < cfg.classes; ++k) {
          const double v = logits(u(k), u(z), u(x), u(y));
          if (v > best_v) {
            best_v = v;
            best = k;
          }
        }
        grid.labels[cfg.occ.linear(x, y, z)] = static_cast<std::uint8_t>(best);
      }
    }
  }
  return grid;
}

}  // namespace occkit::cli
