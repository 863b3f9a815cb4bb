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
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "occkit/common.hpp"
#include "occkit/eval.hpp"
#include "occkit/geom.hpp"
#include "occkit/heads.hpp"
#include "occkit/lift.hpp"
#include "occkit/voxel.hpp"

namespace occkit::scenegen {

/// Small fixed taxonomy. Detection classes are the object classes shifted
/// down by kFirstObjectClass (vehicle -> 0, ..., vegetation -> 3).
enum SemanticClass : int {
  kFree = 0,
  kGround = 1,
  kVehicle = 2,
  kPedestrian = 3,
  kBarrier = 4,
  kVegetation = 5,
};
constexpr int kClassCount = 6;
constexpr int kFirstObjectClass = kVehicle;
constexpr int kDetClassCount = kClassCount - kFirstObjectClass;

struct SceneObject {
  heads::Box3D box;  // box.class_id holds the detection class
  int semantic_class = kVehicle;
};

struct Scene {
  double ground_z = 0.0;
  std::vector<SceneObject> objects;
  Eigen::Vector3d extent_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d extent_max = Eigen::Vector3d::Ones();
  std::uint64_t seed = 0;
};

struct GenSpec {
  Eigen::Vector3d extent_min = Eigen::Vector3d(-12.8, -12.8, -2.4);
  Eigen::Vector3d extent_max = Eigen::Vector3d(12.8, 12.8, 2.4);
  double ground_z = -1.6;
  int min_boxes = 4;
  int max_boxes = 7;
};

struct LidarSpec {
  Eigen::Vector3d origin = Eigen::Vector3d(0.0, 0.0, 0.4);
  int azimuths = 360;
  int elevations = 24;
  double elev_lo = -30.0 * M_PI / 180.0;
  double elev_hi = 10.0 * M_PI / 180.0;
  double max_range = 100.0;
};

struct SensorRig {
  LidarSpec lidar;
  std::vector<geom::CameraModel> cameras;
};

/// Strict-interior point-in-box test in the box's yawed frame.
inline bool point_in_box(const heads::Box3D& box, const Eigen::Vector3d& p) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d d = p - box.center;
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) < 0.5 * box.size.x() &&
         std::abs(ly) < 0.5 * box.size.y() &&
         std::abs(d.z()) < 0.5 * box.size.z();
}

namespace detail {

struct SizeRange {
  double l_lo, l_hi, w_lo, w_hi, h_lo, h_hi;
};

inline SizeRange size_range(int semantic_class) {
  switch (semantic_class) {
    case kVehicle:
      return {3.5, 5.0, 1.6, 2.2, 1.4, 2.0};
    case kPedestrian:
      return {0.4, 0.8, 0.4, 0.8, 1.5, 1.9};
    case kBarrier:
      return {2.0, 4.0, 0.3, 0.6, 0.9, 1.2};
    default:
      return {1.0, 3.0, 1.0, 3.0, 1.0, 3.0};  // vegetation block
  }
}

inline double box_volume(const heads::Box3D& b) {
  return b.size.x() * b.size.y() * b.size.z();
}

/// Intersection volume estimated on a 7x7x7 cell-center lattice spanning
/// box a, counting centers strictly inside b.
inline double overlap_volume(const heads::Box3D& a, const heads::Box3D& b) {
  constexpr int n = 7;
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const double fx = ((i + 0.5) / n - 0.5) * a.size.x();
    for (int j = 0; j < n; ++j) {
      const double fy = ((j + 0.5) / n - 0.5) * a.size.y();
      for (int k = 0; k < n; ++k) {
        const double fz = ((k + 0.5) / n - 0.5) * a.size.z();
        const Eigen::Vector3d p(a.center.x() + c * fx - s * fy,
                                a.center.y() + s * fx + c * fy,
                                a.center.z() + fz);
        if (point_in_box(b, p)) ++inside;
      }
    }
  }
  return box_volume(a) * inside / (n * n * n);
}

inline bool overlap_ok(const heads::Box3D& a, const heads::Box3D& b) {
  const double inter = std::max(overlap_volume(a, b), overlap_volume(b, a));
  return inter <= 0.1 * std::min(box_volume(a), box_volume(b));
}

}  // namespace detail

/// Seeded rejection sampler: boxes rest on the ground plane, keep every
/// corner inside the extent, and pairwise-overlap by at most 10% of the
/// smaller volume. Fails after 1000 rejected attempts for one box.
inline Scene generate_scene(std::uint64_t seed, const GenSpec& spec) {
  if (spec.min_boxes < 0 || spec.max_boxes < spec.min_boxes) {
    throw ConfigError("generate_scene: bad box-count range");
  }
  if (spec.ground_z < spec.extent_min.z() ||
      spec.ground_z >= spec.extent_max.z()) {
    throw ConfigError("generate_scene: ground plane outside extent");
  }
  Scene scene;
  scene.ground_z = spec.ground_z;
  scene.extent_min = spec.extent_min;
  scene.extent_max = spec.extent_max;
  scene.seed = seed;

  SeededStream stream(seed, "scene");
  const int count =
      spec.min_boxes +
      static_cast<int>(stream.below(spec.max_boxes - spec.min_boxes + 1));

  for (int n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      SceneObject obj;
      obj.semantic_class =
          kFirstObjectClass + static_cast<int>(stream.below(kDetClassCount));
      obj.box.class_id = obj.semantic_class - kFirstObjectClass;
      const detail::SizeRange r = detail::size_range(obj.semantic_class);
      obj.box.size = Eigen::Vector3d(stream.uniform(r.l_lo, r.l_hi),
                                     stream.uniform(r.w_lo, r.w_hi),
                                     stream.uniform(r.h_lo, r.h_hi));
      obj.box.yaw = stream.uniform(0.0, 2.0 * M_PI);
      if (spec.ground_z + obj.box.size.z() > spec.extent_max.z()) continue;
      obj.box.center.z() = spec.ground_z + 0.5 * obj.box.size.z();

      const double c = std::abs(std::cos(obj.box.yaw));
      const double s = std::abs(std::sin(obj.box.yaw));
      const double ex = 0.5 * (c * obj.box.size.x() + s * obj.box.size.y());
      const double ey = 0.5 * (s * obj.box.size.x() + c * obj.box.size.y());
      const double x_lo = spec.extent_min.x() + ex;
      const double x_hi = spec.extent_max.x() - ex;
      const double y_lo = spec.extent_min.y() + ey;
      const double y_hi = spec.extent_max.y() - ey;
      if (x_lo >= x_hi || y_lo >= y_hi) continue;
      obj.box.center.x() = stream.uniform(x_lo, x_hi);
      obj.box.center.y() = stream.uniform(y_lo, y_hi);

      bool clash = false;
      for (const SceneObject& other : scene.objects) {
        if (!detail::overlap_ok(obj.box, other.box)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      scene.objects.push_back(obj);
      placed = true;
    }
    if (!placed) {
      throw ConfigError("generate_scene: failed to place box " +
                        std::to_string(n) + " after 1000 attempts");
    }
  }
  return scene;
}

/// Label each occupancy voxel by its center: the last box containing it
/// wins; otherwise ground when the center lies below the plane; else free.
inline eval::OccupancyGrid rasterize_gt(const Scene& scene,
                                        const bevfuse::OccGridSpec& occ) {
  eval::OccupancyGrid grid;
  grid.spec = occ;
  grid.free_class = kFree;
  grid.class_count = kClassCount;
  grid.labels.assign(occ.voxel_count(), kFree);
  parallel_for(occ.voxel_count(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i / (static_cast<std::size_t>(occ.ny) *
                                          occ.nz));
      const int y = static_cast<int>((i / occ.nz) % occ.ny);
      const int z = static_cast<int>(i % occ.nz);
      const Eigen::Vector3d center = occ.t_o2l.apply(occ.center(x, y, z));
      std::uint8_t label = center.z() < scene.ground_z ? kGround : kFree;
      for (const SceneObject& obj : scene.objects) {
        if (point_in_box(obj.box, center)) {
          label = static_cast<std::uint8_t>(obj.semantic_class);
        }
      }
      grid.labels[i] = label;
    }
  });
  return grid;
}

struct SceneHit {
  double t = 0.0;
  int semantic_class = kFree;
};

/// Nearest analytic intersection of a world ray with the ground plane and
/// all yawed boxes (slab test in each box frame).
inline std::optional<SceneHit> first_hit(
    const Scene& scene, const Eigen::Vector3d& origin,
    const Eigen::Vector3d& dir,
    double max_range = std::numeric_limits<double>::infinity()) {
  constexpr double kMinT = 1e-9;
  double best_t = max_range;
  int best_class = kFree;
  bool found = false;

  if (dir.z() != 0.0) {
    const double t = (scene.ground_z - origin.z()) / dir.z();
    if (t > kMinT && t <= best_t) {
      best_t = t;
      best_class = kGround;
      found = true;
    }
  }

  for (const SceneObject& obj : scene.objects) {
    const heads::Box3D& b = obj.box;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const Eigen::Vector3d od = origin - b.center;
    const Eigen::Vector3d o(c * od.x() + s * od.y(), -s * od.x() + c * od.y(),
                            od.z());
    const Eigen::Vector3d d(c * dir.x() + s * dir.y(),
                            -s * dir.x() + c * dir.y(), dir.z());
    double t0 = kMinT, t1 = best_t;
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      const double half = 0.5 * b.size[a];
      if (d[a] == 0.0) {
        ok = std::abs(o[a]) <= half;
        continue;
      }
      double ta = (-half - o[a]) / d[a];
      double tb = (half - o[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      ok = t0 <= t1;
    }
    if (ok && t0 < best_t) {
      best_t = t0;
      best_class = obj.semantic_class;
      found = true;
    }
  }

  if (!found) return std::nullopt;
  return SceneHit{best_t, best_class};
}

/// One ray per beam on the LiDAR lattice (elevation-major); a hit yields a
/// point at the intersection with intensity 0.2 * class + N(0, 0.01^2)
/// noise from the scene-seeded "lidar" stream.
inline voxel::PointCloud simulate_lidar(const Scene& scene,
                                        const SensorRig& rig) {
  const LidarSpec& l = rig.lidar;
  if (l.azimuths < 1 || l.elevations < 1) {
    throw ConfigError("simulate_lidar: beam counts must be >= 1");
  }
  SeededStream noise(scene.seed, "lidar");
  voxel::PointCloud cloud;
  cloud.reserve(static_cast<std::size_t>(l.azimuths) * l.elevations);
  for (int e = 0; e < l.elevations; ++e) {
    const double elev =
        l.elevations == 1
            ? 0.5 * (l.elev_lo + l.elev_hi)
            : l.elev_lo + e * (l.elev_hi - l.elev_lo) / (l.elevations - 1);
    for (int j = 0; j < l.azimuths; ++j) {
      const double az = 2.0 * M_PI * j / l.azimuths;
      const Eigen::Vector3d dir(std::cos(elev) * std::cos(az),
                                std::cos(elev) * std::sin(az),
                                std::sin(elev));
      const auto hit = first_hit(scene, l.origin, dir, l.max_range);
      if (!hit) continue;
      const Eigen::Vector3d p = l.origin + hit->t * dir;
      voxel::PointRecord rec;
      rec.x = p.x();
      rec.y = p.y();
      rec.z = p.z();
      rec.intensity = 0.2 * hit->semantic_class + 0.01 * noise.normal();
      cloud.push_back(rec);
    }
  }
  return cloud;
}

inline Eigen::Vector3d camera_origin(const geom::CameraModel& cam) {
  return cam.extrinsic.inverse().translation;
}

/// Per-voxel camera visibility: the center must project into at least one
/// camera, and the DDA ray from that camera must reach it without crossing
/// an occupied voxel first.
inline std::vector<std::uint8_t> camera_visibility_mask(
    const eval::OccupancyGrid& gt, const SensorRig& rig) {
  gt.validate();
  const bevfuse::OccGridSpec& spec = gt.spec;
  std::vector<std::uint8_t> mask(gt.labels.size(), 0);
  parallel_for(gt.labels.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i / (static_cast<std::size_t>(spec.ny) *
                                          spec.nz));
      const int y = static_cast<int>((i / spec.nz) % spec.ny);
      const int z = static_cast<int>(i % spec.nz);
      const Eigen::Vector3d center = spec.t_o2l.apply(spec.center(x, y, z));
      for (const geom::CameraModel& cam : rig.cameras) {
        if (!geom::project_point(cam, center).valid) continue;
        const Eigen::Vector3d origin = camera_origin(cam);
        const Eigen::Vector3d delta = center - origin;
        const double dist = delta.norm();
        if (dist < 1e-9) {
          mask[i] = 1;
          break;
        }
        const auto hit = eval::raycast_first_hit(gt, origin, delta / dist);
        if (!hit || (hit->ix == x && hit->iy == y && hit->iz == z) ||
            hit->depth >= dist - 1e-9) {
          mask[i] = 1;
          break;
        }
      }
    }
  });
  return mask;
}

/// Depth-coded one-hot feature maps standing in for a camera backbone:
/// the pixel-center ray's first hit writes 1/(1 + distance) into its class
/// channel; misses stay zero. Requires C_p >= the class count.
inline lift::CameraFeatureSet render_camera_features(const Scene& scene,
                                                     const SensorRig& rig,
                                                     int channels) {
  if (channels < kClassCount) {
    throw ContractError("render_camera_features: need C_p >= class count");
  }
  lift::CameraFeatureSet set;
  set.cameras.reserve(rig.cameras.size());
  for (const geom::CameraModel& cam : rig.cameras) {
    cam.validate();
    lift::CameraView view;
    view.model = cam;
    view.features = DenseTensor({static_cast<std::size_t>(channels),
                                 static_cast<std::size_t>(cam.feature_height),
                                 static_cast<std::size_t>(cam.feature_width)});
    const Eigen::Vector3d origin = camera_origin(cam);
    const Eigen::Matrix3d to_world = cam.extrinsic.rotation.transpose();
    const std::size_t pixels =
        static_cast<std::size_t>(cam.feature_height) * cam.feature_width;
    parallel_for(pixels, [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        const int v = static_cast<int>(p) / cam.feature_width;
        const int u = static_cast<int>(p) % cam.feature_width;
        const Eigen::Vector3d dir_cam((u - cam.cx) / cam.fx,
                                      (v - cam.cy) / cam.fy, 1.0);
        const Eigen::Vector3d dir = (to_world * dir_cam).normalized();
        const auto hit = first_hit(scene, origin, dir);
        if (!hit) continue;
        view.features(hit->semantic_class, v, u) = 1.0 / (1.0 + hit->t);
      }
    });
    set.cameras.push_back(std::move(view));
  }
  return set;
}

}  // namespace occkit::scenegen
