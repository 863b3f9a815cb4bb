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
#include <vector>

#include "occkit/common.hpp"

namespace occkit::geom {

/// Minimum camera-frame depth for a point to count as in front of the
/// camera. Strictly positive so the perspective divide stays bounded.
constexpr double kMinCameraDepth = 1e-3;

using PointSet = std::vector<Eigen::Vector3d>;

/// Rigid transform p' = R p + t.
struct Transform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Transform identity() { return {}; }

  static Transform from_translation(const Eigen::Vector3d& t) {
    Transform out;
    out.translation = t;
    return out;
  }

  /// Rotation about +z by `yaw` radians.
  static Transform from_yaw(double yaw,
                            const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    Transform out;
    const double c = std::cos(yaw), s = std::sin(yaw);
    out.rotation << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    out.translation = t;
    return out;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  /// this ∘ other: (this.compose(other)).apply(p) == this.apply(other.apply(p)).
  Transform compose(const Transform& other) const {
    Transform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  Transform inverse() const {
    Transform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  bool is_rigid(double tol = 1e-9) const {
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) {
      return false;
    }
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Pinhole camera on a feature plane of feature_width x feature_height
/// cells. Integer (u, v) addresses the center of cell (u, v). extrinsic maps
/// reference-frame points into the camera frame (+z forward).
struct CameraModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int feature_width = 1;
  int feature_height = 1;
  Transform extrinsic;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw ConfigError("CameraModel: focal lengths must be positive");
    }
    if (feature_width < 1 || feature_height < 1) {
      throw ConfigError("CameraModel: feature plane dims must be >= 1");
    }
  }
};

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  bool valid = false;
};

/// Project one reference-frame point onto the camera's feature plane.
/// valid iff the camera-frame depth exceeds kMinCameraDepth and the pixel
/// lands inside [0, feature_width) x [0, feature_height). Invalid results
/// carry unspecified u, v.
inline PixelProjection project_point(const CameraModel& cam,
                                     const Eigen::Vector3d& p_ref) {
  const Eigen::Vector3d pc = cam.extrinsic.apply(p_ref);
  PixelProjection out;
  if (pc.z() <= kMinCameraDepth) return out;
  out.u = cam.fx * pc.x() / pc.z() + cam.cx;
  out.v = cam.fy * pc.y() / pc.z() + cam.cy;
  out.valid = out.u >= 0.0 && out.u < cam.feature_width && out.v >= 0.0 &&
              out.v < cam.feature_height;
  return out;
}

inline std::vector<PixelProjection> project_points(const CameraModel& cam,
                                                   const PointSet& pts_ref) {
  std::vector<PixelProjection> out(pts_ref.size());
  for (std::size_t i = 0; i < pts_ref.size(); ++i) {
    out[i] = project_point(cam, pts_ref[i]);
  }
  return out;
}

inline PointSet apply_transform(const Transform& t, const PointSet& pts) {
  PointSet out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = t.apply(pts[i]);
  return out;
}

/// Linear map sending lo -> -1 and hi -> +1.
inline double normalize_coord(double x, double lo, double hi) {
  return (2.0 * (x - lo) - (hi - lo)) / (hi - lo);
}

struct NormalizedXY {
  double x = 0.0;
  double y = 0.0;
  bool in_range = false;  // both coords inside [-1, 1]
};

/// Normalize the XY components of `pts` against the BEV extent
/// [bev_min, bev_max]. Points outside the extent map outside [-1, 1] and
/// come back flagged with in_range = false.
inline std::vector<NormalizedXY> normalize_bev_coords(
    const PointSet& pts, const Eigen::Vector2d& bev_min,
    const Eigen::Vector2d& bev_max) {
  if (!(bev_max.x() > bev_min.x()) || !(bev_max.y() > bev_min.y())) {
    throw ConfigError("normalize_bev_coords: degenerate BEV extent");
  }
  std::vector<NormalizedXY> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    NormalizedXY n;
    n.x = normalize_coord(pts[i].x(), bev_min.x(), bev_max.x());
    n.y = normalize_coord(pts[i].y(), bev_min.y(), bev_max.y());
    n.in_range = n.x >= -1.0 && n.x <= 1.0 && n.y >= -1.0 && n.y <= 1.0;
    out[i] = n;
  }
  return out;
}

}  // namespace occkit::geom
