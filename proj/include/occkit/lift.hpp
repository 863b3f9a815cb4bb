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
#include "occkit/geom.hpp"
#include "occkit/tensor.hpp"

namespace occkit::lift {

/// Predefined 3-D voxel lattice for camera lifting. The footprint is the
/// LiDAR BEV extent; nz height levels span [min_bound.z, max_bound.z].
struct LiftSpec {
  Eigen::Vector3d min_bound = Eigen::Vector3d::Zero();
  Eigen::Vector3d max_bound = Eigen::Vector3d::Ones();
  int nx = 1;  // W/8
  int ny = 1;  // H/8
  int nz = 1;  // Z

  void validate() const {
    if (nx < 1 || ny < 1 || nz < 1) {
      throw ConfigError("LiftSpec: counts must be >= 1");
    }
    for (int a = 0; a < 3; ++a) {
      if (!(max_bound[a] > min_bound[a])) {
        throw ConfigError("LiftSpec: degenerate extent");
      }
    }
  }

  Eigen::Vector3d cell() const {
    return Eigen::Vector3d((max_bound.x() - min_bound.x()) / nx,
                           (max_bound.y() - min_bound.y()) / ny,
                           (max_bound.z() - min_bound.z()) / nz);
  }

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
};

/// Metric centers of all lift voxels, ordered z-major, then y, then x
/// (index (z*ny + y)*nx + x).
inline geom::PointSet voxel_centers(const LiftSpec& spec) {
  spec.validate();
  const Eigen::Vector3d cell = spec.cell();
  geom::PointSet out;
  out.reserve(spec.count());
  for (int z = 0; z < spec.nz; ++z) {
    for (int y = 0; y < spec.ny; ++y) {
      for (int x = 0; x < spec.nx; ++x) {
        out.emplace_back(spec.min_bound.x() + (x + 0.5) * cell.x(),
                         spec.min_bound.y() + (y + 0.5) * cell.y(),
                         spec.min_bound.z() + (z + 0.5) * cell.z());
      }
    }
  }
  return out;
}

/// 4-neighbor bilinear blend on a C x Hf x Wf map at pixel-center
/// coordinates. (u, v) must lie in [0, Wf-1] x [0, Hf-1]; integer
/// coordinates return the stored vector exactly.
inline std::vector<double> bilinear_sample(const DenseTensor& map, double u,
                                           double v) {
  if (map.rank() != 3) {
    throw ContractError("bilinear_sample: map must be C x Hf x Wf");
  }
  const int hf = static_cast<int>(map.dim(1));
  const int wf = static_cast<int>(map.dim(2));
  if (!(u >= 0.0) || !(u <= wf - 1.0) || !(v >= 0.0) || !(v <= hf - 1.0)) {
    throw ContractError("bilinear_sample: coordinates outside the map");
  }
  const int x0 = std::max(0, std::min(static_cast<int>(std::floor(u)), wf - 2));
  const int y0 = std::max(0, std::min(static_cast<int>(std::floor(v)), hf - 2));
  const int x1 = std::min(x0 + 1, wf - 1);
  const int y1 = std::min(y0 + 1, hf - 1);
  const double fx = u - x0;
  const double fy = v - y0;

  const std::size_t channels = map.dim(0);
  std::vector<double> out(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double top = (1.0 - fx) * map(c, y0, x0) + fx * map(c, y0, x1);
    const double bot = (1.0 - fx) * map(c, y1, x0) + fx * map(c, y1, x1);
    out[c] = (1.0 - fy) * top + fy * bot;
  }
  return out;
}

struct CameraView {
  geom::CameraModel model;
  DenseTensor features;  // C_p x feature_height x feature_width
};

/// Surround rig feature maps. All cameras must share channel count and
/// feature-plane dims.
struct CameraFeatureSet {
  std::vector<CameraView> cameras;

  void validate() const {
    if (cameras.empty()) {
      throw ContractError("CameraFeatureSet: no cameras");
    }
    const std::size_t c0 = cameras.front().features.dim(0);
    const std::size_t h0 = cameras.front().features.dim(1);
    const std::size_t w0 = cameras.front().features.dim(2);
    for (const CameraView& cam : cameras) {
      cam.model.validate();
      if (cam.features.rank() != 3) {
        throw ContractError("CameraFeatureSet: features must be C x Hf x Wf");
      }
      if (cam.features.dim(0) != c0 || cam.features.dim(1) != h0 ||
          cam.features.dim(2) != w0) {
        throw ContractError("CameraFeatureSet: cameras disagree on dims");
      }
      if (static_cast<int>(h0) != cam.model.feature_height ||
          static_cast<int>(w0) != cam.model.feature_width) {
        throw ContractError(
            "CameraFeatureSet: feature map does not match camera plane");
      }
    }
  }

  int channels() const {
    return static_cast<int>(cameras.front().features.dim(0));
  }
};

/// Lift camera features into the 3-D grid: project every voxel center into
/// every camera, bilinear-sample valid hits, and average them. Voxels no
/// camera sees come back zero. Hits in the half-open border band
/// [Wf-1, Wf) x [Hf-1, Hf) are rejected so the bilinear support stays
/// inside the map. Output F_c is C_p x Z x ny x nx.
inline DenseTensor lift_features(const CameraFeatureSet& feats,
                                 const LiftSpec& spec) {
  feats.validate();
  spec.validate();
  const geom::PointSet centers = voxel_centers(spec);
  const std::size_t channels = feats.cameras.front().features.dim(0);

  DenseTensor out({channels, static_cast<std::size_t>(spec.nz),
                   static_cast<std::size_t>(spec.ny),
                   static_cast<std::size_t>(spec.nx)});

  parallel_for(centers.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(channels);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      int hits = 0;
      for (const CameraView& cam : feats.cameras) {
        const geom::PixelProjection p =
            geom::project_point(cam.model, centers[i]);
        if (!p.valid || p.u > cam.model.feature_width - 1.0 ||
            p.v > cam.model.feature_height - 1.0) {
          continue;
        }
        const std::vector<double> sample =
            bilinear_sample(cam.features, p.u, p.v);
        for (std::size_t c = 0; c < channels; ++c) acc[c] += sample[c];
        ++hits;
      }
      const int x = static_cast<int>(i) % spec.nx;
      const int y = (static_cast<int>(i) / spec.nx) % spec.ny;
      const int z = static_cast<int>(i) / (spec.nx * spec.ny);
      if (hits > 0) {
        for (std::size_t c = 0; c < channels; ++c) {
          out(c, z, y, x) = acc[c] / hits;
        }
      }
    }
  });
  return out;
}

}  // namespace occkit::lift
