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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "occkit/bevfuse.hpp"
#include "occkit/common.hpp"

namespace occkit::eval {

/// Dense semantic occupancy volume. labels (and the optional
/// camera-visibility mask) are stored in the linear order
/// (x*Y_o + y)*Z_o + z.
struct OccupancyGrid {
  bevfuse::OccGridSpec spec;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> mask;  // empty = no mask
  std::uint8_t free_class = 0;
  int class_count = 1;

  void validate() const {
    if (labels.size() != spec.voxel_count()) {
      throw ContractError("OccupancyGrid: label count mismatch");
    }
    if (!mask.empty() && mask.size() != labels.size()) {
      throw ContractError("OccupancyGrid: mask length mismatch");
    }
    for (std::uint8_t l : labels) {
      if (l >= class_count) {
        throw ContractError("OccupancyGrid: label out of range");
      }
    }
  }

  std::uint8_t label(int x, int y, int z) const {
    return labels[spec.linear(x, y, z)];
  }
};

struct RaySet {
  std::vector<Eigen::Vector3d> origins;
  std::vector<Eigen::Vector3d> directions;

  void validate() const {
    if (origins.size() != directions.size()) {
      throw ContractError("RaySet: origin/direction count mismatch");
    }
    for (const Eigen::Vector3d& d : directions) {
      if (std::abs(d.norm() - 1.0) > 1e-9) {
        throw ContractError("RaySet: direction not unit-norm");
      }
    }
  }

  std::size_t size() const { return origins.size(); }
};

namespace detail {

inline void require_matching(const OccupancyGrid& pred,
                             const OccupancyGrid& gt) {
  pred.validate();
  gt.validate();
  if (!pred.spec.same_lattice(gt.spec)) {
    throw ContractError("occupancy grids cover different lattices");
  }
}

/// Supervised-voxel test: the gt mask gates both grids when requested.
inline bool counted(const OccupancyGrid& gt, std::size_t i, bool use_mask) {
  return !use_mask || gt.mask.empty() || gt.mask[i] != 0;
}

}  // namespace detail

/// Geometric IoU of occupied (label != free) voxels. An empty union counts
/// as perfect agreement.
inline double voxel_iou(const OccupancyGrid& pred, const OccupancyGrid& gt,
                        bool use_mask = false) {
  detail::require_matching(pred, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (!detail::counted(gt, i, use_mask)) continue;
    const bool p = pred.labels[i] != pred.free_class;
    const bool g = gt.labels[i] != gt.free_class;
    if (p && g) ++inter;
    if (p || g) ++uni;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

struct MiouResult {
  std::vector<double> class_iou;       // size K; valid only where counted
  std::vector<std::uint8_t> counted;   // class present in pred or gt
  double mean = 1.0;
};

/// Per-class IoU excluding the free class; classes absent from both grids
/// (over counted voxels) are excluded from the mean.
inline MiouResult miou(const OccupancyGrid& pred, const OccupancyGrid& gt,
                       bool use_mask = false) {
  detail::require_matching(pred, gt);
  const int k = gt.class_count;
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (!detail::counted(gt, i, use_mask)) continue;
    const std::uint8_t p = pred.labels[i];
    const std::uint8_t g = gt.labels[i];
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  MiouResult out;
  out.class_iou.assign(k, 0.0);
  out.counted.assign(k, 0);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < k; ++c) {
    if (c == gt.free_class) continue;
    const std::size_t denom = tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    out.counted[c] = 1;
    out.class_iou[c] = static_cast<double>(tp[c]) / denom;
    sum += out.class_iou[c];
    ++n;
  }
  out.mean = n == 0 ? 1.0 : sum / n;
  return out;
}

struct RayHit {
  int ix = 0, iy = 0, iz = 0;
  double depth = 0.0;
  std::uint8_t cls = 0;
};

/// Amanatides-Woo integer DDA: walk voxels from the ray's grid entry and
/// return the first non-free voxel with the metric distance to its entry
/// face. An origin inside an occupied voxel reports that voxel at depth 0.
/// Axis ties step x, then y, then z.
inline std::optional<RayHit> raycast_first_hit(const OccupancyGrid& grid,
                                               const Eigen::Vector3d& origin,
                                               const Eigen::Vector3d& dir) {
  const bevfuse::OccGridSpec& spec = grid.spec;
  const Eigen::Vector3d lo = spec.min_bound;
  const Eigen::Vector3d hi = spec.max_bound();
  const std::array<int, 3> dims = {spec.nx, spec.ny, spec.nz};
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Slab-method entry distance; 0 when the origin is already inside.
  double t_entry = 0.0, t_exit = kInf;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] >= hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - origin[a]) / dir[a];
    double t1 = (hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_entry = std::max(t_entry, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_entry > t_exit) return std::nullopt;

  double t = t_entry;
  const Eigen::Vector3d p = origin + t * dir;
  std::array<int, 3> v;
  for (int a = 0; a < 3; ++a) {
    v[a] = static_cast<int>(std::floor((p[a] - lo[a]) / spec.res));
    v[a] = std::max(0, std::min(v[a], dims[a] - 1));
  }

  std::array<int, 3> step;
  std::array<double, 3> t_max, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (lo[a] + (v[a] + 1) * spec.res - origin[a]) / dir[a];
      t_delta[a] = spec.res / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (lo[a] + v[a] * spec.res - origin[a]) / dir[a];
      t_delta[a] = -spec.res / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }

  while (true) {
    const std::uint8_t cls = grid.label(v[0], v[1], v[2]);
    if (cls != grid.free_class) {
      return RayHit{v[0], v[1], v[2], t, cls};
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t = t_max[axis];
    t_max[axis] += t_delta[axis];
    v[axis] += step[axis];
    if (v[axis] < 0 || v[axis] >= dims[axis]) return std::nullopt;
  }
}

struct RayIouAtTau {
  double tau = 0.0;
  double mean = 1.0;
  std::vector<double> class_iou;      // size K
  std::vector<std::uint8_t> counted;  // class present among gt ray hits
};

struct RayIouResult {
  std::vector<RayIouAtTau> per_tau;  // ascending tau order
};

/// Ray-based IoU: compare first hits per ray. At threshold tau a ray is a
/// true positive for its class iff both grids hit, the classes match, and
/// the entry depths differ by at most tau. Class mismatches contribute one
/// FP (pred class) and one FN (gt class); a depth miss contributes both to
/// the shared class. The score is the mean per-class IoU over classes that
/// appear among the gt ray hits.
inline RayIouResult rayiou(const OccupancyGrid& pred, const OccupancyGrid& gt,
                           const RaySet& rays,
                           const std::vector<double>& thresholds = {1.0, 2.0,
                                                                    4.0}) {
  detail::require_matching(pred, gt);
  rays.validate();

  struct PerRay {
    bool pred_hit = false, gt_hit = false;
    std::uint8_t pred_cls = 0, gt_cls = 0;
    double pred_depth = 0.0, gt_depth = 0.0;
  };
  std::vector<PerRay> hits(rays.size());
  parallel_for(rays.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (const auto h = raycast_first_hit(pred, rays.origins[i],
                                           rays.directions[i])) {
        hits[i].pred_hit = true;
        hits[i].pred_cls = h->cls;
        hits[i].pred_depth = h->depth;
      }
      if (const auto h =
              raycast_first_hit(gt, rays.origins[i], rays.directions[i])) {
        hits[i].gt_hit = true;
        hits[i].gt_cls = h->cls;
        hits[i].gt_depth = h->depth;
      }
    }
  });

  const int k = gt.class_count;
  RayIouResult out;
  for (const double tau : thresholds) {
    std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    std::vector<std::uint8_t> in_gt(k, 0);
    for (const PerRay& r : hits) {
      if (r.gt_hit) in_gt[r.gt_cls] = 1;
      if (r.pred_hit && r.gt_hit) {
        if (r.pred_cls == r.gt_cls) {
          if (std::abs(r.pred_depth - r.gt_depth) <= tau) {
            ++tp[r.gt_cls];
          } else {
            ++fp[r.pred_cls];
            ++fn[r.gt_cls];
          }
        } else {
          ++fp[r.pred_cls];
          ++fn[r.gt_cls];
        }
      } else if (r.pred_hit) {
        ++fp[r.pred_cls];
      } else if (r.gt_hit) {
        ++fn[r.gt_cls];
      }
    }
    RayIouAtTau at;
    at.tau = tau;
    at.class_iou.assign(k, 0.0);
    at.counted = in_gt;
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < k; ++c) {
      if (!in_gt[c]) continue;
      const std::size_t denom = tp[c] + fp[c] + fn[c];
      at.class_iou[c] = denom == 0 ? 1.0 : static_cast<double>(tp[c]) / denom;
      sum += at.class_iou[c];
      ++n;
    }
    at.mean = n == 0 ? 1.0 : sum / n;
    out.per_tau.push_back(std::move(at));
  }
  return out;
}

/// Regular angular ray lattice from one origin, elevation-major: azimuths
/// 2*pi*j/A, elevations spanning [lo, hi] inclusive (band midpoint when
/// E == 1).
inline RaySet default_rayset(const Eigen::Vector3d& origin, int azimuths,
                             int elevations,
                             double elev_lo = -10.0 * M_PI / 180.0,
                             double elev_hi = 10.0 * M_PI / 180.0) {
  if (azimuths < 1 || elevations < 1) {
    throw ContractError("default_rayset: counts must be >= 1");
  }
  RaySet rays;
  rays.origins.reserve(static_cast<std::size_t>(azimuths) * elevations);
  rays.directions.reserve(rays.origins.capacity());
  for (int e = 0; e < elevations; ++e) {
    const double elev =
        elevations == 1
            ? 0.5 * (elev_lo + elev_hi)
            : elev_lo + e * (elev_hi - elev_lo) / (elevations - 1);
    for (int j = 0; j < azimuths; ++j) {
      const double az = 2.0 * M_PI * j / azimuths;
      rays.origins.push_back(origin);
      rays.directions.emplace_back(std::cos(elev) * std::cos(az),
                                   std::cos(elev) * std::sin(az),
                                   std::sin(elev));
    }
  }
  return rays;
}

}  // namespace occkit::eval
