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
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "occkit/common.hpp"
#include "occkit/tensor.hpp"

namespace occkit::voxel {

/// Metric voxel lattice. Axis order throughout the sparse pipeline is
/// (d, h, w) = (z, y, x); dims are derived from extent / voxel_size and must
/// divide evenly (1e-6 tolerance on each ratio).
struct GridSpec {
  Eigen::Vector3d min_bound = Eigen::Vector3d::Zero();
  Eigen::Vector3d max_bound = Eigen::Vector3d::Ones();
  Eigen::Vector3d voxel_size = Eigen::Vector3d::Ones();
  int nx = 1;  // W
  int ny = 1;  // H
  int nz = 1;  // D

  static GridSpec make(const Eigen::Vector3d& min_bound,
                       const Eigen::Vector3d& max_bound,
                       const Eigen::Vector3d& voxel_size) {
    GridSpec s;
    s.min_bound = min_bound;
    s.max_bound = max_bound;
    s.voxel_size = voxel_size;
    int dims[3];
    for (int a = 0; a < 3; ++a) {
      if (!(voxel_size[a] > 0.0)) {
        throw ConfigError("GridSpec: voxel_size must be positive");
      }
      const double ratio = (max_bound[a] - min_bound[a]) / voxel_size[a];
      const double n = std::round(ratio);
      if (std::abs(ratio - n) > 1e-6 || n < 1.0) {
        throw ConfigError("GridSpec: extent/voxel_size not integral on axis " +
                          std::to_string(a));
      }
      dims[a] = static_cast<int>(n);
    }
    s.nx = dims[0];
    s.ny = dims[1];
    s.nz = dims[2];
    return s;
  }

  /// Build from explicit dims; max_bound derived. Used for strided conv
  /// outputs where the metric extent follows the cell count.
  static GridSpec from_dims(const Eigen::Vector3d& min_bound,
                            const Eigen::Vector3d& voxel_size, int nx, int ny,
                            int nz) {
    GridSpec s;
    s.min_bound = min_bound;
    s.voxel_size = voxel_size;
    s.nx = nx;
    s.ny = ny;
    s.nz = nz;
    s.max_bound = min_bound + Eigen::Vector3d(nx * voxel_size.x(),
                                              ny * voxel_size.y(),
                                              nz * voxel_size.z());
    return s;
  }

  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
};

struct PointRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

using PointCloud = std::vector<PointRecord>;

/// Voxel coordinate in (d, h, w) order.
using Coord3 = std::array<int, 3>;

/// Active voxels with uniform-length feature vectors, kept sorted by
/// (d, h, w) so every reduction downstream runs in a fixed order.
struct SparseVoxelGrid {
  GridSpec spec;
  int channels = 0;
  std::vector<Coord3> coords;
  std::vector<double> features;  // coords.size() * channels, row per voxel

  std::size_t active_count() const { return coords.size(); }

  const double* feature_row(std::size_t i) const {
    return features.data() + i * channels;
  }
  double* feature_row(std::size_t i) {
    return features.data() + i * channels;
  }
};

/// Bucket points into voxels: floor((p - min) / voxel_size), points outside
/// the grid dropped, at most `max_points` kept per voxel in input order, and
/// the voxel feature is the mean (x, y, z, intensity) of the kept points.
inline SparseVoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec,
                                int max_points = 10) {
  if (max_points < 1) throw ContractError("voxelize: max_points must be >= 1");

  struct Acc {
    int kept = 0;
    double sum[4] = {0, 0, 0, 0};
  };
  std::unordered_map<std::int64_t, Acc> cells;
  cells.reserve(cloud.size());

  for (const PointRecord& p : cloud) {
    const int ix = static_cast<int>(
        std::floor((p.x - spec.min_bound.x()) / spec.voxel_size.x()));
    const int iy = static_cast<int>(
        std::floor((p.y - spec.min_bound.y()) / spec.voxel_size.y()));
    const int iz = static_cast<int>(
        std::floor((p.z - spec.min_bound.z()) / spec.voxel_size.z()));
    if (ix < 0 || ix >= spec.nx || iy < 0 || iy >= spec.ny || iz < 0 ||
        iz >= spec.nz) {
      continue;
    }
    const std::int64_t key =
        (static_cast<std::int64_t>(iz) * spec.ny + iy) * spec.nx + ix;
    Acc& acc = cells[key];
    if (acc.kept >= max_points) continue;
    acc.kept += 1;
    acc.sum[0] += p.x;
    acc.sum[1] += p.y;
    acc.sum[2] += p.z;
    acc.sum[3] += p.intensity;
  }

  std::vector<std::pair<std::int64_t, Acc>> entries(cells.begin(), cells.end());
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  SparseVoxelGrid grid;
  grid.spec = spec;
  grid.channels = 4;
  grid.coords.reserve(entries.size());
  grid.features.reserve(entries.size() * 4);
  for (const auto& [key, acc] : entries) {
    const int ix = static_cast<int>(key % spec.nx);
    const int iy = static_cast<int>((key / spec.nx) % spec.ny);
    const int iz = static_cast<int>(key / (static_cast<std::int64_t>(spec.nx) *
                                           spec.ny));
    grid.coords.push_back({iz, iy, ix});
    for (int c = 0; c < 4; ++c) {
      grid.features.push_back(acc.sum[c] / acc.kept);
    }
  }
  return grid;
}

enum class ConvMode { kSubmanifold, kRegular };

/// 3D convolution kernel, weights laid out [co][ci][dz][dy][dx].
struct ConvKernel3D {
  int out_channels = 0;
  int in_channels = 0;
  int k = 3;
  std::array<int, 3> stride = {1, 1, 1};  // (z, y, x)
  ConvMode mode = ConvMode::kRegular;
  std::vector<double> weights;

  double weight(int co, int ci, int dz, int dy, int dx) const {
    return weights[(((static_cast<std::size_t>(co) * in_channels + ci) * k +
                     dz) *
                        k +
                    dy) *
                       k +
                   dx];
  }

  void validate() const {
    if (k < 1 || k % 2 == 0) throw ConfigError("ConvKernel3D: k must be odd");
    for (int s : stride) {
      if (s < 1) throw ConfigError("ConvKernel3D: stride must be >= 1");
    }
    const std::size_t want = static_cast<std::size_t>(out_channels) *
                             in_channels * k * k * k;
    if (weights.size() != want) {
      throw ContractError("ConvKernel3D: weight count mismatch");
    }
  }

  /// Identity kernel: center tap only, out channel i reads in channel i.
  static ConvKernel3D identity(int channels, int k = 3,
                               ConvMode mode = ConvMode::kSubmanifold) {
    ConvKernel3D kern;
    kern.out_channels = channels;
    kern.in_channels = channels;
    kern.k = k;
    kern.mode = mode;
    kern.weights.assign(
        static_cast<std::size_t>(channels) * channels * k * k * k, 0.0);
    const int r = k / 2;
    for (int c = 0; c < channels; ++c) {
      kern.weights[(((static_cast<std::size_t>(c) * channels + c) * k + r) * k +
                    r) *
                       k +
                   r] = 1.0;
    }
    return kern;
  }

  /// Uniform init in [-a, a], a = fan_in^(-1/2), drawn from a named stream.
  static ConvKernel3D seeded(std::uint64_t seed, std::string_view name,
                             int out_channels, int in_channels, int k,
                             std::array<int, 3> stride, ConvMode mode) {
    ConvKernel3D kern;
    kern.out_channels = out_channels;
    kern.in_channels = in_channels;
    kern.k = k;
    kern.stride = stride;
    kern.mode = mode;
    const double a = 1.0 / std::sqrt(static_cast<double>(in_channels) * k * k * k);
    SeededStream stream(seed, name);
    const std::size_t n = static_cast<std::size_t>(out_channels) * in_channels *
                          k * k * k;
    kern.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      kern.weights[i] = stream.uniform(-a, a);
    }
    return kern;
  }
};

namespace detail {

inline std::int64_t site_key(const Coord3& c, const GridSpec& spec) {
  return (static_cast<std::int64_t>(c[0]) * spec.ny + c[1]) * spec.nx + c[2];
}

}  // namespace detail

/// Sparse 3D convolution, numerically identical to a dense zero-padded
/// convolution restricted to the active sites.
///
/// Regular mode evaluates the dense stride-1 convolution at every site that
/// receives at least one contribution, then keeps the sites whose coordinates
/// are divisible by the stride (output coord = site / stride). Submanifold
/// mode keeps the input active set and requires stride 1.
inline SparseVoxelGrid sparse_conv3d(const SparseVoxelGrid& grid,
                                     const ConvKernel3D& kernel) {
  kernel.validate();
  if (kernel.in_channels != grid.channels) {
    throw ContractError("sparse_conv3d: kernel expects " +
                        std::to_string(kernel.in_channels) +
                        " input channels, grid has " +
                        std::to_string(grid.channels));
  }
  const GridSpec& in_spec = grid.spec;
  const int r = kernel.k / 2;

  std::unordered_map<std::int64_t, std::size_t> lookup;
  lookup.reserve(grid.active_count() * 2);
  for (std::size_t i = 0; i < grid.coords.size(); ++i) {
    if (!lookup.emplace(detail::site_key(grid.coords[i], in_spec), i).second) {
      throw ContractError("sparse_conv3d: duplicate active coordinate");
    }
  }

  SparseVoxelGrid out;
  out.channels = kernel.out_channels;

  if (kernel.mode == ConvMode::kSubmanifold) {
    if (kernel.stride != std::array<int, 3>{1, 1, 1}) {
      throw ContractError("sparse_conv3d: submanifold mode requires stride 1");
    }
    out.spec = in_spec;
    out.coords = grid.coords;
  } else {
    const std::array<int, 3> s = kernel.stride;
    const int onz = (in_spec.nz + s[0] - 1) / s[0];
    const int ony = (in_spec.ny + s[1] - 1) / s[1];
    const int onx = (in_spec.nx + s[2] - 1) / s[2];
    out.spec = GridSpec::from_dims(
        in_spec.min_bound,
        Eigen::Vector3d(in_spec.voxel_size.x() * s[2],
                        in_spec.voxel_size.y() * s[1],
                        in_spec.voxel_size.z() * s[0]),
        onx, ony, onz);

    std::vector<Coord3> candidates;
    candidates.reserve(grid.active_count() * 8);
    for (const Coord3& p : grid.coords) {
      for (int dz = -r; dz <= r; ++dz) {
        const int z = p[0] + dz;
        if (z < 0 || z >= in_spec.nz || z % s[0] != 0) continue;
        for (int dy = -r; dy <= r; ++dy) {
          const int y = p[1] + dy;
          if (y < 0 || y >= in_spec.ny || y % s[1] != 0) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int x = p[2] + dx;
            if (x < 0 || x >= in_spec.nx || x % s[2] != 0) continue;
            candidates.push_back({z / s[0], y / s[1], x / s[2]});
          }
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    out.coords = std::move(candidates);
  }

  out.features.assign(out.coords.size() * kernel.out_channels, 0.0);
  const std::array<int, 3> s = kernel.mode == ConvMode::kRegular
                                   ? kernel.stride
                                   : std::array<int, 3>{1, 1, 1};

  parallel_for(out.coords.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Coord3& q = out.coords[i];
      const Coord3 site = {q[0] * s[0], q[1] * s[1], q[2] * s[2]};
      double* dst = out.feature_row(i);
      for (int dz = 0; dz < kernel.k; ++dz) {
        const int z = site[0] + dz - r;
        if (z < 0 || z >= in_spec.nz) continue;
        for (int dy = 0; dy < kernel.k; ++dy) {
          const int y = site[1] + dy - r;
          if (y < 0 || y >= in_spec.ny) continue;
          for (int dx = 0; dx < kernel.k; ++dx) {
            const int x = site[2] + dx - r;
            if (x < 0 || x >= in_spec.nx) continue;
            const auto it = lookup.find(detail::site_key({z, y, x}, in_spec));
            if (it == lookup.end()) continue;
            const double* src = grid.feature_row(it->second);
            for (int co = 0; co < kernel.out_channels; ++co) {
              double acc = 0.0;
              for (int ci = 0; ci < kernel.in_channels; ++ci) {
                acc += kernel.weight(co, ci, dz, dy, dx) * src[ci];
              }
              dst[co] += acc;
            }
          }
        }
      }
    }
  });
  return out;
}

/// Scatter the active voxels into a zero C x D x H x W tensor.
inline DenseTensor densify(const SparseVoxelGrid& grid) {
  DenseTensor out({static_cast<std::size_t>(grid.channels),
                   static_cast<std::size_t>(grid.spec.nz),
                   static_cast<std::size_t>(grid.spec.ny),
                   static_cast<std::size_t>(grid.spec.nx)});
  for (std::size_t i = 0; i < grid.coords.size(); ++i) {
    const Coord3& c = grid.coords[i];
    const double* src = grid.feature_row(i);
    for (int ch = 0; ch < grid.channels; ++ch) {
      out(ch, c[0], c[1], c[2]) = src[ch];
    }
  }
  return out;
}

inline void relu_inplace(SparseVoxelGrid& grid) {
  for (double& f : grid.features) f = std::max(0.0, f);
}

/// Four-stage sparse encoder compressing z by 16 and x, y by 8:
/// submanifold 3^3, then regular 3^3 convs at strides (2,2,2), (2,2,2),
/// (4,2,2) on (z,y,x). Bias-free; ReLU between stages unless disabled.
struct LidarEncoder {
  std::vector<ConvKernel3D> layers;
  bool relu_enabled = true;

  static LidarEncoder seeded(std::uint64_t seed, int in_channels = 4,
                             int channels = 32) {
    LidarEncoder enc;
    enc.layers.push_back(ConvKernel3D::seeded(seed, "lidar_encoder/stage0",
                                              channels, in_channels, 3,
                                              {1, 1, 1},
                                              ConvMode::kSubmanifold));
    enc.layers.push_back(ConvKernel3D::seeded(seed, "lidar_encoder/stage1",
                                              channels, channels, 3, {2, 2, 2},
                                              ConvMode::kRegular));
    enc.layers.push_back(ConvKernel3D::seeded(seed, "lidar_encoder/stage2",
                                              channels, channels, 3, {2, 2, 2},
                                              ConvMode::kRegular));
    enc.layers.push_back(ConvKernel3D::seeded(seed, "lidar_encoder/stage3",
                                              channels, channels, 3, {4, 2, 2},
                                              ConvMode::kRegular));
    return enc;
  }

  int out_channels() const { return layers.back().out_channels; }

  /// F_l = densify(conv stack), shape C x D/16 x H/8 x W/8.
  DenseTensor encode(const SparseVoxelGrid& grid) const {
    const GridSpec& spec = grid.spec;
    if (spec.nz % 16 != 0 || spec.ny % 8 != 0 || spec.nx % 8 != 0) {
      throw ConfigError("LidarEncoder: dims must satisfy D%16 == H%8 == W%8 == 0");
    }
    SparseVoxelGrid cur = grid;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      cur = sparse_conv3d(cur, layers[i]);
      if (relu_enabled && i + 1 < layers.size()) relu_inplace(cur);
    }
    return densify(cur);
  }
};

}  // namespace occkit::voxel
