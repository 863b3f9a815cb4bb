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
#include <string>
#include <vector>

#include "occkit/common.hpp"
#include "occkit/geom.hpp"
#include "occkit/tensor.hpp"
#include "occkit/voxel.hpp"

namespace occkit::bevfuse {

/// BEV feature map: channels x d1 x d2 plus the metric XY extent it covers.
/// F_f and F_r are laid out [c][y][x]; F_occ is laid out [c][x][y].
struct BevTensor {
  DenseTensor data;
  Eigen::Vector2d min_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d max_xy = Eigen::Vector2d::Ones();

  bool same_extent(const BevTensor& other, double tol = 1e-9) const {
    return (min_xy - other.min_xy).cwiseAbs().maxCoeff() <= tol &&
           (max_xy - other.max_xy).cwiseAbs().maxCoeff() <= tol;
  }
};

/// Occupancy lattice: cubic voxels of side `res`, dims X_o x Y_o x Z_o,
/// plus the rigid transform T_o2l mapping occupancy-frame points into the
/// LiDAR/BEV reference frame. Linear voxel index = (x*Y_o + y)*Z_o + z.
struct OccGridSpec {
  Eigen::Vector3d min_bound = Eigen::Vector3d::Zero();
  double res = 1.0;
  int nx = 1;  // X_o
  int ny = 1;  // Y_o
  int nz = 1;  // Z_o
  geom::Transform t_o2l;

  static OccGridSpec make(const Eigen::Vector3d& min_bound,
                          const Eigen::Vector3d& max_bound, double res,
                          const geom::Transform& t_o2l = {}) {
    if (!(res > 0.0)) throw ConfigError("OccGridSpec: res must be positive");
    OccGridSpec s;
    s.min_bound = min_bound;
    s.res = res;
    s.t_o2l = t_o2l;
    int dims[3];
    for (int a = 0; a < 3; ++a) {
      const double ratio = (max_bound[a] - min_bound[a]) / res;
      const double n = std::round(ratio);
      if (std::abs(ratio - n) > 1e-6 || n < 1.0) {
        throw ConfigError("OccGridSpec: extent/res not integral on axis " +
                          std::to_string(a));
      }
      dims[a] = static_cast<int>(n);
    }
    s.nx = dims[0];
    s.ny = dims[1];
    s.nz = dims[2];
    return s;
  }

  Eigen::Vector3d max_bound() const {
    return min_bound + res * Eigen::Vector3d(nx, ny, nz);
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }

  std::size_t linear(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;
  }

  Eigen::Vector3d center(int x, int y, int z) const {
    return min_bound + res * Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5);
  }

  /// Same lattice geometry (transform excluded).
  bool same_lattice(const OccGridSpec& other, double tol = 1e-9) const {
    return nx == other.nx && ny == other.ny && nz == other.nz &&
           std::abs(res - other.res) <= tol &&
           (min_bound - other.min_bound).cwiseAbs().maxCoeff() <= tol;
  }
};

/// Dense 2-D convolution, zero-padded "same" taps, bias-free.
/// input: C_in x H x W; weights: C_out x C_in x k x k (k odd); output:
/// C_out x ceil(H/sy) x ceil(W/sx).
inline DenseTensor conv2d(const DenseTensor& input, const DenseTensor& weights,
                          int stride_y = 1, int stride_x = 1) {
  if (input.rank() != 3 || weights.rank() != 4) {
    throw ContractError("conv2d: input must be CxHxW, weights CoxCixKxK");
  }
  const std::size_t ci = weights.dim(1);
  const int k = static_cast<int>(weights.dim(2));
  if (weights.dim(3) != static_cast<std::size_t>(k) || k % 2 == 0) {
    throw ContractError("conv2d: kernel must be square with odd k");
  }
  if (input.dim(0) != ci) {
    throw ContractError("conv2d: channel mismatch, input " +
                        std::to_string(input.dim(0)) + " vs weights " +
                        std::to_string(ci));
  }
  if (stride_y < 1 || stride_x < 1) {
    throw ContractError("conv2d: stride must be >= 1");
  }
  const int h = static_cast<int>(input.dim(1));
  const int w = static_cast<int>(input.dim(2));
  const int oh = (h + stride_y - 1) / stride_y;
  const int ow = (w + stride_x - 1) / stride_x;
  const std::size_t co = weights.dim(0);
  const int r = k / 2;

  DenseTensor out({co, static_cast<std::size_t>(oh),
                   static_cast<std::size_t>(ow)});
  const std::size_t cells = static_cast<std::size_t>(oh) * ow;
  parallel_for(cells, [&](std::size_t begin, std::size_t end) {
    for (std::size_t cell = begin; cell < end; ++cell) {
      const int oy = static_cast<int>(cell) / ow;
      const int ox = static_cast<int>(cell) % ow;
      for (std::size_t c = 0; c < co; ++c) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride_y + ky - r;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride_x + kx - r;
            if (ix < 0 || ix >= w) continue;
            for (std::size_t cc = 0; cc < ci; ++cc) {
              acc += weights(c, cc, ky, kx) * input(cc, iy, ix);
            }
          }
        }
        out(c, oy, ox) = acc;
      }
    }
  });
  return out;
}

/// Uniform seeded init, a = (C_in * k * k)^(-1/2), matching the voxel
/// module's scheme.
inline DenseTensor seeded_conv2d_weights(std::uint64_t seed,
                                         std::string_view name,
                                         std::size_t out_channels,
                                         std::size_t in_channels,
                                         std::size_t k) {
  DenseTensor w({out_channels, in_channels, k, k});
  const double a = 1.0 / std::sqrt(static_cast<double>(in_channels) * k * k);
  SeededStream stream(seed, name);
  for (double& v : w.data()) v = stream.uniform(-a, a);
  return w;
}

inline DenseTensor identity_conv1x1(std::size_t channels) {
  DenseTensor w({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) w(c, c, 0, 0) = 1.0;
  return w;
}

inline void relu_inplace(DenseTensor& t) {
  for (double& v : t.data()) v = std::max(0.0, v);
}

/// Collapse a C x Z x H' x W' volume to the BEV plane: stack z-slices into
/// channels (stacked index = c*Z + z), then a 1x1 convolution back down.
/// weights: C_out x (C*Z) x 1 x 1.
inline BevTensor height_compress(const DenseTensor& volume,
                                 const DenseTensor& weights,
                                 const Eigen::Vector2d& min_xy,
                                 const Eigen::Vector2d& max_xy) {
  if (volume.rank() != 4) {
    throw ContractError("height_compress: volume must be C x Z x H x W");
  }
  const std::size_t c = volume.dim(0), z = volume.dim(1);
  const std::size_t h = volume.dim(2), w = volume.dim(3);
  DenseTensor stacked({c * z, h, w});
  // Same memory order: [c][z] flattens to channel c*Z + z.
  stacked.data() = volume.data();
  BevTensor out;
  out.data = conv2d(stacked, weights);
  out.min_xy = min_xy;
  out.max_xy = max_xy;
  return out;
}

/// Concatenate camera-first along channels, then one 3x3 zero-padded conv.
inline BevTensor fuse_bev(const BevTensor& bev_cam, const BevTensor& bev_lidar,
                          const DenseTensor& weights) {
  if (bev_cam.data.rank() != 3 || bev_lidar.data.rank() != 3 ||
      bev_cam.data.dim(1) != bev_lidar.data.dim(1) ||
      bev_cam.data.dim(2) != bev_lidar.data.dim(2)) {
    throw ConfigError("fuse_bev: spatial dims differ");
  }
  if (!bev_cam.same_extent(bev_lidar)) {
    throw ConfigError("fuse_bev: BEV extents differ");
  }
  const std::size_t cc = bev_cam.data.dim(0), cl = bev_lidar.data.dim(0);
  const std::size_t h = bev_cam.data.dim(1), w = bev_cam.data.dim(2);
  DenseTensor cat({cc + cl, h, w});
  std::copy(bev_cam.data.data().begin(), bev_cam.data.data().end(),
            cat.data().begin());
  std::copy(bev_lidar.data.data().begin(), bev_lidar.data.data().end(),
            cat.data().begin() + bev_cam.data.size());
  BevTensor out;
  out.data = conv2d(cat, weights);
  out.min_xy = bev_cam.min_xy;
  out.max_xy = bev_cam.max_xy;
  return out;
}

/// Bilinear upsampling by an integer factor with cell-center alignment:
/// output cell i samples input coordinate (i + 0.5)/f - 0.5, border-clamped.
inline DenseTensor upsample_bilinear(const DenseTensor& input, int factor) {
  if (input.rank() != 3) {
    throw ContractError("upsample_bilinear: input must be C x H x W");
  }
  if (factor < 1) throw ContractError("upsample_bilinear: factor must be >= 1");
  const std::size_t c = input.dim(0);
  const int h = static_cast<int>(input.dim(1));
  const int w = static_cast<int>(input.dim(2));
  const int oh = h * factor, ow = w * factor;
  DenseTensor out({c, static_cast<std::size_t>(oh),
                   static_cast<std::size_t>(ow)});
  parallel_for(static_cast<std::size_t>(oh), [&](std::size_t begin,
                                                 std::size_t end) {
    for (std::size_t oy = begin; oy < end; ++oy) {
      double v = (oy + 0.5) / factor - 0.5;
      v = std::min(std::max(v, 0.0), static_cast<double>(h - 1));
      const int y0 = std::max(0, std::min(static_cast<int>(std::floor(v)),
                                          h - 2));
      const int y1 = std::min(y0 + 1, h - 1);
      const double fy = v - y0;
      for (int ox = 0; ox < ow; ++ox) {
        double u = (ox + 0.5) / factor - 0.5;
        u = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
        const int x0 = std::max(0, std::min(static_cast<int>(std::floor(u)),
                                            w - 2));
        const int x1 = std::min(x0 + 1, w - 1);
        const double fx = u - x0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double top =
              (1.0 - fx) * input(ch, y0, x0) + fx * input(ch, y0, x1);
          const double bot =
              (1.0 - fx) * input(ch, y1, x0) + fx * input(ch, y1, x1);
          out(ch, oy, ox) = (1.0 - fy) * top + fy * bot;
        }
      }
    }
  });
  return out;
}

/// Pre-activation residual block: out = skip(x) + conv2(relu(conv1(x))).
/// An empty skip means identity (legal only at stride 1 with matching
/// channels); zeroing the branch weights then passes x through exactly.
struct ResidualBlock {
  DenseTensor conv1;  // C_out x C_in x 3 x 3, applied at the block stride
  DenseTensor conv2;  // C_out x C_out x 3 x 3, stride 1
  DenseTensor skip;   // C_out x C_in x 1 x 1 at the block stride; empty = identity
  int stride = 1;

  DenseTensor apply(const DenseTensor& x, bool relu) const {
    DenseTensor h = conv2d(x, conv1, stride, stride);
    if (relu) relu_inplace(h);
    h = conv2d(h, conv2);
    DenseTensor base;
    if (skip.empty()) {
      if (stride != 1 || conv1.dim(0) != x.dim(0)) {
        throw ContractError(
            "ResidualBlock: identity skip needs stride 1 and equal channels");
      }
      base = x;
    } else {
      base = conv2d(x, skip, stride, stride);
    }
    for (std::size_t i = 0; i < h.size(); ++i) {
      h.data()[i] += base.data()[i];
    }
    return h;
  }

  static ResidualBlock seeded(std::uint64_t seed, std::string_view name,
                              std::size_t out_channels,
                              std::size_t in_channels, int stride) {
    ResidualBlock b;
    b.stride = stride;
    b.conv1 = seeded_conv2d_weights(seed, std::string(name) + "/conv1",
                                    out_channels, in_channels, 3);
    b.conv2 = seeded_conv2d_weights(seed, std::string(name) + "/conv2",
                                    out_channels, out_channels, 3);
    if (stride != 1 || out_channels != in_channels) {
      b.skip = seeded_conv2d_weights(seed, std::string(name) + "/skip",
                                     out_channels, in_channels, 1);
    }
    return b;
  }
};

/// Three residual stages at strides 1, 2, 2 plus a two-scale merge:
/// F_f2 (1/4 res) is bilinearly upsampled x4, concatenated with F_f0
/// (full res), and fused by one 3x3 conv to C_r channels.
struct BevEncoderWeights {
  ResidualBlock stage1, stage2, stage3;
  DenseTensor fuse;  // C_r x (C_stage1 + C_stage3) x 3 x 3
  bool relu = true;

  static BevEncoderWeights seeded(std::uint64_t seed, std::size_t in_channels,
                                  std::size_t mid_channels,
                                  std::size_t out_channels) {
    BevEncoderWeights w;
    w.stage1 = ResidualBlock::seeded(seed, "bev/stage1", in_channels,
                                     in_channels, 1);
    w.stage2 = ResidualBlock::seeded(seed, "bev/stage2", mid_channels,
                                     in_channels, 2);
    w.stage3 = ResidualBlock::seeded(seed, "bev/stage3", mid_channels,
                                     mid_channels, 2);
    w.fuse = seeded_conv2d_weights(seed, "bev/fuse", out_channels,
                                   in_channels + mid_channels, 3);
    return w;
  }
};

inline BevTensor bev_encode(const BevTensor& f, const BevEncoderWeights& w) {
  if (f.data.rank() != 3) {
    throw ContractError("bev_encode: input must be C x H x W");
  }
  if (f.data.dim(1) % 4 != 0 || f.data.dim(2) % 4 != 0) {
    throw ConfigError("bev_encode: H and W must be divisible by 4");
  }
  const DenseTensor f0 = w.stage1.apply(f.data, w.relu);
  const DenseTensor f1 = w.stage2.apply(f0, w.relu);
  const DenseTensor f2 = w.stage3.apply(f1, w.relu);
  const DenseTensor up = upsample_bilinear(f2, 4);

  DenseTensor cat({f0.dim(0) + up.dim(0), f0.dim(1), f0.dim(2)});
  std::copy(f0.data().begin(), f0.data().end(), cat.data().begin());
  std::copy(up.data().begin(), up.data().end(),
            cat.data().begin() + f0.size());
  BevTensor out;
  out.data = conv2d(cat, w.fuse);
  out.min_xy = f.min_xy;
  out.max_xy = f.max_xy;
  return out;
}

namespace detail {

/// Precomputed bilinear taps for one occupancy XY cell.
struct SamplePlan {
  bool inside = false;
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  double w00 = 0, w01 = 0, w10 = 0, w11 = 0;  // (y0x0, y0x1, y1x0, y1x1)
};

/// Map normalized [-1,1] to the pixel-center coordinate on an n-cell axis.
/// Coordinates within 1e-9 of an integer snap to it so coincident grids
/// reproduce source cells bit-exactly.
inline double norm_to_pixel(double n, int cells) {
  double u = 0.5 * (n + 1.0) * cells - 0.5;
  const double r = std::round(u);
  if (std::abs(u - r) <= 1e-9) u = r;
  return u;
}

inline std::vector<SamplePlan> bvre_plan(const BevTensor& f_r,
                                         const OccGridSpec& occ) {
  const int hp = static_cast<int>(f_r.data.dim(1));  // y cells
  const int wp = static_cast<int>(f_r.data.dim(2));  // x cells
  std::vector<SamplePlan> plans(static_cast<std::size_t>(occ.nx) * occ.ny);
  for (int ix = 0; ix < occ.nx; ++ix) {
    for (int iy = 0; iy < occ.ny; ++iy) {
      const Eigen::Vector3d p_o(occ.min_bound.x() + (ix + 0.5) * occ.res,
                                occ.min_bound.y() + (iy + 0.5) * occ.res, 0.0);
      const Eigen::Vector3d p_l = occ.t_o2l.apply(p_o);
      const double nxc =
          geom::normalize_coord(p_l.x(), f_r.min_xy.x(), f_r.max_xy.x());
      const double nyc =
          geom::normalize_coord(p_l.y(), f_r.min_xy.y(), f_r.max_xy.y());
      SamplePlan& plan = plans[static_cast<std::size_t>(ix) * occ.ny + iy];
      if (nxc < -1.0 || nxc > 1.0 || nyc < -1.0 || nyc > 1.0) continue;
      double u = norm_to_pixel(nxc, wp);
      double v = norm_to_pixel(nyc, hp);
      u = std::min(std::max(u, 0.0), static_cast<double>(wp - 1));
      v = std::min(std::max(v, 0.0), static_cast<double>(hp - 1));
      plan.inside = true;
      plan.x0 = std::max(0, std::min(static_cast<int>(std::floor(u)), wp - 2));
      plan.y0 = std::max(0, std::min(static_cast<int>(std::floor(v)), hp - 2));
      if (wp == 1) plan.x0 = 0;
      if (hp == 1) plan.y0 = 0;
      plan.x1 = std::min(plan.x0 + 1, wp - 1);
      plan.y1 = std::min(plan.y0 + 1, hp - 1);
      const double fx = u - plan.x0;
      const double fy = v - plan.y0;
      plan.w00 = (1.0 - fy) * (1.0 - fx);
      plan.w01 = (1.0 - fy) * fx;
      plan.w10 = fy * (1.0 - fx);
      plan.w11 = fy * fx;
    }
  }
  return plans;
}

}  // namespace detail

/// View-range alignment: sample F_r at the occupancy cells' XY centers,
/// mapped through T_o2l and normalized against F_r's extent.
/// Centers landing outside the extent produce zeros. Output F_occ is
/// C_r x X_o x Y_o over the occupancy footprint.
inline BevTensor bvre_sample(const BevTensor& f_r, const OccGridSpec& occ) {
  if (f_r.data.rank() != 3) {
    throw ContractError("bvre_sample: F_r must be C x H x W");
  }
  if (!occ.t_o2l.is_rigid(1e-6)) {
    throw ContractError("bvre_sample: T_o2l is not rigid");
  }
  const std::vector<detail::SamplePlan> plans = detail::bvre_plan(f_r, occ);
  const std::size_t channels = f_r.data.dim(0);

  BevTensor out;
  out.data = DenseTensor({channels, static_cast<std::size_t>(occ.nx),
                          static_cast<std::size_t>(occ.ny)});
  out.min_xy = occ.min_bound.head<2>();
  out.max_xy = occ.max_bound().head<2>();

  parallel_for(plans.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const detail::SamplePlan& p = plans[i];
      if (!p.inside) continue;
      const int ix = static_cast<int>(i) / occ.ny;
      const int iy = static_cast<int>(i) % occ.ny;
      for (std::size_t c = 0; c < channels; ++c) {
        // w01/w11 can be exactly 0 at snapped integer coords, so corner
        // x1/y1 reads never pollute an exact reproduction.
        double acc = p.w00 * f_r.data(c, p.y0, p.x0);
        if (p.w01 != 0.0) acc += p.w01 * f_r.data(c, p.y0, p.x1);
        if (p.w10 != 0.0) acc += p.w10 * f_r.data(c, p.y1, p.x0);
        if (p.w11 != 0.0) acc += p.w11 * f_r.data(c, p.y1, p.x1);
        out.data(c, ix, iy) = acc;
      }
    }
  });
  return out;
}

/// Adjoint of bvre_sample: scatter dL/dF_occ back onto the F_r lattice.
/// Serial scatter in cell order so the result is reproducible.
inline DenseTensor bvre_backward(const BevTensor& f_r, const OccGridSpec& occ,
                                 const DenseTensor& grad_f_occ) {
  require_shape(grad_f_occ,
                {f_r.data.dim(0), static_cast<std::size_t>(occ.nx),
                 static_cast<std::size_t>(occ.ny)},
                "bvre_backward: grad_f_occ");
  const std::vector<detail::SamplePlan> plans = detail::bvre_plan(f_r, occ);
  DenseTensor grad(f_r.data.shape());
  const std::size_t channels = f_r.data.dim(0);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const detail::SamplePlan& p = plans[i];
    if (!p.inside) continue;
    const int ix = static_cast<int>(i) / occ.ny;
    const int iy = static_cast<int>(i) % occ.ny;
    for (std::size_t c = 0; c < channels; ++c) {
      const double g = grad_f_occ(c, ix, iy);
      grad(c, p.y0, p.x0) += p.w00 * g;
      grad(c, p.y0, p.x1) += p.w01 * g;
      grad(c, p.y1, p.x0) += p.w10 * g;
      grad(c, p.y1, p.x1) += p.w11 * g;
    }
  }
  return grad;
}

/// Alignment report for the published view-range constraint. bvre_sample
/// works either way; this only surfaces whether the BEV half-extents are
/// integer multiples of res_o and res_o an integer multiple of res_p.
struct AlignmentReport {
  double half_x_ratio = 0.0;
  double half_y_ratio = 0.0;
  double res_ratio_x = 0.0;
  double res_ratio_y = 0.0;
  bool half_x_ok = false;
  bool half_y_ok = false;
  bool res_ok = false;

  bool aligned() const { return half_x_ok && half_y_ok && res_ok; }
};

inline AlignmentReport validate_alignment(const OccGridSpec& occ,
                                          const voxel::GridSpec& bev) {
  const auto integral = [](double ratio) {
    return std::abs(ratio - std::round(ratio)) <= 1e-6;
  };
  AlignmentReport rep;
  rep.half_x_ratio = 0.5 * (bev.max_bound.x() - bev.min_bound.x()) / occ.res;
  rep.half_y_ratio = 0.5 * (bev.max_bound.y() - bev.min_bound.y()) / occ.res;
  rep.res_ratio_x = occ.res / bev.voxel_size.x();
  rep.res_ratio_y = occ.res / bev.voxel_size.y();
  rep.half_x_ok = integral(rep.half_x_ratio);
  rep.half_y_ok = integral(rep.half_y_ratio);
  rep.res_ok = integral(rep.res_ratio_x) && integral(rep.res_ratio_y);
  return rep;
}

/// Reinterpret (C*Z_o) channels as Z_o height slices of C channels:
/// channel c*Z_o + z -> (c, z). Pure value-preserving reshape.
inline DenseTensor channel_to_height(const BevTensor& bev, int z_levels) {
  if (bev.data.rank() != 3) {
    throw ContractError("channel_to_height: input must be C x d1 x d2");
  }
  const std::size_t channels = bev.data.dim(0);
  if (z_levels < 1 || channels % static_cast<std::size_t>(z_levels) != 0) {
    throw ContractError("channel_to_height: channels not divisible by Z_o");
  }
  DenseTensor out({channels / z_levels, static_cast<std::size_t>(z_levels),
                   bev.data.dim(1), bev.data.dim(2)});
  out.data() = bev.data.data();  // same memory order, new shape
  return out;
}

/// Inverse reshape of channel_to_height.
inline BevTensor height_to_channel(const DenseTensor& volume,
                                   const Eigen::Vector2d& min_xy,
                                   const Eigen::Vector2d& max_xy) {
  if (volume.rank() != 4) {
    throw ContractError("height_to_channel: input must be C x Z x d1 x d2");
  }
  BevTensor out;
  out.data = DenseTensor({volume.dim(0) * volume.dim(1), volume.dim(2),
                          volume.dim(3)});
  out.data.data() = volume.data();
  out.min_xy = min_xy;
  out.max_xy = max_xy;
  return out;
}

/// 1x1 occupancy head then Channel-to-Height: K x Z_o x X_o x Y_o logits.
inline DenseTensor occ_logits(const BevTensor& f_occ, const DenseTensor& head,
                              int classes, int z_levels) {
  if (head.rank() != 4 || head.dim(2) != 1 || head.dim(3) != 1) {
    throw ContractError("occ_logits: head must be a 1x1 convolution");
  }
  if (head.dim(0) != static_cast<std::size_t>(classes) * z_levels) {
    throw ContractError("occ_logits: head output channels must equal K*Z_o");
  }
  BevTensor wide;
  wide.data = conv2d(f_occ.data, head);
  wide.min_xy = f_occ.min_xy;
  wide.max_xy = f_occ.max_xy;
  return channel_to_height(wide, z_levels);
}

}  // namespace occkit::bevfuse
