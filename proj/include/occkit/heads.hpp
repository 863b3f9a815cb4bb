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

#include "occkit/bevfuse.hpp"
#include "occkit/common.hpp"
#include "occkit/tensor.hpp"

namespace occkit::heads {

/// Yaw-oriented 3D box. size = (l, w, h): l along the box's local x axis,
/// w along local y, h along z.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  int class_id = 0;
};

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
};

struct LossWeights {
  double lambda = 0.01;    // detection branch weight
  double lambda_l = 0.25;  // localization weight inside the branch
};

/// BEV target lattice: nx x ny cells over [min_xy, max_xy]. Maps are laid
/// out [channel][y][x] (H' = ny rows, W' = nx cols).
struct BevGrid2D {
  Eigen::Vector2d min_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d max_xy = Eigen::Vector2d::Ones();
  int nx = 1;
  int ny = 1;

  double cell_x() const { return (max_xy.x() - min_xy.x()) / nx; }
  double cell_y() const { return (max_xy.y() - min_xy.y()) / ny; }

  bool contains(double x, double y) const {
    return x >= min_xy.x() && x < max_xy.x() && y >= min_xy.y() &&
           y < max_xy.y();
  }
};

struct DetectionTargets {
  DenseTensor heatmap;     // K_det x H' x W', values in [0, 1]
  DenseTensor regression;  // 8 x H' x W': off_x, off_y, z, log l/w/h, sin, cos
  DenseTensor mask;        // H' x W', 1 at object centers
  int num_objects = 0;
  std::vector<std::string> warnings;
};

/// CornerNet-style radius: smallest r such that a corner shifted by r in
/// the worst of the three cases still overlaps the box by min_overlap.
/// Returned untruncated; callers floor and clamp.
inline double gaussian_radius(double height, double width,
                              double min_overlap = 0.1) {
  const double a1 = 1.0;
  const double b1 = height + width;
  const double c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
  const double r1 = (b1 - std::sqrt(b1 * b1 - 4.0 * a1 * c1)) / (2.0 * a1);

  const double a2 = 4.0;
  const double b2 = 2.0 * (height + width);
  const double c2 = (1.0 - min_overlap) * width * height;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2);

  const double a3 = 4.0 * min_overlap;
  const double b3 = -2.0 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1.0) * width * height;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3);

  return std::min({r1, r2, r3});
}

/// Splat exp(-(dx^2 + dy^2) / (2 sigma^2)) over the (2r+1)^2 patch at
/// (cx, cy) on channel k, combining with elementwise max.
inline void draw_gaussian(DenseTensor& heatmap, int k, int cx, int cy,
                          int radius, double sigma) {
  const int h = static_cast<int>(heatmap.dim(1));
  const int w = static_cast<int>(heatmap.dim(2));
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = cy + dy;
    if (y < 0 || y >= h) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = cx + dx;
      if (x < 0 || x >= w) continue;
      const double val =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      double& cell = heatmap(k, y, x);
      if (val > cell) cell = val;
    }
  }
}

inline void draw_gaussian(DenseTensor& heatmap, int k, int cx, int cy,
                          int radius) {
  draw_gaussian(heatmap, k, cx, cy, radius, (2.0 * radius + 1.0) / 6.0);
}

namespace detail {

struct CenterCell {
  int cx = 0, cy = 0;
  double fx = 0.0, fy = 0.0;  // fractional residual in [0, 1)
  bool inside = false;
};

inline CenterCell locate(const Box3D& box, const BevGrid2D& bev) {
  CenterCell c;
  if (!bev.contains(box.center.x(), box.center.y())) return c;
  const double gx = (box.center.x() - bev.min_xy.x()) / bev.cell_x();
  const double gy = (box.center.y() - bev.min_xy.y()) / bev.cell_y();
  c.cx = static_cast<int>(std::floor(gx));
  c.cy = static_cast<int>(std::floor(gy));
  c.fx = gx - c.cx;
  c.fy = gy - c.cy;
  c.inside = true;
  return c;
}

}  // namespace detail

/// Gaussian center heatmaps: one channel per detection class, overlaps
/// combined by max, every in-extent center cell exactly 1. Boxes whose
/// centers fall outside the extent are skipped.
inline DetectionTargets heatmap_targets(const std::vector<Box3D>& boxes,
                                        const BevGrid2D& bev, int k_det) {
  DetectionTargets t;
  t.heatmap = DenseTensor({static_cast<std::size_t>(k_det),
                           static_cast<std::size_t>(bev.ny),
                           static_cast<std::size_t>(bev.nx)});
  for (const Box3D& box : boxes) {
    if (box.class_id < 0 || box.class_id >= k_det) {
      throw ContractError("heatmap_targets: class id out of range");
    }
    const detail::CenterCell c = detail::locate(box, bev);
    if (!c.inside) continue;
    const double r = gaussian_radius(box.size.y() / bev.cell_y(),
                                     box.size.x() / bev.cell_x());
    const int radius = std::max(2, static_cast<int>(r));
    draw_gaussian(t.heatmap, box.class_id, c.cx, c.cy, radius);
    t.heatmap(box.class_id, c.cy, c.cx) = 1.0;
    t.num_objects += 1;
  }
  return t;
}

/// Per-center regression rows: fractional center offset, z-height,
/// log-dims, (sin, cos) of yaw; valid mask at center cells. Two centers in
/// one cell: the later box wins and a warning is recorded.
inline DetectionTargets regression_targets(const std::vector<Box3D>& boxes,
                                           const BevGrid2D& bev) {
  DetectionTargets t;
  t.regression = DenseTensor({8, static_cast<std::size_t>(bev.ny),
                              static_cast<std::size_t>(bev.nx)});
  t.mask = DenseTensor({static_cast<std::size_t>(bev.ny),
                        static_cast<std::size_t>(bev.nx)});
  for (const Box3D& box : boxes) {
    const detail::CenterCell c = detail::locate(box, bev);
    if (!c.inside) continue;
    if (t.mask(c.cy, c.cx) != 0.0) {
      t.warnings.push_back("regression_targets: two centers share cell (" +
                           std::to_string(c.cx) + ", " + std::to_string(c.cy) +
                           "), later box wins");
    }
    const double vals[8] = {c.fx,
                            c.fy,
                            box.center.z(),
                            std::log(box.size.x()),
                            std::log(box.size.y()),
                            std::log(box.size.z()),
                            std::sin(box.yaw),
                            std::cos(box.yaw)};
    for (int ch = 0; ch < 8; ++ch) t.regression(ch, c.cy, c.cx) = vals[ch];
    t.mask(c.cy, c.cx) = 1.0;
    t.num_objects += 1;
  }
  return t;
}

/// Both target families on one lattice.
inline DetectionTargets detection_targets(const std::vector<Box3D>& boxes,
                                          const BevGrid2D& bev, int k_det) {
  DetectionTargets hm = heatmap_targets(boxes, bev, k_det);
  DetectionTargets reg = regression_targets(boxes, bev);
  hm.regression = std::move(reg.regression);
  hm.mask = std::move(reg.mask);
  hm.warnings = std::move(reg.warnings);
  return hm;
}

struct LossResult {
  double value = 0.0;
  DenseTensor grad;
};

/// Gaussian focal loss over a predicted heatmap already in (0, 1):
///   L = -(1/N) sum [ y==1: (1-p)^a log p ; else (1-y)^b p^a log(1-p) ].
/// Returns the loss and dL/dp. N == 0 yields zero loss and gradient.
inline LossResult focal_loss(const DenseTensor& pred, const DenseTensor& target,
                             const FocalParams& fp, int num_objects) {
  if (!pred.same_shape(target)) {
    throw ContractError("focal_loss: shape mismatch " + pred.shape_str() +
                        " vs " + target.shape_str());
  }
  LossResult out;
  out.grad = DenseTensor(pred.shape());
  if (num_objects <= 0) return out;
  const double inv_n = 1.0 / num_objects;
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred.data()[i];
    const double y = target.data()[i];
    if (y == 1.0) {
      const double q = 1.0 - p;
      loss -= std::pow(q, fp.alpha) * std::log(p);
      out.grad.data()[i] =
          -inv_n * (-fp.alpha * std::pow(q, fp.alpha - 1.0) * std::log(p) +
                    std::pow(q, fp.alpha) / p);
    } else {
      const double w = std::pow(1.0 - y, fp.beta);
      loss -= w * std::pow(p, fp.alpha) * std::log(1.0 - p);
      out.grad.data()[i] =
          -inv_n * w *
          (fp.alpha * std::pow(p, fp.alpha - 1.0) * std::log(1.0 - p) -
           std::pow(p, fp.alpha) / (1.0 - p));
    }
  }
  out.value = loss * inv_n;
  return out;
}

/// L1 regression loss at masked cells, all channels summed, normalized by
/// the object count (not by channels). Subgradient at a tie is 0.
inline LossResult l1_loss(const DenseTensor& pred, const DenseTensor& target,
                          const DenseTensor& mask, int num_objects) {
  if (!pred.same_shape(target)) {
    throw ContractError("l1_loss: shape mismatch " + pred.shape_str() + " vs " +
                        target.shape_str());
  }
  if (pred.rank() != 3 || mask.rank() != 2 || mask.dim(0) != pred.dim(1) ||
      mask.dim(1) != pred.dim(2)) {
    throw ContractError("l1_loss: mask must match the spatial dims");
  }
  LossResult out;
  out.grad = DenseTensor(pred.shape());
  if (num_objects <= 0) return out;
  const double inv_n = 1.0 / num_objects;
  const std::size_t channels = pred.dim(0);
  double loss = 0.0;
  for (std::size_t y = 0; y < mask.dim(0); ++y) {
    for (std::size_t x = 0; x < mask.dim(1); ++x) {
      if (mask(y, x) == 0.0) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = pred(c, y, x) - target(c, y, x);
        loss += std::abs(d);
        out.grad(c, y, x) = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
      }
    }
  }
  out.value = loss * inv_n;
  return out;
}

/// Cross-entropy over masked voxels. logits are K x Z_o x X_o x Y_o;
/// labels and mask use the occupancy linear order (x*Y_o + y)*Z_o + z.
/// An empty mask supervises every voxel. Gradient = (softmax - onehot)/M.
inline LossResult ce_loss(const DenseTensor& logits,
                          const std::vector<std::uint8_t>& labels,
                          const std::vector<std::uint8_t>& mask = {}) {
  if (logits.rank() != 4) {
    throw ContractError("ce_loss: logits must be K x Z x X x Y");
  }
  const std::size_t k = logits.dim(0), nz = logits.dim(1);
  const std::size_t nx = logits.dim(2), ny = logits.dim(3);
  const std::size_t voxels = nz * nx * ny;
  if (labels.size() != voxels) {
    throw ContractError("ce_loss: label count mismatch");
  }
  if (!mask.empty() && mask.size() != voxels) {
    throw ContractError("ce_loss: mask length mismatch");
  }

  LossResult out;
  out.grad = DenseTensor(logits.shape());

  std::size_t supervised = 0;
  for (std::size_t i = 0; i < voxels; ++i) {
    if (mask.empty() || mask[i] != 0) ++supervised;
  }
  if (supervised == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(supervised);

  std::vector<double> probs(k);
  double loss = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) {
        const std::size_t lin = (x * ny + y) * nz + z;
        if (!mask.empty() && mask[lin] == 0) continue;
        const std::uint8_t label = labels[lin];
        if (label >= k) throw ContractError("ce_loss: label out of range");
        double mx = logits(std::size_t{0}, z, x, y);
        for (std::size_t c = 1; c < k; ++c) {
          mx = std::max(mx, logits(c, z, x, y));
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          probs[c] = std::exp(logits(c, z, x, y) - mx);
          denom += probs[c];
        }
        loss -= std::log(probs[label] / denom);
        for (std::size_t c = 0; c < k; ++c) {
          const double soft = probs[c] / denom;
          out.grad(c, z, x, y) = (soft - (c == label ? 1.0 : 0.0)) * inv_m;
        }
      }
    }
  }
  out.value = loss * inv_m;
  return out;
}

/// L_det = L_cls + lambda_l * L_loc.
inline double det_loss(double cls, double loc, const LossWeights& w) {
  return cls + w.lambda_l * loc;
}

/// L_total = L_ce + lambda * L_det.
inline double total_loss(double ce, double det, const LossWeights& w) {
  return ce + w.lambda * det;
}

/// Keep-mask over voxels: exactly floor(ratio * E) of the E free-class
/// voxels are dropped via a seeded shuffle; occupied voxels always kept.
inline std::vector<std::uint8_t> empty_voxel_dropout(
    const std::vector<std::uint8_t>& labels, std::uint8_t free_class,
    double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw ContractError("empty_voxel_dropout: ratio must be in [0, 1]");
  }
  std::vector<std::uint8_t> mask(labels.size(), 1);
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == free_class) free_idx.push_back(i);
  }
  SeededStream stream(seed, "dropout");
  for (std::size_t i = free_idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(free_idx[i - 1], free_idx[j]);
  }
  const std::size_t drop =
      static_cast<std::size_t>(std::floor(ratio * free_idx.size()));
  for (std::size_t i = 0; i < drop; ++i) mask[free_idx[i]] = 0;
  return mask;
}

constexpr double kSigmoidEps = 1e-6;

struct SigmoidResult {
  DenseTensor value;   // clamped to [eps, 1 - eps]
  DenseTensor dvalue;  // dp/dx; zero where the clamp is active
};

inline SigmoidResult sigmoid_clamp(const DenseTensor& x) {
  SigmoidResult out;
  out.value = DenseTensor(x.shape());
  out.dvalue = DenseTensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.data()[i]));
    if (s < kSigmoidEps) {
      out.value.data()[i] = kSigmoidEps;
    } else if (s > 1.0 - kSigmoidEps) {
      out.value.data()[i] = 1.0 - kSigmoidEps;
    } else {
      out.value.data()[i] = s;
      out.dvalue.data()[i] = s * (1.0 - s);
    }
  }
  return out;
}

struct HeadGradients {
  DenseTensor grad_input;    // C_in x H x W
  DenseTensor grad_weights;  // C_out x C_in x 1 x 1
};

/// Exact backward pass of a 1x1 convolution head.
inline HeadGradients head_backprop(const DenseTensor& input,
                                   const DenseTensor& weights,
                                   const DenseTensor& grad_out) {
  if (weights.rank() != 4 || weights.dim(2) != 1 || weights.dim(3) != 1) {
    throw ContractError("head_backprop: head must be a 1x1 convolution");
  }
  if (input.rank() != 3 || grad_out.rank() != 3 ||
      input.dim(0) != weights.dim(1) || grad_out.dim(0) != weights.dim(0) ||
      input.dim(1) != grad_out.dim(1) || input.dim(2) != grad_out.dim(2)) {
    throw ContractError("head_backprop: shape mismatch");
  }
  const std::size_t co = weights.dim(0), ci = weights.dim(1);
  const std::size_t h = input.dim(1), w = input.dim(2);
  HeadGradients out;
  out.grad_input = DenseTensor(input.shape());
  out.grad_weights = DenseTensor(weights.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t o = 0; o < co; ++o) {
        const double g = grad_out(o, y, x);
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < ci; ++c) {
          out.grad_input(c, y, x) += weights(o, c, 0, 0) * g;
          out.grad_weights(o, c, 0, 0) += input(c, y, x) * g;
        }
      }
    }
  }
  return out;
}

struct FitOptions {
  int steps = 200;
  double lr = 0.5;
};

/// Occupancy head fitted by gradient descent on standardized features.
struct FitResult {
  DenseTensor weights;  // (K*Z_o) x C x 1 x 1, applied to standardized F_occ
  std::vector<double> bias;           // per (k, z) row intercept
  std::vector<double> channel_mean;
  std::vector<double> channel_scale;  // 1/std, unit for near-constant channels
  std::vector<double> loss_trace;     // steps + 1 entries, last is final CE

  bevfuse::BevTensor standardize(const bevfuse::BevTensor& f_occ) const {
    bevfuse::BevTensor out = f_occ;
    const std::size_t c = out.data.dim(0);
    const std::size_t plane = out.data.size() / c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* row = out.data.raw() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        row[i] = (row[i] - channel_mean[ch]) * channel_scale[ch];
      }
    }
    return out;
  }

  DenseTensor logits(const bevfuse::BevTensor& f_occ, int classes,
                     int z_levels) const {
    DenseTensor out =
        bevfuse::occ_logits(standardize(f_occ), weights, classes, z_levels);
    const std::size_t nz = out.dim(1), plane = out.dim(2) * out.dim(3);
    for (std::size_t k = 0; k < out.dim(0); ++k) {
      for (std::size_t z = 0; z < nz; ++z) {
        const double b = bias[k * nz + z];
        double* row = out.raw() + (k * nz + z) * plane;
        for (std::size_t i = 0; i < plane; ++i) row[i] += b;
      }
    }
    return out;
  }
};

/// Gradient descent on the 1x1 occupancy head only (a convex problem:
/// linear logits + cross-entropy). Features are standardized per channel
/// over supervised voxels and augmented with a constant intercept channel
/// before fitting. loss_trace[i] is the CE before step i; the final entry
/// is the CE after the last step. A NaN loss raises NumericalError naming
/// the step.
inline FitResult fit_last_layer(const bevfuse::BevTensor& f_occ,
                                const std::vector<std::uint8_t>& labels,
                                const std::vector<std::uint8_t>& mask,
                                int classes, int z_levels,
                                const FitOptions& opt = {}) {
  if (f_occ.data.rank() != 3) {
    throw ContractError("fit_last_layer: F_occ must be C x X x Y");
  }
  if (opt.lr <= 0.0) throw ContractError("fit_last_layer: lr must be > 0");
  const std::size_t c = f_occ.data.dim(0);
  const std::size_t nx = f_occ.data.dim(1), ny = f_occ.data.dim(2);
  const std::size_t nz = static_cast<std::size_t>(z_levels);
  const std::size_t voxels = nx * ny * nz;
  if (labels.size() != voxels || (!mask.empty() && mask.size() != voxels)) {
    throw ContractError("fit_last_layer: label/mask length mismatch");
  }

  struct Sample {
    std::uint32_t col;  // compact column index
    std::uint16_t z;
    std::uint8_t label;
  };
  std::vector<Sample> samples;
  std::vector<std::int32_t> col_of_plane(nx * ny, -1);
  std::vector<std::uint32_t> plane_of_col;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) {
        const std::size_t lin = (x * ny + y) * nz + z;
        if (!mask.empty() && mask[lin] == 0) continue;
        if (labels[lin] >= classes) {
          throw ContractError("fit_last_layer: label out of range");
        }
        const std::size_t plane = x * ny + y;
        if (col_of_plane[plane] < 0) {
          col_of_plane[plane] = static_cast<std::int32_t>(plane_of_col.size());
          plane_of_col.push_back(static_cast<std::uint32_t>(plane));
        }
        samples.push_back({static_cast<std::uint32_t>(col_of_plane[plane]),
                           static_cast<std::uint16_t>(z), labels[lin]});
      }
    }
  }

  FitResult fit;
  fit.channel_mean.assign(c, 0.0);
  fit.channel_scale.assign(c, 1.0);
  fit.weights = DenseTensor({static_cast<std::size_t>(classes) * nz, c, 1, 1});
  fit.bias.assign(static_cast<std::size_t>(classes) * nz, 0.0);
  if (samples.empty()) {
    fit.loss_trace.assign(opt.steps + 1, 0.0);
    return fit;
  }

  // Per-channel standardization over the supervised voxels.
  const double inv_m = 1.0 / static_cast<double>(samples.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (const Sample& s : samples) {
      const std::uint32_t plane = plane_of_col[s.col];
      mean += f_occ.data.data()[ch * nx * ny + plane];
    }
    mean *= inv_m;
    double var = 0.0;
    for (const Sample& s : samples) {
      const std::uint32_t plane = plane_of_col[s.col];
      const double d = f_occ.data.data()[ch * nx * ny + plane] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var * inv_m);
    fit.channel_mean[ch] = mean;
    fit.channel_scale[ch] = sd < 1e-12 ? 1.0 : 1.0 / sd;
  }

  // Standardized channels plus a constant row so each (k, z) logit carries
  // an intercept; without it the head cannot express per-level priors.
  const std::size_t cols = plane_of_col.size();
  Eigen::MatrixXd phi(c + 1, cols);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < cols; ++j) {
      phi(ch, j) = (f_occ.data.data()[ch * nx * ny + plane_of_col[j]] -
                    fit.channel_mean[ch]) *
                   fit.channel_scale[ch];
    }
  }
  phi.row(c).setOnes();

  const std::size_t rows = static_cast<std::size_t>(classes) * nz;
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(rows, c + 1);
  Eigen::MatrixXd logits(rows, cols), grad(rows, cols);
  std::vector<double> probs(classes);

  const auto eval = [&](bool with_grad) {
    logits.noalias() = weights * phi;
    if (with_grad) grad.setZero();
    double loss = 0.0;
    for (const Sample& s : samples) {
      double mx = logits(s.z, s.col);
      for (int k = 1; k < classes; ++k) {
        mx = std::max(mx, logits(k * nz + s.z, s.col));
      }
      double denom = 0.0;
      for (int k = 0; k < classes; ++k) {
        probs[k] = std::exp(logits(k * nz + s.z, s.col) - mx);
        denom += probs[k];
      }
      loss -= std::log(probs[s.label] / denom);
      if (with_grad) {
        for (int k = 0; k < classes; ++k) {
          grad(k * nz + s.z, s.col) +=
              (probs[k] / denom - (k == s.label ? 1.0 : 0.0)) * inv_m;
        }
      }
    }
    return loss * inv_m;
  };

  for (int step = 0; step < opt.steps; ++step) {
    const double loss = eval(true);
    if (!std::isfinite(loss)) {
      throw NumericalError("fit_last_layer: loss diverged at step " +
                           std::to_string(step));
    }
    fit.loss_trace.push_back(loss);
    weights.noalias() -= opt.lr * (grad * phi.transpose());
  }
  const double final_loss = eval(false);
  if (!std::isfinite(final_loss)) {
    throw NumericalError("fit_last_layer: loss diverged at step " +
                         std::to_string(opt.steps));
  }
  fit.loss_trace.push_back(final_loss);

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      fit.weights(r, ch, std::size_t{0}, std::size_t{0}) = weights(r, ch);
    }
    fit.bias[r] = weights(r, c);
  }
  return fit;
}

}  // namespace occkit::heads
