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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "occkit/bevfuse.hpp"
#include "occkit/common.hpp"
#include "occkit/eval.hpp"
#include "occkit/heads.hpp"
#include "occkit/tensor.hpp"
#include "occkit/voxel.hpp"

// Brute-force reference implementations. Everything here trades speed for
// obviousness and shares no traversal or accumulation logic with the
// library code it checks.

namespace occkit::oracle {

/// Direct dense 3D convolution (zero-padded) with stride decimation.
/// input: C_in x D x H x W; output: C_out x ceil(D/sz) x ceil(H/sy) x
/// ceil(W/sx). Submanifold mode afterwards zeroes every site that is not
/// in the input active set.
inline DenseTensor dense_conv3d_reference(const voxel::SparseVoxelGrid& grid,
                                          const voxel::ConvKernel3D& kernel) {
  const DenseTensor input = voxel::densify(grid);
  const int d = static_cast<int>(input.dim(1));
  const int h = static_cast<int>(input.dim(2));
  const int w = static_cast<int>(input.dim(3));
  const std::array<int, 3> s = kernel.mode == voxel::ConvMode::kRegular
                                   ? kernel.stride
                                   : std::array<int, 3>{1, 1, 1};
  const int od = (d + s[0] - 1) / s[0];
  const int oh = (h + s[1] - 1) / s[1];
  const int ow = (w + s[2] - 1) / s[2];
  const int r = kernel.k / 2;
  DenseTensor out({static_cast<std::size_t>(kernel.out_channels),
                   static_cast<std::size_t>(od), static_cast<std::size_t>(oh),
                   static_cast<std::size_t>(ow)});
  for (int co = 0; co < kernel.out_channels; ++co) {
    for (int qz = 0; qz < od; ++qz) {
      for (int qy = 0; qy < oh; ++qy) {
        for (int qx = 0; qx < ow; ++qx) {
          double acc = 0.0;
          for (int ci = 0; ci < kernel.in_channels; ++ci) {
            for (int dz = 0; dz < kernel.k; ++dz) {
              const int z = qz * s[0] + dz - r;
              if (z < 0 || z >= d) continue;
              for (int dy = 0; dy < kernel.k; ++dy) {
                const int y = qy * s[1] + dy - r;
                if (y < 0 || y >= h) continue;
                for (int dx = 0; dx < kernel.k; ++dx) {
                  const int x = qx * s[2] + dx - r;
                  if (x < 0 || x >= w) continue;
                  acc += kernel.weight(co, ci, dz, dy, dx) *
                         input(ci, z, y, x);
                }
              }
            }
          }
          out(co, qz, qy, qx) = acc;
        }
      }
    }
  }
  if (kernel.mode == voxel::ConvMode::kSubmanifold) {
    std::vector<std::uint8_t> active(static_cast<std::size_t>(d) * h * w, 0);
    for (const voxel::Coord3& c : grid.coords) {
      active[(static_cast<std::size_t>(c[0]) * h + c[1]) * w + c[2]] = 1;
    }
    for (int co = 0; co < kernel.out_channels; ++co) {
      for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            if (!active[(static_cast<std::size_t>(z) * h + y) * w + x]) {
              out(co, z, y, x) = 0.0;
            }
          }
        }
      }
    }
  }
  return out;
}

/// Tent-kernel formulation of bilinear interpolation: sum over every pixel
/// weighted by max(0, 1 - |u - i|) * max(0, 1 - |v - j|).
inline std::vector<double> bilinear_reference(const DenseTensor& map, double u,
                                              double v) {
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    const double wy = std::max(0.0, 1.0 - std::abs(v - static_cast<double>(j)));
    if (wy == 0.0) continue;
    for (std::size_t i = 0; i < w; ++i) {
      const double wx =
          std::max(0.0, 1.0 - std::abs(u - static_cast<double>(i)));
      if (wx == 0.0) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[ch] += wy * wx * map(ch, j, i);
      }
    }
  }
  return out;
}

struct MarchHit {
  int ix = 0, iy = 0, iz = 0;
  double depth = 0.0;
  std::uint8_t cls = 0;
};

namespace detail {

inline std::optional<std::array<int, 3>> voxel_of(
    const bevfuse::OccGridSpec& spec, const Eigen::Vector3d& p) {
  const Eigen::Vector3d lo = spec.min_bound;
  const Eigen::Vector3d hi = spec.max_bound();
  const std::array<int, 3> dims = {spec.nx, spec.ny, spec.nz};
  std::array<int, 3> v;
  for (int a = 0; a < 3; ++a) {
    if (p[a] < lo[a] - 1e-12 || p[a] > hi[a] + 1e-12) return std::nullopt;
    v[a] = static_cast<int>(std::floor((p[a] - lo[a]) / spec.res));
    v[a] = std::max(0, std::min(v[a], dims[a] - 1));
  }
  return v;
}

inline int manhattan(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

/// Resolve the voxel transition over (t0, t1]. v0 is known free; bisect
/// diagonal jumps so no voxel the segment passes through is skipped.
inline std::optional<MarchHit> resolve_segment(
    const eval::OccupancyGrid& grid, const Eigen::Vector3d& origin,
    const Eigen::Vector3d& dir, double t0, const std::array<int, 3>& v0,
    double t1, const std::array<int, 3>& v1) {
  if (v1 == v0) return std::nullopt;
  if (detail::manhattan(v0, v1) == 1 || t1 - t0 < 1e-13) {
    if (grid.label(v1[0], v1[1], v1[2]) != grid.free_class) {
      return MarchHit{v1[0], v1[1], v1[2], t1,
                      grid.label(v1[0], v1[1], v1[2])};
    }
    return std::nullopt;
  }
  const double tm = 0.5 * (t0 + t1);
  const auto vm = voxel_of(grid.spec, origin + tm * dir);
  if (!vm) return std::nullopt;
  if (auto hit = resolve_segment(grid, origin, dir, t0, v0, tm, *vm)) {
    return hit;
  }
  return resolve_segment(grid, origin, dir, tm, *vm, t1, v1);
}

}  // namespace detail

/// Fine-step marching reference for first-hit ray casts: samples every
/// voxel/100 along the ray and bisects each voxel transition so even
/// corner-clipping chords are observed. Reported depth is within one step
/// of the true entry face.
inline std::optional<MarchHit> ray_march_first_hit(
    const eval::OccupancyGrid& grid, const Eigen::Vector3d& origin,
    const Eigen::Vector3d& dir) {
  const bevfuse::OccGridSpec& spec = grid.spec;
  const Eigen::Vector3d lo = spec.min_bound;
  const Eigen::Vector3d hi = spec.max_bound();

  double t_entry = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
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

  const double step = spec.res / 100.0;
  auto v_prev = detail::voxel_of(spec, origin + t_entry * dir);
  if (!v_prev) return std::nullopt;
  if (grid.label((*v_prev)[0], (*v_prev)[1], (*v_prev)[2]) != grid.free_class) {
    return MarchHit{(*v_prev)[0], (*v_prev)[1], (*v_prev)[2], t_entry,
                    grid.label((*v_prev)[0], (*v_prev)[1], (*v_prev)[2])};
  }
  double t_prev = t_entry;
  for (double t = t_entry + step;; t += step) {
    const bool last = t >= t_exit;
    if (last) t = t_exit;
    const auto v = detail::voxel_of(spec, origin + t * dir);
    if (!v) break;
    if (auto hit = detail::resolve_segment(grid, origin, dir, t_prev, *v_prev,
                                           t, *v)) {
      return hit;
    }
    t_prev = t;
    v_prev = v;
    if (last) break;
  }
  return std::nullopt;
}

/// Central finite differences of a scalar function.
template <typename F>
std::vector<double> fd_gradient(std::vector<double> x, F&& f,
                                double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Worst relative disagreement; entries where both sides are below 1e-6
/// (or flagged in `skip`) are ignored as numerically unresolvable.
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& fd,
                          const std::vector<bool>* skip = nullptr) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (skip && (*skip)[i]) continue;
    const double denom = std::max(std::abs(analytic[i]), std::abs(fd[i]));
    if (denom < 1e-6) continue;
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

namespace detail {

inline void fill_normal(DenseTensor& t, SeededStream& stream,
                        double scale = 1.0) {
  for (double& v : t.data()) v = scale * stream.normal();
}

inline std::vector<double> flat(const DenseTensor& t) { return t.data(); }

}  // namespace detail

/// Finite-difference sweep over every hand-written gradient. `corrupt`
/// perturbs each analytic gradient before comparison (negative control).
inline std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed,
                                               int instances = 20,
                                               double tol = 1e-4,
                                               bool corrupt = false) {
  const auto corrupted = [&](std::vector<double> g) {
    if (corrupt && !g.empty()) g[0] += 1.0 + std::abs(g[0]);
    return g;
  };

  GradCheckRow ce{"ce", 0.0, false};
  for (int inst = 0; inst < instances; ++inst) {
    SeededStream stream(seed, "gradcheck/ce/" + std::to_string(inst));
    const std::size_t k = 4, nz = 2, nx = 3, ny = 3;
    DenseTensor logits({k, nz, nx, ny});
    detail::fill_normal(logits, stream, 1.5);
    std::vector<std::uint8_t> labels(nz * nx * ny), mask(nz * nx * ny);
    for (auto& l : labels) l = static_cast<std::uint8_t>(stream.below(k));
    for (auto& m : mask) m = stream.uniform() < 0.7 ? 1 : 0;
    mask[0] = 1;
    const heads::LossResult res = heads::ce_loss(logits, labels, mask);
    const auto fd = fd_gradient(logits.data(), [&](const std::vector<double>& x) {
      DenseTensor l2 = logits;
      l2.data() = x;
      return heads::ce_loss(l2, labels, mask).value;
    });
    ce.max_rel_err = std::max(ce.max_rel_err,
                              max_rel_err(corrupted(res.grad.data()), fd));
  }
  ce.pass = ce.max_rel_err <= tol;

  GradCheckRow focal{"focal", 0.0, false};
  for (int inst = 0; inst < instances; ++inst) {
    SeededStream stream(seed, "gradcheck/focal/" + std::to_string(inst));
    const std::size_t k = 2, h = 6, w = 6;
    DenseTensor target({k, h, w});
    int objects = 0;
    for (int obj = 0; obj < 3; ++obj) {
      const int cls = static_cast<int>(stream.below(k));
      const int cx = static_cast<int>(stream.below(w));
      const int cy = static_cast<int>(stream.below(h));
      heads::draw_gaussian(target, cls, cx, cy, 2);
      target(static_cast<std::size_t>(cls), static_cast<std::size_t>(cy),
             static_cast<std::size_t>(cx)) = 1.0;
      ++objects;
    }
    DenseTensor raw({k, h, w});
    detail::fill_normal(raw, stream, 1.2);
    const DenseTensor pred = heads::sigmoid_clamp(raw).value;
    const heads::FocalParams fp;
    const heads::LossResult res = heads::focal_loss(pred, target, fp, objects);
    const auto fd = fd_gradient(pred.data(), [&](const std::vector<double>& x) {
      DenseTensor p2 = pred;
      p2.data() = x;
      return heads::focal_loss(p2, target, fp, objects).value;
    });
    focal.max_rel_err = std::max(focal.max_rel_err,
                                 max_rel_err(corrupted(res.grad.data()), fd));
  }
  focal.pass = focal.max_rel_err <= tol;

  GradCheckRow l1{"l1", 0.0, false};
  for (int inst = 0; inst < instances; ++inst) {
    SeededStream stream(seed, "gradcheck/l1/" + std::to_string(inst));
    const std::size_t c = 8, h = 4, w = 4;
    DenseTensor pred({c, h, w}), target({c, h, w}), mask({h, w});
    detail::fill_normal(pred, stream);
    detail::fill_normal(target, stream);
    for (double& m : mask.data()) m = stream.uniform() < 0.4 ? 1.0 : 0.0;
    mask.data()[0] = 1.0;
    const int objects = 3;
    const heads::LossResult res = heads::l1_loss(pred, target, mask, objects);
    // Central differences straddle the |.| kink when pred is within h of
    // the target; skip those coordinates.
    std::vector<bool> skip(pred.size(), false);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      skip[i] = std::abs(pred.data()[i] - target.data()[i]) < 1e-4;
    }
    const auto fd = fd_gradient(pred.data(), [&](const std::vector<double>& x) {
      DenseTensor p2 = pred;
      p2.data() = x;
      return heads::l1_loss(p2, target, mask, objects).value;
    });
    l1.max_rel_err = std::max(
        l1.max_rel_err, max_rel_err(corrupted(res.grad.data()), fd, &skip));
  }
  l1.pass = l1.max_rel_err <= tol;

  GradCheckRow head{"head_backprop", 0.0, false};
  for (int inst = 0; inst < instances; ++inst) {
    SeededStream stream(seed, "gradcheck/head/" + std::to_string(inst));
    const std::size_t c = 5, nx = 4, ny = 4;
    const int classes = 3, nz = 2, k_det = 3;
    DenseTensor feat({c, nx, ny});
    detail::fill_normal(feat, stream);

    // Occupancy path: 1x1 head, Channel-to-Height, cross-entropy.
    DenseTensor w_occ({static_cast<std::size_t>(classes) * nz, c, 1, 1});
    detail::fill_normal(w_occ, stream, 0.7);
    std::vector<std::uint8_t> labels(nz * nx * ny);
    for (auto& l : labels) l = static_cast<std::uint8_t>(stream.below(classes));

    const auto ce_value = [&](const DenseTensor& f, const DenseTensor& wt) {
      bevfuse::BevTensor bev;
      bev.data = f;
      const DenseTensor logits = bevfuse::occ_logits(bev, wt, classes, nz);
      return heads::ce_loss(logits, labels).value;
    };
    {
      bevfuse::BevTensor bev;
      bev.data = feat;
      const DenseTensor logits = bevfuse::occ_logits(bev, w_occ, classes, nz);
      const heads::LossResult res = heads::ce_loss(logits, labels);
      const bevfuse::BevTensor upstream = bevfuse::height_to_channel(
          res.grad, Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
      const heads::HeadGradients grads =
          heads::head_backprop(feat, w_occ, upstream.data);
      const auto fd_f =
          fd_gradient(feat.data(), [&](const std::vector<double>& x) {
            DenseTensor f2 = feat;
            f2.data() = x;
            return ce_value(f2, w_occ);
          });
      const auto fd_w =
          fd_gradient(w_occ.data(), [&](const std::vector<double>& x) {
            DenseTensor w2 = w_occ;
            w2.data() = x;
            return ce_value(feat, w2);
          });
      head.max_rel_err =
          std::max({head.max_rel_err,
                    max_rel_err(corrupted(grads.grad_input.data()), fd_f),
                    max_rel_err(corrupted(grads.grad_weights.data()), fd_w)});
    }

    // Detection path: 1x1 head, clamped sigmoid, focal loss.
    DenseTensor w_det({static_cast<std::size_t>(k_det), c, 1, 1});
    detail::fill_normal(w_det, stream, 0.7);
    DenseTensor target({static_cast<std::size_t>(k_det), nx, ny});
    heads::draw_gaussian(target, 0, 1, 1, 2);
    target(0, 1, 1) = 1.0;
    heads::draw_gaussian(target, 1, 2, 3, 2);
    target(1, 3, 2) = 1.0;
    const int objects = 2;
    const heads::FocalParams fp;

    const auto focal_value = [&](const DenseTensor& f, const DenseTensor& wt) {
      const DenseTensor raw = bevfuse::conv2d(f, wt);
      return heads::focal_loss(heads::sigmoid_clamp(raw).value, target, fp,
                               objects)
          .value;
    };
    {
      const DenseTensor raw = bevfuse::conv2d(feat, w_det);
      const heads::SigmoidResult sig = heads::sigmoid_clamp(raw);
      const heads::LossResult res =
          heads::focal_loss(sig.value, target, fp, objects);
      DenseTensor upstream(raw.shape());
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        upstream.data()[i] = res.grad.data()[i] * sig.dvalue.data()[i];
      }
      const heads::HeadGradients grads =
          heads::head_backprop(feat, w_det, upstream);
      const auto fd_f =
          fd_gradient(feat.data(), [&](const std::vector<double>& x) {
            DenseTensor f2 = feat;
            f2.data() = x;
            return focal_value(f2, w_det);
          });
      const auto fd_w =
          fd_gradient(w_det.data(), [&](const std::vector<double>& x) {
            DenseTensor w2 = w_det;
            w2.data() = x;
            return focal_value(feat, w2);
          });
      head.max_rel_err =
          std::max({head.max_rel_err,
                    max_rel_err(corrupted(grads.grad_input.data()), fd_f),
                    max_rel_err(corrupted(grads.grad_weights.data()), fd_w)});
    }
  }
  head.pass = head.max_rel_err <= tol;

  return {ce, focal, l1, head};
}

}  // namespace occkit::oracle
