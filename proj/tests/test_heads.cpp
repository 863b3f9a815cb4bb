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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "occkit/bevfuse.hpp"
#include "occkit/common.hpp"
#include "occkit/heads.hpp"
#include "occkit/oracle.hpp"
#include "occkit/tensor.hpp"

using namespace occkit;
using namespace occkit::heads;

namespace {

BevGrid2D unit_grid(int nx, int ny, double lo = -4.0, double hi = 4.0) {
  BevGrid2D g;
  g.min_xy = {lo, lo};
  g.max_xy = {hi, hi};
  g.nx = nx;
  g.ny = ny;
  return g;
}

Box3D box_at(double x, double y, int cls = 0) {
  Box3D b;
  b.center = {x, y, 0.0};
  b.size = {1.0, 1.0, 1.0};
  b.class_id = cls;
  return b;
}

DenseTensor random_tensor(std::uint64_t seed, const std::string& name,
                          std::vector<std::size_t> shape, double lo = -1.0,
                          double hi = 1.0) {
  SeededStream s(seed, name);
  DenseTensor t(std::move(shape));
  for (double& v : t.data()) v = s.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("heatmap centers are exactly one") {
  const BevGrid2D g = unit_grid(8, 8);
  const DetectionTargets t = heatmap_targets({box_at(0.5, 0.5, 1)}, g, 4);
  REQUIRE(t.num_objects == 1);
  REQUIRE(t.heatmap(1, 4, 4) == 1.0);
  double peak = 0.0;
  for (double v : t.heatmap.data()) peak = std::max(peak, v);
  REQUIRE(peak == 1.0);
}

TEST_CASE("gaussian splat values follow the isotropic kernel") {
  DenseTensor hm({1, 9, 9});
  draw_gaussian(hm, 0, 4, 4, 2, 1.0);
  REQUIRE(hm(0, 4, 4) == Catch::Approx(1.0));
  REQUIRE(hm(0, 4, 5) == Catch::Approx(std::exp(-0.5)));
  REQUIRE(hm(0, 5, 5) == Catch::Approx(std::exp(-1.0)));
  REQUIRE(hm(0, 4, 7) == 0.0);  // outside the radius-2 patch
}

TEST_CASE("overlapping splats combine by pointwise max") {
  const BevGrid2D g = unit_grid(16, 16);
  const std::vector<Box3D> both = {box_at(-0.5, 0.0, 0), box_at(0.5, 0.0, 0)};
  const DetectionTargets a = heatmap_targets({both[0]}, g, 4);
  const DetectionTargets b = heatmap_targets({both[1]}, g, 4);
  const DetectionTargets ab = heatmap_targets(both, g, 4);
  for (std::size_t i = 0; i < ab.heatmap.size(); ++i) {
    REQUIRE(ab.heatmap.data()[i] ==
            Catch::Approx(std::max(a.heatmap.data()[i], b.heatmap.data()[i]))
                .margin(1e-12));
  }
}

TEST_CASE("centers outside the extent are skipped") {
  const BevGrid2D g = unit_grid(8, 8);
  const DetectionTargets t = heatmap_targets({box_at(9.0, 0.0)}, g, 4);
  REQUIRE(t.num_objects == 0);
  for (double v : t.heatmap.data()) REQUIRE(v == 0.0);

  REQUIRE_THROWS_AS(heatmap_targets({box_at(0.0, 0.0, 7)}, g, 4),
                    ContractError);
}

TEST_CASE("gaussian radius shrinks with overlap and grows with size") {
  const double r_small = gaussian_radius(4.0, 4.0);
  const double r_large = gaussian_radius(12.0, 12.0);
  REQUIRE(r_large > r_small);
  REQUIRE(gaussian_radius(4.0, 4.0, 0.7) < gaussian_radius(4.0, 4.0, 0.1));
}

TEST_CASE("regression rows encode offset, height, log dims, and yaw") {
  BevGrid2D g = unit_grid(8, 8);  // 1 m cells
  Box3D b;
  b.center = {0.5, -1.5, 0.75};  // exact cell centers in both axes
  b.size = {std::exp(1.0), std::exp(1.0), std::exp(1.0)};
  b.yaw = 0.0;
  const DetectionTargets t = regression_targets({b}, g);
  REQUIRE(t.num_objects == 1);
  const int cx = 4, cy = 2;
  REQUIRE(t.mask(cy, cx) == 1.0);
  REQUIRE(t.regression(0, cy, cx) == Catch::Approx(0.5));
  REQUIRE(t.regression(1, cy, cx) == Catch::Approx(0.5));
  REQUIRE(t.regression(2, cy, cx) == Catch::Approx(0.75));
  for (int ch = 3; ch <= 5; ++ch) {
    REQUIRE(t.regression(ch, cy, cx) == Catch::Approx(1.0));
  }
  REQUIRE(t.regression(6, cy, cx) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(t.regression(7, cy, cx) == Catch::Approx(1.0));
}

TEST_CASE("two centers in one cell keep the later box and warn") {
  const BevGrid2D g = unit_grid(8, 8);
  Box3D first = box_at(0.1, 0.1);
  first.center.z() = 1.0;
  Box3D second = box_at(0.2, 0.2);
  second.center.z() = 2.0;
  const DetectionTargets t = regression_targets({first, second}, g);
  REQUIRE(t.num_objects == 2);
  REQUIRE(t.warnings.size() == 1);
  REQUIRE(t.regression(2, 4, 4) == Catch::Approx(2.0));
}

TEST_CASE("combined targets carry both families") {
  const BevGrid2D g = unit_grid(8, 8);
  const DetectionTargets t =
      detection_targets({box_at(0.5, 0.5, 2)}, g, 4);
  REQUIRE(t.heatmap.dim(0) == 4);
  REQUIRE(t.regression.dim(0) == 8);
  REQUIRE(t.mask(4, 4) == 1.0);
  REQUIRE(t.num_objects == 1);
}

TEST_CASE("focal loss vanishes on a perfect clamped prediction") {
  const BevGrid2D g = unit_grid(8, 8);
  const DetectionTargets t = heatmap_targets({box_at(0.5, 0.5)}, g, 2);
  DenseTensor pred(t.heatmap.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred.data()[i] = t.heatmap.data()[i] == 1.0 ? 1.0 - kSigmoidEps
                                                : kSigmoidEps;
  }
  const LossResult r = focal_loss(pred, t.heatmap, {}, t.num_objects);
  REQUIRE(r.value >= 0.0);
  REQUIRE(r.value <= 1e-5);
}

TEST_CASE("focal loss at a half-confident center is 0.25 ln 2") {
  DenseTensor target({1, 1, 1});
  target(0, 0, 0) = 1.0;
  DenseTensor pred({1, 1, 1});
  pred(0, 0, 0) = 0.5;
  const LossResult r = focal_loss(pred, target, {}, 1);
  REQUIRE(r.value == Catch::Approx(0.25 * std::log(2.0)).epsilon(1e-12));

  const LossResult zero = focal_loss(pred, target, {}, 0);
  REQUIRE(zero.value == 0.0);
  for (double v : zero.grad.data()) REQUIRE(v == 0.0);
}

TEST_CASE("focal gradient matches finite differences") {
  SeededStream s(41, "heads/focal/fd");
  DenseTensor target({2, 4, 4});
  target(0, 1, 1) = 1.0;
  target(1, 2, 3) = 1.0;
  draw_gaussian(target, 0, 1, 1, 2);
  target(0, 1, 1) = 1.0;
  DenseTensor pred({2, 4, 4});
  for (double& v : pred.data()) v = s.uniform(0.05, 0.95);

  const LossResult r = focal_loss(pred, target, {}, 2);
  const std::vector<double> fd =
      oracle::fd_gradient(pred.data(), [&](const std::vector<double>& x) {
        DenseTensor p2 = pred;
        p2.data() = x;
        return focal_loss(p2, target, {}, 2).value;
      });
  REQUIRE(oracle::max_rel_err(r.grad.data(), fd) <= 1e-4);
}

TEST_CASE("l1 loss sums channel deviations over masked cells") {
  DenseTensor pred({2, 1, 1});
  pred(0, 0, 0) = 1.0;
  pred(1, 0, 0) = 2.0;
  DenseTensor target({2, 1, 1});
  target(0, 0, 0) = 1.5;
  target(1, 0, 0) = 1.0;
  DenseTensor mask({1, 1});
  mask(0, 0) = 1.0;
  const LossResult r = l1_loss(pred, target, mask, 1);
  REQUIRE(r.value == Catch::Approx(1.5));
  REQUIRE(r.grad(0, 0, 0) == -1.0);
  REQUIRE(r.grad(1, 0, 0) == 1.0);

  const LossResult same = l1_loss(pred, pred, mask, 1);
  REQUIRE(same.value == 0.0);
  REQUIRE(same.grad(0, 0, 0) == 0.0);  // tie subgradient
}

TEST_CASE("unmasked cells never contribute to the l1 loss") {
  const DenseTensor pred = random_tensor(42, "heads/l1/p", {3, 4, 4});
  const DenseTensor target = random_tensor(42, "heads/l1/t", {3, 4, 4});
  DenseTensor mask({4, 4});
  mask(2, 1) = 1.0;
  const LossResult r = l1_loss(pred, target, mask, 1);
  double want = 0.0;
  for (int c = 0; c < 3; ++c) want += std::abs(pred(c, 2, 1) - target(c, 2, 1));
  REQUIRE(r.value == Catch::Approx(want));
  REQUIRE(r.grad(0, 0, 0) == 0.0);
}

TEST_CASE("cross entropy on uniform logits is ln K") {
  DenseTensor logits({6, 2, 3, 3});
  std::vector<std::uint8_t> labels(2 * 3 * 3, 3);
  const LossResult r = ce_loss(logits, labels);
  REQUIRE(r.value == Catch::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy collapses when the true logit dominates") {
  DenseTensor logits({6, 1, 2, 2});
  std::vector<std::uint8_t> labels = {0, 1, 2, 3};
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t y = 0; y < 2; ++y) {
      const std::size_t lin = x * 2 + y;
      logits(labels[lin], 0, x, y) = 30.0;
    }
  }
  REQUIRE(ce_loss(logits, labels).value <= 1e-9);
}

TEST_CASE("cross entropy gradient is softmax minus onehot over M") {
  const DenseTensor logits =
      random_tensor(43, "heads/ce/fd", {4, 2, 3, 3}, -2.0, 2.0);
  SeededStream s(43, "heads/ce/lab");
  std::vector<std::uint8_t> labels(18), mask(18, 1);
  for (auto& l : labels) l = static_cast<std::uint8_t>(s.below(4));
  for (std::size_t i = 0; i < 4; ++i) mask[s.below(18)] = 0;

  const LossResult r = ce_loss(logits, labels, mask);
  const std::vector<double> fd =
      oracle::fd_gradient(logits.data(), [&](const std::vector<double>& x) {
        DenseTensor l2 = logits;
        l2.data() = x;
        return ce_loss(l2, labels, mask).value;
      });
  REQUIRE(oracle::max_rel_err(r.grad.data(), fd) <= 1e-4);
}

TEST_CASE("masked-out voxels leave the cross entropy unchanged") {
  DenseTensor logits = random_tensor(44, "heads/ce/mask", {3, 1, 2, 2});
  std::vector<std::uint8_t> labels = {0, 1, 2, 0};
  std::vector<std::uint8_t> mask = {1, 0, 1, 1};
  const LossResult masked = ce_loss(logits, labels, mask);

  DenseTensor perturbed = logits;
  perturbed(0, 0, 0, 1) += 100.0;  // linear index 1 is masked out
  perturbed(2, 0, 0, 1) -= 3.0;
  const LossResult same = ce_loss(perturbed, labels, mask);
  REQUIRE(same.value == masked.value);

  std::vector<std::uint8_t> bad = {0, 1, 9, 0};
  REQUIRE_THROWS_AS(ce_loss(logits, bad, mask), ContractError);
}

TEST_CASE("loss composition follows the published weighting") {
  const LossWeights w;
  REQUIRE(det_loss(1.0, 2.0, w) == Catch::Approx(1.5));
  REQUIRE(total_loss(1.0, 2.0, w) == Catch::Approx(1.02));

  const double cls = 0.37, loc = 1.21, ce = 0.85;
  const double composed = total_loss(ce, det_loss(cls, loc, w), w);
  REQUIRE(composed == ce + w.lambda * (cls + w.lambda_l * loc));
}

TEST_CASE("empty voxel dropout removes exactly the floored share") {
  std::vector<std::uint8_t> labels(130, 0);
  for (int i = 0; i < 30; ++i) labels[i * 4 % 130] = 2;
  const std::size_t free_total =
      std::count(labels.begin(), labels.end(), std::uint8_t{0});
  const auto mask = empty_voxel_dropout(labels, 0, 0.8, 9);

  std::size_t dropped = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask[i] == 0) {
      ++dropped;
      REQUIRE(labels[i] == 0);
    }
    if (labels[i] != 0) REQUIRE(mask[i] == 1);
  }
  REQUIRE(dropped == static_cast<std::size_t>(0.8 * free_total));

  const auto again = empty_voxel_dropout(labels, 0, 0.8, 9);
  REQUIRE(again == mask);
  const auto other = empty_voxel_dropout(labels, 0, 0.8, 10);
  REQUIRE(other != mask);
  REQUIRE_THROWS_AS(empty_voxel_dropout(labels, 0, 1.5, 9), ContractError);
}

TEST_CASE("dropout of a pure free field keeps the exact complement") {
  std::vector<std::uint8_t> labels(100, 0);
  const auto mask = empty_voxel_dropout(labels, 0, 0.8, 3);
  REQUIRE(std::count(mask.begin(), mask.end(), std::uint8_t{0}) == 80);
}

TEST_CASE("clamped sigmoid zeroes its derivative at saturation") {
  DenseTensor x({3});
  x(0) = 0.0;
  x(1) = 40.0;
  x(2) = -40.0;
  const SigmoidResult s = sigmoid_clamp(x);
  REQUIRE(s.value(0) == Catch::Approx(0.5));
  REQUIRE(s.dvalue(0) == Catch::Approx(0.25));
  REQUIRE(s.value(1) == 1.0 - kSigmoidEps);
  REQUIRE(s.dvalue(1) == 0.0);
  REQUIRE(s.value(2) == kSigmoidEps);
  REQUIRE(s.dvalue(2) == 0.0);
}

TEST_CASE("head backprop is the exact adjoint of the 1x1 conv") {
  const DenseTensor input = random_tensor(45, "heads/bp/in", {3, 4, 5});
  const DenseTensor weights = random_tensor(45, "heads/bp/w", {2, 3, 1, 1});
  const DenseTensor upstream = random_tensor(45, "heads/bp/g", {2, 4, 5});

  const HeadGradients g = head_backprop(input, weights, upstream);
  const auto scalar_loss = [&](const DenseTensor& in, const DenseTensor& w) {
    const DenseTensor out = bevfuse::conv2d(in, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      acc += upstream.data()[i] * out.data()[i];
    }
    return acc;
  };
  const std::vector<double> fd_in =
      oracle::fd_gradient(input.data(), [&](const std::vector<double>& x) {
        DenseTensor in2 = input;
        in2.data() = x;
        return scalar_loss(in2, weights);
      });
  const std::vector<double> fd_w =
      oracle::fd_gradient(weights.data(), [&](const std::vector<double>& x) {
        DenseTensor w2 = weights;
        w2.data() = x;
        return scalar_loss(input, w2);
      });
  REQUIRE(oracle::max_rel_err(g.grad_input.data(), fd_in) <= 1e-4);
  REQUIRE(oracle::max_rel_err(g.grad_weights.data(), fd_w) <= 1e-4);

  DenseTensor zero(upstream.shape());
  const HeadGradients gz = head_backprop(input, weights, zero);
  for (double v : gz.grad_input.data()) REQUIRE(v == 0.0);
  for (double v : gz.grad_weights.data()) REQUIRE(v == 0.0);
}

TEST_CASE("gradcheck rows all pass and the corrupt hook all fails") {
  const std::vector<oracle::GradCheckRow> rows = oracle::run_gradcheck(5, 4);
  REQUIRE(rows.size() == 4);
  for (const oracle::GradCheckRow& r : rows) {
    INFO(r.name << " max_rel_err " << r.max_rel_err);
    REQUIRE(r.pass);
    REQUIRE(r.max_rel_err <= 1e-4);
  }
  const std::vector<oracle::GradCheckRow> bad =
      oracle::run_gradcheck(5, 4, 1e-4, true);
  for (const oracle::GradCheckRow& r : bad) REQUIRE_FALSE(r.pass);
}

TEST_CASE("fitting the occupancy head descends monotonically") {
  SeededStream s(46, "heads/fit");
  bevfuse::BevTensor f_occ;
  f_occ.data = DenseTensor({6, 6, 6});
  std::vector<std::uint8_t> labels(6 * 6 * 2);
  // Two z levels: labels follow a linear score of two feature channels so
  // the problem is cleanly separable.
  for (double& v : f_occ.data.data()) v = s.uniform(-1.0, 1.0);
  for (std::size_t x = 0; x < 6; ++x) {
    for (std::size_t y = 0; y < 6; ++y) {
      const double score = f_occ.data(0, x, y) - 0.5 * f_occ.data(1, x, y);
      for (std::size_t z = 0; z < 2; ++z) {
        labels[(x * 6 + y) * 2 + z] =
            static_cast<std::uint8_t>(score > 0.0 ? z + 1 : 0);
      }
    }
  }
  FitOptions gentle;
  gentle.steps = 120;
  gentle.lr = 0.01;
  const FitResult slow = fit_last_layer(f_occ, labels, {}, 3, 2, gentle);
  REQUIRE(slow.loss_trace.size() == 121);
  for (std::size_t i = 1; i < slow.loss_trace.size(); ++i) {
    REQUIRE(slow.loss_trace[i] <= slow.loss_trace[i - 1] + 1e-12);
  }

  const FitResult fit = fit_last_layer(f_occ, labels, {}, 3, 2);
  REQUIRE(fit.loss_trace.back() <= 0.5 * fit.loss_trace.front());

  const DenseTensor logits = fit.logits(f_occ, 3, 2);
  const LossResult ce = ce_loss(logits, labels);
  REQUIRE(ce.value == Catch::Approx(fit.loss_trace.back()).margin(1e-9));
}

TEST_CASE("fit ignores masked voxels and validates inputs") {
  bevfuse::BevTensor f_occ;
  f_occ.data = random_tensor(47, "heads/fit/mask", {2, 3, 3});
  std::vector<std::uint8_t> labels(9, 1);
  std::vector<std::uint8_t> mask(9, 0);
  const FitResult fit = fit_last_layer(f_occ, labels, mask, 2, 1);
  for (double v : fit.weights.data()) REQUIRE(v == 0.0);
  REQUIRE(fit.loss_trace.back() == 0.0);

  std::vector<std::uint8_t> bad(9, 5);
  REQUIRE_THROWS_AS(fit_last_layer(f_occ, bad, {}, 2, 1), ContractError);
  FitOptions opt;
  opt.lr = 0.0;
  REQUIRE_THROWS_AS(fit_last_layer(f_occ, labels, {}, 2, 1, opt),
                    ContractError);
}
