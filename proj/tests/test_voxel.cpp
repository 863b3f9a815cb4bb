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
#include <map>
#include <set>

#include "occkit/common.hpp"
#include "occkit/oracle.hpp"
#include "occkit/tensor.hpp"
#include "occkit/voxel.hpp"

using namespace occkit;
using namespace occkit::voxel;

namespace {

GridSpec unit_spec(int nx, int ny, int nz) {
  return GridSpec::from_dims(Eigen::Vector3d::Zero(),
                             Eigen::Vector3d(1.0, 1.0, 1.0), nx, ny, nz);
}

SparseVoxelGrid random_grid(std::uint64_t seed, const std::string& name,
                            int nx, int ny, int nz, int channels, int active) {
  SeededStream s(seed, name);
  SparseVoxelGrid g;
  g.spec = unit_spec(nx, ny, nz);
  g.channels = channels;
  std::set<Coord3> taken;
  for (int i = 0; i < active; ++i) {
    Coord3 c = {static_cast<int>(s.below(nz)), static_cast<int>(s.below(ny)),
                static_cast<int>(s.below(nx))};
    if (!taken.insert(c).second) continue;
    g.coords.push_back(c);
    for (int ch = 0; ch < channels; ++ch) {
      g.features.push_back(s.uniform(-1.0, 1.0));
    }
  }
  return g;
}

}  // namespace

TEST_CASE("grid spec rejects non-integral extents") {
  REQUIRE_THROWS_AS(GridSpec::make({0, 0, 0}, {1.0, 1.0, 0.95},
                                   {0.5, 0.5, 0.5}),
                    ConfigError);
  REQUIRE_THROWS_AS(GridSpec::make({0, 0, 0}, {1.0, 1.0, 1.0},
                                   {0.5, 0.0, 0.5}),
                    ConfigError);
  const GridSpec ok = GridSpec::make({0, 0, 0}, {1.0, 2.0, 3.0},
                                     {0.5, 0.5, 0.5});
  REQUIRE(ok.nx == 2);
  REQUIRE(ok.ny == 4);
  REQUIRE(ok.nz == 6);
}

TEST_CASE("voxel features are the mean of contained points") {
  PointCloud cloud;
  cloud.push_back({0.2, 0.2, 0.2, 1.0});
  cloud.push_back({0.3, 0.3, 0.3, 2.0});
  cloud.push_back({0.4, 0.4, 0.4, 3.0});
  const SparseVoxelGrid g = voxelize(cloud, unit_spec(2, 2, 2));
  REQUIRE(g.coords.size() == 1);
  const double* f = g.feature_row(0);
  REQUIRE(f[0] == Catch::Approx(0.3));
  REQUIRE(f[3] == Catch::Approx(2.0));
}

TEST_CASE("only the first ten points per voxel are kept") {
  PointCloud cloud;
  for (int i = 0; i < 12; ++i) {
    cloud.push_back({0.5, 0.5, 0.5, static_cast<float>(i + 1)});
  }
  const SparseVoxelGrid g = voxelize(cloud, unit_spec(1, 1, 1));
  REQUIRE(g.coords.size() == 1);
  // Mean of intensities 1..10, not 1..12.
  REQUIRE(g.feature_row(0)[3] == Catch::Approx(5.5));
}

TEST_CASE("points on a voxel's max face belong to the next voxel") {
  PointCloud cloud;
  cloud.push_back({1.0, 0.5, 0.5, 0.0});  // on the face between cells 0 and 1
  const SparseVoxelGrid g = voxelize(cloud, unit_spec(2, 1, 1));
  REQUIRE(g.coords.size() == 1);
  REQUIRE(g.coords[0][2] == 1);

  PointCloud beyond;
  beyond.push_back({2.0, 0.5, 0.5, 0.0});  // exactly max_bound: dropped
  REQUIRE(voxelize(beyond, unit_spec(2, 1, 1)).coords.empty());
}

TEST_CASE("out-of-bounds points are dropped") {
  PointCloud cloud;
  cloud.push_back({-0.1, 0.5, 0.5, 0.0});
  cloud.push_back({0.5, 0.5, 0.5, 1.0});
  const SparseVoxelGrid g = voxelize(cloud, unit_spec(1, 1, 1));
  REQUIRE(g.coords.size() == 1);
}

TEST_CASE("voxelize output is sorted and bounded by input size") {
  SeededStream s(3, "voxel/bounded");
  PointCloud cloud;
  for (int i = 0; i < 200; ++i) {
    cloud.push_back({static_cast<float>(s.uniform(0.0, 4.0)),
                     static_cast<float>(s.uniform(0.0, 4.0)),
                     static_cast<float>(s.uniform(0.0, 4.0)), 0.0f});
  }
  const GridSpec spec = unit_spec(4, 4, 4);
  const SparseVoxelGrid g = voxelize(cloud, spec);
  REQUIRE(g.coords.size() <= std::min<std::size_t>(cloud.size(), 64));
  for (std::size_t i = 1; i < g.coords.size(); ++i) {
    REQUIRE(g.coords[i - 1] < g.coords[i]);
  }
}

TEST_CASE("densify places features at active sites and zeros elsewhere") {
  SparseVoxelGrid g;
  g.spec = unit_spec(4, 4, 4);
  g.channels = 2;
  g.coords.push_back({1, 2, 3});
  g.features = {5.0, -7.0};
  const DenseTensor d = densify(g);
  REQUIRE(d.dim(0) == 2);
  REQUIRE(d(0, 1, 2, 3) == 5.0);
  REQUIRE(d(1, 1, 2, 3) == -7.0);
  double total = 0.0;
  for (double v : d.data()) total += std::abs(v);
  REQUIRE(total == 12.0);

  SparseVoxelGrid empty;
  empty.spec = g.spec;
  empty.channels = 2;
  const DenseTensor z = densify(empty);
  for (double v : z.data()) REQUIRE(v == 0.0);
}

TEST_CASE("densified voxel mass matches a direct recompute from points") {
  SeededStream s(11, "voxel/mass");
  PointCloud cloud;
  for (int i = 0; i < 120; ++i) {
    cloud.push_back({static_cast<float>(s.uniform(0.0, 2.0)),
                     static_cast<float>(s.uniform(0.0, 2.0)),
                     static_cast<float>(s.uniform(0.0, 2.0)),
                     static_cast<float>(s.uniform(0.0, 1.0))});
  }
  const GridSpec spec = unit_spec(2, 2, 2);
  const SparseVoxelGrid g = voxelize(cloud, spec);
  const DenseTensor d = densify(g);

  // Recompute sums of the first 10 kept intensities per cell directly.
  std::map<std::array<int, 3>, std::pair<int, double>> cells;
  for (const PointRecord& p : cloud) {
    const int ix = static_cast<int>(std::floor(p.x / 1.0));
    const int iy = static_cast<int>(std::floor(p.y / 1.0));
    const int iz = static_cast<int>(std::floor(p.z / 1.0));
    auto& [kept, sum] = cells[{iz, iy, ix}];
    if (kept < 10) {
      ++kept;
      sum += p.intensity;
    }
  }
  for (const auto& [c, acc] : cells) {
    const double mean = d(3, c[0], c[1], c[2]);
    REQUIRE(mean * acc.first == Catch::Approx(acc.second).margin(1e-9));
  }
}

TEST_CASE("submanifold identity kernel reproduces the grid") {
  const SparseVoxelGrid g = random_grid(21, "voxel/id", 6, 5, 4, 3, 10);
  const ConvKernel3D k = ConvKernel3D::identity(3);
  const SparseVoxelGrid out = sparse_conv3d(g, k);
  REQUIRE(out.coords == g.coords);
  for (std::size_t i = 0; i < g.features.size(); ++i) {
    REQUIRE(out.features[i] == Catch::Approx(g.features[i]).margin(1e-12));
  }
}

TEST_CASE("all-ones kernel spreads a single voxel to its neighborhood") {
  SparseVoxelGrid g;
  g.spec = unit_spec(5, 5, 5);
  g.channels = 2;
  g.coords.push_back({2, 2, 2});
  g.features = {1.5, -0.5};

  ConvKernel3D k;
  k.out_channels = 1;
  k.in_channels = 2;
  k.k = 3;
  k.stride = {1, 1, 1};
  k.mode = ConvMode::kRegular;
  k.weights.assign(1 * 2 * 27, 1.0);

  const SparseVoxelGrid out = sparse_conv3d(g, k);
  REQUIRE(out.coords.size() == 27);
  for (std::size_t i = 0; i < out.coords.size(); ++i) {
    REQUIRE(out.feature_row(i)[0] == Catch::Approx(1.0));  // 1.5 + (-0.5)
  }
}

TEST_CASE("strided conv matches the dense reference") {
  const SparseVoxelGrid g = random_grid(31, "voxel/stride", 8, 8, 8, 3, 20);
  const ConvKernel3D k = ConvKernel3D::seeded(31, "voxel/stride/w", 4, 3, 3,
                                              {2, 2, 2}, ConvMode::kRegular);
  const DenseTensor got = densify(sparse_conv3d(g, k));
  const DenseTensor want = oracle::dense_conv3d_reference(g, k);
  REQUIRE(got.same_shape(want));
  REQUIRE(max_abs_diff(got, want) < 1e-5);
}

TEST_CASE("sparse conv equals the dense reference across random grids") {
  for (int t = 0; t < 20; ++t) {
    SeededStream s(50 + t, "voxel/sweep");
    const int nx = 2 + static_cast<int>(s.below(7));
    const int ny = 2 + static_cast<int>(s.below(7));
    const int nz = 2 + static_cast<int>(s.below(7));
    const SparseVoxelGrid g = random_grid(50 + t, "voxel/sweep/g", nx, ny, nz,
                                          2, 1 + static_cast<int>(s.below(10)));
    const bool sub = t % 2 == 0;
    const ConvKernel3D k = ConvKernel3D::seeded(
        50 + t, "voxel/sweep/w", 3, 2, s.below(2) == 0 ? 1 : 3,
        sub ? Coord3{1, 1, 1}
            : Coord3{1 + static_cast<int>(s.below(3)), 1,
                     1 + static_cast<int>(s.below(2))},
        sub ? ConvMode::kSubmanifold : ConvMode::kRegular);
    const DenseTensor got = densify(sparse_conv3d(g, k));
    const DenseTensor want = oracle::dense_conv3d_reference(g, k);
    REQUIRE(max_abs_diff(got, want) < 1e-5);
  }
}

TEST_CASE("sparse conv contract violations are rejected") {
  const SparseVoxelGrid g = random_grid(61, "voxel/errs", 4, 4, 4, 3, 5);
  ConvKernel3D wrong_ci = ConvKernel3D::seeded(61, "voxel/errs/w", 2, 4, 3,
                                               {1, 1, 1}, ConvMode::kRegular);
  REQUIRE_THROWS_AS(sparse_conv3d(g, wrong_ci), ContractError);

  ConvKernel3D strided_sub = ConvKernel3D::seeded(
      61, "voxel/errs/w2", 2, 3, 3, {2, 2, 2}, ConvMode::kSubmanifold);
  REQUIRE_THROWS_AS(sparse_conv3d(g, strided_sub), ContractError);

  SparseVoxelGrid dup = g;
  dup.coords.push_back(dup.coords.front());
  for (int ch = 0; ch < dup.channels; ++ch) dup.features.push_back(0.0);
  const ConvKernel3D k = ConvKernel3D::identity(3);
  REQUIRE_THROWS_AS(sparse_conv3d(dup, k), ContractError);
}

TEST_CASE("encoder produces the documented compressed shape") {
  const GridSpec spec = GridSpec::make({-12.8, -12.8, -2.4}, {12.8, 12.8, 2.4},
                                       {0.2, 0.2, 0.3});
  REQUIRE(spec.nx == 128);
  REQUIRE(spec.ny == 128);
  REQUIRE(spec.nz == 16);

  SeededStream s(71, "voxel/encshape");
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.push_back({static_cast<float>(s.uniform(-12.0, 12.0)),
                     static_cast<float>(s.uniform(-12.0, 12.0)),
                     static_cast<float>(s.uniform(-2.0, 2.0)),
                     static_cast<float>(s.uniform(0.0, 1.0))});
  }
  const LidarEncoder enc = LidarEncoder::seeded(71);
  const DenseTensor f_l = enc.encode(voxelize(cloud, spec));
  REQUIRE(f_l.dim(0) == 32);
  REQUIRE(f_l.dim(1) == 1);
  REQUIRE(f_l.dim(2) == 16);
  REQUIRE(f_l.dim(3) == 16);
}

TEST_CASE("empty cloud encodes to an all-zero tensor") {
  const GridSpec spec = GridSpec::make({-12.8, -12.8, -2.4}, {12.8, 12.8, 2.4},
                                       {0.2, 0.2, 0.3});
  const LidarEncoder enc = LidarEncoder::seeded(72);
  const DenseTensor f_l = enc.encode(voxelize({}, spec));
  for (double v : f_l.data()) REQUIRE(v == 0.0);
}

TEST_CASE("encoder rejects non-divisible grid dims") {
  const GridSpec spec = unit_spec(8, 8, 8);  // z not divisible by 16
  SparseVoxelGrid g;
  g.spec = spec;
  g.channels = 4;
  const LidarEncoder enc = LidarEncoder::seeded(73);
  REQUIRE_THROWS_AS(enc.encode(g), ConfigError);
}

TEST_CASE("encoder is linear when activations are disabled") {
  const GridSpec spec = GridSpec::make({0, 0, 0}, {6.4, 6.4, 4.8},
                                       {0.2, 0.2, 0.3});
  SeededStream s(74, "voxel/linear");
  PointCloud cloud;
  for (int i = 0; i < 200; ++i) {
    cloud.push_back({static_cast<float>(s.uniform(0.0, 6.4)),
                     static_cast<float>(s.uniform(0.0, 6.4)),
                     static_cast<float>(s.uniform(0.0, 4.8)),
                     static_cast<float>(s.uniform(0.0, 1.0))});
  }
  LidarEncoder enc = LidarEncoder::seeded(74);
  enc.relu_enabled = false;

  SparseVoxelGrid g = voxelize(cloud, spec);
  SparseVoxelGrid doubled = g;
  for (double& f : doubled.features) f *= 2.0;

  const DenseTensor a = enc.encode(g);
  const DenseTensor b = enc.encode(doubled);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(b.data()[i] == Catch::Approx(2.0 * a.data()[i]).margin(1e-6));
  }
}

TEST_CASE("encoding is bit-identical across thread counts") {
  const GridSpec spec = GridSpec::make({0, 0, 0}, {6.4, 6.4, 4.8},
                                       {0.2, 0.2, 0.3});
  SeededStream s(75, "voxel/threads");
  PointCloud cloud;
  for (int i = 0; i < 300; ++i) {
    cloud.push_back({static_cast<float>(s.uniform(0.0, 6.4)),
                     static_cast<float>(s.uniform(0.0, 6.4)),
                     static_cast<float>(s.uniform(0.0, 4.8)), 0.5f});
  }
  const LidarEncoder enc = LidarEncoder::seeded(75);
  const SparseVoxelGrid g = voxelize(cloud, spec);

  threads::set(1);
  const DenseTensor a = enc.encode(g);
  threads::set(8);
  const DenseTensor b = enc.encode(g);
  threads::set(1);
  REQUIRE(a.data() == b.data());
}
