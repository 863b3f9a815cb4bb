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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "occkit/commands.hpp"
#include "occkit/common.hpp"
#include "occkit/io.hpp"
#include "occkit/scenegen.hpp"

using namespace occkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("occkit_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

eval::OccupancyGrid small_grid() {
  eval::OccupancyGrid g;
  g.spec = bevfuse::OccGridSpec::make({0, 0, 0}, {2.0, 1.5, 1.0}, 0.5);
  g.labels.assign(g.spec.voxel_count(), 0);
  g.class_count = scenegen::kClassCount;
  return g;
}

nlohmann::json read_json(const std::string& path) {
  return nlohmann::json::parse(io::read_bytes(path));
}

}  // namespace

TEST_CASE("point cloud files hold one 16-byte record per point") {
  TempDir dir("points");
  voxel::PointCloud cloud;
  SeededStream s(1, "cli/points");
  for (int i = 0; i < 37; ++i) {
    cloud.push_back({s.uniform(-10.0, 10.0), s.uniform(-10.0, 10.0),
                     s.uniform(-2.0, 2.0), s.uniform(0.0, 1.0)});
  }
  const std::string path = dir.file("points.bin");
  io::write_point_cloud(path, cloud);
  REQUIRE(fs::file_size(path) == 37u * 16u);

  const voxel::PointCloud back = io::read_point_cloud(path);
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    REQUIRE(back[i].x == static_cast<double>(static_cast<float>(cloud[i].x)));
    REQUIRE(back[i].intensity ==
            static_cast<double>(static_cast<float>(cloud[i].intensity)));
  }
  REQUIRE_THROWS_AS(io::read_point_cloud(dir.file("missing.bin")), IoError);
}

TEST_CASE("grid files round-trip bit-exactly") {
  TempDir dir("grid");
  eval::OccupancyGrid g = small_grid();
  SeededStream s(2, "cli/grid");
  for (std::uint8_t& l : g.labels) {
    l = static_cast<std::uint8_t>(s.below(scenegen::kClassCount));
  }
  g.mask.assign(g.labels.size(), 1);
  g.mask[3] = 0;

  const std::string path = dir.file("a.grid");
  io::write_grid(path, g);
  const eval::OccupancyGrid back = io::read_grid(path);
  REQUIRE(back.labels == g.labels);
  REQUIRE(back.mask == g.mask);
  REQUIRE(back.class_count == g.class_count);
  REQUIRE(back.spec.same_lattice(g.spec, 0.0));

  io::write_grid(dir.file("b.grid"), back);
  REQUIRE(io::content_hash(io::read_bytes(dir.file("a.grid"))) ==
          io::content_hash(io::read_bytes(dir.file("b.grid"))));
}

TEST_CASE("header mismatches name the differing field") {
  eval::OccupancyGrid a = small_grid();
  eval::OccupancyGrid b = a;
  REQUIRE(io::header_mismatch(a, b).empty());

  b.spec = bevfuse::OccGridSpec::make({0, 0, 0}, {2.5, 1.5, 1.0}, 0.5);
  b.labels.assign(b.spec.voxel_count(), 0);
  REQUIRE(io::header_mismatch(a, b) == "dims");

  eval::OccupancyGrid c = a;
  c.spec.min_bound.x() += 0.25;
  REQUIRE(io::header_mismatch(a, c) == "origin");

  eval::OccupancyGrid d = a;
  d.class_count = 4;
  REQUIRE(io::header_mismatch(a, d) == "class_count");
}

TEST_CASE("scene files round-trip the generator output") {
  TempDir dir("scene");
  const scenegen::Scene scene = scenegen::generate_scene(11, {});
  io::write_scene(dir.file("scene.json"), scene);
  const scenegen::Scene back = io::read_scene(dir.file("scene.json"));
  REQUIRE(back.seed == scene.seed);
  REQUIRE(back.ground_z == scene.ground_z);
  REQUIRE(back.objects.size() == scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    REQUIRE(back.objects[i].semantic_class ==
            scene.objects[i].semantic_class);
    REQUIRE(back.objects[i].box.center.isApprox(scene.objects[i].box.center,
                                                0.0));
    REQUIRE(back.objects[i].box.yaw == scene.objects[i].box.yaw);
  }
}

TEST_CASE("content hashes are stable, distinct, and well-formed") {
  const std::string h = io::content_hash("hello");
  REQUIRE(h.rfind("fnv1a64:", 0) == 0);
  REQUIRE(h.size() == 8 + 16);
  REQUIRE(h == io::content_hash("hello"));
  REQUIRE(h != io::content_hash("hello "));
}

TEST_CASE("generation is reproducible and manifest-covered") {
  TempDir a("gen_a");
  TempDir b("gen_b");
  cli::GenOptions opt;
  opt.seed = 5;
  opt.out_dir = a.path.string();
  REQUIRE(cli::cmd_gen(opt) == 0);
  opt.out_dir = b.path.string();
  REQUIRE(cli::cmd_gen(opt) == 0);

  const nlohmann::json ma = read_json(a.file("manifest.json"));
  const nlohmann::json mb = read_json(b.file("manifest.json"));
  for (const std::string name : {"scene.json", "points.bin", "gt.grid"}) {
    REQUIRE(ma["files"].contains(name));
    REQUIRE(ma["files"][name] == mb["files"][name]);
    REQUIRE(io::content_hash(io::read_bytes(a.file(name))) ==
            ma["files"][name].get<std::string>());
  }

  TempDir c("gen_c");
  opt.seed = 6;
  opt.out_dir = c.path.string();
  REQUIRE(cli::cmd_gen(opt) == 0);
  const nlohmann::json mc = read_json(c.file("manifest.json"));
  REQUIRE(mc["files"]["scene.json"] != ma["files"]["scene.json"]);
}

TEST_CASE("a pipeline run reports desk shapes and composed losses") {
  TempDir scene("run_scene");
  TempDir out("run_out");
  cli::GenOptions gen;
  gen.seed = 7;
  gen.out_dir = scene.path.string();
  REQUIRE(cli::cmd_gen(gen) == 0);

  cli::RunOptions run;
  run.scene_dir = scene.path.string();
  run.out_dir = out.path.string();
  REQUIRE(cli::cmd_run(run) == 0);

  const nlohmann::json report = read_json(out.file("report.json"));
  REQUIRE(report["shapes"]["f_l"] == nlohmann::json({32, 1, 16, 16}));
  REQUIRE(report["shapes"]["f_c"] == nlohmann::json({16, 8, 16, 16}));
  REQUIRE(report["shapes"]["f_r"] == nlohmann::json({64, 16, 16}));
  REQUIRE(report["shapes"]["logits"] == nlohmann::json({6, 12, 64, 64}));

  const double ce = report["losses"]["ce"];
  const double cls = report["losses"]["cls"];
  const double loc = report["losses"]["loc"];
  const double total = report["losses"]["total"];
  REQUIRE(report["losses"]["det"].get<double>() ==
          Catch::Approx(cls + 0.25 * loc).epsilon(1e-12));
  REQUIRE(total == Catch::Approx(ce + 0.01 * (cls + 0.25 * loc))
                       .epsilon(1e-12));
  REQUIRE(fs::file_size(out.file("logits.bin")) ==
          6u * 12u * 64u * 64u * sizeof(double));

  // Detaching the detection branch must not touch the occupancy path.
  TempDir detached("run_detach");
  run.out_dir = detached.path.string();
  run.detach_det = true;
  REQUIRE(cli::cmd_run(run) == 0);
  REQUIRE(io::read_bytes(out.file("logits.bin")) ==
          io::read_bytes(detached.file("logits.bin")));
  const nlohmann::json report2 = read_json(detached.file("report.json"));
  REQUIRE(report2["losses"]["det"].get<double>() == 0.0);
  REQUIRE(report2["losses"]["total"].get<double>() ==
          report2["losses"]["ce"].get<double>());
}

TEST_CASE("a run against a mismatched lattice is rejected") {
  TempDir scene("run_bad");
  cli::GenOptions gen;
  gen.out_dir = scene.path.string();
  REQUIRE(cli::cmd_gen(gen) == 0);

  eval::OccupancyGrid wrong = small_grid();
  io::write_grid(scene.file("gt.grid"), wrong);

  cli::RunOptions run;
  run.scene_dir = scene.path.string();
  run.out_dir = (scene.path / "out").string();
  REQUIRE_THROWS_AS(cli::cmd_run(run), ContractError);
}

TEST_CASE("evaluating a grid against itself is perfect") {
  TempDir dir("eval_self");
  cli::GenOptions gen;
  gen.seed = 8;
  gen.out_dir = dir.path.string();
  REQUIRE(cli::cmd_gen(gen) == 0);

  cli::EvalOptions ev;
  ev.gt_path = dir.file("gt.grid");
  ev.pred_path = dir.file("gt.grid");
  ev.out_path = dir.file("metrics.json");
  REQUIRE(cli::cmd_eval(ev) == 0);

  const nlohmann::json m = read_json(dir.file("metrics.json"));
  REQUIRE(m["voxel_iou"].get<double>() == 1.0);
  REQUIRE(m["miou"].get<double>() == 1.0);
  REQUIRE(m["rayiou_mean"].get<double>() == 1.0);
  for (const auto& [tau, v] : m["rayiou"].items()) {
    REQUIRE(v.get<double>() == 1.0);
  }
}

TEST_CASE("ray scores reported by eval rise with the threshold") {
  TempDir dir("eval_mono");
  cli::GenOptions gen;
  gen.seed = 9;
  gen.out_dir = dir.path.string();
  REQUIRE(cli::cmd_gen(gen) == 0);

  eval::OccupancyGrid pred = io::read_grid(dir.file("gt.grid"));
  SeededStream s(9, "cli/perturb");
  for (std::uint8_t& l : pred.labels) {
    if (s.uniform() < 0.05) {
      l = static_cast<std::uint8_t>(s.below(scenegen::kClassCount));
    }
  }
  io::write_grid(dir.file("pred.grid"), pred);

  cli::EvalOptions ev;
  ev.gt_path = dir.file("gt.grid");
  ev.pred_path = dir.file("pred.grid");
  ev.out_path = dir.file("metrics.json");
  REQUIRE(cli::cmd_eval(ev) == 0);

  const nlohmann::json m = read_json(dir.file("metrics.json"));
  std::vector<double> by_tau;
  for (const std::string key : {"1.000000", "2.000000", "4.000000"}) {
    REQUIRE(m["rayiou"].contains(key));
    by_tau.push_back(m["rayiou"][key].get<double>());
  }
  REQUIRE(by_tau[0] <= by_tau[1] + 1e-12);
  REQUIRE(by_tau[1] <= by_tau[2] + 1e-12);

  eval::OccupancyGrid shrunk = small_grid();
  io::write_grid(dir.file("small.grid"), shrunk);
  ev.pred_path = dir.file("small.grid");
  REQUIRE_THROWS_WITH(cli::cmd_eval(ev),
                      Catch::Matchers::ContainsSubstring("dims"));
}

TEST_CASE("plots color classes by the fixed palette") {
  TempDir dir("plot");
  eval::OccupancyGrid g;
  g.spec = bevfuse::OccGridSpec::make({0, 0, 0}, {2.0, 1.5, 1.0}, 0.5);
  g.labels.assign(g.spec.voxel_count(), 0);
  g.class_count = scenegen::kClassCount;
  g.labels[g.spec.linear(1, 2, 1)] = scenegen::kBarrier;
  io::write_grid(dir.file("g.grid"), g);

  cli::PlotOptions plot;
  plot.grid_path = dir.file("g.grid");
  plot.out_path = dir.file("g.ppm");
  plot.z = 1;
  REQUIRE(cli::cmd_plot(plot) == 0);

  const std::string ppm = io::read_bytes(dir.file("g.ppm"));
  const std::string header = "P6\n4 3\n255\n";
  REQUIRE(ppm.rfind(header, 0) == 0);
  REQUIRE(ppm.size() == header.size() + 3u * 4u * 3u);
  const auto pixel = [&](int x, int y) {
    const std::size_t at = header.size() + 3 * (y * 4 + x);
    return std::array<std::uint8_t, 3>{static_cast<std::uint8_t>(ppm[at]),
                                       static_cast<std::uint8_t>(ppm[at + 1]),
                                       static_cast<std::uint8_t>(ppm[at + 2])};
  };
  REQUIRE(pixel(1, 2) == std::array<std::uint8_t, 3>{255, 120, 50});
  REQUIRE(pixel(0, 0) == std::array<std::uint8_t, 3>{0, 0, 0});

  plot.z = 5;
  REQUIRE_THROWS_AS(cli::cmd_plot(plot), ContractError);
}

TEST_CASE("config files override the desk defaults piecewise") {
  TempDir dir("config");
  io::write_bytes(dir.file("cfg.json"), R"({
    "seed": 42,
    "max_points": 6,
    "dropout_ratio": 0.5,
    "use_camera_mask": false,
    "loss_weights": {"lambda": 0.1, "lambda_l": 0.5},
    "fit": {"steps": 50, "lr": 0.25},
    "scene": {"min_boxes": 2, "max_boxes": 2}
  })");

  const cli::PipelineConfig cfg = cli::load_config(dir.file("cfg.json"));
  REQUIRE(cfg.seed == 42);
  REQUIRE(cfg.max_points == 6);
  REQUIRE(cfg.dropout_ratio == 0.5);
  REQUIRE_FALSE(cfg.use_camera_mask);
  REQUIRE(cfg.loss_weights.lambda == 0.1);
  REQUIRE(cfg.loss_weights.lambda_l == 0.5);
  REQUIRE(cfg.fit.steps == 50);
  REQUIRE(cfg.fit.lr == 0.25);
  REQUIRE(cfg.scene.min_boxes == 2);
  REQUIRE(cfg.scene.max_boxes == 2);
  REQUIRE(cfg.classes == 6);  // untouched defaults stay at desk values
  REQUIRE(cfg.occ.nx == 64);

  const cli::PipelineConfig desk = cli::load_config("");
  REQUIRE(desk.seed == 7);
  REQUIRE(desk.use_camera_mask);

  io::write_bytes(dir.file("bad.json"), "{not json");
  REQUIRE_THROWS_AS(cli::load_config(dir.file("bad.json")), ConfigError);
}

TEST_CASE("gradcheck and oracle commands pass and fail on demand") {
  cli::GradcheckOptions gc;
  gc.instances = 2;
  REQUIRE(cli::cmd_gradcheck(gc) == 0);
  gc.corrupt = true;
  REQUIRE(cli::cmd_gradcheck(gc) == 1);

  cli::OracleOptions oracle;
  oracle.conv_trials = 5;
  oracle.ray_grids = 2;
  oracle.rays_per_grid = 20;
  REQUIRE(cli::cmd_oracle(oracle) == 0);
}
