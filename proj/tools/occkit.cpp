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

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "occkit/commands.hpp"

namespace {

int default_threads() {
  const char* env = std::getenv("OCCKIT_THREADS");
  if (env == nullptr) return 1;
  try {
    const int n = std::stoi(env);
    return n >= 1 ? n : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

// "AxE", e.g. "96x5".
void parse_rays(const std::string& text, int* azimuths, int* elevations) {
  const std::size_t sep = text.find('x');
  if (sep == std::string::npos || sep == 0 || sep + 1 >= text.size()) {
    throw occkit::ConfigError("--rays expects AxE, got " + text);
  }
  try {
    *azimuths = std::stoi(text.substr(0, sep));
    *elevations = std::stoi(text.substr(sep + 1));
  } catch (const std::exception&) {
    throw occkit::ConfigError("--rays expects AxE, got " + text);
  }
  if (*azimuths < 1 || *elevations < 1) {
    throw occkit::ConfigError("--rays counts must be >= 1");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occkit: multi-modal occupancy prediction at desk scale"};
  app.require_subcommand(1);

  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (env OCCKIT_THREADS)")
      ->capture_default_str();

  occkit::cli::GenOptions gen;
  CLI::App* sub_gen = app.add_subcommand("gen", "generate a synthetic frame");
  sub_gen->add_option("--out", gen.out_dir, "output directory")->required();
  sub_gen->add_option("--seed", gen.seed, "scene seed")
      ->capture_default_str();
  sub_gen->add_option("--config", gen.config_path, "JSON config overrides");

  occkit::cli::RunOptions run;
  CLI::App* sub_run = app.add_subcommand("run", "run the forward pipeline");
  sub_run->add_option("--scene", run.scene_dir, "generated frame directory")
      ->required();
  sub_run->add_option("--out", run.out_dir, "output directory")->required();
  sub_run->add_option("--config", run.config_path, "JSON config overrides");
  sub_run->add_flag("--fit", run.fit, "fit the last layer and emit pred.grid");
  sub_run->add_flag("--detach-det", run.detach_det,
                    "zero the detection branch");

  occkit::cli::EvalOptions ev;
  std::string rays_text;
  CLI::App* sub_eval = app.add_subcommand("eval", "compare two grid files");
  sub_eval->add_option("--gt", ev.gt_path, "ground-truth grid")->required();
  sub_eval->add_option("--pred", ev.pred_path, "predicted grid")->required();
  sub_eval->add_option("--out", ev.out_path, "write metrics JSON here too");
  sub_eval->add_flag("--use-mask,!--no-use-mask", ev.use_mask,
                     "respect the GT evaluation mask");
  sub_eval->add_option("--rays", rays_text, "ray set as AxE (default 96x5)");

  occkit::cli::GradcheckOptions gc;
  CLI::App* sub_gc =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  sub_gc->add_option("--seed", gc.seed, "seed")->capture_default_str();
  sub_gc->add_option("--instances", gc.instances, "instances per term")
      ->capture_default_str();
  sub_gc->add_option("--tol", gc.tol, "max relative error")
      ->capture_default_str();
  sub_gc->add_flag("--corrupt", gc.corrupt,
                   "negative control: corrupt one gradient entry");

  occkit::cli::PlotOptions plot;
  CLI::App* sub_plot = app.add_subcommand("plot", "render a BEV slice to PPM");
  sub_plot->add_option("--grid", plot.grid_path, "grid file")->required();
  sub_plot->add_option("--out", plot.out_path, "output .ppm")->required();
  sub_plot->add_option("--z", plot.z, "z level")->capture_default_str();

  occkit::cli::OracleOptions oracle;
  CLI::App* sub_oracle =
      app.add_subcommand("oracle", "run the brute-force reference sweeps");
  sub_oracle->add_option("--seed", oracle.seed, "seed")->capture_default_str();
  sub_oracle->add_option("--conv-trials", oracle.conv_trials, "conv sweeps")
      ->capture_default_str();
  sub_oracle->add_option("--ray-grids", oracle.ray_grids, "ray grids")
      ->capture_default_str();
  sub_oracle->add_option("--rays-per-grid", oracle.rays_per_grid,
                         "rays per grid")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    occkit::threads::set(threads);
    if (sub_gen->parsed()) return occkit::cli::cmd_gen(gen);
    if (sub_run->parsed()) return occkit::cli::cmd_run(run);
    if (sub_eval->parsed()) {
      if (!rays_text.empty()) {
        parse_rays(rays_text, &ev.ray_azimuths, &ev.ray_elevations);
      }
      return occkit::cli::cmd_eval(ev);
    }
    if (sub_gc->parsed()) return occkit::cli::cmd_gradcheck(gc);
    if (sub_plot->parsed()) return occkit::cli::cmd_plot(plot);
    if (sub_oracle->parsed()) return occkit::cli::cmd_oracle(oracle);
  } catch (const occkit::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
