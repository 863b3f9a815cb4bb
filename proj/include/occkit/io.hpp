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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "occkit/common.hpp"
#include "occkit/eval.hpp"
#include "occkit/scenegen.hpp"
#include "occkit/voxel.hpp"

namespace occkit::io {

using json = nlohmann::json;

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return buf.str();
}

inline void write_bytes(const std::filesystem::path& path,
                        const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

inline void put_f32le(std::string& out, double value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(
      static_cast<float>(value));
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline double get_f32le(const char* p) {
  const std::uint32_t bits =
      static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
      static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8 |
      static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16 |
      static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24;
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace detail

/// Point-cloud file: headerless little-endian float32 records
/// (x, y, z, intensity), 16 bytes each.
inline void write_point_cloud(const std::filesystem::path& path,
                              const voxel::PointCloud& cloud) {
  std::string bytes;
  bytes.reserve(cloud.size() * 16);
  for (const voxel::PointRecord& p : cloud) {
    detail::put_f32le(bytes, p.x);
    detail::put_f32le(bytes, p.y);
    detail::put_f32le(bytes, p.z);
    detail::put_f32le(bytes, p.intensity);
  }
  write_bytes(path, bytes);
}

inline voxel::PointCloud read_point_cloud(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() % 16 != 0) {
    throw IoError("truncated point-cloud file " + path.string());
  }
  voxel::PointCloud cloud(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const char* rec = bytes.data() + i * 16;
    cloud[i].x = detail::get_f32le(rec);
    cloud[i].y = detail::get_f32le(rec + 4);
    cloud[i].z = detail::get_f32le(rec + 8);
    cloud[i].intensity = detail::get_f32le(rec + 12);
  }
  return cloud;
}

/// Grid file: one JSON header line (class_count, dims, has_mask, origin,
/// voxel_size) then labels as raw bytes in linear order (x*Y_o + y)*Z_o + z,
/// then mask bytes when present.
inline void write_grid(const std::filesystem::path& path,
                       const eval::OccupancyGrid& grid) {
  grid.validate();
  json header;
  header["class_count"] = grid.class_count;
  header["dims"] = {grid.spec.nx, grid.spec.ny, grid.spec.nz};
  header["has_mask"] = grid.mask.empty() ? 0 : 1;
  header["origin"] = {grid.spec.min_bound.x(), grid.spec.min_bound.y(),
                      grid.spec.min_bound.z()};
  header["voxel_size"] = grid.spec.res;

  std::string bytes = header.dump();
  bytes.push_back('\n');
  bytes.append(reinterpret_cast<const char*>(grid.labels.data()),
               grid.labels.size());
  if (!grid.mask.empty()) {
    bytes.append(reinterpret_cast<const char*>(grid.mask.data()),
                 grid.mask.size());
  }
  write_bytes(path, bytes);
}

inline eval::OccupancyGrid read_grid(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) {
    throw IoError("grid file " + path.string() + " has no header line");
  }
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw IoError("grid file " + path.string() + ": bad header: " + e.what());
  }

  eval::OccupancyGrid grid;
  grid.class_count = header.at("class_count").get<int>();
  const auto dims = header.at("dims");
  const auto origin = header.at("origin");
  const double res = header.at("voxel_size").get<double>();
  const Eigen::Vector3d min_bound(origin.at(0).get<double>(),
                                  origin.at(1).get<double>(),
                                  origin.at(2).get<double>());
  grid.spec.min_bound = min_bound;
  grid.spec.res = res;
  grid.spec.nx = dims.at(0).get<int>();
  grid.spec.ny = dims.at(1).get<int>();
  grid.spec.nz = dims.at(2).get<int>();
  if (grid.spec.nx < 1 || grid.spec.ny < 1 || grid.spec.nz < 1 ||
      !(res > 0.0)) {
    throw IoError("grid file " + path.string() + ": invalid header values");
  }
  const bool has_mask = header.at("has_mask").get<int>() != 0;

  const std::size_t voxels = grid.spec.voxel_count();
  const std::size_t want = voxels * (has_mask ? 2 : 1);
  if (bytes.size() - nl - 1 != want) {
    throw IoError("grid file " + path.string() + ": body is " +
                  std::to_string(bytes.size() - nl - 1) + " bytes, expected " +
                  std::to_string(want));
  }
  const auto* body = reinterpret_cast<const std::uint8_t*>(bytes.data() + nl +
                                                           1);
  grid.labels.assign(body, body + voxels);
  if (has_mask) grid.mask.assign(body + voxels, body + 2 * voxels);
  grid.validate();
  return grid;
}

/// First header field that differs between two grid files, empty when the
/// lattices and class counts agree.
inline std::string header_mismatch(const eval::OccupancyGrid& a,
                                   const eval::OccupancyGrid& b) {
  if (a.spec.nx != b.spec.nx || a.spec.ny != b.spec.ny ||
      a.spec.nz != b.spec.nz) {
    return "dims";
  }
  if (std::abs(a.spec.res - b.spec.res) > 1e-9) return "voxel_size";
  if ((a.spec.min_bound - b.spec.min_bound).cwiseAbs().maxCoeff() > 1e-9) {
    return "origin";
  }
  if (a.class_count != b.class_count) return "class_count";
  return {};
}

inline json scene_to_json(const scenegen::Scene& scene) {
  json j;
  j["seed"] = scene.seed;
  j["ground_z"] = scene.ground_z;
  j["extent_min"] = {scene.extent_min.x(), scene.extent_min.y(),
                     scene.extent_min.z()};
  j["extent_max"] = {scene.extent_max.x(), scene.extent_max.y(),
                     scene.extent_max.z()};
  j["objects"] = json::array();
  for (const scenegen::SceneObject& obj : scene.objects) {
    json o;
    o["semantic_class"] = obj.semantic_class;
    o["center"] = {obj.box.center.x(), obj.box.center.y(), obj.box.center.z()};
    o["size"] = {obj.box.size.x(), obj.box.size.y(), obj.box.size.z()};
    o["yaw"] = obj.box.yaw;
    j["objects"].push_back(o);
  }
  return j;
}

inline scenegen::Scene scene_from_json(const json& j) {
  scenegen::Scene scene;
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.ground_z = j.at("ground_z").get<double>();
  const auto lo = j.at("extent_min");
  const auto hi = j.at("extent_max");
  scene.extent_min = Eigen::Vector3d(lo.at(0), lo.at(1), lo.at(2));
  scene.extent_max = Eigen::Vector3d(hi.at(0), hi.at(1), hi.at(2));
  for (const json& o : j.at("objects")) {
    scenegen::SceneObject obj;
    obj.semantic_class = o.at("semantic_class").get<int>();
    obj.box.class_id = obj.semantic_class - scenegen::kFirstObjectClass;
    const auto c = o.at("center");
    const auto s = o.at("size");
    obj.box.center = Eigen::Vector3d(c.at(0), c.at(1), c.at(2));
    obj.box.size = Eigen::Vector3d(s.at(0), s.at(1), s.at(2));
    obj.box.yaw = o.at("yaw").get<double>();
    scene.objects.push_back(obj);
  }
  return scene;
}

inline void write_scene(const std::filesystem::path& path,
                        const scenegen::Scene& scene) {
  write_bytes(path, scene_to_json(scene).dump(2) + "\n");
}

inline scenegen::Scene read_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(json::parse(read_bytes(path)));
  } catch (const json::exception& e) {
    throw IoError("scene file " + path.string() + ": " + e.what());
  }
}

inline std::string content_hash(const std::string& bytes) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0')
     << fnv1a64(bytes.data(), bytes.size());
  return os.str();
}

/// manifest.json: file name -> content hash for every named artifact.
inline void write_manifest(const std::filesystem::path& dir,
                           const std::vector<std::string>& names) {
  json files = json::object();
  for (const std::string& name : names) {
    files[name] = content_hash(read_bytes(dir / name));
  }
  json j;
  j["files"] = files;
  write_bytes(dir / "manifest.json", j.dump(2) + "\n");
}

using Rgb = std::array<std::uint8_t, 3>;

/// Plot palette indexed by class id; free renders black.
inline std::vector<Rgb> default_palette() {
  return {
      Rgb{0, 0, 0},        // free
      Rgb{255, 0, 255},    // ground / driveable surface
      Rgb{0, 150, 245},    // vehicle
      Rgb{255, 0, 0},      // pedestrian
      Rgb{255, 120, 50},   // barrier
      Rgb{0, 175, 0},      // vegetation
  };
}

/// Binary PPM (P6) of one z-slice, one pixel per BEV cell: width X_o,
/// height Y_o, pixel (x, y) colored by label(x, y, z).
inline void write_slice_ppm(const std::filesystem::path& path,
                            const eval::OccupancyGrid& grid, int z_slice,
                            const std::vector<Rgb>& palette =
                                default_palette()) {
  grid.validate();
  if (z_slice < 0 || z_slice >= grid.spec.nz) {
    throw ContractError("write_slice_ppm: z_slice out of range");
  }
  std::string bytes = "P6\n" + std::to_string(grid.spec.nx) + " " +
                      std::to_string(grid.spec.ny) + "\n255\n";
  for (int y = 0; y < grid.spec.ny; ++y) {
    for (int x = 0; x < grid.spec.nx; ++x) {
      const std::uint8_t cls = grid.label(x, y, z_slice);
      if (cls >= palette.size()) {
        throw ContractError("write_slice_ppm: class " + std::to_string(cls) +
                            " has no palette entry");
      }
      const Rgb& c = palette[cls];
      bytes.push_back(static_cast<char>(c[0]));
      bytes.push_back(static_cast<char>(c[1]));
      bytes.push_back(static_cast<char>(c[2]));
    }
  }
  write_bytes(path, bytes);
}

}  // namespace occkit::io
