#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "evsplat/core.hpp"
#include "evsplat/gaussian_map.hpp"

namespace evsplat {

// Binary little-endian PLY in the layout used by gaussian-splatting training
// exports: float32 properties x, y, z, [nx, ny, nz,] f_dc_0..2,
// f_rest_0..{K-1}, opacity (pre-sigmoid), scale_0..2 (log stddev),
// rot_0..3 (quaternion, w first). f_rest is channel-major: coefficient i of
// channel c sits at f_rest_{c*K/3 + i}. Properties are located by name, so
// column order and extra float columns are tolerated.
inline GaussianMap load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ply: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw std::runtime_error("load_ply: " + path + " is not a PLY file");

  size_t vertex_count = 0;
  bool in_vertex_element = false;
  bool format_ok = false;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian")
        throw std::runtime_error("load_ply: unsupported format '" + fmt +
                                 "' (need binary_little_endian)");
      format_ok = true;
    } else if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex")
        throw std::runtime_error("load_ply: unsupported element '" + name + "'");
      in_vertex_element = true;
    } else if (tok == "property") {
      if (!in_vertex_element) throw std::runtime_error("load_ply: property before element");
      std::string type, name;
      ls >> type >> name;
      if (type != "float")
        throw std::runtime_error("load_ply: property '" + name + "' has unsupported type '" +
                                 type + "'");
      names.push_back(name);
    } else if (tok == "end_header") {
      break;
    } else {
      throw std::runtime_error("load_ply: unexpected header token '" + tok + "'");
    }
  }
  if (!format_ok) throw std::runtime_error("load_ply: missing format line");
  if (vertex_count == 0) throw std::runtime_error("load_ply: file contains no gaussians");

  std::map<std::string, int> col;
  for (size_t i = 0; i < names.size(); ++i) col[names[i]] = static_cast<int>(i);
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      throw std::runtime_error("load_ply: missing required property '" + name + "'");
    return it->second;
  };

  const int cx = require("x"), cy = require("y"), cz = require("z");
  const int cdc[3] = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
  const int cop = require("opacity");
  const int cs[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
  const int cq[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};

  int rest_count = 0;
  while (col.count("f_rest_" + std::to_string(rest_count))) ++rest_count;
  int degree = -1;
  for (int d = 0; d <= 3; ++d)
    if (rest_count == 3 * (sh_coeff_count(d) - 1)) degree = d;
  if (degree < 0)
    throw std::runtime_error("load_ply: f_rest count " + std::to_string(rest_count) +
                             " does not match any SH degree in [0, 3]");
  std::vector<int> crest(rest_count);
  for (int i = 0; i < rest_count; ++i) crest[i] = require("f_rest_" + std::to_string(i));

  const size_t stride = names.size();
  std::vector<float> raw(vertex_count * stride);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != raw.size() * sizeof(float))
    throw std::runtime_error("load_ply: truncated vertex data in " + path);

  const int per_channel = rest_count / 3;
  std::vector<Gaussian3D> gs(vertex_count);
  for (size_t v = 0; v < vertex_count; ++v) {
    const float* row = raw.data() + v * stride;
    Gaussian3D& g = gs[v];
    g.mean = Eigen::Vector3d(row[cx], row[cy], row[cz]);
    g.opacity = sigmoid(row[cop]);
    for (int a = 0; a < 3; ++a) g.scale[a] = std::exp(static_cast<double>(row[cs[a]]));
    g.rotation = Eigen::Quaterniond(row[cq[0]], row[cq[1]], row[cq[2]], row[cq[3]]).normalized();
    g.sh.assign(sh_coeff_count(degree), Eigen::Vector3d::Zero());
    g.sh[0] = Eigen::Vector3d(row[cdc[0]], row[cdc[1]], row[cdc[2]]);
    for (int i = 0; i < per_channel; ++i)
      g.sh[1 + i] = Eigen::Vector3d(row[crest[i]], row[crest[per_channel + i]],
                                    row[crest[2 * per_channel + i]]);
  }
  return GaussianMap(std::move(gs), degree);
}

inline void save_ply(const GaussianMap& map, const std::string& path) {
  if (map.empty()) throw std::runtime_error("save_ply: refusing to write an empty map");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_ply: cannot open " + path);

  const int rest_count = 3 * (sh_coeff_count(map.sh_degree()) - 1);
  const int per_channel = rest_count / 3;
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << map.size() << "\n";
  const char* base[] = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (const char* n : base) out << "property float " << n << "\n";
  for (int i = 0; i < rest_count; ++i) out << "property float f_rest_" << i << "\n";
  out << "property float opacity\n";
  for (int i = 0; i < 3; ++i) out << "property float scale_" << i << "\n";
  for (int i = 0; i < 4; ++i) out << "property float rot_" << i << "\n";
  out << "end_header\n";

  std::vector<float> row(9 + rest_count + 1 + 3 + 4);
  for (size_t v = 0; v < map.size(); ++v) {
    const Gaussian3D& g = map[v];
    size_t k = 0;
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(g.mean[a]);
    for (int a = 0; a < 3; ++a) row[k++] = 0.0f;  // normals, unused
    for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(g.sh[0][c]);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < per_channel; ++i)
        row[k++] = static_cast<float>(g.sh[1 + i][c]);
    row[k++] = static_cast<float>(logit(g.opacity));
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(std::log(g.scale[a]));
    const Eigen::Quaterniond q = g.rotation.normalized();
    row[k++] = static_cast<float>(q.w());
    row[k++] = static_cast<float>(q.x());
    row[k++] = static_cast<float>(q.y());
    row[k++] = static_cast<float>(q.z());
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_ply: write failed for " + path);
}

}  // namespace evsplat
