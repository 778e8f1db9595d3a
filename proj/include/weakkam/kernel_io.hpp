#pragma once

// Portable kernel dump: CSV "i,j,cost" with finite entries only, plus a JSON
// sidecar {dim, n_per_axis, tau, stencil_radius, point_count}.

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "weakkam/kernel.hpp"

namespace weakkam {

inline void save_kernel(const ActionKernel& k, const std::string& csv_path, const std::string& json_path,
                        int precision = std::numeric_limits<double>::max_digits10) {
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path);
  csv << std::setprecision(precision);
  csv << "i,j,cost\n";
  for (const auto& e : k.graph.edges()) csv << e.from << ',' << e.to << ',' << e.cost << '\n';
  if (!csv) throw IoError("write failed: " + csv_path);

  nlohmann::json meta;
  meta["dim"] = k.grid ? nlohmann::json(k.grid->dim()) : nlohmann::json(nullptr);
  meta["n_per_axis"] = k.grid ? nlohmann::json(k.grid->n_per_axis()) : nlohmann::json(nullptr);
  meta["tau"] = k.tau;
  meta["stencil_radius"] = k.stencil_radius;
  meta["point_count"] = k.point_count();
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path);
  js << meta.dump(2) << '\n';
  if (!js) throw IoError("write failed: " + json_path);
}

inline ActionKernel load_kernel(const std::string& csv_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw IoError("cannot open " + json_path);
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(json_path + ": " + e.what());
  }
  ActionKernel k;
  int points = 0;
  try {
    k.tau = meta.at("tau").get<double>();
    k.stencil_radius = meta.at("stencil_radius").get<double>();
    if (!meta.at("dim").is_null()) {
      k.grid = GridTorus(meta.at("dim").get<int>(), meta.at("n_per_axis").get<int>());
      points = k.grid->point_count();
    } else {
      points = meta.at("point_count").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(json_path + ": " + e.what());
  }

  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path);
  std::string line;
  int line_no = 0;
  std::vector<Edge> edges;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "i,j,cost") throw IoError(csv_path + ":1: expected header i,j,cost");
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    Edge e{};
    char c1 = 0, c2 = 0;
    if (!(ss >> e.from >> c1 >> e.to >> c2 >> e.cost) || c1 != ',' || c2 != ',')
      throw IoError(csv_path + ":" + std::to_string(line_no) + ": malformed row");
    edges.push_back(e);
  }
  k.graph = CostGraph(points, std::move(edges));
  return k;
}

}  // namespace weakkam
