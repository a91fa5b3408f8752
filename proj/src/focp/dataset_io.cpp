#include <fstream>

#include "json.hpp"
#include "ttdioc/focp.hpp"

namespace ttdioc::focp {
namespace {

using nlohmann::json;

// Matrix columns are time steps; files store one row per time step.
json steps_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    json row = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) row.push_back(m(r, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix steps_from_json(const json& rows, Eigen::Index width_hint) {
  const auto count = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index width = count > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : width_hint;
  Matrix m(width, count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const json& row = rows.at(k);
    if (static_cast<Eigen::Index>(row.size()) != width) throw std::runtime_error("dataset: ragged rows");
    for (Eigen::Index r = 0; r < width; ++r) m(r, k) = row.at(r).get<double>();
  }
  return m;
}

json segment_to_json(const TrajectorySegment& s) {
  return json{{"system", s.system},   {"profile", s.profile},    {"seed", s.seed},
              {"Ts", s.ts},           {"N", s.horizon()},        {"t_start", s.t_start},
              {"X", steps_to_json(s.x)}, {"U", steps_to_json(s.u)}};
}

TrajectorySegment segment_from_json(const json& j) {
  TrajectorySegment s;
  s.system = j.at("system").get<std::string>();
  s.profile = j.at("profile").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.ts = j.at("Ts").get<double>();
  s.t_start = j.at("t_start").get<double>();
  s.x = steps_from_json(j.at("X"), 0);
  s.u = steps_from_json(j.at("U"), 0);
  const int n = j.at("N").get<int>();
  if (s.u.cols() != n || s.x.cols() != n + 1) throw std::runtime_error("dataset: horizon does not match X/U");
  return s;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  json doc;
  doc["format"] = "ttdioc-dataset";
  doc["version"] = 1;
  doc["training"] = json::array();
  doc["validation"] = json::array();
  for (const auto& s : dataset.training) doc["training"].push_back(segment_to_json(s));
  for (const auto& s : dataset.validation) doc["validation"].push_back(segment_to_json(s));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != "ttdioc-dataset") throw std::runtime_error("not a dataset file: " + path.string());
  Dataset d;
  for (const auto& s : doc.at("training")) d.training.push_back(segment_from_json(s));
  for (const auto& s : doc.at("validation")) d.validation.push_back(segment_from_json(s));
  return d;
}

}  // namespace ttdioc::focp
