#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "ttdioc/kktioc.hpp"

namespace ttdioc::kktioc {
namespace {

using nlohmann::json;

// Non-finite validation errors are stored as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::runtime_error("solution: bad number '" + s + "'");
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Matrices as {rows, cols, data (column-major)} so empty shapes survive.
json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::runtime_error("solution: matrix size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json config_json(const TtdConfig& c) {
  return json{{"E", c.basis_count},
              {"omega", {c.omega_init, c.omega_final, c.omega_step}},
              {"beta", {c.beta_init, c.beta_final, c.beta_step}},
              {"anchor", vector_json(c.resolved_anchor())},
              {"nonneg_theta", c.nonneg_theta},
              {"fista_tol", c.fista_tol},
              {"fista_max_iter", c.fista_max_iter},
              {"lbfgs_tol", c.lbfgs_tol},
              {"refine_rounds", c.refine_rounds},
              {"refine_tol", c.refine_tol}};
}

TtdConfig config_from(const json& j) {
  TtdConfig c;
  c.basis_count = j.at("E").get<int>();
  const auto om = j.at("omega").get<std::vector<double>>();
  const auto be = j.at("beta").get<std::vector<double>>();
  if (om.size() != 3 || be.size() != 3) throw std::runtime_error("solution: grid triples expected");
  c.omega_init = om[0];
  c.omega_final = om[1];
  c.omega_step = om[2];
  c.beta_init = be[0];
  c.beta_final = be[1];
  c.beta_step = be[2];
  c.anchor = vector_from(j.at("anchor"));
  c.anchor_scale = c.anchor.size() > 0 ? c.anchor[0] : 1.0;
  c.nonneg_theta = j.at("nonneg_theta").get<bool>();
  c.fista_tol = j.at("fista_tol").get<double>();
  c.fista_max_iter = j.at("fista_max_iter").get<int>();
  c.lbfgs_tol = j.at("lbfgs_tol").get<double>();
  c.refine_rounds = j.at("refine_rounds").get<int>();
  c.refine_tol = j.at("refine_tol").get<double>();
  return c;
}

}  // namespace

void save_solution(const std::filesystem::path& path, const IocSolution& sol) {
  json a = json::array();
  const Matrix& am = sol.model.coefficients();
  for (Eigen::Index r = 0; r < am.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < am.cols(); ++c) row.push_back(am(r, c));
    a.push_back(std::move(row));
  }
  json trace = json::array();
  for (const BetaRecord& r : sol.trace) {
    trace.push_back(json{{"beta", r.beta},
                         {"training_residual", number(r.training_residual)},
                         {"e_v", number(r.validation_error)},
                         {"W", r.frequencies}});
  }
  json lambda = json::array();
  json upsilon = json::array();
  for (const Matrix& l : sol.multipliers.lambda) lambda.push_back(matrix_json(l));
  for (const Vector& u : sol.multipliers.upsilon) upsilon.push_back(vector_json(u));
  json doc{{"format", "ttdioc-solution"},
           {"version", 1},
           {"method", sol.method},
           {"W", sol.model.frequencies()},
           {"A", std::move(a)},
           {"anchor", vector_json(sol.anchor)},
           {"training_residual", number(sol.training_residual)},
           {"selected_beta", sol.selected_beta},
           {"beta_trace", std::move(trace)},
           {"multipliers", {{"lambda", std::move(lambda)}, {"upsilon", std::move(upsilon)}}},
           {"config", config_json(sol.config)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

IocSolution load_solution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != "ttdioc-solution") throw std::runtime_error("not a solution file: " + path.string());
  IocSolution sol;
  sol.method = doc.at("method").get<std::string>();
  const auto w = doc.at("W").get<std::vector<double>>();
  const json& a = doc.at("A");
  const auto rows = static_cast<Eigen::Index>(a.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(a.at(0).size()) : 0;
  Matrix am(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(a.at(r).size()) != cols) throw std::runtime_error("solution: ragged A");
    for (Eigen::Index c = 0; c < cols; ++c) am(r, c) = a.at(r).at(c).get<double>();
  }
  sol.model = cost::TrigTimeModel(w, am);
  sol.anchor = vector_from(doc.at("anchor"));
  sol.training_residual = number_from(doc.at("training_residual"));
  sol.selected_beta = doc.at("selected_beta").get<double>();
  for (const json& r : doc.at("beta_trace")) {
    sol.trace.push_back({r.at("beta").get<double>(), number_from(r.at("training_residual")),
                         number_from(r.at("e_v")), r.at("W").get<std::vector<double>>()});
  }
  if (doc.contains("multipliers")) {
    for (const json& l : doc["multipliers"].at("lambda")) sol.multipliers.lambda.push_back(matrix_from(l));
    for (const json& u : doc["multipliers"].at("upsilon")) sol.multipliers.upsilon.push_back(vector_from(u));
  }
  sol.config = config_from(doc.at("config"));
  return sol;
}

}  // namespace ttdioc::kktioc
