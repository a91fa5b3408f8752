#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ttdioc/experiments.hpp"

namespace ttdioc::experiments {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? "," : "") << cells[k];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::invalid_argument("write_csv: row width mismatch");
    line(r);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_fig1(const std::filesystem::path& path, const std::vector<OrderCell>& cells) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cells) rows.push_back({std::to_string(c.order), format_double(c.report.e_v)});
  write_csv(path, {"order", "e_v"}, rows);
}

void write_fig2(const std::filesystem::path& path, const std::vector<BasisCell>& cells) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cells) rows.push_back({std::to_string(c.basis_count), format_double(c.report.e_v)});
  write_csv(path, {"E", "e_v"}, rows);
}

void write_fig3(const std::filesystem::path& path, const std::vector<ValidationReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) rows.push_back({r.system, r.profile, r.method, format_double(r.e_v)});
  write_csv(path, {"system", "profile", "method", "e_v"}, rows);
}

void write_fig4(const std::filesystem::path& path, const std::vector<ValidationReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) rows.push_back({format_double(r.ts), r.profile, format_double(r.e_v)});
  write_csv(path, {"Ts", "profile", "e_v"}, rows);
}

void write_fig5(const std::filesystem::path& path, const std::vector<ValidationReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) rows.push_back({std::to_string(r.horizon), r.profile, format_double(r.e_v)});
  write_csv(path, {"N", "profile", "e_v"}, rows);
}

}  // namespace ttdioc::experiments
