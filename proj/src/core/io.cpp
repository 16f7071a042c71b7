#include "nsm/core/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "nsm/core/error.hpp"

namespace nsm::io {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{}) {
    // from_chars rejects "inf"/"nan" spellings produced elsewhere; fall back.
    try {
      return std::stod(text);
    } catch (...) {
      throw ConfigError("cannot parse number '" + text + "'");
    }
  }
  return v;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Mat& values) {
  if (!header.empty() && static_cast<Index>(header.size()) != values.cols())
    throw std::invalid_argument("csv header width does not match matrix");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  if (!header.empty()) out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Table table;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      const bool numeric = !cells.empty() && (std::isdigit(static_cast<unsigned char>(cells[0][0])) ||
                                              cells[0][0] == '-' || cells[0][0] == '.');
      if (!numeric) {
        table.header = cells;
        continue;
      }
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  const Index cols = rows.empty() ? static_cast<Index>(table.header.size()) : static_cast<Index>(rows[0].size());
  table.values.resize(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != cols) throw std::runtime_error("ragged csv " + path.string());
    for (Index j = 0; j < cols; ++j) table.values(static_cast<Index>(i), j) = rows[i][j];
  }
  return table;
}

void write_json(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError("malformed json " + path.string() + ": " + e.what());
  }
}

json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Mat& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

Mat mat_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  return m;
}

}  // namespace nsm::io
