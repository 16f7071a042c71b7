#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsm/core/types.hpp"

namespace nsm::io {

using json = nlohmann::json;

/// Shortest round-trip decimal representation.
std::string format_double(double value);
double parse_double(const std::string& text);

struct Table {
  std::vector<std::string> header;
  Mat values;
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Mat& values);
Table read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const json& value);
json read_json(const std::filesystem::path& path);

json to_json(const Vec& v);
json to_json(const Mat& m);
Vec vec_from_json(const json& j);
Mat mat_from_json(const json& j);

}  // namespace nsm::io
