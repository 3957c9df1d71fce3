#pragma once

#include "dqnmesh/common.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace dqnmesh {

// Dense matrices are stored as a list of rows.
nlohmann::json to_json(const Matrix& m);
nlohmann::json to_json(const Vector& v);
Matrix matrix_from_json(const nlohmann::json& j);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

}  // namespace dqnmesh
