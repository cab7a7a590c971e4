#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "qrnet/types.hpp"

namespace qrnet {

/// Shortest-safe round-trip formatting: 17 significant digits.
std::string format_double(double v);

double parse_double(std::string_view field);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

/// Row-major matrix dump preceded by a single comment line.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M,
                      const std::string& header_comment);

Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace qrnet
