#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "imumoco/errors.hpp"

namespace imumoco::detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_number(const std::string& cell, std::size_t line) {
  if (cell.empty()) throw FormatError("empty cell", line);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw FormatError("non-numeric cell '" + cell + "'", line);
  }
  if (used != cell.size() || !std::isfinite(value)) throw FormatError("non-numeric cell '" + cell + "'", line);
  return value;
}

}  // namespace imumoco::detail
