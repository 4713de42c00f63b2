#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"

namespace bdmri::io {

struct Table {
  std::vector<std::string> header;
  MatrixXd values;
};

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

/// Numeric CSV with one header row.
inline void write_csv(const std::string& path, const std::vector<std::string>& header, const MatrixXd& values) {
  if (!header.empty() && static_cast<Index>(header.size()) != values.cols())
    throw DataError("csv: header has " + std::to_string(header.size()) + " names for " +
                    std::to_string(values.cols()) + " columns");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << values(i, j);
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  t.header = split(line);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size() && c.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": not a number: '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

}  // namespace bdmri::io
