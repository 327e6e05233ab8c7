#pragma once

#include <string>
#include <vector>

#include "yamabe/geometry.hpp"

namespace yamabe {

struct IterationTrace;

struct FieldBundle {
  GridSpec grid;
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> values;

  ScalarField field(const std::string& name) const;
};

// <stem>.csv: node, coordinates, one column per field; <stem>.json: grid kind, n, extent, m, field names.
// Values are written with 17 significant digits.
void write_fields(const std::string& stem, const FieldBundle& bundle);
FieldBundle read_fields(const std::string& stem);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// step, residual, min, max
CsvTable trace_table(const IterationTrace& trace);

std::string format_double(double v);

}  // namespace yamabe
