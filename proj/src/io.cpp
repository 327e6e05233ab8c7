#include "yamabe/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "yamabe/iterate.hpp"

namespace yamabe {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw PreconditionError("unparseable number '" + s + "' in " + where);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PreconditionError("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PreconditionError("cannot read " + path);
  return is;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

ScalarField FieldBundle::field(const std::string& name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return ScalarField(grid, values[k]);
  throw PreconditionError("no field named '" + name + "'");
}

void write_fields(const std::string& stem, const FieldBundle& b) {
  require(b.names.size() == b.values.size(), "field names and values differ in count");
  const Index N = b.grid.node_count();
  for (const auto& v : b.values) require(v.size() == N, "field size does not match the grid node count");

  const int dims = b.grid.periodic() ? b.grid.n : 1;
  std::ofstream os = open_out(stem + ".csv");
  os << "node";
  for (int d = 0; d < dims; ++d) os << (b.grid.periodic() ? ",x" + std::to_string(d) : std::string(",s"));
  for (const auto& name : b.names) os << ',' << name;
  os << '\n';
  for (Index i = 0; i < N; ++i) {
    os << i;
    const Eigen::VectorXd x = b.grid.coords(i);
    for (int d = 0; d < dims; ++d) os << ',' << format_double(x[d]);
    for (const auto& v : b.values) os << ',' << format_double(v[i]);
    os << '\n';
  }

  nlohmann::ordered_json j;
  j["grid_kind"] = b.grid.periodic() ? "periodic_box" : "radial_ball";
  j["n"] = b.grid.n;
  j["extent"] = b.grid.extent;
  j["m"] = b.grid.m;
  j["fields"] = b.names;
  open_out(stem + ".json") << j.dump(2) << '\n';
}

FieldBundle read_fields(const std::string& stem) {
  nlohmann::json j;
  try {
    open_in(stem + ".json") >> j;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError("malformed field manifest " + stem + ".json: " + e.what());
  }
  FieldBundle b;
  const std::string kind = j.at("grid_kind");
  if (kind == "periodic_box")
    b.grid = build_periodic_grid(j.at("n"), j.at("extent"), j.at("m"));
  else if (kind == "radial_ball")
    b.grid = build_radial_grid(j.at("n"), j.at("extent"), j.at("m"));
  else
    throw PreconditionError("unknown grid kind '" + kind + "'");
  b.names = j.at("fields").get<std::vector<std::string>>();

  const CsvTable t = read_csv(stem + ".csv");
  const Index N = b.grid.node_count();
  const std::size_t first = t.header.size() - b.names.size();
  require(Index(t.rows.size()) == N, stem + ".csv has " + std::to_string(t.rows.size()) + " rows, grid has " +
                                         std::to_string(N) + " nodes");
  for (std::size_t k = 0; k < b.names.size(); ++k) {
    require(t.header[first + k] == b.names[k], "column '" + t.header[first + k] + "' does not match manifest");
    Eigen::VectorXd v(N);
    for (Index i = 0; i < N; ++i) v[i] = t.rows[i][first + k];
    b.values.push_back(std::move(v));
  }
  return b;
}

void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream os = open_out(path);
  for (std::size_t k = 0; k < t.header.size(); ++k) os << (k ? "," : "") << t.header[k];
  os << '\n';
  for (const auto& row : t.rows) {
    require(row.size() == t.header.size(), "csv row width differs from header in " + path);
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << format_double(row[k]);
    os << '\n';
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw PreconditionError(path + " is empty");
  t.header = split(line);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    require(cells.size() == t.header.size(), path + ":" + std::to_string(lineno) + " has the wrong number of cells");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, path + ":" + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable trace_table(const IterationTrace& tr) {
  CsvTable t{{"step", "residual", "min", "max"}, {}};
  for (std::size_t k = 0; k < tr.residual.size(); ++k)
    t.rows.push_back({double(k), tr.residual[k], k < tr.umin.size() ? tr.umin[k] : 0.0,
                      k < tr.umax.size() ? tr.umax[k] : 0.0});
  return t;
}

}  // namespace yamabe
