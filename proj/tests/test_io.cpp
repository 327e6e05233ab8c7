#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "yamabe/io.hpp"
#include "yamabe/iterate.hpp"

using namespace yamabe;

namespace {

std::string tmp(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "yamabe_io_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("periodic field round trip") {
  const GridSpec g = build_periodic_grid(3, 2.5, 6);
  const ScalarField u = sample(g, [](const Eigen::VectorXd& x) { return std::exp(x[0]) / 3 + 1e-300 * x[1]; });
  const ScalarField w = sample(g, [](const Eigen::VectorXd& x) { return -std::sin(7 * x[2]) * 1e12; });
  const std::string stem = tmp("periodic");
  write_fields(stem, FieldBundle{g, {"u", "w"}, {u.values, w.values}});
  const FieldBundle b = read_fields(stem);
  CHECK(b.grid == g);
  CHECK(b.names == std::vector<std::string>{"u", "w"});
  for (Index i = 0; i < g.node_count(); ++i) {
    CHECK(b.field("u")[i] == u[i]);
    CHECK(b.field("w")[i] == w[i]);
  }
  CHECK_THROWS_AS(b.field("missing"), PreconditionError);
}

TEST_CASE("radial field round trip") {
  const GridSpec g = build_radial_grid(5, 0.3, 17);
  const ScalarField u = sample(g, [](const Eigen::VectorXd& s) { return 1 / (1e-4 + s[0] * s[0]); });
  const std::string stem = tmp("radial");
  write_fields(stem, FieldBundle{g, {"u"}, {u.values}});
  const FieldBundle b = read_fields(stem);
  CHECK(b.grid == g);
  CHECK((b.values[0] - u.values).cwiseAbs().maxCoeff() <= 1e-15 * u.values.cwiseAbs().maxCoeff());
}

TEST_CASE("csv tables") {
  const std::string path = tmp("table.csv");
  const CsvTable t{{"eps", "Q"}, {{1e-4, 0.1 + 0.2}, {2e-4, -1.0 / 3}}};
  write_csv(path, t);
  const CsvTable r = read_csv(path);
  CHECK(r.header == t.header);
  CHECK(r.rows == t.rows);

  // identical bytes on a second write
  const std::string path2 = tmp("table2.csv");
  write_csv(path2, t);
  std::ifstream a(path), b(path2);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(0.1) == "0.10000000000000001");

  IterationTrace tr;
  tr.residual = {1.0, 0.5};
  tr.umin = {0.1, 0.2};
  tr.umax = {2.0, 1.5};
  const CsvTable tt = trace_table(tr);
  CHECK(tt.rows.size() == 2);
  CHECK(tt.rows[1] == std::vector<double>{1, 0.5, 0.2, 1.5});
}

TEST_CASE("malformed inputs") {
  const std::string path = tmp("bad.csv");
  {
    std::ofstream os(path);
    os << "a,b\n1,zz\n";
  }
  CHECK_THROWS_AS(read_csv(path), PreconditionError);
  {
    std::ofstream os(path);
    os << "a,b\n1\n";
  }
  CHECK_THROWS_AS(read_csv(path), PreconditionError);
  CHECK_THROWS_AS(read_csv(tmp("does_not_exist.csv")), PreconditionError);

  const GridSpec g = build_periodic_grid(3, 1.0, 4);
  const std::string stem = tmp("short");
  write_fields(stem, FieldBundle{g, {"u"}, {Eigen::VectorXd::Ones(g.node_count())}});
  {
    std::ofstream os(stem + ".csv");
    os << "node,x0,x1,x2,u\n0,0,0,0,1\n";
  }
  CHECK_THROWS_AS(read_fields(stem), PreconditionError);
  CHECK_THROWS_AS(write_fields(stem, FieldBundle{g, {"u"}, {Eigen::VectorXd::Ones(3)}}), PreconditionError);
}
