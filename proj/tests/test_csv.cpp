#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "cvecchia/csv.hpp"

namespace cvecchia {
namespace {

TEST(Ingest, ToyBivariateSpaceTime) {
  std::istringstream in(
      "x1,x2,t,component,value\n"
      "10,20,2000,5,1.5\n"
      "14,20,2001,5,-0.5\n"
      "10,22,2002,7,2.0\n");
  const IngestedData d = ingest_csv(in);
  ASSERT_EQ(d.inputs.size(), 3u);
  EXPECT_EQ(d.inputs.kind(), InputKind::MultivariateSpatioTemporal);
  EXPECT_DOUBLE_EQ(d.inputs.coord(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.inputs.coord(2, 1), 0.5);  // aspect preserved: 2 / 4
  EXPECT_DOUBLE_EQ(d.inputs.time(1), 0.5);
  EXPECT_EQ(d.inputs.component(0), 0);
  EXPECT_EQ(d.inputs.component(2), 1);
  EXPECT_EQ(d.component_values, (std::vector<double>{5, 7}));
  EXPECT_DOUBLE_EQ(d.response(1), -0.5);
  EXPECT_DOUBLE_EQ(d.space_scale, 4.0);
  EXPECT_DOUBLE_EQ(d.offset_x2, 20.0);
  EXPECT_DOUBLE_EQ(d.time_scale, 2.0);
}

TEST(Ingest, SpatialOnlyAndColumnMapping) {
  std::istringstream in("lon,lat,obs\r\n0,0,1\r\n2,1,2\r\n");
  ColumnMapping map;
  map.x1 = "lon";
  map.x2 = "lat";
  map.value = "obs";
  const IngestedData d = ingest_csv(in, map);
  EXPECT_EQ(d.inputs.kind(), InputKind::Spatial);
  EXPECT_DOUBLE_EQ(d.inputs.coord(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.inputs.coord(1, 1), 0.5);
}

TEST(Ingest, ReportsParseErrorLocation) {
  std::istringstream in("x1,x2,value\n0,0,1\n1,abc,2\n");
  try {
    ingest_csv(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), "x2");
  }
  std::istringstream nan_in("x1,x2,value\n0,0,nan\n");
  EXPECT_THROW(ingest_csv(nan_in), ParseError);
}

TEST(Ingest, MissingColumn) {
  std::istringstream in("x1,value\n0,1\n");
  EXPECT_THROW(ingest_csv(in), MissingColumn);
}

TEST(Records, WriteParseRoundTrip) {
  std::vector<ExperimentRecord> recs = {
      {"kl-sweep", "random-2d", "C-MM+C-NN", "10", "123", "kl", 0.25, 1.5, "a=1;b=\"x\""},
      {"kl-sweep", "random, 2d", "E-MM+E-NN", "10", "123", "kl", std::nullopt, 0.0, ""},
      {"kl-sweep", "random-2d", "E-MM+E-NN", "5", "123", "kl", std::numeric_limits<double>::infinity(), 0.0, ""},
  };
  std::ostringstream out;
  write_records(out, recs);
  EXPECT_NE(out.str().find("\r\n"), std::string::npos);
  std::istringstream in(out.str());
  const CsvTable t = parse_csv(in);
  EXPECT_EQ(t.header, record_columns());
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0][6], "0.25");
  EXPECT_EQ(t.rows[0][7], "1.500000");
  EXPECT_EQ(t.rows[0][8], "a=1;b=\"x\"");
  EXPECT_EQ(t.rows[1][1], "random, 2d");
  EXPECT_EQ(t.rows[1][6], "failed");
  EXPECT_EQ(t.rows[2][6], "failed");
  EXPECT_EQ(*t.column("metric"), 5u);
  EXPECT_FALSE(t.column("nope").has_value());
}

TEST(Records, ValueFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02e23}) EXPECT_EQ(std::stod(format_value(v)), v);
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a\"b"), "\"a\"\"b\"");
  EXPECT_EQ(csv_escape("a\nb"), "\"a\nb\"");
}

TEST(Records, CanonicalSortOrder) {
  auto rec = [](std::string s, std::string m, std::string seed, std::string metric) {
    return ExperimentRecord{"e", "sc", std::move(s), std::move(m), std::move(seed), std::move(metric), 1.0, 0.0, ""};
  };
  std::vector<ExperimentRecord> r = {rec("B", "10", "2", "kl"), rec("A", "10", "all", "kl"), rec("A", "10", "11", "kl"),
                                     rec("A", "2", "5", "kl"),  rec("A", "10", "2", "b"),    rec("A", "10", "2", "a"),
                                     rec("A", "n", "1", "kl")};
  sort_records(r);
  std::vector<std::string> got;
  for (const auto& x : r) got.push_back(x.strategy + "|" + x.m + "|" + x.seed + "|" + x.metric);
  EXPECT_EQ(got, (std::vector<std::string>{"A|2|5|kl", "A|10|2|a", "A|10|2|b", "A|10|11|kl", "A|10|all|kl", "A|n|1|kl",
                                           "B|10|2|kl"}));
}

TEST(Inputs, WritesTreePathsAndValues) {
  std::ostringstream out;
  const InputSet tree = InputSet::tree(2);
  Vector y(4);
  y << 1, 2, 3, 4;
  write_inputs(out, tree, &y);
  std::istringstream in(out.str());
  const CsvTable t = parse_csv(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"id", "x1", "x2", "t", "component", "tree_path", "value"}));
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0][5], "11");
  EXPECT_EQ(t.rows[2][5], "21");
  EXPECT_EQ(t.rows[3][6], "4");
  EXPECT_EQ(t.rows[1][1], "");
}

TEST(Inputs, WritesSpaceTimeColumns) {
  DenseMatrix x(1, 2);
  x << 0.25, 0.5;
  std::ostringstream out;
  write_inputs(out, InputSet::spatiotemporal(x, {0.75}));
  EXPECT_EQ(out.str(), "id,x1,x2,t,component,tree_path\r\n0,0.25,0.5,0.75,,\r\n");
}

}  // namespace
}  // namespace cvecchia
