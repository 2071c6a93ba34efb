#ifndef CVECCHIA_CSV_HPP_
#define CVECCHIA_CSV_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cvecchia/inputs.hpp"
#include "cvecchia/linalg.hpp"

namespace cvecchia {

/// One long-format result row. A missing value is written as "failed".
struct ExperimentRecord {
  std::string experiment;
  std::string scenario;
  std::string strategy;
  std::string m;     // conditioning size, or "" when not applicable
  std::string seed;  // replicate seed, or "all" for aggregates
  std::string metric;
  std::optional<double> value;
  double wall_time = 0.0;
  std::string params;  // flattened name=value pairs
};

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols = {"experiment", "scenario", "strategy", "m",     "seed",
                                                "metric",     "value",    "wall_time", "params"};
  return cols;
}

/// Canonical order: experiment, scenario, strategy, m (numeric), seed
/// (numeric, "all" last), metric.
void sort_records(std::vector<ExperimentRecord>& records);

std::string format_value(double v);
/// RFC-4180 field quoting when needed.
std::string csv_escape(const std::string& field);
void write_records(std::ostream& out, const std::vector<ExperimentRecord>& records);
void write_records(const std::string& path, std::vector<ExperimentRecord> records);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Index of a header column, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF tolerant.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

/// Column names used by ingest_csv; empty optional names mean "absent".
struct ColumnMapping {
  std::string x1 = "x1";
  std::string x2 = "x2";
  std::string time = "t";
  std::string component = "component";
  std::string value = "value";
};

struct IngestedData {
  InputSet inputs;
  Vector response;
  /// Original -> scaled: (x - offset) / space_scale, (t - time_offset) / time_scale.
  double offset_x1 = 0.0, offset_x2 = 0.0, space_scale = 1.0;
  double time_offset = 0.0, time_scale = 1.0;
  std::vector<double> component_values;  // label k <-> component_values[k]
};

/// Loads x1, x2, value and, when the columns exist, time and component.
/// Space is scaled so the longer side of the bounding box is 1 (shape
/// preserved); time is scaled to [0, 1]. Throws MissingColumn / ParseError.
IngestedData ingest_csv(std::istream& in, const ColumnMapping& mapping = {});
IngestedData ingest_csv(const std::string& path, const ColumnMapping& mapping = {});

/// Columns id, x1, x2, t, component, tree_path (blank when absent).
void write_inputs(std::ostream& out, const InputSet& inputs, const Vector* response = nullptr);

}  // namespace cvecchia

#endif  // CVECCHIA_CSV_HPP_
