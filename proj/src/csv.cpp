#include "cvecchia/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace cvecchia {

namespace {

// Numeric-aware key: numbers sort numerically before non-numeric text.
std::tuple<int, double, std::string> sort_key(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (!s.empty() && ec == std::errc() && ptr == last) return {0, v, ""};
  return {1, 0.0, s};
}

bool parse_double(const std::string& field, double& out) {
  std::size_t b = 0, e = field.size();
  while (b < e && std::isspace(static_cast<unsigned char>(field[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(field[e - 1]))) --e;
  if (b == e) return false;
  if (field[b] == '+') ++b;
  auto [ptr, ec] = std::from_chars(field.data() + b, field.data() + e, out);
  return ec == std::errc() && ptr == field.data() + e && std::isfinite(out);
}

}  // namespace

void sort_records(std::vector<ExperimentRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const ExperimentRecord& a, const ExperimentRecord& b) {
    return std::make_tuple(a.experiment, a.scenario, a.strategy, sort_key(a.m), sort_key(a.seed), a.metric) <
           std::make_tuple(b.experiment, b.scenario, b.strategy, sort_key(b.m), sort_key(b.seed), b.metric);
  });
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_records(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  const auto& cols = record_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << "\r\n";
  char wall[32];
  for (const auto& r : records) {
    std::snprintf(wall, sizeof wall, "%.6f", r.wall_time);
    out << csv_escape(r.experiment) << ',' << csv_escape(r.scenario) << ',' << csv_escape(r.strategy) << ','
        << csv_escape(r.m) << ',' << csv_escape(r.seed) << ',' << csv_escape(r.metric) << ','
        << (r.value && std::isfinite(*r.value) ? format_value(*r.value) : std::string("failed")) << ',' << wall
        << ',' << csv_escape(r.params) << "\r\n";
  }
}

void write_records(const std::string& path, std::vector<ExperimentRecord> records) {
  sort_records(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_records(out, records);
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  return std::nullopt;
}

CsvTable parse_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  CsvTable table;
  if (rows.empty()) return table;
  table.header = std::move(rows.front());
  table.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_csv(in);
}

IngestedData ingest_csv(std::istream& in, const ColumnMapping& mapping) {
  const CsvTable table = parse_csv(in);
  auto required = [&](const std::string& name) {
    auto c = table.column(name);
    if (!c) throw MissingColumn("ingest_csv: missing column '" + name + "'");
    return *c;
  };
  const std::size_t c1 = required(mapping.x1), c2 = required(mapping.x2), cv = required(mapping.value);
  const auto ct = mapping.time.empty() ? std::nullopt : table.column(mapping.time);
  const auto cc = mapping.component.empty() ? std::nullopt : table.column(mapping.component);

  const std::size_t n = table.rows.size();
  auto cell = [&](std::size_t r, std::size_t c) {
    const auto& row = table.rows[r];
    double v = 0.0;
    if (c >= row.size() || !parse_double(row[c], v)) {
      throw ParseError("ingest_csv: row " + std::to_string(r + 1) + ", column '" + table.header[c] +
                           "' is not a finite number",
                       r + 1, table.header[c]);
    }
    return v;
  };
  DenseMatrix coords(static_cast<Eigen::Index>(n), 2);
  std::vector<double> times, comps;
  IngestedData data;
  data.response.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    coords(static_cast<Eigen::Index>(r), 0) = cell(r, c1);
    coords(static_cast<Eigen::Index>(r), 1) = cell(r, c2);
    if (ct) times.push_back(cell(r, *ct));
    if (cc) comps.push_back(cell(r, *cc));
    data.response[static_cast<Eigen::Index>(r)] = cell(r, cv);
  }
  if (n > 0) {
    data.offset_x1 = coords.col(0).minCoeff();
    data.offset_x2 = coords.col(1).minCoeff();
    const double extent = std::max(coords.col(0).maxCoeff() - data.offset_x1, coords.col(1).maxCoeff() - data.offset_x2);
    data.space_scale = extent > 0.0 ? extent : 1.0;
    coords.col(0).array() = (coords.col(0).array() - data.offset_x1) / data.space_scale;
    coords.col(1).array() = (coords.col(1).array() - data.offset_x2) / data.space_scale;
  }
  if (!times.empty()) {
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    data.time_offset = *lo;
    data.time_scale = *hi > *lo ? *hi - *lo : 1.0;
    for (auto& t : times) t = (t - data.time_offset) / data.time_scale;
  }
  std::vector<int> labels;
  if (cc) {
    data.component_values = comps;
    std::sort(data.component_values.begin(), data.component_values.end());
    data.component_values.erase(std::unique(data.component_values.begin(), data.component_values.end()),
                                data.component_values.end());
    for (double c : comps) {
      labels.push_back(static_cast<int>(std::lower_bound(data.component_values.begin(), data.component_values.end(), c) -
                                        data.component_values.begin()));
    }
  }
  if (cc) {
    data.inputs = InputSet::multivariate(std::move(coords), std::move(labels), std::move(times));
  } else if (ct) {
    data.inputs = InputSet::spatiotemporal(std::move(coords), std::move(times));
  } else {
    data.inputs = InputSet::spatial(std::move(coords));
  }
  return data;
}

IngestedData ingest_csv(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return ingest_csv(in, mapping);
}

void write_inputs(std::ostream& out, const InputSet& inputs, const Vector* response) {
  out << "id,x1,x2,t,component,tree_path" << (response ? ",value" : "") << "\r\n";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out << i << ',';
    if (inputs.has_coords()) {
      out << format_value(inputs.coord(i, 0)) << ',';
      out << (inputs.spatial_dim() > 1 ? format_value(inputs.coord(i, 1)) : std::string()) << ',';
    } else {
      out << ",,";
    }
    out << (inputs.has_time() ? format_value(inputs.time(i)) : std::string()) << ',';
    out << (inputs.has_components() ? std::to_string(inputs.component(i)) : std::string()) << ',';
    if (inputs.kind() == InputKind::Tree) {
      for (int b : inputs.tree_path(i)) out << b;
    }
    if (response) out << ',' << format_value((*response)[static_cast<Eigen::Index>(i)]);
    out << "\r\n";
  }
}

}  // namespace cvecchia
