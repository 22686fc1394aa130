#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfgof/error.hpp"
#include "lfgof/table.hpp"

namespace lfgof {

/// Column-role mapping for table files.
///
/// By default a header column `param:<name>` is a parameter and
/// `stat:<name>` a summary statistic; everything else is ignored. Foreign
/// exports can instead list exact column names, which then take precedence
/// over the prefixes. The delimiter defaults to ',' (or '\t' for `.tsv`);
/// "whitespace" splits on runs of blanks, as in simulator text dumps.
struct ColumnSchema {
  std::string param_prefix = "param:";
  std::string stat_prefix = "stat:";
  std::vector<std::string> params;
  std::vector<std::string> stats;
  std::optional<std::string> delimiter;

  static ColumnSchema from_json(const nlohmann::json& j) {
    ColumnSchema schema;
    if (!j.is_object()) throw SchemaError("schema must be a JSON object");
    try {
      if (j.contains("param_prefix")) schema.param_prefix = j.at("param_prefix").get<std::string>();
      if (j.contains("stat_prefix")) schema.stat_prefix = j.at("stat_prefix").get<std::string>();
      if (j.contains("params")) schema.params = j.at("params").get<std::vector<std::string>>();
      if (j.contains("stats")) schema.stats = j.at("stats").get<std::vector<std::string>>();
      if (j.contains("delimiter")) schema.delimiter = j.at("delimiter").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed schema: ") + e.what());
    }
    if (schema.delimiter && *schema.delimiter != "whitespace" && schema.delimiter->size() != 1)
      throw SchemaError("schema delimiter must be a single character or \"whitespace\"");
    return schema;
  }

  static ColumnSchema load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open schema file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("schema file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, const std::string& delim) {
  std::vector<std::string_view> fields;
  if (delim == "whitespace") {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      fields.push_back(line.substr(i, j - i));
      i = j;
    }
    return fields;
  }
  const char sep = delim.front();
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string resolve_delimiter(const ColumnSchema& schema, const std::filesystem::path& path) {
  if (schema.delimiter) return *schema.delimiter;
  return path.extension() == ".tsv" ? std::string("\t") : std::string(",");
}

/// Raw parsed file: header plus rows of fields (as strings).
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline TextTable read_text_table(const std::filesystem::path& path, const std::string& delim) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  TextTable out;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, delim);
    std::vector<std::string> row;
    row.reserve(fields.size());
    for (auto f : fields) row.emplace_back(trim(f));
    if (!have_header) {
      out.header = std::move(row);
      have_header = true;
    } else {
      out.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw EmptyTableError(path.string() + " is empty");
  return out;
}

struct ColumnRoles {
  std::vector<std::size_t> param_columns;
  std::vector<std::string> param_names;
  std::vector<std::size_t> stat_columns;
  std::vector<std::string> stat_names;
  std::optional<std::size_t> id_column;
};

inline ColumnRoles resolve_columns(const std::vector<std::string>& header, const ColumnSchema& schema,
                                   const std::string& source) {
  ColumnRoles roles;
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    return std::nullopt;
  };
  if (auto c = find("id")) roles.id_column = *c;

  if (!schema.params.empty()) {
    for (const auto& name : schema.params) {
      auto c = find(name);
      if (!c) c = find(schema.param_prefix + name);
      if (!c) throw SchemaError(source + ": missing parameter column '" + name + "'");
      roles.param_columns.push_back(*c);
      roles.param_names.push_back(name);
    }
  } else {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (!schema.param_prefix.empty() && header[c].starts_with(schema.param_prefix)) {
        roles.param_columns.push_back(c);
        roles.param_names.push_back(header[c].substr(schema.param_prefix.size()));
      }
  }

  if (!schema.stats.empty()) {
    for (const auto& name : schema.stats) {
      auto c = find(name);
      if (!c) c = find(schema.stat_prefix + name);
      if (!c) throw SchemaError(source + ": missing statistic column '" + name + "'");
      roles.stat_columns.push_back(*c);
      roles.stat_names.push_back(name);
    }
  } else {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (!schema.stat_prefix.empty() && header[c].starts_with(schema.stat_prefix)) {
        roles.stat_columns.push_back(c);
        roles.stat_names.push_back(header[c].substr(schema.stat_prefix.size()));
      }
  }
  if (roles.stat_columns.empty()) throw SchemaError(source + ": no summary-statistic columns found");
  return roles;
}

inline double cell_value(const TextTable& text, std::size_t row, std::size_t column,
                         const std::string& source) {
  const auto& fields = text.rows[row];
  const std::string& name = text.header[column];
  if (column >= fields.size())
    throw ValidationError(source + ": row " + std::to_string(row + 1) + " is missing column '" +
                              name + "'",
                          row + 1, name);
  const auto value = parse_double(fields[column]);
  if (!value)
    throw ValidationError(source + ": invalid numeric value '" + fields[column] + "' at row " +
                              std::to_string(row + 1) + ", column '" + name + "'",
                          row + 1, name);
  return *value;
}

inline void write_double(std::ostream& out, double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.write(buf, ptr - buf);
}

}  // namespace detail

/// Reads a reference table. Row order equals file order; data rows are
/// numbered from 1 in diagnostics. NaN or non-numeric cells in a mapped
/// column are rejected.
inline ReferenceTable load_reference_table(const std::filesystem::path& path,
                                           const ColumnSchema& schema = {}) {
  const auto source = path.string();
  const auto text = detail::read_text_table(path, detail::resolve_delimiter(schema, path));
  const auto roles = detail::resolve_columns(text.header, schema, source);
  if (text.rows.empty()) throw EmptyTableError(source + ": table has no data rows");

  std::vector<double> params;
  std::vector<double> summaries;
  params.reserve(text.rows.size() * roles.param_columns.size());
  summaries.reserve(text.rows.size() * roles.stat_columns.size());
  for (std::size_t r = 0; r < text.rows.size(); ++r) {
    for (const auto c : roles.param_columns) params.push_back(detail::cell_value(text, r, c, source));
    for (const auto c : roles.stat_columns) summaries.push_back(detail::cell_value(text, r, c, source));
  }
  return ReferenceTable(roles.param_names, roles.stat_names, std::move(params), std::move(summaries));
}

/// Observed summary vectors, one per data row, reordered to `stat_names`.
inline std::vector<std::vector<double>> load_observations(const std::filesystem::path& path,
                                                          const std::vector<std::string>& stat_names,
                                                          const ColumnSchema& schema = {}) {
  // observation files carry statistics only; parameter columns are ignored
  ColumnSchema stats_only = schema;
  stats_only.params.clear();
  stats_only.param_prefix.clear();
  const auto table = load_reference_table(path, stats_only);
  std::vector<std::size_t> order;
  for (const auto& name : stat_names) {
    const auto& have = table.stat_names();
    const auto it = std::find(have.begin(), have.end(), name);
    if (it == have.end())
      throw SchemaError(path.string() + ": observation lacks statistic '" + name + "'");
    order.push_back(static_cast<std::size_t>(it - have.begin()));
  }
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto row = table.summaries(r);
    std::vector<double> y;
    y.reserve(order.size());
    for (const auto c : order) y.push_back(row[c]);
    out.push_back(std::move(y));
  }
  return out;
}

/// Writes `id,param:...,stat:...` CSV.
inline void write_table_csv(const std::filesystem::path& path, const ReferenceTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id";
  for (const auto& n : table.param_names()) out << ",param:" << n;
  for (const auto& n : table.stat_names()) out << ",stat:" << n;
  out << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.id(r);
    for (const double v : table.params(r)) {
      out << ',';
      detail::write_double(out, v);
    }
    for (const double v : table.summaries(r)) {
      out << ',';
      detail::write_double(out, v);
    }
    out << '\n';
  }
}

}  // namespace lfgof
