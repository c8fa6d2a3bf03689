#pragma once

// Run comparison and reporting. A report is a CSV of records x (categories,
// mu) and an SVG grouped bar chart drawn from the same numbers: one group per
// CSV column, one bar per record. Every bar carries data-record, data-group
// and data-value attributes so the chart can be checked against the table.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pearl/harness.hpp"

namespace pearl {

// ---- compare ---------------------------------------------------------------

struct CategoryDelta {
  std::string name;
  double baseline = 0.0;
  double treatment = 0.0;
  double delta = 0.0;  // treatment - baseline, F1 fraction (0.03 = 3 points)
};

struct DeltaTable {
  std::vector<CategoryDelta> categories;
  double mean_delta = 0.0;
};

inline DeltaTable compare_runs(const ResultsRecord& baseline, const ResultsRecord& treatment) {
  std::set<std::string> a, b;
  for (const auto& c : baseline.categories) a.insert(c.name);
  for (const auto& c : treatment.categories) b.insert(c.name);
  if (a != b) {
    std::string only_a, only_b;
    for (const auto& n : a)
      if (!b.count(n)) only_a += (only_a.empty() ? "" : ", ") + n;
    for (const auto& n : b)
      if (!a.count(n)) only_b += (only_b.empty() ? "" : ", ") + n;
    throw ContractError("category sets differ: only in baseline {" + only_a +
                        "}, only in treatment {" + only_b + "}");
  }
  std::map<std::string, const CategoryResult*> treated;
  for (const auto& c : treatment.categories) treated[c.name] = &c;
  DeltaTable t;
  for (const auto& c : baseline.categories) {
    const CategoryResult& other = *treated.at(c.name);
    if (c.error || other.error) {
      throw ConsistencyError("category '" + c.name + "' failed in one of the runs");
    }
    t.categories.push_back({c.name, c.f1, other.f1, other.f1 - c.f1});
  }
  t.mean_delta = treatment.mean_f1 - baseline.mean_f1;
  return t;
}

// ---- abbreviations -----------------------------------------------------------

namespace detail {

inline std::string squash(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  return out;
}

}  // namespace detail

// Short labels for Atari game names; other labels pass through unchanged.
inline std::string game_abbreviation(std::string_view label) {
  static const std::map<std::string, std::string> table = {
      {"asteroids", "As"},   {"berzerk", "Bz"},          {"bowling", "Bw"},
      {"boxing", "Bx"},      {"breakout", "Br"},         {"demonattack", "Da"},
      {"freeway", "Fw"},     {"frostbite", "Fb"},        {"hero", "He"},
      {"montezumasrevenge", "Mr"}, {"mspacman", "Mp"},   {"pitfall", "Pf"},
      {"pong", "Pg"},        {"privateeye", "Pe"},       {"qbert", "Qb"},
      {"riverraid", "Rr"},   {"seaquest", "Sq"},         {"spaceinvaders", "Si"},
      {"tennis", "Tn"},      {"venture", "Vt"},          {"videopinball", "Vp"},
      {"yarsrevenge", "Yr"}, {"average", "μ"},      {"mean", "μ"}};
  auto it = table.find(detail::squash(label));
  return it == table.end() ? std::string(label) : it->second;
}

// ---- report -------------------------------------------------------------------

struct ReportRow {
  std::string label;
  std::vector<std::optional<double>> values;  // per column; empty = no value
  double mean = 0.0;
};

struct ReportTable {
  std::vector<std::string> columns;  // category names, in first-seen order
  std::vector<ReportRow> rows;
};

inline ReportTable report_table(const std::vector<ResultsRecord>& records) {
  ReportTable t;
  for (const auto& r : records)
    for (const auto& c : r.categories)
      if (std::find(t.columns.begin(), t.columns.end(), c.name) == t.columns.end()) {
        t.columns.push_back(c.name);
      }
  for (const auto& r : records) {
    ReportRow row{r.name, std::vector<std::optional<double>>(t.columns.size()), r.mean_f1};
    for (const auto& c : r.categories) {
      if (c.error) continue;
      const auto col = std::find(t.columns.begin(), t.columns.end(), c.name) - t.columns.begin();
      row.values[static_cast<std::size_t>(col)] = c.f1;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Reference rows (e.g. published baselines) from "label,<col>,..." CSV with a
// header row naming the columns; a trailing "mu" column is recomputed.
inline std::vector<ReportRow> read_reference_csv(const std::filesystem::path& path,
                                                 const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference CSV " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("reference CSV is empty");
  const auto header = detail::split_csv_line(line);
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError("reference CSV row width mismatch");
    ReportRow row{cells[0], std::vector<std::optional<double>>(columns.size()), 0.0};
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      auto col = std::find(columns.begin(), columns.end(), header[i]);
      if (col == columns.end() || cells[i].empty()) continue;
      try {
        const double v = std::stod(cells[i]);
        row.values[static_cast<std::size_t>(col - columns.begin())] = v;
        sum += v;
        ++n;
      } catch (const std::exception&) {
        throw FormatError("reference CSV: bad number '" + cells[i] + "'");
      }
    }
    row.mean = n ? sum / static_cast<double>(n) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string csv_cell(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace detail

inline std::string render_csv(const ReportTable& t) {
  std::ostringstream os;
  os << "label";
  for (const auto& c : t.columns) os << ',' << detail::csv_cell(c);
  os << ",mu\n";
  for (const auto& r : t.rows) {
    os << detail::csv_cell(r.label);
    for (const auto& v : r.values) os << ',' << (v ? detail::exact(*v) : "");
    os << ',' << detail::exact(r.mean) << '\n';
  }
  return os.str();
}

inline constexpr double kChartHeight = 300.0;  // pixels for F1 = 1

inline std::string render_svg(const ReportTable& t) {
  static constexpr const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                            "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
                                            "#9c755f", "#bab0ac"};
  const double bar = 14.0, gap = 18.0, left = 50.0, top = 20.0;
  const std::size_t groups = t.columns.size() + 1;
  const double group_w = bar * static_cast<double>(std::max<std::size_t>(t.rows.size(), 1)) + gap;
  const double width = left + group_w * static_cast<double>(groups) + 160.0;
  const double base = top + kChartHeight;
  const double height = base + 50.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" data-scale=\"" << kChartHeight << "\" data-baseline=\"" << base << "\">\n";
  os << "  <line x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << width - 160.0
     << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = base - kChartHeight * tick / 4.0;
    os << "  <text x=\"" << left - 6 << "\" y=\"" << y + 4
       << "\" font-size=\"10\" text-anchor=\"end\">" << tick * 0.25 << "</text>\n";
  }
  for (std::size_t g = 0; g < groups; ++g) {
    const bool mu = g == t.columns.size();
    const std::string name = mu ? "μ" : t.columns[g];
    const double x0 = left + group_w * static_cast<double>(g) + gap / 2;
    os << "  <g class=\"group\" data-group=\"" << detail::xml_escape(name) << "\">\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::optional<double> v = mu ? std::optional<double>(t.rows[r].mean) : t.rows[r].values[g];
      if (!v) continue;
      const double h = *v * kChartHeight;
      os << "    <rect class=\"bar\" data-record=\"" << detail::xml_escape(t.rows[r].label)
         << "\" data-group=\"" << detail::xml_escape(name) << "\" data-value=\""
         << detail::exact(*v) << "\" x=\"" << x0 + bar * static_cast<double>(r) << "\" y=\""
         << detail::exact(base - h) << "\" width=\"" << bar << "\" height=\"" << detail::exact(h)
         << "\" fill=\"" << palette[r % 10] << "\"/>\n";
    }
    os << "    <text x=\"" << x0 + (group_w - gap) / 2 << "\" y=\"" << base + 16
       << "\" font-size=\"11\" text-anchor=\"middle\">"
       << detail::xml_escape(mu ? name : game_abbreviation(name)) << "</text>\n";
    os << "  </g>\n";
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double y = top + 16.0 * static_cast<double>(r);
    const double x = width - 150.0;
    os << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
       << palette[r % 10] << "\"/>\n";
    os << "  <text x=\"" << x + 14 << "\" y=\"" << y + 9 << "\" font-size=\"11\">"
       << detail::xml_escape(t.rows[r].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct RenderedReport {
  std::string csv;
  std::string svg;
};

inline RenderedReport render_report(const std::vector<ResultsRecord>& records,
                                    const std::vector<ReportRow>& reference = {}) {
  ReportTable t = report_table(records);
  for (const auto& r : reference) {
    if (r.values.size() != t.columns.size()) {
      throw DimensionError("reference row '" + r.label + "' does not match the report columns");
    }
    t.rows.push_back(r);
  }
  return {render_csv(t), render_svg(t)};
}

inline void write_report(const RenderedReport& report, const std::filesystem::path& csv_path,
                         const std::filesystem::path& svg_path) {
  for (const auto& [path, text] : {std::pair{csv_path, &report.csv}, {svg_path, &report.svg}}) {
    if (path.empty()) continue;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << *text;
  }
}

}  // namespace pearl
