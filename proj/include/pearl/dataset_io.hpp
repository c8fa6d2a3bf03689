#pragma once

// On-disk dataset layout:
//
//   root/episode_<k>/frame_<i>.png      8-bit RGB
//   root/labels.csv
//     #schema,<category>=<class_count>,...
//     episode,frame,<category>,...
//     <k>,<i>,<class>,...
//
// Frames of an episode are numbered 0..n-1 without gaps.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/dataset.hpp"
#include "pearl/png_io.hpp"

namespace pearl {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Numeric suffix of names like "episode_12" / "frame_7.png".
inline std::optional<std::size_t> numbered(std::string_view name, std::string_view prefix,
                                           std::string_view suffix) {
  if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) ||
      !name.ends_with(suffix)) {
    return std::nullopt;
  }
  return parse_index(name.substr(prefix.size(), name.size() - prefix.size() - suffix.size()));
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& root, const EpisodeDataset& ds) {
  std::filesystem::create_directories(root);
  std::ofstream csv(root / "labels.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (root / "labels.csv").string());
  csv << "#schema";
  for (const auto& c : ds.schema) csv << ',' << c.name << '=' << c.classes;
  csv << "\nepisode,frame";
  for (const auto& c : ds.schema) csv << ',' << c.name;
  csv << '\n';
  for (const auto& e : ds.episodes) {
    const auto dir = root / ("episode_" + std::to_string(e.id));
    for (std::size_t f = 0; f < e.frames.size(); ++f) {
      write_png(dir / ("frame_" + std::to_string(f) + ".png"), e.frames[f]);
      csv << e.id << ',' << f;
      for (std::size_t v : e.labels.at(f)) csv << ',' << v;
      csv << '\n';
    }
  }
  if (!csv) throw IoError("write failed for " + (root / "labels.csv").string());
}

inline EpisodeDataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path labels_path = root / "labels.csv";
  std::ifstream csv(labels_path);
  if (!csv) throw IoError("cannot open " + labels_path.string());

  EpisodeDataset ds;
  std::string line;
  if (!std::getline(csv, line)) throw FormatError("labels.csv is empty");
  auto schema_cells = detail::split_csv_line(line);
  if (schema_cells.empty() || schema_cells[0] != "#schema") {
    throw FormatError("labels.csv must start with a #schema row");
  }
  for (std::size_t i = 1; i < schema_cells.size(); ++i) {
    const auto eq = schema_cells[i].find('=');
    std::optional<std::size_t> n;
    if (eq != std::string::npos) n = detail::parse_index(std::string_view(schema_cells[i]).substr(eq + 1));
    if (!n) throw FormatError("bad schema entry '" + schema_cells[i] + "'");
    ds.schema.push_back({schema_cells[i].substr(0, eq), *n});
  }
  if (!std::getline(csv, line)) throw FormatError("labels.csv is missing its column header");
  auto header = detail::split_csv_line(line);
  if (header.size() != ds.schema.size() + 2 || header[0] != "episode" || header[1] != "frame") {
    throw FormatError("labels.csv header must be episode,frame,<categories...>");
  }
  for (std::size_t c = 0; c < ds.schema.size(); ++c) {
    if (header[c + 2] != ds.schema[c].name) {
      throw FormatError("labels.csv column '" + header[c + 2] + "' does not match schema '" +
                        ds.schema[c].name + "'");
    }
  }

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> rows;
  std::size_t line_no = 2;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("labels.csv line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    std::vector<std::size_t> values;
    for (const auto& cell : cells) {
      auto v = detail::parse_index(cell);
      if (!v) {
        throw FormatError("labels.csv line " + std::to_string(line_no) + ": bad value '" +
                          cell + "'");
      }
      values.push_back(*v);
    }
    const auto key = std::make_pair(values[0], values[1]);
    if (!rows.emplace(key, std::vector<std::size_t>(values.begin() + 2, values.end())).second) {
      throw FormatError("labels.csv line " + std::to_string(line_no) + ": duplicate row");
    }
  }

  std::vector<std::pair<std::size_t, fs::path>> episode_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    if (auto k = detail::numbered(entry.path().filename().string(), "episode_", "")) {
      episode_dirs.emplace_back(*k, entry.path());
    }
  }
  std::sort(episode_dirs.begin(), episode_dirs.end());

  std::size_t consumed = 0;
  std::optional<std::pair<std::size_t, std::size_t>> dims;
  for (const auto& [k, dir] : episode_dirs) {
    std::vector<std::pair<std::size_t, fs::path>> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (auto i = detail::numbered(entry.path().filename().string(), "frame_", ".png")) {
        frames.emplace_back(*i, entry.path());
      }
    }
    std::sort(frames.begin(), frames.end());
    Episode ep;
    ep.id = k;
    for (const auto& [i, path] : frames) {
      if (i != ep.frames.size()) {
        throw DataError("frames of " + dir.string() + " must be numbered 0..n-1 without gaps; "
                        "found " + path.filename().string() + " at position " +
                        std::to_string(ep.frames.size()));
      }
      auto it = rows.find({k, i});
      if (it == rows.end()) {
        throw DataError("no labels.csv row for frame " + path.string());
      }
      Frame frame = read_png(path);
      if (!dims) dims = {frame.width(), frame.height()};
      if (dims->first != frame.width() || dims->second != frame.height()) {
        throw DataError("frame " + path.string() + " is " + std::to_string(frame.width()) + "x" +
                        std::to_string(frame.height()) + ", expected " +
                        std::to_string(dims->first) + "x" + std::to_string(dims->second));
      }
      ep.frames.push_back(std::move(frame));
      ep.labels.push_back(it->second);
      ++consumed;
    }
    ds.episodes.push_back(std::move(ep));
  }
  if (consumed != rows.size()) {
    throw DataError("labels.csv has " + std::to_string(rows.size() - consumed) +
                    " row(s) without a matching frame file");
  }
  require_valid(ds);
  return ds;
}

}  // namespace pearl
