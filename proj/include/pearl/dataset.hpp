#pragma once

// Episodes of frames with per-frame categorical labels.

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "pearl/errors.hpp"
#include "pearl/imaging.hpp"

namespace pearl {

struct Category {
  std::string name;
  std::size_t classes = 0;

  bool operator==(const Category&) const = default;
};

using LabelSchema = std::vector<Category>;

struct Episode {
  std::size_t id = 0;
  std::vector<Frame> frames;
  // labels[frame][category] is a class index.
  std::vector<std::vector<std::size_t>> labels;

  bool operator==(const Episode&) const = default;
};

struct FrameRef {
  std::size_t episode = 0;  // position in EpisodeDataset::episodes
  std::size_t frame = 0;

  bool operator==(const FrameRef&) const = default;
};

struct EpisodeDataset {
  LabelSchema schema;
  std::vector<Episode> episodes;

  std::size_t frame_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.frames.size();
    return n;
  }

  // Frames in episode order; the flat index used by splits and
  // representation matrices.
  std::vector<FrameRef> refs() const {
    std::vector<FrameRef> out;
    out.reserve(frame_count());
    for (std::size_t e = 0; e < episodes.size(); ++e)
      for (std::size_t f = 0; f < episodes[e].frames.size(); ++f) out.push_back({e, f});
    return out;
  }

  std::vector<std::size_t> labels_for(std::size_t category) const {
    std::vector<std::size_t> out;
    out.reserve(frame_count());
    for (const auto& e : episodes)
      for (const auto& l : e.labels) out.push_back(l.at(category));
    return out;
  }

  const Frame& frame(FrameRef r) const { return episodes.at(r.episode).frames.at(r.frame); }

  bool operator==(const EpisodeDataset&) const = default;
};

struct SchemaViolation {
  std::size_t episode_id = 0;
  std::size_t frame = 0;
  std::string category;
  std::string message;
};

struct CategorySummary {
  std::string name;
  std::size_t classes = 0;
  std::vector<std::size_t> histogram;
};

struct SchemaReport {
  std::vector<CategorySummary> categories;
  std::vector<SchemaViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

class SchemaViolationError : public DataError {
 public:
  explicit SchemaViolationError(std::vector<SchemaViolation> v)
      : DataError(describe(v)), violations_(std::move(v)) {}
  const std::vector<SchemaViolation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<SchemaViolation>& v) {
    std::ostringstream os;
    os << v.size() << " schema violation(s):";
    for (const auto& x : v) {
      os << "\n  episode " << x.episode_id << " frame " << x.frame;
      if (!x.category.empty()) os << " [" << x.category << "]";
      os << ": " << x.message;
    }
    return os.str();
  }
  std::vector<SchemaViolation> violations_;
};

inline SchemaReport validate_schema(const EpisodeDataset& ds) {
  SchemaReport report;
  for (const auto& c : ds.schema) {
    report.categories.push_back({c.name, c.classes, std::vector<std::size_t>(c.classes, 0)});
  }
  for (const auto& c : ds.schema) {
    if (c.classes < 1) {
      report.violations.push_back({0, 0, c.name, "category declares zero classes"});
    }
  }
  for (const auto& e : ds.episodes) {
    if (e.labels.size() != e.frames.size()) {
      report.violations.push_back({e.id, e.labels.size(), "",
                                   "label rows (" + std::to_string(e.labels.size()) +
                                       ") do not match frames (" +
                                       std::to_string(e.frames.size()) + ")"});
      continue;
    }
    for (std::size_t f = 0; f < e.labels.size(); ++f) {
      const auto& row = e.labels[f];
      if (row.size() != ds.schema.size()) {
        report.violations.push_back({e.id, f, "", "label row has " + std::to_string(row.size()) +
                                                      " values for " +
                                                      std::to_string(ds.schema.size()) +
                                                      " categories"});
        continue;
      }
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c] >= ds.schema[c].classes) {
          report.violations.push_back({e.id, f, ds.schema[c].name,
                                       "class index " + std::to_string(row[c]) +
                                           " >= class count " +
                                           std::to_string(ds.schema[c].classes)});
        } else {
          ++report.categories[c].histogram[row[c]];
        }
      }
    }
  }
  return report;
}

inline void require_valid(const EpisodeDataset& ds) {
  SchemaReport r = validate_schema(ds);
  if (!r.ok()) throw SchemaViolationError(std::move(r.violations));
}

}  // namespace pearl
