#pragma once

// Composition expressions and the representations they assemble.
//
// Grammar: one or more of FI 1x1 2x2 4x4 FM DM FM+ DM+ FP5 DP5 joined by '+'.
// "FM+"/"DM+" are read as a single token only when followed by the end of the
// text or by another '+', so "DM++FI" is DM+ then FI while "DM+FI" is DM then
// FI (the two have the same embeddings).

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/attention.hpp"
#include "pearl/dataset.hpp"
#include "pearl/encoder.hpp"

namespace pearl {

enum class UnitKind { kFull, kGrid, kMask, kMaskPlus, kTopK };

struct CompositionUnit {
  UnitKind kind = UnitKind::kFull;
  std::size_t grid = 0;                   // kGrid: 2 or 4
  MaskSource source = MaskSource::kDiff;  // kMask, kMaskPlus, kTopK: diff or flow
  std::size_t k = 0;                      // kTopK
  std::string token;

  std::size_t embedding_count() const {
    switch (kind) {
      case UnitKind::kFull: return 1;
      case UnitKind::kGrid: return grid * grid;
      case UnitKind::kMask: return 1;
      case UnitKind::kMaskPlus: return 2;
      case UnitKind::kTopK: return k + 1;
    }
    return 0;
  }

  bool operator==(const CompositionUnit&) const = default;
};

struct CompositionConfig {
  std::vector<CompositionUnit> units;

  std::size_t embedding_count() const {
    std::size_t n = 0;
    for (const auto& u : units) n += u.embedding_count();
    return n;
  }
  bool needs_grid() const {
    for (const auto& u : units)
      if (u.kind == UnitKind::kGrid) return true;
    return false;
  }
  bool has_full() const {
    for (const auto& u : units)
      if (u.kind == UnitKind::kFull) return true;
    return false;
  }
  std::string str() const {
    std::string s;
    for (const auto& u : units) s += (s.empty() ? "" : "+") + u.token;
    return s;
  }

  bool operator==(const CompositionConfig&) const = default;
};

inline CompositionConfig parse_config(std::string_view text) {
  CompositionConfig cfg;
  std::size_t pos = 0;
  const auto at_boundary = [&](std::size_t p) { return p == text.size() || text[p] == '+'; };
  while (true) {
    if (pos >= text.size()) throw ParseError("expected a composition token", pos);
    std::size_t end = text.find('+', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view tok = text.substr(pos, end - pos);
    CompositionUnit u;
    if ((tok == "FM" || tok == "DM") && end < text.size() && at_boundary(end + 1)) {
      u.kind = UnitKind::kMaskPlus;
      ++end;
    } else if (tok == "FI" || tok == "1x1") {
      u.kind = UnitKind::kFull;
    } else if (tok == "2x2" || tok == "4x4") {
      u.kind = UnitKind::kGrid;
      u.grid = tok[0] == '2' ? 2 : 4;
    } else if (tok == "FM" || tok == "DM") {
      u.kind = UnitKind::kMask;
    } else if (tok == "FP5" || tok == "DP5") {
      u.kind = UnitKind::kTopK;
      u.k = 4;
    } else {
      throw ParseError("unknown composition token '" + std::string(tok) + "'", pos);
    }
    if (u.kind != UnitKind::kFull && u.kind != UnitKind::kGrid) {
      u.source = tok[0] == 'F' ? MaskSource::kFlow : MaskSource::kDiff;
    }
    u.token = std::string(text.substr(pos, end - pos));
    cfg.units.push_back(std::move(u));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return cfg;
}

// Row-major n x n tiling.
inline std::vector<Frame> grid_patches(const Frame& frame, std::size_t n) {
  if (n == 0 || frame.width() % n != 0 || frame.height() % n != 0) {
    throw DimensionError("a " + std::to_string(frame.width()) + "x" +
                         std::to_string(frame.height()) + " frame does not split into a " +
                         std::to_string(n) + "x" + std::to_string(n) + " grid");
  }
  const std::size_t pw = frame.width() / n, ph = frame.height() / n;
  std::vector<Frame> out;
  out.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out.push_back(crop(frame, c * pw, r * ph, pw, ph));
  return out;
}

struct LayoutSlice {
  std::size_t unit = 0;  // index into CompositionConfig::units
  std::string tag;       // embedding key tag
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const LayoutSlice&) const = default;
};

struct ComposedRepresentation {
  std::vector<float> values;
  std::vector<LayoutSlice> layout;

  std::size_t width() const noexcept { return values.size(); }
};

struct ComposeOptions {
  std::size_t canonical_side = 224;
  // L2-normalize each embedding before concatenation.
  bool normalize = false;
  BlockMatchOptions block{};
  // Imported flow for the (prev, curr) pair; the block matcher is used when
  // this is empty or returns nothing.
  std::function<std::optional<FlowField>(std::size_t episode, std::size_t frame)> imported_flow;
};

namespace detail {

inline std::string_view mask_tag(MaskSource s) {
  return s == MaskSource::kFlow ? "masked:flow" : "masked:diff";
}

// Lazily computed canonical frames and masks for one (prev, curr) pair.
class FramePair {
 public:
  FramePair(const Frame& prev, const Frame& curr, std::size_t episode, std::size_t frame,
            const ComposeOptions& opt)
      : prev_(prev), curr_(curr), episode_(episode), frame_(frame), opt_(opt) {}

  const Frame& curr() {
    if (!canon_curr_) canon_curr_ = canonical(curr_);
    return *canon_curr_;
  }
  const Frame& prev() {
    if (&prev_ == &curr_) return curr();
    if (!canon_prev_) canon_prev_ = canonical(prev_);
    return *canon_prev_;
  }
  const std::vector<Frame>& grid(std::size_t n) {
    auto& slot = n == 2 ? grid2_ : grid4_;
    if (!slot) slot = grid_patches(curr(), n);
    return *slot;
  }
  const AttentionMask& mask(MaskSource s) {
    if (s == MaskSource::kFlow) {
      if (!flow_) {
        std::optional<FlowField> imported;
        // A first frame paired with itself has no flow to import.
        if (opt_.imported_flow && &prev_ != &curr_) {
          imported = opt_.imported_flow(episode_, frame_);
        }
        flow_ = flow_mask(prev(), curr(), imported, opt_.block);
      }
      return *flow_;
    }
    if (!diff_) diff_ = diff_mask(prev(), curr());
    return *diff_;
  }

 private:
  Frame canonical(const Frame& f) const {
    return resize_bilinear(f, opt_.canonical_side, opt_.canonical_side);
  }

  const Frame& prev_;
  const Frame& curr_;
  std::size_t episode_, frame_;
  const ComposeOptions& opt_;
  std::optional<Frame> canon_curr_, canon_prev_;
  std::optional<std::vector<Frame>> grid2_, grid4_;
  std::optional<AttentionMask> diff_, flow_;
};

}  // namespace detail

// Encodes and concatenates the units of `config` for frame `frame` of episode
// `episode`. Pass curr as prev for the first frame of an episode.
inline ComposedRepresentation compose(const CompositionConfig& config, const Frame& prev,
                                      const Frame& curr, const Encoder& encoder,
                                      EmbeddingCache& cache, std::size_t episode,
                                      std::size_t frame, const ComposeOptions& opt = {}) {
  if (config.units.empty()) throw ContractError("empty composition");
  if (opt.canonical_side % 4 != 0 || opt.canonical_side < 2 * Frame::kMinSide) {
    throw ConfigError("canonical side must be a multiple of 4 and at least 16");
  }
  detail::FramePair pair(prev, curr, episode, frame, opt);
  ComposedRepresentation out;
  out.values.reserve(config.embedding_count() * encoder.width());

  const auto emit = [&](std::size_t unit, std::string tag, std::function<Frame()> image) {
    Embedding e = cached_encode(encoder, cache, {episode, frame, tag}, image);
    if (e.width() != encoder.width()) {
      throw DimensionError("embedding '" + EmbeddingKey{episode, frame, tag}.str() +
                           "' has width " + std::to_string(e.width()) + ", encoder width is " +
                           std::to_string(encoder.width()));
    }
    if (opt.normalize) {
      double ss = 0.0;
      for (float v : e.values) ss += static_cast<double>(v) * v;
      const double norm = std::sqrt(ss);
      if (norm > 0.0)
        for (float& v : e.values) v = static_cast<float>(v / norm);
    }
    out.layout.push_back({unit, std::move(tag), out.values.size(), e.width()});
    out.values.insert(out.values.end(), e.values.begin(), e.values.end());
  };
  const auto full = [&] { return pair.curr(); };
  const auto cell = [&](std::size_t n, std::size_t c) {
    return [&pair, n, c] { return pair.grid(n)[c]; };
  };

  for (std::size_t u = 0; u < config.units.size(); ++u) {
    const CompositionUnit& unit = config.units[u];
    switch (unit.kind) {
      case UnitKind::kFull:
        emit(u, "full", full);
        break;
      case UnitKind::kGrid:
        for (std::size_t c = 0; c < unit.grid * unit.grid; ++c)
          emit(u, "grid" + std::to_string(unit.grid) + ":" + std::to_string(c),
               cell(unit.grid, c));
        break;
      case UnitKind::kMask:
      case UnitKind::kMaskPlus: {
        const MaskSource s = unit.source;
        emit(u, std::string(detail::mask_tag(s)),
             [&pair, s] { return apply_mask(pair.curr(), pair.mask(s)); });
        if (unit.kind == UnitKind::kMaskPlus) emit(u, "full", full);
        break;
      }
      case UnitKind::kTopK: {
        emit(u, "full", full);
        // Candidate cells coincide with the grid tiling, so selected patches
        // share the grid embedding keys.
        for (const auto& p : select_top_k(score_patches(pair.mask(unit.source)), unit.k))
          emit(u, "grid" + std::to_string(p.grid) + ":" + std::to_string(p.cell),
               cell(p.grid, p.cell));
        break;
      }
    }
  }
  return out;
}

// One composed vector per frame in EpisodeDataset::refs() order; each frame is
// paired with its predecessor in the same episode.
inline std::vector<std::vector<float>> compose_dataset(const CompositionConfig& config,
                                                       const EpisodeDataset& ds,
                                                       const Encoder& encoder,
                                                       EmbeddingCache& cache,
                                                       const ComposeOptions& opt = {}) {
  std::vector<std::vector<float>> out;
  out.reserve(ds.frame_count());
  for (const auto& ep : ds.episodes)
    for (std::size_t f = 0; f < ep.frames.size(); ++f) {
      const Frame& prev = ep.frames[f == 0 ? 0 : f - 1];
      out.push_back(compose(config, prev, ep.frames[f], encoder, cache, ep.id, f, opt).values);
    }
  return out;
}

}  // namespace pearl
