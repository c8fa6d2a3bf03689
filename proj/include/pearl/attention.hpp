#pragma once

// Spatio-temporal attention over consecutive frames: SSIM-difference and
// flow-magnitude masks, multiplicative mask application, and scoring of the
// 2x2/4x4 grid cells by mean mask weight.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/flow.hpp"
#include "pearl/imaging.hpp"

namespace pearl {

enum class MaskSource { kDiff, kFlow, kImported };

inline std::string_view mask_source_name(MaskSource s) {
  switch (s) {
    case MaskSource::kDiff: return "diff";
    case MaskSource::kFlow: return "flow";
    case MaskSource::kImported: return "imported";
  }
  return "?";
}

struct AttentionMask {
  ScalarField field;
  MaskSource source = MaskSource::kDiff;

  std::size_t width() const noexcept { return field.width(); }
  std::size_t height() const noexcept { return field.height(); }
};

inline AttentionMask diff_mask(const Frame& prev, const Frame& curr,
                               const SsimOptions& opt = {}) {
  if (prev.width() != curr.width() || prev.height() != curr.height()) {
    throw DimensionError("diff_mask: frames are " + std::to_string(prev.width()) + "x" +
                         std::to_string(prev.height()) + " and " +
                         std::to_string(curr.width()) + "x" + std::to_string(curr.height()));
  }
  ScalarField s = ssim_map(to_grayscale(prev), to_grayscale(curr), opt);
  std::vector<double> m(s.data().size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = std::clamp((1.0 - s.data()[i]) / 2.0, 0.0, 1.0);
  return {ScalarField(s.width(), s.height(), std::move(m)), MaskSource::kDiff};
}

// Nearest-neighbour upsampling of per-block magnitudes divided by their
// maximum. The grid must tile the frame exactly.
inline AttentionMask mask_from_flow(const FlowField& flow, std::size_t width,
                                    std::size_t height,
                                    MaskSource source = MaskSource::kImported) {
  const std::size_t gw = flow.grid_width(), gh = flow.grid_height();
  if (gw == 0 || gh == 0 || width % gw != 0 || height % gh != 0) {
    throw DimensionError("flow grid " + std::to_string(gw) + "x" + std::to_string(gh) +
                         " does not tile a " + std::to_string(width) + "x" +
                         std::to_string(height) + " frame");
  }
  double peak = 0.0;
  for (const auto& v : flow.vectors()) peak = std::max(peak, v.magnitude());
  std::vector<double> m(width * height, 0.0);
  if (peak > 0.0) {
    const std::size_t bw = width / gw, bh = height / gh;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        m[y * width + x] = flow(x / bw, y / bh).magnitude() / peak;
  }
  return {ScalarField(width, height, std::move(m)), source};
}

// Block-matched flow from prev to curr, or the supplied imported field.
inline AttentionMask flow_mask(const Frame& prev, const Frame& curr,
                               const std::optional<FlowField>& imported = std::nullopt,
                               const BlockMatchOptions& opt = {}) {
  if (prev.width() != curr.width() || prev.height() != curr.height()) {
    throw DimensionError("flow_mask: frame sizes differ");
  }
  if (imported) return mask_from_flow(*imported, curr.width(), curr.height());
  return mask_from_flow(block_match_flow(to_grayscale(prev), to_grayscale(curr), opt),
                        curr.width(), curr.height(), MaskSource::kFlow);
}

inline Frame apply_mask(const Frame& frame, const AttentionMask& mask) {
  if (frame.width() != mask.width() || frame.height() != mask.height()) {
    throw DimensionError("apply_mask: mask " + std::to_string(mask.width()) + "x" +
                         std::to_string(mask.height()) + " on frame " +
                         std::to_string(frame.width()) + "x" + std::to_string(frame.height()));
  }
  std::vector<double> out = frame.data();
  const auto& m = mask.field.data();
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t c = 0; c < Frame::kChannels; ++c) out[i * Frame::kChannels + c] *= m[i];
  return Frame(frame.width(), frame.height(), std::move(out));
}

struct PatchCandidate {
  std::size_t grid = 2;  // 2 or 4
  std::size_t cell = 0;  // row-major
  std::size_t x = 0, y = 0, width = 0, height = 0;
  double score = 0.0;

  bool operator==(const PatchCandidate&) const = default;
};

// Cell `cell` of an n x n tiling of a width x height image.
inline PatchCandidate grid_cell(std::size_t n, std::size_t cell, std::size_t width,
                                std::size_t height) {
  const std::size_t cw = width / n, ch = height / n;
  return {n, cell, (cell % n) * cw, (cell / n) * ch, cw, ch, 0.0};
}

// All 2x2 cells then all 4x4 cells, each scored by its mean mask value.
inline std::vector<PatchCandidate> score_patches(const AttentionMask& mask) {
  const std::size_t w = mask.width(), h = mask.height();
  if (w % 4 != 0 || h % 4 != 0) {
    throw DimensionError("score_patches: mask " + std::to_string(w) + "x" + std::to_string(h) +
                         " is not divisible by 4");
  }
  // Summed-area table with a zero first row/column.
  std::vector<double> sat((w + 1) * (h + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      sat[(y + 1) * (w + 1) + x + 1] = mask.field(x, y) + sat[y * (w + 1) + x + 1] +
                                        sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
  std::vector<PatchCandidate> out;
  for (std::size_t n : {std::size_t{2}, std::size_t{4}}) {
    for (std::size_t cell = 0; cell < n * n; ++cell) {
      PatchCandidate p = grid_cell(n, cell, w, h);
      const std::size_t x1 = p.x + p.width, y1 = p.y + p.height;
      const double sum = sat[y1 * (w + 1) + x1] - sat[p.y * (w + 1) + x1] -
                         sat[y1 * (w + 1) + p.x] + sat[p.y * (w + 1) + p.x];
      p.score = std::clamp(sum / static_cast<double>(p.width * p.height), 0.0, 1.0);
      out.push_back(p);
    }
  }
  return out;
}

// Highest scores first; ties go to the 2x2 grid, then the lower cell index.
inline std::vector<PatchCandidate> select_top_k(std::vector<PatchCandidate> candidates,
                                                std::size_t k) {
  if (k > candidates.size()) {
    throw ContractError("select_top_k: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(candidates.size()) + " candidates");
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const PatchCandidate& a, const PatchCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.grid != b.grid) return a.grid < b.grid;
              return a.cell < b.cell;
            });
  candidates.resize(k);
  return candidates;
}

}  // namespace pearl
