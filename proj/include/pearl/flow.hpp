#pragma once

// Block-level optical flow: an exhaustive block matcher and the PRLF file
// format through which externally computed flow is imported.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "pearl/binary_io.hpp"
#include "pearl/imaging.hpp"

namespace pearl {

struct FlowVector {
  double dx = 0;
  double dy = 0;

  double magnitude() const { return std::hypot(dx, dy); }
  bool operator==(const FlowVector&) const = default;
};

// One displacement per block, row-major over the block grid.
class FlowField {
 public:
  FlowField() = default;
  FlowField(std::size_t grid_width, std::size_t grid_height)
      : grid_width_(grid_width), grid_height_(grid_height),
        vectors_(grid_width * grid_height) {}
  FlowField(std::size_t grid_width, std::size_t grid_height, std::vector<FlowVector> v)
      : grid_width_(grid_width), grid_height_(grid_height), vectors_(std::move(v)) {
    if (vectors_.size() != grid_width * grid_height) {
      throw DimensionError("flow grid size mismatch");
    }
  }

  std::size_t grid_width() const noexcept { return grid_width_; }
  std::size_t grid_height() const noexcept { return grid_height_; }
  FlowVector& operator()(std::size_t gx, std::size_t gy) {
    return vectors_[gy * grid_width_ + gx];
  }
  const FlowVector& operator()(std::size_t gx, std::size_t gy) const {
    return vectors_[gy * grid_width_ + gx];
  }
  const std::vector<FlowVector>& vectors() const noexcept { return vectors_; }

  bool operator==(const FlowField&) const = default;

 private:
  std::size_t grid_width_ = 0;
  std::size_t grid_height_ = 0;
  std::vector<FlowVector> vectors_;
};

struct BlockMatchOptions {
  std::size_t block = 8;
  std::size_t radius = 4;
};

// For each block of `a`, the displacement d within +-radius minimising the sum
// of absolute differences between the block and `b` shifted by d. Samples of
// `b` outside the frame clamp to the nearest edge pixel, so border blocks can
// still report outward motion. Ties go to the smallest |dx|+|dy|, then to the
// first candidate in row-major (dy, dx) order.
inline FlowField block_match_flow(const ScalarField& a, const ScalarField& b,
                                  const BlockMatchOptions& opt = {}) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("block_match_flow: field sizes differ");
  }
  const std::size_t bs = opt.block;
  if (bs == 0 || a.width() % bs != 0 || a.height() % bs != 0) {
    throw DimensionError("block_match_flow: " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " not divisible by block " +
                         std::to_string(bs));
  }
  const int r = static_cast<int>(opt.radius);
  const int w = static_cast<int>(a.width());
  const int h = static_cast<int>(a.height());
  FlowField flow(a.width() / bs, a.height() / bs);
  for (std::size_t gy = 0; gy < flow.grid_height(); ++gy) {
    for (std::size_t gx = 0; gx < flow.grid_width(); ++gx) {
      const int x0 = static_cast<int>(gx * bs);
      const int y0 = static_cast<int>(gy * bs);
      double best = std::numeric_limits<double>::infinity();
      int best_l1 = 0;
      int best_dx = 0, best_dy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          double sad = 0.0;
          for (int y = 0; y < static_cast<int>(bs) && sad <= best; ++y) {
            const auto by = static_cast<std::size_t>(std::clamp(y0 + y + dy, 0, h - 1));
            for (int x = 0; x < static_cast<int>(bs); ++x) {
              const auto bx = static_cast<std::size_t>(std::clamp(x0 + x + dx, 0, w - 1));
              sad += std::abs(a(static_cast<std::size_t>(x0 + x), static_cast<std::size_t>(y0 + y)) -
                              b(bx, by));
            }
          }
          const int l1 = std::abs(dx) + std::abs(dy);
          if (sad < best || (sad == best && l1 < best_l1)) {
            best = sad;
            best_l1 = l1;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      flow(gx, gy) = FlowVector{static_cast<double>(best_dx), static_cast<double>(best_dy)};
    }
  }
  return flow;
}

inline constexpr char kFlowMagic[4] = {'P', 'R', 'L', 'F'};
inline constexpr std::uint16_t kFlowVersion = 1;

// PRLF: "PRLF", u16 version, u32 grid width, u32 grid height, then (dx, dy)
// f32 pairs row-major. All little-endian.
inline std::vector<std::uint8_t> encode_flow(const FlowField& flow) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kFlowMagic, 4));
  w.put_u16(kFlowVersion);
  w.put_u32(static_cast<std::uint32_t>(flow.grid_width()));
  w.put_u32(static_cast<std::uint32_t>(flow.grid_height()));
  for (const FlowVector& v : flow.vectors()) {
    w.put_f32(static_cast<float>(v.dx));
    w.put_f32(static_cast<float>(v.dy));
  }
  return w.bytes();
}

inline FlowField decode_flow(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string_view(kFlowMagic, 4)) {
    throw FormatError("not a PRLF flow file (bad magic)");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kFlowVersion) {
    throw FormatError("unsupported PRLF version " + std::to_string(version));
  }
  const std::uint32_t gw = r.u32("grid width");
  const std::uint32_t gh = r.u32("grid height");
  const std::uint64_t expected = std::uint64_t{gw} * gh * 8;
  if (r.remaining() != expected) {
    if (r.remaining() < expected) {
      throw CorruptionError("truncated PRLF payload: expected " + std::to_string(expected) +
                                " bytes, found " + std::to_string(r.remaining()),
                            r.offset() + r.remaining());
    }
    throw CorruptionError("trailing bytes after PRLF payload", r.offset() + expected);
  }
  std::vector<FlowVector> v(std::size_t{gw} * gh);
  for (auto& fv : v) {
    fv.dx = r.f32("dx");
    fv.dy = r.f32("dy");
  }
  return FlowField(gw, gh, std::move(v));
}

inline void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  io::write_file(path, encode_flow(flow));
}

inline FlowField read_flow(const std::filesystem::path& path) {
  return decode_flow(io::read_file(path));
}

}  // namespace pearl
