#pragma once

// Pixel-space primitives: frames, scalar fields, resampling, SSIM and blur.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pearl/errors.hpp"

namespace pearl {

// Interleaved RGB image with channel values in [0,1].
class Frame {
 public:
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kMinSide = 8;

  Frame() = default;

  Frame(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height) {
    check_size();
    data_.assign(width * height * kChannels, std::clamp(fill, 0.0, 1.0));
  }

  Frame(std::size_t width, std::size_t height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_size();
    if (data_.size() != width * height * kChannels) {
      throw DimensionError("frame data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(width) + "x" +
                           std::to_string(height) + "x3");
    }
    for (double v : data_) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("frame pixel outside [0,1]");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return data_[(y * width_ + x) * kChannels + c];
  }
  // Stores v clamped to [0,1].
  void set(std::size_t x, std::size_t y, std::size_t c, double v) {
    data_[(y * width_ + x) * kChannels + c] = std::clamp(v, 0.0, 1.0);
  }

  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Frame&) const = default;

 private:
  void check_size() const {
    if (width_ < kMinSide || height_ < kMinSide) {
      throw DimensionError("frame must be at least 8x8, got " + std::to_string(width_) +
                           "x" + std::to_string(height_));
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> data_;
};

// Single-channel field of finite reals (grayscale images, SSIM maps, masks).
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), data_(width * height, fill) {}
  ScalarField(std::size_t width, std::size_t height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width * height) {
      throw DimensionError("scalar field data length mismatch");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw DataError("scalar field value is not finite");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  double& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  double operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  double mean() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return data_.empty() ? 0.0 : s / static_cast<double>(data_.size());
  }

  bool operator==(const ScalarField&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> data_;
};

inline ScalarField to_grayscale(const Frame& frame) {
  ScalarField out(frame.width(), frame.height());
  for (std::size_t y = 0; y < frame.height(); ++y)
    for (std::size_t x = 0; x < frame.width(); ++x)
      out(x, y) = 0.299 * frame.at(x, y, 0) + 0.587 * frame.at(x, y, 1) +
                  0.114 * frame.at(x, y, 2);
  return out;
}

// Axis-aligned rectangle in continuous pixel coordinates; pixel i covers
// [i, i+1).
struct Rect {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;

  bool operator==(const Rect&) const = default;
};

namespace detail {

// Bilinear sampling of `rect` from a channels-interleaved buffer onto a
// dst_w x dst_h grid, half-pixel centers, edge clamped.
inline std::vector<double> sample_rect(const std::vector<double>& src, std::size_t w,
                                       std::size_t h, std::size_t channels, const Rect& rect,
                                       std::size_t dst_w, std::size_t dst_h) {
  std::vector<double> out(dst_w * dst_h * channels);
  const double sx = rect.width / static_cast<double>(dst_w);
  const double sy = rect.height / static_cast<double>(dst_h);
  const double max_x = static_cast<double>(w - 1);
  const double max_y = static_cast<double>(h - 1);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double fy = std::clamp(rect.y + (static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double fx =
          std::clamp(rect.x + (static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const double v00 = src[(y0 * w + x0) * channels + c];
        const double v10 = src[(y0 * w + x1) * channels + c];
        const double v01 = src[(y1 * w + x0) * channels + c];
        const double v11 = src[(y1 * w + x1) * channels + c];
        const double top = v00 + (v10 - v00) * tx;
        const double bottom = v01 + (v11 - v01) * tx;
        out[(y * dst_w + x) * channels + c] = top + (bottom - top) * ty;
      }
    }
  }
  return out;
}

}  // namespace detail

inline Frame crop_resize(const Frame& frame, const Rect& rect, std::size_t width,
                         std::size_t height) {
  auto data = detail::sample_rect(frame.data(), frame.width(), frame.height(),
                                  Frame::kChannels, rect, width, height);
  for (double& v : data) v = std::clamp(v, 0.0, 1.0);
  return Frame(width, height, std::move(data));
}

inline Frame resize_bilinear(const Frame& frame, std::size_t width, std::size_t height) {
  if (frame.width() == width && frame.height() == height) return frame;
  return crop_resize(frame,
                     Rect{0, 0, static_cast<double>(frame.width()),
                          static_cast<double>(frame.height())},
                     width, height);
}

inline ScalarField resize_bilinear(const ScalarField& field, std::size_t width,
                                   std::size_t height) {
  if (field.width() == width && field.height() == height) return field;
  return ScalarField(width, height,
                     detail::sample_rect(field.data(), field.width(), field.height(), 1,
                                         Rect{0, 0, static_cast<double>(field.width()),
                                              static_cast<double>(field.height())},
                                         width, height));
}

// Integer pixel sub-image, copied exactly.
inline Frame crop(const Frame& frame, std::size_t x, std::size_t y, std::size_t width,
                  std::size_t height) {
  if (x + width > frame.width() || y + height > frame.height()) {
    throw DimensionError("crop rectangle outside frame");
  }
  std::vector<double> data;
  data.reserve(width * height * Frame::kChannels);
  for (std::size_t r = 0; r < height; ++r) {
    const auto row = frame.data().begin() +
                     static_cast<std::ptrdiff_t>(((y + r) * frame.width() + x) * Frame::kChannels);
    data.insert(data.end(), row, row + static_cast<std::ptrdiff_t>(width * Frame::kChannels));
  }
  return Frame(width, height, std::move(data));
}

struct SsimOptions {
  std::size_t window = 7;
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Per-pixel SSIM with a uniform odd-sized window and population statistics.
// Pixels whose window would leave the image take the value of the nearest
// pixel whose window fits.
inline ScalarField ssim_map(const ScalarField& a, const ScalarField& b,
                            const SsimOptions& options = {}) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("ssim_map: field sizes differ");
  }
  const std::size_t win = options.window;
  if (win % 2 == 0 || win == 0) throw ContractError("ssim_map: window must be odd");
  const std::size_t w = a.width();
  const std::size_t h = a.height();
  if (win > std::min(w, h)) throw ContractError("ssim_map: window larger than image");

  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);

  // Summed-area tables with one row/column of zero padding.
  const std::size_t sw = w + 1;
  std::vector<double> sa(sw * (h + 1)), sb(sa.size()), saa(sa.size()), sbb(sa.size()),
      sab(sa.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = (y + 1) * sw + (x + 1);
      const std::size_t up = y * sw + (x + 1);
      const std::size_t left = (y + 1) * sw + x;
      const std::size_t diag = y * sw + x;
      const double va = a(x, y), vb = b(x, y);
      sa[i] = va + sa[up] + sa[left] - sa[diag];
      sb[i] = vb + sb[up] + sb[left] - sb[diag];
      saa[i] = va * va + saa[up] + saa[left] - saa[diag];
      sbb[i] = vb * vb + sbb[up] + sbb[left] - sbb[diag];
      sab[i] = va * vb + sab[up] + sab[left] - sab[diag];
    }
  auto box = [&](const std::vector<double>& t, std::size_t x0, std::size_t y0) {
    const std::size_t x1 = x0 + win, y1 = y0 + win;
    return t[y1 * sw + x1] - t[y0 * sw + x1] - t[y1 * sw + x0] + t[y0 * sw + x0];
  };

  const std::size_t r = win / 2;
  const double n = static_cast<double>(win * win);
  const std::size_t vw = w - win + 1;
  const std::size_t vh = h - win + 1;
  std::vector<double> valid(vw * vh);
  for (std::size_t y = 0; y < vh; ++y)
    for (std::size_t x = 0; x < vw; ++x) {
      const double ma = box(sa, x, y) / n;
      const double mb = box(sb, x, y) / n;
      const double va = box(saa, x, y) / n - ma * ma;
      const double vb = box(sbb, x, y) / n - mb * mb;
      const double cov = box(sab, x, y) / n - ma * mb;
      valid[y * vw + x] = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                          ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }

  ScalarField out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t cy = std::clamp(y, r, h - 1 - r) - r;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t cx = std::clamp(x, r, w - 1 - r) - r;
      out(x, y) = valid[cy * vw + cx];
    }
  }
  return out;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw ContractError("gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable Gaussian blur, kernel radius ceil(3 sigma), clamped borders.
inline Frame gaussian_blur(const Frame& frame, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = static_cast<int>(frame.width());
  const int h = static_cast<int>(frame.height());
  constexpr int ch = static_cast<int>(Frame::kChannels);
  const auto& src = frame.data();
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          s += kernel[static_cast<std::size_t>(k + radius)] * src[(y * w + xx) * ch + c];
        }
        tmp[(y * w + x) * ch + c] = s;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          s += kernel[static_cast<std::size_t>(k + radius)] * tmp[(yy * w + x) * ch + c];
        }
        out[(y * w + x) * ch + c] = std::clamp(s, 0.0, 1.0);
      }
  return Frame(frame.width(), frame.height(), std::move(out));
}

}  // namespace pearl
