#pragma once

// Image augmentations used by the augmentation contrastive head: random
// resized crop, color jitter and Gaussian blur.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/imaging.hpp"
#include "pearl/rng.hpp"

namespace pearl {

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

inline constexpr double kJitterLow = 0.6;
inline constexpr double kJitterHigh = 1.4;

inline JitterFactors sample_jitter(std::uint64_t seed) {
  Rng rng(seed);
  JitterFactors f;
  f.brightness = uniform(rng, kJitterLow, kJitterHigh);
  f.contrast = uniform(rng, kJitterLow, kJitterHigh);
  f.saturation = uniform(rng, kJitterLow, kJitterHigh);
  return f;
}

// Brightness, then contrast around the mean luma, then saturation around each
// pixel's luma; clamped after every stage.
inline Frame apply_jitter(const Frame& frame, const JitterFactors& f) {
  const std::size_t w = frame.width(), h = frame.height();
  Frame out = frame;
  if (f.brightness != 1.0) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.set(x, y, c, out.at(x, y, c) * f.brightness);
  }
  if (f.contrast != 1.0) {
    const double m = to_grayscale(out).mean();
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          out.set(x, y, c, (out.at(x, y, c) - m) * f.contrast + m);
  }
  if (f.saturation != 1.0) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double g = 0.299 * out.at(x, y, 0) + 0.587 * out.at(x, y, 1) +
                         0.114 * out.at(x, y, 2);
        for (std::size_t c = 0; c < 3; ++c)
          out.set(x, y, c, (out.at(x, y, c) - g) * f.saturation + g);
      }
  }
  return out;
}

inline Frame color_jitter(const Frame& frame, std::uint64_t seed) {
  return apply_jitter(frame, sample_jitter(seed));
}

struct CropOptions {
  double min_scale = 0.6;
  double min_aspect = 3.0 / 4.0;
  double max_aspect = 4.0 / 3.0;
};

// Samples a crop whose area fraction lies in [min_scale, 1] and whose aspect
// (width / height) lies in [min_aspect, max_aspect], fully inside a
// width x height frame. After ten rejected draws the aspect is clamped to the
// frame's own and the area shrunk until the rectangle fits.
inline Rect sample_crop(std::size_t width, std::size_t height, const CropOptions& opt,
                        std::uint64_t seed) {
  if (!(opt.min_scale > 0.0 && opt.min_scale <= 1.0)) {
    throw ContractError("crop min_scale must lie in (0,1]");
  }
  const double fw = static_cast<double>(width);
  const double fh = static_cast<double>(height);
  const double area = fw * fh;
  Rng rng(seed);
  auto place = [&](double cw, double ch) {
    const double x = uniform(rng, 0.0, 1.0) * (fw - cw);
    const double y = uniform(rng, 0.0, 1.0) * (fh - ch);
    return Rect{x, y, cw, ch};
  };
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double scale = uniform(rng, opt.min_scale, 1.0);
    const double aspect = opt.min_aspect == opt.max_aspect
                              ? opt.min_aspect
                              : std::exp(uniform(rng, std::log(opt.min_aspect),
                                                 std::log(opt.max_aspect)));
    const double cw = std::sqrt(scale * area * aspect);
    const double ch = std::sqrt(scale * area / aspect);
    if (cw <= fw && ch <= fh) return place(cw, ch);
  }
  const double aspect = std::clamp(fw / fh, opt.min_aspect, opt.max_aspect);
  const double cw = std::min(fw, fh * aspect);
  const double ch = cw / aspect;
  return place(cw, ch);
}

inline Frame random_crop_resize(const Frame& frame, const CropOptions& opt,
                                std::uint64_t seed) {
  return crop_resize(frame, sample_crop(frame.width(), frame.height(), opt, seed),
                     frame.width(), frame.height());
}

inline Frame random_crop_resize(const Frame& frame, double min_scale, std::uint64_t seed) {
  return random_crop_resize(frame, CropOptions{.min_scale = min_scale}, seed);
}

inline constexpr double kBlurSigmaLow = 0.5;
inline constexpr double kBlurSigmaHigh = 1.5;

inline Frame random_blur(const Frame& frame, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_blur(frame, uniform(rng, kBlurSigmaLow, kBlurSigmaHigh));
}

enum class Augmentation { kCrop, kJitter, kBlur };

inline std::string_view augmentation_name(Augmentation a) {
  switch (a) {
    case Augmentation::kCrop: return "crop";
    case Augmentation::kJitter: return "jitter";
    case Augmentation::kBlur: return "blur";
  }
  return "?";
}

inline Augmentation parse_augmentation(std::string_view name) {
  if (name == "crop") return Augmentation::kCrop;
  if (name == "jitter") return Augmentation::kJitter;
  if (name == "blur") return Augmentation::kBlur;
  throw ConfigError("unknown augmentation '" + std::string(name) + "'");
}

// Applies the requested augmentations in the fixed order crop, jitter, blur,
// each with its own seed derived from `seed`.
inline Frame augment(const Frame& frame, const std::vector<Augmentation>& set,
                     std::uint64_t seed) {
  auto has = [&](Augmentation a) { return std::find(set.begin(), set.end(), a) != set.end(); };
  Frame out = frame;
  if (has(Augmentation::kCrop)) out = random_crop_resize(out, 0.6, mix_seed(seed, 1));
  if (has(Augmentation::kJitter)) out = color_jitter(out, mix_seed(seed, 2));
  if (has(Augmentation::kBlur)) out = random_blur(out, mix_seed(seed, 3));
  return out;
}

}  // namespace pearl
