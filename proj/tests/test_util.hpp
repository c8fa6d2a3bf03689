#pragma once

#include <random>

#include "pearl/tensor.hpp"

namespace pearl::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace pearl::testing

#include "pearl/imaging.hpp"

namespace pearl::testing {

inline Frame random_frame(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> data(w * h * 3);
  for (double& v : data) v = dist(rng);
  return Frame(w, h, std::move(data));
}

inline ScalarField random_field(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  ScalarField f(w, h);
  for (double& v : f.data()) v = dist(rng);
  return f;
}

// Direct SSIM of the window centred at (cx, cy), population statistics.
inline double ssim_window_oracle(const ScalarField& a, const ScalarField& b, std::size_t cx,
                                 std::size_t cy, std::size_t win) {
  const std::size_t r = win / 2;
  const double n = static_cast<double>(win * win);
  double ma = 0, mb = 0;
  for (std::size_t y = cy - r; y <= cy + r; ++y)
    for (std::size_t x = cx - r; x <= cx + r; ++x) {
      ma += a(x, y);
      mb += b(x, y);
    }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t y = cy - r; y <= cy + r; ++y)
    for (std::size_t x = cx - r; x <= cx + r; ++x) {
      va += (a(x, y) - ma) * (a(x, y) - ma);
      vb += (b(x, y) - mb) * (b(x, y) - mb);
      cov += (a(x, y) - ma) * (b(x, y) - mb);
    }
  va /= n;
  vb /= n;
  cov /= n;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace pearl::testing

#include <algorithm>

#include "pearl/synth.hpp"

namespace pearl::testing {

struct PlantedPair {
  Frame prev, curr;
  // Union bounding box of the sprite over both frames, inclusive-exclusive.
  std::size_t x0, y0, x1, y1;
};

// One sprite of side 8 on a static noisy 64x64 background, moving from a to b.
inline PlantedPair planted_sprite(std::pair<int, int> a, std::pair<int, int> b, std::uint64_t seed) {
  SynthSpec spec;
  spec.frame_size = 64;
  spec.sprite_size = 8;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  std::vector<double> bg(64 * 64 * 3);
  for (std::size_t i = 0; i < 64 * 64; ++i) bg[3 * i] = bg[3 * i + 1] = bg[3 * i + 2] = noise(rng);
  std::vector<SpriteTrack> tracks(1);
  PlantedPair p{render_sprites(spec, bg, {a}, tracks), render_sprites(spec, bg, {b}, tracks),
                static_cast<std::size_t>(std::min(a.first, b.first)),
                static_cast<std::size_t>(std::min(a.second, b.second)),
                static_cast<std::size_t>(std::max(a.first, b.first) + 8),
                static_cast<std::size_t>(std::max(a.second, b.second) + 8)};
  return p;
}

}  // namespace pearl::testing
