#pragma once

// Moving-sprite episodes with exact position labels, used as a hermetic
// stand-in for game footage.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pearl/dataset.hpp"
#include "pearl/rng.hpp"

namespace pearl {

struct SynthSpec {
  std::size_t frame_size = 32;
  std::size_t episodes = 4;
  std::size_t frames_per_episode = 100;
  std::size_t sprites = 2;
  std::size_t sprite_size = 6;
  int min_speed = 1;
  int max_speed = 3;
  std::size_t buckets = 4;
  double background_noise = 0.1;
  std::uint64_t seed = 0;
};

// Integer start position and per-frame velocity; sprite k paints channel k % 3.
struct SpriteTrack {
  int x0 = 0;
  int y0 = 0;
  int vx = 0;
  int vy = 0;
  std::size_t channel = 0;
};

struct SyntheticDataset {
  EpisodeDataset dataset;
  std::vector<std::vector<SpriteTrack>> tracks;  // [episode][sprite]
};

// Bucket of a sprite whose top-left corner is at `pos`: its centroid
// pos + (size-1)/2 quantized into `buckets` equal bands of the frame.
inline std::size_t position_bucket(int pos, std::size_t sprite_size, std::size_t frame_size,
                                   std::size_t buckets) {
  const double centroid = pos + (static_cast<double>(sprite_size) - 1.0) / 2.0;
  const auto b = static_cast<std::size_t>(centroid * static_cast<double>(buckets) /
                                          static_cast<double>(frame_size));
  return std::min(b, buckets - 1);
}

inline LabelSchema synthetic_schema(const SynthSpec& spec) {
  LabelSchema schema;
  for (std::size_t k = 0; k < spec.sprites; ++k) {
    schema.push_back({"sprite" + std::to_string(k) + "_x", spec.buckets});
    schema.push_back({"sprite" + std::to_string(k) + "_y", spec.buckets});
  }
  return schema;
}

// Paints one frame: static background texture plus a checkered sprite per
// track at the given positions.
inline Frame render_sprites(const SynthSpec& spec, const std::vector<double>& background,
                            const std::vector<std::pair<int, int>>& positions,
                            const std::vector<SpriteTrack>& tracks) {
  const std::size_t n = spec.frame_size;
  Frame frame(n, n, background);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const auto [px, py] = positions[k];
    for (std::size_t dy = 0; dy < spec.sprite_size; ++dy)
      for (std::size_t dx = 0; dx < spec.sprite_size; ++dx) {
        const std::size_t x = static_cast<std::size_t>(px) + dx;
        const std::size_t y = static_cast<std::size_t>(py) + dy;
        const double v = (dx + dy) % 2 ? 1.0 : 0.6;
        const std::size_t c = tracks[k].channel;
        frame.set(x, y, c, std::max(frame.at(x, y, c), v));
      }
  }
  return frame;
}

inline SyntheticDataset generate_synthetic(const SynthSpec& spec) {
  if (spec.frame_size < Frame::kMinSide) throw ConfigError("synthetic frame_size must be >= 8");
  if (spec.sprite_size == 0 || spec.sprite_size >= spec.frame_size) {
    throw ConfigError("sprite of size " + std::to_string(spec.sprite_size) +
                      " does not fit a " + std::to_string(spec.frame_size) + " frame");
  }
  if (spec.buckets < 2) throw ConfigError("synthetic bucket count must be >= 2");
  if (spec.sprites == 0) throw ConfigError("synthetic spec needs at least one sprite");
  const int travel = static_cast<int>(spec.frame_size - spec.sprite_size);
  if (spec.min_speed < 0 || spec.max_speed < spec.min_speed || spec.max_speed > travel) {
    throw ConfigError("sprite speed range [" + std::to_string(spec.min_speed) + "," +
                      std::to_string(spec.max_speed) + "] invalid for travel " +
                      std::to_string(travel));
  }
  if (!(spec.background_noise >= 0.0 && spec.background_noise < 0.5)) {
    throw ConfigError("background_noise must lie in [0, 0.5)");
  }

  SyntheticDataset out;
  out.dataset.schema = synthetic_schema(spec);
  Rng rng(spec.seed);
  std::uniform_int_distribution<int> pos_dist(0, travel);
  std::uniform_int_distribution<int> speed_dist(spec.min_speed, spec.max_speed);
  std::bernoulli_distribution sign_dist(0.5);
  const std::size_t n = spec.frame_size;

  for (std::size_t e = 0; e < spec.episodes; ++e) {
    std::vector<double> background(n * n * 3);
    for (std::size_t i = 0; i < n * n; ++i) {
      const double v = uniform(rng, 0.0, spec.background_noise);
      for (std::size_t c = 0; c < 3; ++c) background[i * 3 + c] = v;
    }
    std::vector<SpriteTrack> tracks(spec.sprites);
    for (std::size_t k = 0; k < spec.sprites; ++k) {
      auto& t = tracks[k];
      t.x0 = pos_dist(rng);
      t.y0 = pos_dist(rng);
      t.vx = speed_dist(rng) * (sign_dist(rng) ? 1 : -1);
      t.vy = speed_dist(rng) * (sign_dist(rng) ? 1 : -1);
      t.channel = k % 3;
    }
    Episode ep;
    ep.id = e;
    std::vector<std::pair<int, int>> pos(spec.sprites);
    std::vector<std::pair<int, int>> vel(spec.sprites);
    for (std::size_t k = 0; k < spec.sprites; ++k) {
      pos[k] = {tracks[k].x0, tracks[k].y0};
      vel[k] = {tracks[k].vx, tracks[k].vy};
    }
    auto reflect = [travel](int& p, int& v) {
      p += v;
      if (p < 0) {
        p = -p;
        v = -v;
      } else if (p > travel) {
        p = 2 * travel - p;
        v = -v;
      }
    };
    for (std::size_t f = 0; f < spec.frames_per_episode; ++f) {
      if (f > 0) {
        for (std::size_t k = 0; k < spec.sprites; ++k) {
          reflect(pos[k].first, vel[k].first);
          reflect(pos[k].second, vel[k].second);
        }
      }
      ep.frames.push_back(render_sprites(spec, background, pos, tracks));
      std::vector<std::size_t> labels;
      for (std::size_t k = 0; k < spec.sprites; ++k) {
        labels.push_back(position_bucket(pos[k].first, spec.sprite_size, n, spec.buckets));
        labels.push_back(position_bucket(pos[k].second, spec.sprite_size, n, spec.buckets));
      }
      ep.labels.push_back(std::move(labels));
    }
    out.dataset.episodes.push_back(std::move(ep));
    out.tracks.push_back(std::move(tracks));
  }
  return out;
}

}  // namespace pearl
