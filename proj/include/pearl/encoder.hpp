#pragma once

// Frozen image encoders. A mock encoder is a seeded random projection of the
// grayscale thumbnail followed by tanh; a file-backed encoder serves
// embeddings precomputed by an external model and never computes anything.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "pearl/embedding.hpp"
#include "pearl/imaging.hpp"
#include "pearl/rng.hpp"

namespace pearl {

enum class EncoderKind { kMock, kFileBacked };

inline constexpr std::size_t kDefaultEmbeddingWidth = 512;
// Projection entries are N(0, gain^2 / n) for n thumbnail pixels. The default
// gain drives tanh well into saturation, so embeddings are a nonlinear
// function of the pixels rather than a near-linear projection.
inline constexpr double kDefaultMockGain = 16.0;

class Encoder {
 public:
  static Encoder mock(std::size_t width = kDefaultEmbeddingWidth, std::size_t input_side = 32,
                      std::uint64_t seed = 0, double gain = kDefaultMockGain) {
    check_geometry(width, input_side);
    if (!(gain > 0.0)) throw ConfigError("mock encoder gain must be positive");
    Encoder e(EncoderKind::kMock, width, input_side);
    e.seed_ = seed;
    e.gain_ = gain;
    const std::size_t n = input_side * input_side;
    auto proj = std::make_shared<std::vector<double>>(width * n);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(n)));
    for (double& v : *proj) v = normal(rng);
    e.projection_ = std::move(proj);
    return e;
  }

  static Encoder file_backed(std::shared_ptr<const EmbeddingStore> store,
                             std::size_t input_side = 224) {
    if (!store) throw ContractError("file-backed encoder needs a store");
    check_geometry(store->width(), input_side);
    Encoder e(EncoderKind::kFileBacked, store->width(), input_side);
    e.store_ = std::move(store);
    return e;
  }

  EncoderKind kind() const noexcept { return kind_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t input_side() const noexcept { return input_side_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double gain() const noexcept { return gain_; }
  const EmbeddingStore* store() const noexcept { return store_.get(); }

  // Resize to input_side, grayscale, project, tanh.
  Embedding mock_encode(const Frame& image) const {
    if (kind_ != EncoderKind::kMock) {
      throw ContractError("mock_encode called on a file-backed encoder");
    }
    const ScalarField gray = to_grayscale(resize_bilinear(image, input_side_, input_side_));
    const auto& g = gray.data();
    const std::size_t n = g.size();
    const double* p = projection_->data();
    Embedding out;
    out.values.resize(width_);
    for (std::size_t i = 0; i < width_; ++i) {
      double s = 0.0;
      const double* row = p + i * n;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * g[j];
      out.values[i] = static_cast<float>(std::tanh(s));
    }
    return out;
  }

 private:
  Encoder(EncoderKind kind, std::size_t width, std::size_t side)
      : kind_(kind), width_(width), input_side_(side) {}

  static void check_geometry(std::size_t width, std::size_t side) {
    if (width < 8) throw ConfigError("encoder width must be >= 8");
    if (side == 0 || side % 4 != 0) {
      throw ConfigError("encoder input side must be a positive multiple of 4");
    }
  }

  EncoderKind kind_;
  std::size_t width_;
  std::size_t input_side_;
  std::uint64_t seed_ = 0;
  double gain_ = 0.0;
  std::shared_ptr<const std::vector<double>> projection_;
  std::shared_ptr<const EmbeddingStore> store_;
};

inline Embedding mock_encode(const Encoder& encoder, const Frame& image) {
  return encoder.mock_encode(image);
}

// Thread-safe memo of computed embeddings keyed by EmbeddingKey text.
class EmbeddingCache {
 public:
  std::optional<Embedding> find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    ++hits_;
    return it->second;
  }

  void insert(const std::string& key, const Embedding& e) {
    std::lock_guard lock(mutex_);
    entries_.insert_or_assign(key, e);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }

  std::vector<EmbeddingEntry> entries() const {
    std::lock_guard lock(mutex_);
    std::vector<EmbeddingEntry> out;
    out.reserve(entries_.size());
    for (const auto& [k, e] : entries_) out.emplace_back(EmbeddingKey::parse(k), e);
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Embedding> entries_;
  mutable std::size_t hits_ = 0;
};

// Mock encoders compute on a cache miss and memoize; file-backed encoders only
// look the key up. `image` is invoked only when a computation is needed.
inline Embedding cached_encode(const Encoder& encoder, EmbeddingCache& cache,
                               const EmbeddingKey& key,
                               const std::function<Frame()>& image) {
  const std::string text = key.str();
  if (encoder.kind() == EncoderKind::kFileBacked) {
    const Embedding* e = encoder.store()->find(text);
    if (!e) throw MissingEmbeddingError(text);
    return *e;
  }
  if (auto hit = cache.find(text)) return *std::move(hit);
  Embedding e = encoder.mock_encode(image());
  cache.insert(text, e);
  return e;
}

inline Embedding cached_encode(const Encoder& encoder, EmbeddingCache& cache,
                               const EmbeddingKey& key, const Frame& image) {
  return cached_encode(encoder, cache, key, [&image] { return image; });
}

}  // namespace pearl
