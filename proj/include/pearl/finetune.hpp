#pragma once

// Self-supervised heads trained on frozen embeddings. All three objectives
// reduce to InfoNCE over a square score matrix whose diagonal holds the
// positives:
//
//   aug-mlp  two augmented views of a frame, MLP width->hidden->projection,
//            cosine scores
//   dim      bilinear scores phi(x)^T W phi(y) with phi linear; temporal
//            (same unit at t, t+1), spatial (two patches of one frame) or
//            spatio-temporal (full image at t+1 against each patch at t)
//   cpc      linear encoder, GRU context over `context` steps, W_k c_t scored
//            against the encoded frame k steps ahead, k = 1..steps
//
// Trained heads are stored in PRLH files (little-endian): "PRLH", u16 version,
// u8 kind, u8 dim mode, u64 input width, hyperparameters, u32 tensor count,
// then per tensor u8 rank, u64 dims, f64 values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pearl/augment.hpp"
#include "pearl/autodiff.hpp"
#include "pearl/binary_io.hpp"
#include "pearl/composer.hpp"
#include "pearl/optim.hpp"
#include "pearl/probe.hpp"
#include "pearl/rng.hpp"

namespace pearl {

// Mean over rows of -log softmax(scores / temperature)[i][i].
inline ad::Var infonce(ad::Var scores, double temperature) {
  if (!(temperature > 0.0)) {
    throw ContractError("infonce temperature must be > 0, got " + std::to_string(temperature));
  }
  const Tensor& s = scores.value();
  if (s.rank() != 2 || s.rows() != s.cols()) {
    throw DimensionError("infonce needs a square score matrix, got " +
                         shape_to_string(s.shape()));
  }
  std::vector<std::size_t> diagonal(s.rows());
  std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});
  return ad::softmax_cross_entropy(ad::scale(scores, 1.0 / temperature), diagonal);
}

inline double infonce(const Tensor& scores, double temperature) {
  ad::Graph g;
  return infonce(g.constant(scores), temperature).value().item();
}

enum class HeadKind : std::uint8_t { kAugMlp = 0, kDim = 1, kCpc = 2 };
enum class DimMode : std::uint8_t { kTemporal = 0, kSpatial = 1, kSpatioTemporal = 2 };

inline std::string_view head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::kAugMlp: return "aug-mlp";
    case HeadKind::kDim: return "dim";
    case HeadKind::kCpc: return "cpc";
  }
  return "?";
}

inline HeadKind parse_head_kind(std::string_view s) {
  if (s == "aug-mlp") return HeadKind::kAugMlp;
  if (s == "dim") return HeadKind::kDim;
  if (s == "cpc") return HeadKind::kCpc;
  throw ConfigError("unknown head kind '" + std::string(s) + "' (aug-mlp, dim, cpc)");
}

inline std::string_view dim_mode_name(DimMode m) {
  switch (m) {
    case DimMode::kTemporal: return "T";
    case DimMode::kSpatial: return "S";
    case DimMode::kSpatioTemporal: return "ST";
  }
  return "?";
}

inline DimMode parse_dim_mode(std::string_view s) {
  if (s == "T") return DimMode::kTemporal;
  if (s == "S") return DimMode::kSpatial;
  if (s == "ST") return DimMode::kSpatioTemporal;
  throw ConfigError("unknown DIM mode '" + std::string(s) + "' (T, S, ST)");
}

struct HeadHyper {
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no limit beyond `epochs`
  double temperature = 0.1;
  std::size_t mlp_hidden = 256;
  std::size_t projection = 128;  // aug-mlp output and DIM phi width
  std::size_t cpc_latent = 256;
  std::size_t cpc_hidden = 256;
  std::size_t steps = 3;  // CPC prediction horizon K
  std::size_t context = 8;

  bool operator==(const HeadHyper&) const = default;
};

struct ContrastiveHead {
  HeadKind kind = HeadKind::kAugMlp;
  DimMode mode = DimMode::kTemporal;
  HeadHyper hyper;
  // Per-unit embedding width for aug-mlp and dim; whole representation
  // width for cpc.
  std::size_t input_width = 0;
  std::vector<Tensor> params;

  std::size_t output_width() const {
    return kind == HeadKind::kCpc ? hyper.cpc_latent : hyper.projection;
  }
  bool operator==(const ContrastiveHead&) const = default;
};

struct TrainingLog {
  std::vector<double> step_losses;
  std::size_t steps_per_epoch = 0;
  double max_abs_hidden = 0.0;  // cpc only

  // Mean loss over the last epoch's steps.
  double final_loss() const {
    if (step_losses.empty()) return 0.0;
    const std::size_t n = std::min(std::max<std::size_t>(steps_per_epoch, 1), step_losses.size());
    return std::accumulate(step_losses.end() - static_cast<std::ptrdiff_t>(n), step_losses.end(),
                           0.0) /
           static_cast<double>(n);
  }
};

struct TrainedHead {
  ContrastiveHead head;
  TrainingLog log;
};

namespace detail {

inline Tensor gaussian_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

inline Tensor fan_in_matrix(std::size_t in, std::size_t out, Rng& rng) {
  return gaussian_tensor(Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

// Expected parameter shapes, in storage order.
inline std::vector<Shape> head_shapes(HeadKind kind, std::size_t d, const HeadHyper& h) {
  switch (kind) {
    case HeadKind::kAugMlp:
      return {{d, h.mlp_hidden}, {h.mlp_hidden}, {h.mlp_hidden, h.projection}, {h.projection}};
    case HeadKind::kDim:
      return {{d, h.projection}, {h.projection}, {h.projection, h.projection}};
    case HeadKind::kCpc: {
      const std::size_t l = h.cpc_latent, hid = h.cpc_hidden;
      std::vector<Shape> s = {{d, l}, {l}};
      for (int gate = 0; gate < 3; ++gate) {
        s.push_back({l, hid});
        s.push_back({hid, hid});
        s.push_back({hid});
      }
      for (std::size_t k = 0; k < h.steps; ++k) s.push_back({hid, l});
      return s;
    }
  }
  return {};
}

inline Tensor gather_rows(const Representations& x, std::span<const std::size_t> rows,
                          std::size_t offset, std::size_t width) {
  Tensor t(Shape{rows.size(), width});
  auto out = t.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = x[rows[i]];
    if (offset + width > row.size()) {
      throw DimensionError("representation row " + std::to_string(rows[i]) + " too narrow");
    }
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = row[offset + j];
  }
  return t;
}

inline std::vector<std::size_t> episode_offsets(std::span<const std::size_t> lengths) {
  std::vector<std::size_t> out(lengths.size() + 1, 0);
  for (std::size_t e = 0; e < lengths.size(); ++e) out[e + 1] = out[e] + lengths[e];
  return out;
}

inline void check_hyper(const HeadHyper& h) {
  if (!(h.temperature > 0.0)) throw ConfigError("head temperature must be > 0");
  if (h.batch_size < 2) throw ConfigError("contrastive batch size must be >= 2");
  if (h.epochs == 0 && h.max_steps == 0) throw ConfigError("head training needs epochs > 0");
  if (h.mlp_hidden == 0 || h.projection == 0 || h.cpc_latent == 0 || h.cpc_hidden == 0) {
    throw ConfigError("head widths must be positive");
  }
}

// Runs the shared optimisation loop. `items` are shuffled each epoch and cut
// into full batches; `loss_of` builds the loss of one batch on a fresh graph.
template <typename LossOf>
TrainingLog optimise(ContrastiveHead& head, std::vector<std::size_t> items, std::uint64_t seed,
                     LossOf&& loss_of) {
  const HeadHyper& h = head.hyper;
  const std::size_t batch = std::min(h.batch_size, items.size());
  if (batch < 2) {
    throw DataError("contrastive training needs at least 2 samples, got " +
                    std::to_string(items.size()));
  }
  TrainingLog log;
  log.steps_per_epoch = items.size() / batch;
  Adam adam({.learning_rate = h.learning_rate});
  Rng rng(mix_seed(seed, 1));
  const std::size_t epochs = h.epochs == 0 ? SIZE_MAX : h.epochs;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(items.begin(), items.end(), rng);
    for (std::size_t b = 0; b < log.steps_per_epoch; ++b) {
      if (h.max_steps && log.step_losses.size() >= h.max_steps) return log;
      std::span<const std::size_t> rows(items.data() + b * batch, batch);
      ad::Graph g;
      std::vector<ad::Var> p;
      p.reserve(head.params.size());
      for (const Tensor& t : head.params) p.push_back(g.parameter(t));
      ad::Var loss = loss_of(g, std::span<const ad::Var>(p), rows, rng, log);
      g.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(p.size());
      for (const ad::Var& v : p) grads.push_back(g.grad(v));
      adam.step(head.params, grads);
      log.step_losses.push_back(loss.value().item());
    }
  }
  return log;
}

}  // namespace detail

inline ContrastiveHead init_head(HeadKind kind, std::size_t input_width, const HeadHyper& hyper,
                                 std::uint64_t seed, DimMode mode = DimMode::kTemporal) {
  detail::check_hyper(hyper);
  if (input_width == 0) throw ConfigError("head input width must be positive");
  ContrastiveHead head{kind, mode, hyper, input_width, {}};
  Rng rng(mix_seed(seed, 0));
  for (const Shape& s : detail::head_shapes(kind, input_width, hyper)) {
    if (s.size() == 1) {
      head.params.emplace_back(s);
    } else {
      head.params.push_back(detail::fan_in_matrix(s[0], s[1], rng));
    }
  }
  return head;
}

// ---- aug-mlp ---------------------------------------------------------------

inline ad::Var mlp_forward(ad::Var x, std::span<const ad::Var> p) {
  return ad::add(ad::matmul(ad::relu(ad::add(ad::matmul(x, p[0]), p[1])), p[2]), p[3]);
}

inline ad::Var aug_loss(ad::Graph& g, std::span<const ad::Var> p, const Tensor& view_a,
                        const Tensor& view_b, double temperature) {
  ad::Var a = ad::normalize_rows(mlp_forward(g.constant(view_a), p));
  ad::Var b = ad::normalize_rows(mlp_forward(g.constant(view_b), p));
  return infonce(ad::matmul(a, ad::transpose(b)), temperature);
}

// Rows of view_a and view_b are two views of the same sample.
inline TrainedHead train_aug_head(const Representations& view_a, const Representations& view_b,
                                  const HeadHyper& hyper = {}, std::uint64_t seed = 0) {
  if (view_a.empty() || view_a.size() != view_b.size()) {
    throw DimensionError("augmented views must be non-empty and aligned");
  }
  const std::size_t d = view_a[0].size();
  TrainedHead out{init_head(HeadKind::kAugMlp, d, hyper, seed), {}};
  std::vector<std::size_t> items(view_a.size());
  std::iota(items.begin(), items.end(), std::size_t{0});
  out.log = detail::optimise(
      out.head, items, seed,
      [&](ad::Graph& g, std::span<const ad::Var> p, std::span<const std::size_t> rows, Rng&,
          TrainingLog&) {
        return aug_loss(g, p, detail::gather_rows(view_a, rows, 0, d),
                        detail::gather_rows(view_b, rows, 0, d), hyper.temperature);
      });
  return out;
}

// Augmentation seed of view `view` of frame (episode, frame).
inline std::uint64_t augmentation_seed(std::size_t episode, std::size_t frame, std::size_t view) {
  return mix_seed(mix_seed(mix_seed(0x5eed, episode), frame), view);
}

inline std::string augmentation_tag(const std::vector<Augmentation>& set, std::size_t view) {
  std::string kinds;
  for (Augmentation a : {Augmentation::kCrop, Augmentation::kJitter, Augmentation::kBlur})
    if (std::find(set.begin(), set.end(), a) != set.end()) {
      kinds += (kinds.empty() ? "" : "-") + std::string(augmentation_name(a));
    }
  if (kinds.empty()) throw ConfigError("augmentation set is empty");
  return "aug:" + kinds + ":" + std::to_string(view);
}

// Embeddings of views 0 and 1 of every frame, keyed "aug:<kinds>:<view>".
inline std::pair<Representations, Representations> augmented_views(
    const EpisodeDataset& ds, const Encoder& encoder, EmbeddingCache& cache,
    const std::vector<Augmentation>& set, std::size_t canonical_side = 224) {
  std::pair<Representations, Representations> out;
  for (const auto& ep : ds.episodes)
    for (std::size_t f = 0; f < ep.frames.size(); ++f)
      for (std::size_t view = 0; view < 2; ++view) {
        const Frame& frame = ep.frames[f];
        auto image = [&] {
          return augment(resize_bilinear(frame, canonical_side, canonical_side), set,
                         augmentation_seed(ep.id, f, view));
        };
        Embedding e = cached_encode(encoder, cache, {ep.id, f, augmentation_tag(set, view)}, image);
        (view == 0 ? out.first : out.second).push_back(std::move(e.values));
      }
  return out;
}

inline TrainedHead train_aug_head(const EpisodeDataset& ds, const Encoder& encoder,
                                  EmbeddingCache& cache, const std::vector<Augmentation>& set,
                                  const HeadHyper& hyper = {}, std::uint64_t seed = 0,
                                  std::size_t canonical_side = 224) {
  auto [a, b] = augmented_views(ds, encoder, cache, set, canonical_side);
  return train_aug_head(a, b, hyper, seed);
}

// ---- dim -------------------------------------------------------------------

// Per-slice roles of a composition that DIM heads can use.
struct UnitRoles {
  std::vector<std::size_t> full;     // slice indices holding full-image embeddings
  std::vector<std::size_t> patches;  // slice indices holding grid patches
  std::size_t slices = 0;
};

inline UnitRoles unit_roles(const CompositionConfig& config) {
  UnitRoles r;
  for (const auto& u : config.units) {
    if (u.kind == UnitKind::kFull) {
      r.full.push_back(r.slices++);
    } else if (u.kind == UnitKind::kGrid) {
      for (std::size_t c = 0; c < u.grid * u.grid; ++c) r.patches.push_back(r.slices++);
    } else {
      throw ConfigError("DIM heads support FI and grid units only, not '" + u.token + "'");
    }
  }
  return r;
}

// One InfoNCE term: anchors[i] should pick positives[i].
struct ContrastPair {
  Tensor anchors;
  Tensor positives;
};

inline ad::Var dim_loss(ad::Graph& g, std::span<const ad::Var> p,
                        const std::vector<ContrastPair>& pairs, double temperature) {
  ad::Var total;
  bool first = true;
  for (const auto& pair : pairs) {
    ad::Var a = ad::add(ad::matmul(g.constant(pair.anchors), p[0]), p[1]);
    ad::Var b = ad::add(ad::matmul(g.constant(pair.positives), p[0]), p[1]);
    ad::Var term = infonce(ad::bilinear(a, p[2], b), temperature);
    total = first ? term : ad::add(total, term);
    first = false;
  }
  return total;
}

// Consecutive (t, t+1) flat index pairs that stay inside one episode,
// identified by t.
inline std::vector<std::size_t> consecutive_pairs(std::span<const std::size_t> lengths) {
  std::vector<std::size_t> out;
  const auto offsets = detail::episode_offsets(lengths);
  for (std::size_t e = 0; e < lengths.size(); ++e)
    for (std::size_t t = 0; t + 1 < lengths[e]; ++t) out.push_back(offsets[e] + t);
  return out;
}

inline TrainedHead train_dim_head(const Representations& x, std::span<const std::size_t> lengths,
                                  const CompositionConfig& config, DimMode mode,
                                  const HeadHyper& hyper = {}, std::uint64_t seed = 0) {
  const UnitRoles roles = unit_roles(config);
  if (mode == DimMode::kSpatial && roles.patches.size() < 2) {
    throw ConfigError("S-DIM needs a grid composition (e.g. 2x2), got '" + config.str() + "'");
  }
  if (mode == DimMode::kSpatioTemporal && (roles.patches.empty() || roles.full.empty())) {
    throw ConfigError("ST-DIM needs a full image and a grid (e.g. 1x1+2x2), got '" +
                      config.str() + "'");
  }
  const auto offsets = detail::episode_offsets(lengths);
  if (x.empty() || offsets.back() != x.size()) {
    throw DimensionError("episode lengths cover " + std::to_string(offsets.back()) +
                         " frames, representations have " + std::to_string(x.size()));
  }
  if (x[0].size() % roles.slices != 0) {
    throw DimensionError("representation width " + std::to_string(x[0].size()) +
                         " is not a multiple of " + std::to_string(roles.slices) + " units");
  }
  const std::size_t d = x[0].size() / roles.slices;
  TrainedHead out{init_head(HeadKind::kDim, d, hyper, seed, mode), {}};

  std::vector<std::size_t> items;
  if (mode == DimMode::kSpatial) {
    items.resize(x.size());
    std::iota(items.begin(), items.end(), std::size_t{0});
  } else {
    items = consecutive_pairs(lengths);
  }
  const auto slice = [&](std::span<const std::size_t> rows, std::size_t s) {
    return detail::gather_rows(x, rows, s * d, d);
  };
  out.log = detail::optimise(
      out.head, items, seed,
      [&](ad::Graph& g, std::span<const ad::Var> p, std::span<const std::size_t> rows, Rng& rng,
          TrainingLog&) {
        std::vector<ContrastPair> pairs;
        std::vector<std::size_t> next(rows.begin(), rows.end());
        for (std::size_t& r : next) ++r;
        switch (mode) {
          case DimMode::kTemporal:
            for (std::size_t s = 0; s < roles.slices; ++s)
              pairs.push_back({slice(rows, s), slice(next, s)});
            break;
          case DimMode::kSpatial: {
            // One ordered pair of distinct patches per frame.
            Tensor a(Shape{rows.size(), d}), b(Shape{rows.size(), d});
            std::uniform_int_distribution<std::size_t> pick(0, roles.patches.size() - 1);
            for (std::size_t i = 0; i < rows.size(); ++i) {
              const std::size_t pi = pick(rng);
              std::size_t pj = pick(rng);
              while (pj == pi) pj = pick(rng);
              const auto& row = x[rows[i]];
              for (std::size_t j = 0; j < d; ++j) {
                a(i, j) = row[roles.patches[pi] * d + j];
                b(i, j) = row[roles.patches[pj] * d + j];
              }
            }
            pairs.push_back({std::move(a), std::move(b)});
            break;
          }
          case DimMode::kSpatioTemporal: {
            const Tensor global = slice(next, roles.full.front());
            for (std::size_t s : roles.patches) pairs.push_back({global, slice(rows, s)});
            break;
          }
        }
        return dim_loss(g, p, pairs, hyper.temperature);
      });
  return out;
}

inline std::vector<std::size_t> episode_lengths(const EpisodeDataset& ds) {
  std::vector<std::size_t> out;
  for (const auto& e : ds.episodes) out.push_back(e.frames.size());
  return out;
}

inline TrainedHead train_dim_head(const EpisodeDataset& ds, const Encoder& encoder,
                                  EmbeddingCache& cache, const CompositionConfig& config,
                                  DimMode mode, const HeadHyper& hyper = {},
                                  std::uint64_t seed = 0, const ComposeOptions& opt = {}) {
  unit_roles(config);
  return train_dim_head(compose_dataset(config, ds, encoder, cache, opt), episode_lengths(ds),
                        config, mode, hyper, seed);
}

// ---- cpc -------------------------------------------------------------------

// Parameter indices: 0 encoder W, 1 encoder b, then (W, U, b) for the update,
// reset and candidate gates, then one prediction matrix per step.
inline constexpr std::size_t kCpcGateBase = 2;
inline constexpr std::size_t kCpcPredictBase = 11;

inline ad::Var gru_step(ad::Var x, ad::Var h, std::span<const ad::Var> p) {
  const auto gate = [&](std::size_t i, ad::Var hidden) {
    return ad::add(ad::add(ad::matmul(x, p[i]), ad::matmul(hidden, p[i + 1])), p[i + 2]);
  };
  ad::Var z = ad::sigmoid(gate(kCpcGateBase, h));
  ad::Var r = ad::sigmoid(gate(kCpcGateBase + 3, h));
  ad::Var candidate = ad::tanh(gate(kCpcGateBase + 6, ad::multiply(r, h)));
  return ad::add(h, ad::multiply(z, ad::subtract(candidate, h)));
}

struct CpcForward {
  ad::Var loss;
  double max_abs_hidden = 0.0;
};

// `frames` holds context + steps consecutive batches [B x d]; the context is
// the GRU state after the first `context` of them.
inline CpcForward cpc_loss(ad::Graph& g, std::span<const ad::Var> p,
                           const std::vector<Tensor>& frames, const HeadHyper& hyper) {
  if (frames.size() != hyper.context + hyper.steps) {
    throw ContractError("cpc_loss needs context + steps frame batches");
  }
  std::vector<ad::Var> z;
  z.reserve(frames.size());
  for (const Tensor& f : frames) z.push_back(ad::add(ad::matmul(g.constant(f), p[0]), p[1]));
  CpcForward out;
  ad::Var h = g.constant(Tensor(Shape{frames[0].rows(), hyper.cpc_hidden}));
  for (std::size_t t = 0; t < hyper.context; ++t) {
    h = gru_step(z[t], h, p);
    for (double v : h.value().data()) out.max_abs_hidden = std::max(out.max_abs_hidden, std::abs(v));
  }
  bool first = true;
  for (std::size_t k = 1; k <= hyper.steps; ++k) {
    ad::Var pred = ad::matmul(h, p[kCpcPredictBase + k - 1]);
    ad::Var term = infonce(ad::matmul(pred, ad::transpose(z[hyper.context + k - 1])),
                           hyper.temperature);
    out.loss = first ? term : ad::add(out.loss, term);
    first = false;
  }
  return out;
}

// Flat index of the first frame of every full window.
inline std::vector<std::size_t> cpc_windows(std::span<const std::size_t> lengths,
                                            const HeadHyper& hyper) {
  const std::size_t span_len = hyper.context + hyper.steps;
  const auto offsets = detail::episode_offsets(lengths);
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < lengths.size(); ++e) {
    if (lengths[e] <= span_len) {
      throw DataError("CPC needs episodes longer than context + steps = " +
                      std::to_string(span_len) + " frames (minimum length " +
                      std::to_string(span_len + 1) + "); episode " + std::to_string(e) +
                      " has " + std::to_string(lengths[e]));
    }
    for (std::size_t s = 0; s + span_len <= lengths[e]; ++s) out.push_back(offsets[e] + s);
  }
  return out;
}

inline std::vector<Tensor> cpc_batch(const Representations& x, std::span<const std::size_t> starts,
                                     const HeadHyper& hyper) {
  std::vector<Tensor> frames;
  std::vector<std::size_t> rows(starts.begin(), starts.end());
  for (std::size_t t = 0; t < hyper.context + hyper.steps; ++t) {
    frames.push_back(detail::gather_rows(x, rows, 0, x[rows[0]].size()));
    for (std::size_t& r : rows) ++r;
  }
  return frames;
}

inline TrainedHead train_cpc_head(const Representations& x, std::span<const std::size_t> lengths,
                                  const HeadHyper& hyper = {}, std::uint64_t seed = 0) {
  if (hyper.steps == 0 || hyper.context == 0) {
    throw ConfigError("CPC needs steps >= 1 and context >= 1");
  }
  const auto offsets = detail::episode_offsets(lengths);
  if (x.empty() || offsets.back() != x.size()) {
    throw DimensionError("episode lengths cover " + std::to_string(offsets.back()) +
                         " frames, representations have " + std::to_string(x.size()));
  }
  auto windows = cpc_windows(lengths, hyper);
  TrainedHead out{init_head(HeadKind::kCpc, x[0].size(), hyper, seed), {}};
  out.log = detail::optimise(
      out.head, std::move(windows), seed,
      [&](ad::Graph& g, std::span<const ad::Var> p, std::span<const std::size_t> rows, Rng&,
          TrainingLog& log) {
        CpcForward f = cpc_loss(g, p, cpc_batch(x, rows, hyper), hyper);
        log.max_abs_hidden = std::max(log.max_abs_hidden, f.max_abs_hidden);
        return f.loss;
      });
  return out;
}

inline TrainedHead train_cpc_head(const EpisodeDataset& ds, const Encoder& encoder,
                                  EmbeddingCache& cache, const CompositionConfig& config,
                                  const HeadHyper& hyper = {}, std::uint64_t seed = 0,
                                  const ComposeOptions& opt = {}) {
  return train_cpc_head(compose_dataset(config, ds, encoder, cache, opt), episode_lengths(ds),
                        hyper, seed);
}

// ---- controls and probe-time use ---------------------------------------------

// Frame order permuted independently inside each episode; destroys temporal
// structure while keeping per-episode content.
inline Representations shuffle_within_episodes(const Representations& x,
                                               std::span<const std::size_t> lengths,
                                               std::uint64_t seed) {
  const auto offsets = detail::episode_offsets(lengths);
  if (offsets.back() != x.size()) throw DimensionError("episode lengths do not cover x");
  Rng rng(seed);
  Representations out;
  out.reserve(x.size());
  for (std::size_t e = 0; e < lengths.size(); ++e) {
    std::vector<std::size_t> order(lengths[e]);
    std::iota(order.begin(), order.end(), offsets[e]);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) out.push_back(x[i]);
  }
  return out;
}

// aug-mlp and dim heads map every unit of width input_width independently;
// cpc heads map the whole row through the linear encoder.
inline Representations apply_head(const ContrastiveHead& head, const Representations& x) {
  Representations out;
  out.reserve(x.size());
  const std::size_t d = head.input_width;
  const std::size_t o = head.output_width();
  for (const auto& row : x) {
    if (row.empty() || row.size() % d != 0 || (head.kind == HeadKind::kCpc && row.size() != d)) {
      throw DimensionError("head expects width " + std::to_string(d) +
                           (head.kind == HeadKind::kCpc ? "" : " per unit") + ", got " +
                           std::to_string(row.size()));
    }
    const std::size_t units = row.size() / d;
    Tensor in(Shape{units, d});
    std::copy(row.begin(), row.end(), in.data().begin());
    Tensor y;
    if (head.kind == HeadKind::kAugMlp) {
      Tensor hidden = matmul(in, head.params[0]);
      for (std::size_t i = 0; i < hidden.size(); ++i)
        hidden.data()[i] = std::max(0.0, hidden.data()[i] + head.params[1][i % head.hyper.mlp_hidden]);
      y = matmul(hidden, head.params[2]);
      for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += head.params[3][i % o];
    } else {
      y = matmul(in, head.params[0]);
      for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += head.params[1][i % o];
    }
    std::vector<float> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = static_cast<float>(y.data()[i]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- PRLH ------------------------------------------------------------------

inline constexpr char kHeadMagic[4] = {'P', 'R', 'L', 'H'};
inline constexpr std::uint16_t kHeadVersion = 1;

inline std::vector<std::uint8_t> encode_head(const ContrastiveHead& head) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kHeadMagic, 4));
  w.put_u16(kHeadVersion);
  w.put_u8(static_cast<std::uint8_t>(head.kind));
  w.put_u8(static_cast<std::uint8_t>(head.mode));
  w.put_u64(head.input_width);
  const HeadHyper& h = head.hyper;
  w.put_u64(h.batch_size);
  w.put_f64(h.learning_rate);
  w.put_u64(h.epochs);
  w.put_u64(h.max_steps);
  w.put_f64(h.temperature);
  w.put_u64(h.mlp_hidden);
  w.put_u64(h.projection);
  w.put_u64(h.cpc_latent);
  w.put_u64(h.cpc_hidden);
  w.put_u64(h.steps);
  w.put_u64(h.context);
  w.put_u32(static_cast<std::uint32_t>(head.params.size()));
  for (const Tensor& t : head.params) {
    w.put_u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t dim : t.shape()) w.put_u64(dim);
    for (double v : t.data()) w.put_f64(v);
  }
  return w.bytes();
}

inline ContrastiveHead decode_head(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string_view(kHeadMagic, 4)) {
    throw FormatError("not a PRLH head file (bad magic)");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kHeadVersion) {
    throw FormatError("unsupported PRLH version " + std::to_string(version));
  }
  ContrastiveHead head;
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8("kind");
  const std::uint8_t mode = r.u8("mode");
  if (kind > 2 || mode > 2) throw CorruptionError("invalid head kind or mode", kind_at);
  head.kind = static_cast<HeadKind>(kind);
  head.mode = static_cast<DimMode>(mode);
  head.input_width = r.u64("input width");
  HeadHyper& h = head.hyper;
  h.batch_size = r.u64("batch size");
  h.learning_rate = r.f64("learning rate");
  h.epochs = r.u64("epochs");
  h.max_steps = r.u64("max steps");
  h.temperature = r.f64("temperature");
  h.mlp_hidden = r.u64("mlp hidden");
  h.projection = r.u64("projection");
  h.cpc_latent = r.u64("cpc latent");
  h.cpc_hidden = r.u64("cpc hidden");
  h.steps = r.u64("steps");
  h.context = r.u64("context");
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("tensor count");
  const auto expected = detail::head_shapes(head.kind, head.input_width, h);
  if (count != expected.size()) {
    throw CorruptionError("head has " + std::to_string(count) + " tensors, its kind needs " +
                          std::to_string(expected.size()), count_at);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint8_t rank = r.u8("tensor rank");
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.u64("tensor dims"));
    if (shape != expected[i]) {
      throw CorruptionError("tensor " + std::to_string(i) + " has shape " +
                            shape_to_string(shape) + ", expected " +
                            shape_to_string(expected[i]), at);
    }
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    if (n * 8 > r.remaining()) throw CorruptionError("truncated tensor data", r.offset());
    std::vector<double> data(n);
    for (double& v : data) v = r.f64("tensor data");
    head.params.emplace_back(std::move(shape), std::move(data));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after head", r.offset());
  return head;
}

inline void write_head(const std::filesystem::path& path, const ContrastiveHead& head) {
  io::write_file(path, encode_head(head));
}

inline ContrastiveHead read_head(const std::filesystem::path& path) {
  return decode_head(io::read_file(path));
}

}  // namespace pearl
