#pragma once

// Linear probes: per-category multinomial logistic regression on frozen
// representations, trained with Adam and early stopping on validation loss,
// scored by macro-F1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pearl/autodiff.hpp"
#include "pearl/dataset.hpp"
#include "pearl/optim.hpp"
#include "pearl/rng.hpp"
#include "pearl/splits.hpp"

namespace pearl {

// One row per frame, in EpisodeDataset::refs() order.
using Representations = std::vector<std::vector<float>>;

struct ProbeOptions {
  double learning_rate = 3e-4;
  std::size_t batch_size = 256;
  std::size_t patience = 5;
  std::size_t max_epochs = 200;
};

struct ProbeModel {
  std::string category;
  std::size_t classes = 0;
  Tensor weight;  // width x classes
  Tensor bias;    // classes
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<double> validation_losses;

  std::size_t width() const { return weight.rows(); }
};

namespace detail {

inline void check_rows(const Representations& x, std::span<const std::size_t> rows,
                       std::size_t width) {
  for (std::size_t r : rows) {
    if (r >= x.size()) {
      throw IndexError("representation row " + std::to_string(r) + " out of range");
    }
    if (x[r].size() != width) {
      throw DimensionError("representation row " + std::to_string(r) + " has width " +
                           std::to_string(x[r].size()) + ", expected " + std::to_string(width));
    }
  }
}

inline std::vector<double> row_logits(const ProbeModel& m, const std::vector<float>& row) {
  std::vector<double> z(m.bias.data().begin(), m.bias.data().end());
  const double* w = m.weight.data().data();
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double xi = row[i];
    for (std::size_t c = 0; c < m.classes; ++c) z[c] += xi * w[i * m.classes + c];
  }
  return z;
}

inline double mean_cross_entropy(const ProbeModel& m, const Representations& x,
                                 std::span<const std::size_t> labels,
                                 std::span<const std::size_t> rows) {
  double total = 0.0;
  for (std::size_t r : rows) {
    const auto z = row_logits(m, x[r]);
    const double peak = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - peak);
    total += peak + std::log(s) - z[labels[r]];
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace detail

// Trains on rows `train`, early-stops on rows `validation`, and returns the
// parameters of the epoch with the lowest validation loss.
inline ProbeModel train_probe(const Representations& x, std::span<const std::size_t> labels,
                              std::size_t classes, std::span<const std::size_t> train,
                              std::span<const std::size_t> validation,
                              const ProbeOptions& opt = {}, std::uint64_t seed = 0,
                              std::string category = {}) {
  if (train.empty() || validation.empty()) {
    throw ContractError("probe training needs non-empty train and validation rows");
  }
  if (labels.size() != x.size()) {
    throw DimensionError("probe: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(x.size()) + " representations");
  }
  if (opt.batch_size == 0 || opt.max_epochs == 0) {
    throw ConfigError("probe batch size and epoch limit must be positive");
  }
  const std::size_t width = x[train[0]].size();
  detail::check_rows(x, train, width);
  detail::check_rows(x, validation, width);
  for (auto rows : {train, validation})
    for (std::size_t r : rows)
      if (labels[r] >= classes) {
        throw IndexError("label " + std::to_string(labels[r]) + " out of range for " +
                         std::to_string(classes) + " classes");
      }
  const std::size_t first = labels[train[0]];
  if (std::all_of(train.begin(), train.end(), [&](std::size_t r) { return labels[r] == first; })) {
    throw DegenerateLabelError("category '" + category + "' has a single class (" +
                               std::to_string(first) + ") in the training split");
  }

  ProbeModel model{std::move(category), classes, Tensor(Shape{width, classes}),
                   Tensor(Shape{classes}), 0, 0, {}};
  std::vector<Tensor> params = {model.weight, model.bias};
  std::vector<Tensor> best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  Adam adam({.learning_rate = opt.learning_rate});
  Rng rng(seed);
  std::vector<std::size_t> order(train.begin(), train.end());
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t n = std::min(opt.batch_size, order.size() - start);
      Tensor batch(Shape{n, width});
      std::vector<std::size_t> targets(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& row = x[order[start + i]];
        std::copy(row.begin(), row.end(),
                  batch.data().begin() + static_cast<std::ptrdiff_t>(i * width));
        targets[i] = labels[order[start + i]];
      }
      ad::Graph g;
      auto w = g.parameter(params[0]);
      auto b = g.parameter(params[1]);
      auto logits = ad::add(ad::matmul(g.constant(std::move(batch)), w), b);
      auto loss = ad::softmax_cross_entropy(logits, targets);
      g.backward(loss);
      std::vector<Tensor> grads = {g.grad(w), g.grad(b)};
      adam.step(params, grads);
    }
    model.weight = params[0];
    model.bias = params[1];
    const double val = detail::mean_cross_entropy(model, x, labels, validation);
    model.validation_losses.push_back(val);
    model.epochs_run = epoch;
    if (val < best_loss) {
      best_loss = val;
      best = params;
      model.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= opt.patience) {
      break;
    }
  }
  model.weight = std::move(best[0]);
  model.bias = std::move(best[1]);
  return model;
}

inline std::vector<std::size_t> predict(const ProbeModel& m, const Representations& x,
                                        std::span<const std::size_t> rows) {
  detail::check_rows(x, rows, m.width());
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto z = detail::row_logits(m, x[r]);
    out.push_back(static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
  }
  return out;
}

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // occurrences in the reference labels
};

struct ProbeMetrics {
  std::vector<ClassScore> per_class;
  double macro_f1 = 0.0;  // mean over classes present in the reference
  double accuracy = 0.0;
};

inline ProbeMetrics f1_scores(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> reference, std::size_t classes) {
  if (predicted.size() != reference.size()) {
    throw DimensionError("f1_scores: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(reference.size()) + " labels");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::size_t p = predicted[i], r = reference[i];
    if (p >= classes || r >= classes) throw IndexError("class index out of range in f1_scores");
    if (p == r) {
      ++tp[p];
      ++correct;
    } else {
      ++fp[p];
      ++fn[r];
    }
  }
  ProbeMetrics m;
  std::size_t present = 0;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    ClassScore s;
    s.support = tp[c] + fn[c];
    if (tp[c] + fp[c] > 0) {
      s.precision = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
    }
    if (s.support > 0) s.recall = static_cast<double>(tp[c]) / static_cast<double>(s.support);
    if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
    if (s.support > 0) {
      ++present;
      sum += s.f1;
    }
    m.per_class.push_back(s);
  }
  m.macro_f1 = present ? sum / static_cast<double>(present) : 0.0;
  if (!predicted.empty()) {
    m.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  }
  return m;
}

inline ProbeMetrics evaluate_probe(const ProbeModel& m, const Representations& x,
                                   std::span<const std::size_t> labels,
                                   std::span<const std::size_t> rows) {
  const auto predicted = predict(m, x, rows);
  std::vector<std::size_t> reference;
  reference.reserve(rows.size());
  for (std::size_t r : rows) reference.push_back(labels[r]);
  return f1_scores(predicted, reference, m.classes);
}

struct CategoryResult {
  std::string name;
  double f1 = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::optional<std::string> error;  // set when the probe could not be trained

  bool operator==(const CategoryResult&) const = default;
};

struct ProbeReport {
  std::vector<CategoryResult> categories;
  double mean_f1 = 0.0;  // over categories without an error

  bool operator==(const ProbeReport&) const = default;
};

inline double mean_of_categories(const std::vector<CategoryResult>& categories) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : categories)
    if (!c.error) {
      sum += c.f1;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// One probe per schema category on a shared split; category c trains with
// seed + c. Categories that fail are recorded with their error message.
inline ProbeReport probe_suite(const Representations& x, const EpisodeDataset& ds,
                               const SplitAssignment& split, const ProbeOptions& opt = {},
                               std::uint64_t seed = 0) {
  if (x.size() != ds.frame_count()) {
    throw DimensionError("probe_suite: " + std::to_string(x.size()) + " representations for " +
                         std::to_string(ds.frame_count()) + " frames");
  }
  ProbeReport report;
  for (std::size_t c = 0; c < ds.schema.size(); ++c) {
    CategoryResult result;
    result.name = ds.schema[c].name;
    try {
      const auto labels = ds.labels_for(c);
      ProbeModel m = train_probe(x, labels, ds.schema[c].classes, split.train, split.validation,
                                 opt, seed + c, ds.schema[c].name);
      result.f1 = evaluate_probe(m, x, labels, split.test).macro_f1;
      result.epochs_run = m.epochs_run;
      result.best_epoch = m.best_epoch;
    } catch (const Error& e) {
      result.error = e.what();
    }
    report.categories.push_back(std::move(result));
  }
  report.mean_f1 = mean_of_categories(report.categories);
  return report;
}

}  // namespace pearl
