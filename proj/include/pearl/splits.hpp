#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pearl/dataset.hpp"
#include "pearl/rng.hpp"

namespace pearl {

using SplitRatios = std::array<double, 3>;

inline constexpr SplitRatios kDefaultSplit = {0.7, 0.1, 0.2};

// Flat frame indices (see EpisodeDataset::refs) per partition.
struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  bool operator==(const SplitAssignment&) const = default;
};

// Shuffles 0..n-1 with `seed`, then cuts round(n*r0) train and round(n*r1)
// validation frames; the remainder is the test set.
inline SplitAssignment make_splits(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  if (n == 0) throw DataError("cannot split an empty dataset");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0; })) {
    throw ContractError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * ratios[0])));
  const auto n_val =
      std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(n * ratios[1])));
  SplitAssignment s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

inline SplitAssignment make_splits(const EpisodeDataset& ds, const SplitRatios& ratios,
                                   std::uint64_t seed) {
  return make_splits(ds.frame_count(), ratios, seed);
}

}  // namespace pearl
