#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pearl/augment.hpp"
#include "pearl/flow.hpp"
#include "pearl/imaging.hpp"
#include "test_util.hpp"

namespace pearl {
namespace {

using testing::random_field;
using testing::random_frame;

TEST(Grayscale, WhiteAndRed) {
  const ScalarField white = to_grayscale(Frame(8, 8, 1.0));
  for (double v : white.data()) EXPECT_DOUBLE_EQ(v, 1.0);
  Frame red(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) red.set(x, y, 0, 1.0);
  const ScalarField g = to_grayscale(red);
  for (double v : g.data()) EXPECT_EQ(v, 0.299);
}

TEST(Grayscale, MatchesFormula) {
  std::mt19937_64 rng(1);
  Frame f = random_frame(12, 9, rng);
  ScalarField g = to_grayscale(f);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 12; ++x)
      EXPECT_EQ(g(x, y), 0.299 * f.at(x, y, 0) + 0.587 * f.at(x, y, 1) + 0.114 * f.at(x, y, 2));
}

TEST(Frame, RejectsTinyAndOutOfRange) {
  EXPECT_THROW(Frame(7, 8), DimensionError);
  EXPECT_THROW(Frame(8, 8, std::vector<double>(192, 1.5)), DataError);
}

TEST(Ssim, SelfSimilarityIsOne) {
  std::mt19937_64 rng(2);
  ScalarField a = random_field(20, 16, rng);
  const ScalarField m = ssim_map(a, a);
  for (double v : m.data()) EXPECT_EQ(v, 1.0);
}

TEST(Ssim, MatchesBruteForceWindows) {
  std::mt19937_64 rng(3);
  ScalarField a = random_field(16, 16, rng);
  ScalarField b = random_field(16, 16, rng);
  ScalarField m = ssim_map(a, b);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const std::size_t cx = std::clamp<std::size_t>(x, 3, 12);
      const std::size_t cy = std::clamp<std::size_t>(y, 3, 12);
      EXPECT_NEAR(m(x, y), testing::ssim_window_oracle(a, b, cx, cy, 7), 1e-9);
    }
}

TEST(Ssim, InvertedStructureIsAnticorrelated) {
  ScalarField a(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) a(x, y) = ((x / 2 + y / 3) % 2) ? 0.9 : 0.1;
  ScalarField inv = a;
  for (double& v : inv.data()) v = 1.0 - v;
  EXPECT_LT(ssim_map(a, inv).mean(), 0.0);
}

TEST(Ssim, Symmetric) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    ScalarField a = random_field(16, 12, rng), b = random_field(16, 12, rng);
    EXPECT_EQ(ssim_map(a, b), ssim_map(b, a));
  }
}

TEST(Ssim, Errors) {
  ScalarField a(16, 16), b(16, 15), c(8, 8);
  EXPECT_THROW(ssim_map(a, b), DimensionError);
  EXPECT_THROW(ssim_map(a, a, {.window = 6}), ContractError);
  EXPECT_THROW(ssim_map(c, c, {.window = 9}), ContractError);
}

TEST(BlockMatch, StaticSceneHasZeroFlow) {
  std::mt19937_64 rng(5);
  ScalarField a = random_field(32, 32, rng);
  const FlowField flow = block_match_flow(a, a);
  for (const auto& v : flow.vectors()) EXPECT_EQ(v, FlowVector{});
}

TEST(BlockMatch, RecoversPlantedShift) {
  std::mt19937_64 rng(6);
  ScalarField a = random_field(64, 64, rng);
  ScalarField b(64, 64);
  // b(x + 2, y + 1) = a(x, y)
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x)
      b(x, y) = a((x + 64 - 2) % 64, (y + 64 - 1) % 64);
  FlowField flow = block_match_flow(a, b, {.block = 8, .radius = 4});
  ASSERT_EQ(flow.grid_width(), 8u);
  ASSERT_EQ(flow.grid_height(), 8u);
  for (std::size_t gy = 1; gy < 7; ++gy)
    for (std::size_t gx = 1; gx < 7; ++gx) EXPECT_EQ(flow(gx, gy), (FlowVector{2, 1}));
}

TEST(BlockMatch, BorderBlocksSeeOutwardMotion) {
  std::mt19937_64 rng(8);
  ScalarField a = random_field(32, 32, rng);
  ScalarField b(32, 32);
  // b(x - 1, y - 1) = a(x, y): content leaves through the top-left corner.
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) b(x, y) = a(std::min<std::size_t>(x + 1, 31),
                                                     std::min<std::size_t>(y + 1, 31));
  const FlowField flow = block_match_flow(a, b);
  EXPECT_EQ(flow(0, 0), (FlowVector{-1, -1}));
  EXPECT_EQ(flow(0, 2), (FlowVector{-1, -1}));
  EXPECT_EQ(flow(2, 0), (FlowVector{-1, -1}));
}

TEST(BlockMatch, MagnitudeBoundedByRadius) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    ScalarField a = random_field(32, 32, rng), b = random_field(32, 32, rng);
    const FlowField flow = block_match_flow(a, b, {.block = 8, .radius = 3});
    for (const auto& v : flow.vectors())
      EXPECT_LE(v.magnitude(), 3 * std::sqrt(2.0) + 1e-12);
  }
}

TEST(BlockMatch, IndivisibleDimensions) {
  ScalarField a(30, 32);
  EXPECT_THROW(block_match_flow(a, a), DimensionError);
}

TEST(FlowFile, RoundTripAndFaults) {
  FlowField f(3, 2, {{1, 2}, {-3, 0.5}, {0, 0}, {4, -4}, {0.25, 1}, {2, 2}});
  auto bytes = encode_flow(f);
  EXPECT_EQ(bytes.size(), 4u + 2 + 4 + 4 + 6 * 8);
  EXPECT_EQ(decode_flow(bytes), f);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_flow(bad), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_flow(truncated), CorruptionError);
}

TEST(GaussianBlur, ConstantFrameUnchanged) {
  Frame f(16, 16, 0.37);
  Frame b = gaussian_blur(f, 1.3);
  for (std::size_t i = 0; i < f.data().size(); ++i) EXPECT_NEAR(b.data()[i], 0.37, 1e-12);
}

TEST(GaussianBlur, ImpulseGivesKernel) {
  Frame f(21, 21, 0.0);
  f.set(10, 10, 1, 1.0);
  const double sigma = 1.0;
  Frame b = gaussian_blur(f, sigma);
  // Outer product of the normalized 1-D kernel, radius 3.
  double norm = 0;
  for (int i = -3; i <= 3; ++i) norm += std::exp(-i * i / 2.0);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      const double expected = std::exp(-dx * dx / 2.0) * std::exp(-dy * dy / 2.0) / (norm * norm);
      EXPECT_NEAR(b.at(10 + dx, 10 + dy, 1), expected, 1e-12);
    }
  EXPECT_EQ(b.at(14, 10, 1), 0.0);
}

TEST(GaussianBlur, MatchesDenseConvolution) {
  std::mt19937_64 rng(8);
  Frame f = random_frame(14, 11, rng);
  const double sigma = 0.8;
  Frame b = gaussian_blur(f, sigma);
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double norm = 0;
  for (int i = -r; i <= r; ++i) norm += std::exp(-i * i / (2 * sigma * sigma));
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 14; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double k = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (norm * norm);
            s += k * f.at(std::clamp(x + dx, 0, 13), std::clamp(y + dy, 0, 10), c);
          }
        EXPECT_NEAR(b.at(x, y, c), s, 1e-9);
      }
}

TEST(GaussianBlur, RejectsNonPositiveSigma) {
  EXPECT_THROW(gaussian_blur(Frame(8, 8), 0.0), ContractError);
}

TEST(ColorJitter, IdentityFactors) {
  std::mt19937_64 rng(9);
  Frame f = random_frame(10, 10, rng);
  EXPECT_EQ(apply_jitter(f, {}), f);
}

TEST(ColorJitter, DeterministicAndInRange) {
  std::mt19937_64 rng(10);
  Frame f = random_frame(10, 10, rng);
  EXPECT_EQ(color_jitter(f, 42), color_jitter(f, 42));
  for (int s = 0; s < 20; ++s) {
    JitterFactors j = sample_jitter(s);
    for (double v : {j.brightness, j.contrast, j.saturation}) {
      EXPECT_GE(v, 0.6);
      EXPECT_LE(v, 1.4);
    }
  }
}

TEST(ColorJitter, BrightnessAlone) {
  std::mt19937_64 rng(11);
  Frame f = random_frame(10, 10, rng);
  Frame out = apply_jitter(f, {.brightness = 1.2});
  for (std::size_t i = 0; i < f.data().size(); ++i)
    EXPECT_EQ(out.data()[i], std::min(1.0, 1.2 * f.data()[i]));
}

TEST(RandomCrop, PinnedIsIdentity) {
  std::mt19937_64 rng(12);
  Frame f = random_frame(16, 16, rng);
  CropOptions opt{.min_scale = 1.0, .min_aspect = 1.0, .max_aspect = 1.0};
  EXPECT_EQ(random_crop_resize(f, opt, 3), f);
}

TEST(RandomCrop, SameSeedSameRectangle) {
  EXPECT_EQ(sample_crop(64, 48, {}, 99), sample_crop(64, 48, {}, 99));
  EXPECT_NE(sample_crop(64, 48, {}, 99), sample_crop(64, 48, {}, 100));
}

TEST(RandomCrop, TenThousandSamplesRespectRanges) {
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{64, 64}, {80, 48}}) {
    for (std::uint64_t s = 0; s < 10000; ++s) {
      Rect r = sample_crop(w, h, {.min_scale = 0.6}, s);
      ASSERT_GE(r.x, 0.0);
      ASSERT_GE(r.y, 0.0);
      ASSERT_LE(r.x + r.width, static_cast<double>(w) + 1e-9);
      ASSERT_LE(r.y + r.height, static_cast<double>(h) + 1e-9);
      const double frac = r.width * r.height / static_cast<double>(w * h);
      ASSERT_GE(frac, 0.6 - 1e-9);
      ASSERT_LE(frac, 1.0 + 1e-9);
      const double aspect = r.width / r.height;
      ASSERT_GE(aspect, 0.75 - 1e-9);
      ASSERT_LE(aspect, 4.0 / 3.0 + 1e-9);
    }
  }
}

TEST(Augment, OutputsRemainValidFrames) {
  std::mt19937_64 rng(13);
  Frame f = random_frame(24, 24, rng);
  std::vector<Augmentation> all = {Augmentation::kCrop, Augmentation::kJitter, Augmentation::kBlur};
  for (std::uint64_t s = 0; s < 20; ++s) {
    Frame out = augment(f, all, s);
    EXPECT_EQ(out.width(), 24u);
    EXPECT_EQ(out.height(), 24u);
    for (double v : out.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

}  // namespace
}  // namespace pearl
