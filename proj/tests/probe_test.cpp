#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pearl/composer.hpp"
#include "pearl/probe.hpp"
#include "pearl/synth.hpp"

namespace pearl {
namespace {

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

// Two Gaussian clusters with unit variance whose means are 5 sigma apart.
struct Clusters {
  Representations x;
  std::vector<std::size_t> labels;
};

Clusters separable(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(dim);
  double norm = 0;
  for (double& d : dir) {
    d = normal(rng);
    norm += d * d;
  }
  for (double& d : dir) d /= std::sqrt(norm);
  Clusters c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    std::vector<float> row(dim);
    for (std::size_t k = 0; k < dim; ++k)
      row[k] = static_cast<float>(normal(rng) + (label ? 2.5 : -2.5) * dir[k]);
    c.x.push_back(std::move(row));
    c.labels.push_back(label);
  }
  return c;
}

TEST(F1, PerfectPredictions) {
  std::vector<std::size_t> y = {0, 1, 2, 3, 1, 2};
  EXPECT_DOUBLE_EQ(f1_scores(y, y, 4).macro_f1, 1.0);
}

TEST(F1, HandComputedBinaryConfusion) {
  // Class 1: TP=1, FP=1, FN=1.
  std::vector<std::size_t> pred = {1, 1, 0, 0};
  std::vector<std::size_t> ref = {1, 0, 1, 0};
  auto m = f1_scores(pred, ref, 2);
  EXPECT_DOUBLE_EQ(m.per_class[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[1].f1, 0.5);
}

TEST(F1, ConstantPredictorOnBalancedFourClasses) {
  std::vector<std::size_t> ref, pred;
  for (std::size_t i = 0; i < 400; ++i) {
    ref.push_back(i % 4);
    pred.push_back(2);
  }
  auto m = f1_scores(pred, ref, 4);
  EXPECT_DOUBLE_EQ(m.per_class[2].f1, 0.4);
  EXPECT_DOUBLE_EQ(m.per_class[0].f1, 0.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 0.1);
}

TEST(F1, AbsentReferenceClassesExcluded) {
  std::vector<std::size_t> ref = {0, 0, 1, 1};
  std::vector<std::size_t> pred = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(f1_scores(pred, ref, 5).macro_f1, 1.0);
}

TEST(F1, InvariantUnderClassRelabeling) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> cls(0, 4);
  std::vector<std::size_t> ref(300), pred(300);
  for (std::size_t i = 0; i < 300; ++i) {
    ref[i] = cls(rng);
    pred[i] = rng() % 3 ? ref[i] : cls(rng);
  }
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<std::size_t> ref2, pred2;
  for (std::size_t i = 0; i < 300; ++i) {
    ref2.push_back(perm[ref[i]]);
    pred2.push_back(perm[pred[i]]);
  }
  EXPECT_NEAR(f1_scores(pred, ref, 5).macro_f1, f1_scores(pred2, ref2, 5).macro_f1, 1e-12);
}

TEST(TrainProbe, SeparableClustersReachHighF1) {
  Clusters c = separable(2000, 16, 2);
  auto train = iota_rows(0, 1400), val = iota_rows(1400, 1600), test = iota_rows(1600, 2000);
  ProbeModel m = train_probe(c.x, c.labels, 2, train, val, {}, 7);
  EXPECT_GE(evaluate_probe(m, c.x, c.labels, val).macro_f1, 0.99);
  EXPECT_GE(evaluate_probe(m, c.x, c.labels, test).macro_f1, 0.99);
}

TEST(TrainProbe, ShuffledLabelsStayNearChance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = 5000, classes = 4;
  Representations x(n, std::vector<float>(32));
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (float& v : x[i]) v = static_cast<float>(normal(rng));
    labels[i] = i % classes;
  }
  std::shuffle(labels.begin(), labels.end(), rng);
  auto split = make_splits(n, kDefaultSplit, 4);
  ProbeModel m = train_probe(x, labels, classes, split.train, split.validation, {}, 5);
  EXPECT_NEAR(evaluate_probe(m, x, labels, split.test).macro_f1, 1.0 / classes, 0.05);
}

TEST(TrainProbe, DeterministicParameters) {
  Clusters c = separable(600, 8, 4);
  auto train = iota_rows(0, 400), val = iota_rows(400, 500);
  ProbeOptions opt;
  opt.max_epochs = 20;
  ProbeModel a = train_probe(c.x, c.labels, 2, train, val, opt, 9);
  ProbeModel b = train_probe(c.x, c.labels, 2, train, val, opt, 9);
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.validation_losses, b.validation_losses);
}

TEST(TrainProbe, TestRowsNeverInfluenceTraining) {
  Clusters c = separable(600, 8, 5);
  auto train = iota_rows(0, 400), val = iota_rows(400, 500);
  ProbeOptions opt;
  opt.max_epochs = 20;
  ProbeModel a = train_probe(c.x, c.labels, 2, train, val, opt, 1);
  // Drop the test rows entirely.
  Representations kept(c.x.begin(), c.x.begin() + 500);
  std::vector<std::size_t> kept_labels(c.labels.begin(), c.labels.begin() + 500);
  ProbeModel b = train_probe(kept, kept_labels, 2, train, val, opt, 1);
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(TrainProbe, BestEpochHasLowestValidationLoss) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Few noisy points overfit quickly, which exercises early stopping.
  Representations x(300, std::vector<float>(64));
  std::vector<std::size_t> labels(300);
  for (std::size_t i = 0; i < 300; ++i) {
    for (float& v : x[i]) v = static_cast<float>(normal(rng));
    labels[i] = (x[i][0] + normal(rng) > 0) ? 1 : 0;
  }
  ProbeOptions opt;
  opt.learning_rate = 1e-2;
  opt.batch_size = 32;
  ProbeModel m = train_probe(x, labels, 2, iota_rows(0, 100), iota_rows(100, 300), opt, 2);
  ASSERT_EQ(m.validation_losses.size(), m.epochs_run);
  EXPECT_LT(m.epochs_run, opt.max_epochs);
  EXPECT_EQ(m.epochs_run, m.best_epoch + opt.patience);
  for (double v : m.validation_losses) EXPECT_LE(m.validation_losses[m.best_epoch - 1], v);
}

TEST(TrainProbe, SingleClassIsDegenerate) {
  Representations x(10, std::vector<float>(4, 0.5f));
  std::vector<std::size_t> labels(10, 2);
  EXPECT_THROW(train_probe(x, labels, 3, iota_rows(0, 7), iota_rows(7, 10)),
               DegenerateLabelError);
}

TEST(TrainProbe, WidthMismatch) {
  Representations x(10, std::vector<float>(4));
  x[3].resize(5);
  std::vector<std::size_t> labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  EXPECT_THROW(train_probe(x, labels, 2, iota_rows(0, 7), iota_rows(7, 10)), DimensionError);
}

class ProbeSuiteTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthSpec spec;
    spec.episodes = 10;
    spec.frames_per_episode = 100;
    spec.seed = 3;
    synth_ = new SyntheticDataset(generate_synthetic(spec));
    EmbeddingCache cache;
    x_ = new Representations(compose_dataset(parse_config("FI+2x2"), synth_->dataset,
                                             Encoder::mock(), cache));
  }
  static void TearDownTestSuite() {
    delete synth_;
    delete x_;
  }
  static SyntheticDataset* synth_;
  static Representations* x_;
};
SyntheticDataset* ProbeSuiteTest::synth_ = nullptr;
Representations* ProbeSuiteTest::x_ = nullptr;

TEST_F(ProbeSuiteTest, StructureMeanAndChance) {
  const auto& ds = synth_->dataset;
  auto split = make_splits(ds, kDefaultSplit, 0);
  ProbeReport r = probe_suite(*x_, ds, split, {}, 11);
  ASSERT_EQ(r.categories.size(), 4u);
  double sum = 0;
  for (const auto& c : r.categories) {
    EXPECT_FALSE(c.error.has_value()) << *c.error;
    EXPECT_GE(c.f1, 2.0 / 4.0) << c.name;
    sum += c.f1;
  }
  EXPECT_NEAR(r.mean_f1, sum / 4, 1e-12);
}

TEST_F(ProbeSuiteTest, FailedCategoryIsRecorded) {
  EpisodeDataset ds = synth_->dataset;
  ds.schema.push_back({"constant", 3});
  for (auto& ep : ds.episodes)
    for (auto& l : ep.labels) l.push_back(1);
  ProbeOptions opt;
  opt.max_epochs = 3;
  ProbeReport r = probe_suite(*x_, ds, make_splits(ds, kDefaultSplit, 0), opt, 0);
  ASSERT_EQ(r.categories.size(), 5u);
  ASSERT_TRUE(r.categories[4].error.has_value());
  EXPECT_NE(r.categories[4].error->find("single class"), std::string::npos);
  double sum = 0;
  for (std::size_t i = 0; i < 4; ++i) sum += r.categories[i].f1;
  EXPECT_NEAR(r.mean_f1, sum / 4, 1e-12);
}

}  // namespace
}  // namespace pearl
