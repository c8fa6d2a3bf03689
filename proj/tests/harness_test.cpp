#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pearl/harness.hpp"
#include "pearl/report.hpp"

namespace pearl {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pearl_harness_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "small";
  c.synth.episodes = 4;
  c.synth.frames_per_episode = 30;
  c.encoder.width = 32;
  c.encoder.input_side = 16;
  c.canonical_side = 32;
  c.probe.max_epochs = 20;
  return c;
}

ResultsRecord hand_record(const std::string& name, std::vector<double> f1) {
  ResultsRecord r;
  r.name = name;
  const char* names[] = {"a", "b", "c", "d", "e", "f"};
  for (std::size_t i = 0; i < f1.size(); ++i) r.categories.push_back({names[i], f1[i], 3, 2, {}});
  r.mean_f1 = mean_of_categories(r.categories);
  return r;
}

TEST(ExperimentConfigJson, RoundTripsAndRejectsUnknownKeys) {
  ExperimentConfig c = small_config();
  c.finetune = FinetuneSpec{HeadKind::kAugMlp, DimMode::kTemporal,
                            {Augmentation::kCrop, Augmentation::kBlur}, {}};
  c.finetune->hyper.epochs = 3;
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);

  Json bad = j;
  bad["colour"] = 1;
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["composition"] = "FI+3x3";
  EXPECT_THROW(config_from_json(bad), ParseError);
  bad = j;
  bad["finetune"]["kind"] = "vae";
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["dataset"] = "/somewhere";
  EXPECT_THROW(config_from_json(bad), ConfigError);  // dataset and synth together
}

TEST(RunExperiment, RecordStructure) {
  ResultsRecord r = run_experiment(small_config());
  EXPECT_EQ(r.schema_version, kResultsSchemaVersion);
  ASSERT_EQ(r.categories.size(), 4u);
  EXPECT_EQ(r.categories[0].name, "sprite0_x");
  EXPECT_DOUBLE_EQ(r.mean_f1, mean_of_categories(r.categories));
  EXPECT_EQ(r.embedding_width, 32u);
  EXPECT_EQ(r.hashes.dataset.size(), 64u);
  EXPECT_EQ(r.hashes.embeddings.size(), 64u);
  EXPECT_TRUE(r.hashes.head.empty());
  EXPECT_GT(r.wall_clock_seconds, 0.0);
  for (const auto& c : r.categories) {
    EXPECT_FALSE(c.error.has_value());
    EXPECT_GE(c.f1, 0.0);
    EXPECT_LE(c.f1, 1.0);
  }
}

TEST(RunExperiment, DeterministicAndHashesTrackInputs) {
  ExperimentConfig c = small_config();
  c.composition = "FI+2x2";
  ResultsRecord a = run_experiment(c);
  ResultsRecord b = run_experiment(c);
  EXPECT_TRUE(same_results(a, b));
  for (std::size_t i = 0; i < a.categories.size(); ++i) {
    EXPECT_EQ(a.categories[i].f1, b.categories[i].f1);
  }

  ExperimentConfig other_data = c;
  other_data.synth.seed = 1;
  ResultsRecord d = run_experiment(other_data);
  EXPECT_NE(d.hashes.dataset, a.hashes.dataset);
  EXPECT_NE(d.hashes.embeddings, a.hashes.embeddings);

  ExperimentConfig other_encoder = c;
  other_encoder.encoder.seed = 5;
  ResultsRecord e = run_experiment(other_encoder);
  EXPECT_EQ(e.hashes.dataset, a.hashes.dataset);
  EXPECT_NE(e.hashes.embeddings, a.hashes.embeddings);
}

TEST(RunExperiment, FinetunedRunWritesHeadAndArtifacts) {
  ExperimentConfig c = small_config();
  c.finetune = FinetuneSpec{};
  c.finetune->hyper.batch_size = 16;
  c.finetune->hyper.epochs = 2;
  c.finetune->hyper.projection = 8;
  c.output_dir = scratch_dir("finetuned").string();
  ResultsRecord r = run_experiment(c);
  EXPECT_EQ(r.embedding_width, 8u);
  const fs::path out = c.output_dir;
  ASSERT_TRUE(fs::exists(out / "head.prlh"));
  EXPECT_EQ(sha256_hex(io::read_file(out / "head.prlh")), r.hashes.head);
  EXPECT_EQ(sha256_hex(io::read_file(out / "embeddings.prle")), r.hashes.embeddings);
  EXPECT_EQ(load_results(out / "results.json"), r);
  EXPECT_EQ(config_from_json(Json::parse(std::ifstream(out / "config.json"))).name, "small");
  EXPECT_EQ(read_embeddings(out / "embeddings.prle").size(), 120u);
  fs::remove_all(out);
}

TEST(RunExperiment, ErrorsCarryStageLabels) {
  ExperimentConfig c = small_config();
  c.encoder.kind = "file";
  c.encoder.store = "/nonexistent/embeddings.prle";
  try {
    run_experiment(c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "compose");
    EXPECT_NE(std::string(e.what()).find("/nonexistent/embeddings.prle"), std::string::npos);
  }

  // A store that exists but lacks the requested variant.
  const fs::path dir = scratch_dir("store");
  fs::create_directories(dir);
  write_embeddings(dir / "e.prle", {{EmbeddingKey{0, 0, "full"}, Embedding{std::vector<float>(32)}}});
  c.encoder.store = (dir / "e.prle").string();
  try {
    run_experiment(c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "compose");
    EXPECT_NE(std::string(e.what()).find("missing embedding for key '0/1/full'"),
              std::string::npos)
        << e.what();
  }
  fs::remove_all(dir);

  ExperimentConfig s = small_config();
  s.finetune = FinetuneSpec{HeadKind::kDim, DimMode::kSpatial, {}, {}};
  try {
    run_experiment(s);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "finetune");
  }

  ExperimentConfig p = small_config();
  p.split = {0.5, 0.5, 0.5};
  try {
    run_experiment(p);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "probe");
  }
}

TEST(Results, RoundTripAndPlantedFaults) {
  ResultsRecord r = hand_record("x", {0.5, 0.25, 0.125 + 1e-9});
  r.categories[1].error = "a single class";
  r.mean_f1 = mean_of_categories(r.categories);
  r.config = config_to_json(small_config());
  r.hashes = {"aa", "bb", ""};
  r.wall_clock_seconds = 1.5;
  const fs::path dir = scratch_dir("results");
  persist_results(r, dir / "r.json");
  EXPECT_EQ(load_results(dir / "r.json"), r);

  Json j = results_to_json(r);
  j["mean_f1"] = 0.9;
  EXPECT_THROW(results_from_json(j), ConsistencyError);

  j = results_to_json(r);
  j["schema_version"] = 0;
  try {
    results_from_json(j);
    FAIL();
  } catch (const VersionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("version 0"), std::string::npos) << what;
    EXPECT_NE(what.find("version " + std::to_string(kResultsSchemaVersion)), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(DatasetHash, ChangesIffContentChanges) {
  EpisodeDataset a = generate_synthetic(small_config().synth).dataset;
  EpisodeDataset b = a;
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  Frame& f = b.episodes[1].frames[3];
  f.set(2, 2, 1, f.at(2, 2, 1) + 1e-12);
  EXPECT_NE(dataset_hash(a), dataset_hash(b));
  b = a;
  b.episodes[0].labels[0][2] ^= 1;
  EXPECT_NE(dataset_hash(a), dataset_hash(b));
}

TEST(CompareRuns, Deltas) {
  ResultsRecord base = hand_record("base", {0.6, 0.7, 0.8});
  for (const auto& d : compare_runs(base, base).categories) EXPECT_EQ(d.delta, 0.0);
  EXPECT_EQ(compare_runs(base, base).mean_delta, 0.0);

  ResultsRecord b70 = hand_record("b", {0.7, 0.7});
  ResultsRecord t73 = hand_record("t", {0.74, 0.72});
  DeltaTable t = compare_runs(b70, t73);
  EXPECT_NEAR(t.mean_delta, 0.03, 1e-12);
  double mean = 0;
  for (const auto& d : t.categories) mean += d.delta / 2;
  EXPECT_NEAR(t.mean_delta, mean, 1e-12);

  ResultsRecord other = hand_record("o", {0.6, 0.7, 0.8});
  other.categories[2].name = "z";
  try {
    compare_runs(base, other);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("only in baseline {c}"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("only in treatment {z}"), std::string::npos);
  }
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(detail::split_csv_line(line));
  return out;
}

TEST(Report, CsvAndSvgAgree) {
  std::vector<ResultsRecord> records = {hand_record("FI", {0.5, 0.6, 0.7, 0.8}),
                                        hand_record("FI+2x2", {0.9, 0.8, 0.7, 0.65}),
                                        hand_record("DM", {0.3, 0.2, 0.1, 1.0 / 3})};
  records[0].categories[1].name = "Breakout";
  records[1].categories[1].name = "Breakout";
  records[2].categories[1].name = "Breakout";
  RenderedReport rep = render_report(records);

  auto csv = parse_csv(rep.csv);
  ASSERT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[0], (std::vector<std::string>{"label", "a", "Breakout", "c", "d", "mu"}));
  for (std::size_t r = 1; r < 4; ++r) {
    ASSERT_EQ(csv[r].size(), 6u);
    double sum = 0;
    for (std::size_t c = 1; c <= 4; ++c) {
      EXPECT_EQ(std::stod(csv[r][c]), records[r - 1].categories[c - 1].f1);
      sum += std::stod(csv[r][c]);
    }
    EXPECT_NEAR(std::stod(csv[r][5]), sum / 4, 1e-12);
  }

  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream svg(rep.svg);
  ASSERT_NO_THROW(pt::read_xml(svg, tree));
  const pt::ptree& root = tree.get_child("svg");
  const double scale = root.get<double>("<xmlattr>.data-scale");
  const double baseline = root.get<double>("<xmlattr>.data-baseline");
  std::size_t bars = 0, groups = 0;
  std::vector<std::string> labels;
  for (const auto& [tag, g] : root) {
    if (tag != "g") continue;
    ++groups;
    labels.push_back(g.get<std::string>("text"));
    const std::string group = g.get<std::string>("<xmlattr>.data-group");
    for (const auto& [rtag, bar] : g) {
      if (rtag != "rect") continue;
      ++bars;
      const double value = bar.get<double>("<xmlattr>.data-value");
      const double h = bar.get<double>("<xmlattr>.height");
      EXPECT_NEAR(h, value * scale, 1e-9);
      EXPECT_NEAR(bar.get<double>("<xmlattr>.y") + h, baseline, 1e-9);
      // The bar's value is the CSV cell of its record and group.
      const std::string record = bar.get<std::string>("<xmlattr>.data-record");
      std::size_t row = 1;
      while (csv[row][0] != record) ++row;
      std::size_t col = group == "μ" ? 5 : 1;
      while (col < 5 && csv[0][col] != group) ++col;
      EXPECT_EQ(value, std::stod(csv[row][col]));
    }
  }
  EXPECT_EQ(groups, 5u);
  EXPECT_EQ(bars, 15u);
  EXPECT_EQ(labels, (std::vector<std::string>{"a", "Br", "c", "d", "μ"}));
}

TEST(Report, ReferenceRowsAndAbbreviations) {
  EXPECT_EQ(game_abbreviation("Montezuma's Revenge"), "Mr");
  EXPECT_EQ(game_abbreviation("SpaceInvaders"), "Si");
  EXPECT_EQ(game_abbreviation("sprite0_x"), "sprite0_x");

  const fs::path dir = scratch_dir("reference");
  fs::create_directories(dir);
  {
    std::ofstream ref(dir / "ref.csv");
    ref << "label,a,b\nSotA,0.5,0.75\n";
  }
  std::vector<ResultsRecord> records = {hand_record("r", {0.25, 0.5})};
  RenderedReport rep = render_report(records, read_reference_csv(dir / "ref.csv", {"a", "b"}));
  auto csv = parse_csv(rep.csv);
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[2], (std::vector<std::string>{"SotA", "0.5", "0.75", "0.625"}));
  write_report(rep, dir / "out/r.csv", dir / "out/r.svg");
  EXPECT_TRUE(fs::exists(dir / "out/r.svg"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace pearl
