#pragma once

// Experiment orchestration: one JSON config describes a dataset (directory or
// synthetic spec), an encoder, a composition, an optional fine-tuning head
// and the probe settings. run_experiment executes compose -> finetune ->
// probe and returns a ResultsRecord; failures are rethrown as StageError.
//
// Output directory layout (when set):
//   config.json         resolved config
//   embeddings.prle     every embedding computed by a mock encoder
//   head.prlh           trained head, if any
//   results.json        the record

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pearl/dataset_io.hpp"
#include "pearl/finetune.hpp"
#include "pearl/flow.hpp"
#include "pearl/splits.hpp"
#include "pearl/synth.hpp"

namespace pearl {

using Json = nlohmann::json;

struct EncoderSpec {
  std::string kind = "mock";  // mock | file
  std::size_t width = kDefaultEmbeddingWidth;
  std::size_t input_side = 32;
  std::uint64_t seed = 0;
  double gain = kDefaultMockGain;
  std::string store;  // PRLE path for kind == file
};

struct FinetuneSpec {
  HeadKind kind = HeadKind::kDim;
  DimMode mode = DimMode::kTemporal;
  std::vector<Augmentation> augmentations;  // aug-mlp only
  HeadHyper hyper;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset;  // directory; empty selects `synth`
  SynthSpec synth;
  EncoderSpec encoder;
  std::string flow_dir;  // optional PRLF files episode_<k>/flow_<i>.prlf
  std::string composition = "FI";
  std::size_t canonical_side = 224;
  bool normalize = false;
  std::optional<FinetuneSpec> finetune;
  ProbeOptions probe;
  SplitRatios split = kDefaultSplit;
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: nothing is written
};

// ---- config JSON -------------------------------------------------------------

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<std::string_view> allowed,
                           std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace detail

inline Json synth_to_json(const SynthSpec& s) {
  return {{"frame_size", s.frame_size},   {"episodes", s.episodes},
          {"frames_per_episode", s.frames_per_episode},
          {"sprites", s.sprites},         {"sprite_size", s.sprite_size},
          {"min_speed", s.min_speed},     {"max_speed", s.max_speed},
          {"buckets", s.buckets},         {"background_noise", s.background_noise},
          {"seed", s.seed}};
}

inline SynthSpec synth_from_json(const Json& j) {
  detail::reject_unknown(j, {"frame_size", "episodes", "frames_per_episode", "sprites",
                             "sprite_size", "min_speed", "max_speed", "buckets",
                             "background_noise", "seed"},
                         "synth");
  SynthSpec s;
  detail::read_opt(j, "frame_size", s.frame_size);
  detail::read_opt(j, "episodes", s.episodes);
  detail::read_opt(j, "frames_per_episode", s.frames_per_episode);
  detail::read_opt(j, "sprites", s.sprites);
  detail::read_opt(j, "sprite_size", s.sprite_size);
  detail::read_opt(j, "min_speed", s.min_speed);
  detail::read_opt(j, "max_speed", s.max_speed);
  detail::read_opt(j, "buckets", s.buckets);
  detail::read_opt(j, "background_noise", s.background_noise);
  detail::read_opt(j, "seed", s.seed);
  return s;
}

inline Json hyper_to_json(const HeadHyper& h) {
  return {{"batch_size", h.batch_size}, {"learning_rate", h.learning_rate},
          {"epochs", h.epochs},         {"max_steps", h.max_steps},
          {"temperature", h.temperature}, {"mlp_hidden", h.mlp_hidden},
          {"projection", h.projection}, {"cpc_latent", h.cpc_latent},
          {"cpc_hidden", h.cpc_hidden}, {"steps", h.steps},
          {"context", h.context}};
}

inline HeadHyper hyper_from_json(const Json& j) {
  detail::reject_unknown(j, {"batch_size", "learning_rate", "epochs", "max_steps", "temperature",
                             "mlp_hidden", "projection", "cpc_latent", "cpc_hidden", "steps",
                             "context"},
                         "finetune.hyper");
  HeadHyper h;
  detail::read_opt(j, "batch_size", h.batch_size);
  detail::read_opt(j, "learning_rate", h.learning_rate);
  detail::read_opt(j, "epochs", h.epochs);
  detail::read_opt(j, "max_steps", h.max_steps);
  detail::read_opt(j, "temperature", h.temperature);
  detail::read_opt(j, "mlp_hidden", h.mlp_hidden);
  detail::read_opt(j, "projection", h.projection);
  detail::read_opt(j, "cpc_latent", h.cpc_latent);
  detail::read_opt(j, "cpc_hidden", h.cpc_hidden);
  detail::read_opt(j, "steps", h.steps);
  detail::read_opt(j, "context", h.context);
  return h;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  if (c.dataset.empty()) {
    j["synth"] = synth_to_json(c.synth);
  } else {
    j["dataset"] = c.dataset;
  }
  Json enc = {{"kind", c.encoder.kind}};
  if (c.encoder.kind == "mock") {
    enc["width"] = c.encoder.width;
    enc["input_side"] = c.encoder.input_side;
    enc["seed"] = c.encoder.seed;
    enc["gain"] = c.encoder.gain;
  } else {
    enc["store"] = c.encoder.store;
    enc["input_side"] = c.encoder.input_side;
  }
  j["encoder"] = enc;
  if (!c.flow_dir.empty()) j["flow_dir"] = c.flow_dir;
  j["composition"] = c.composition;
  j["canonical_side"] = c.canonical_side;
  j["normalize"] = c.normalize;
  if (c.finetune) {
    Json f = {{"kind", head_kind_name(c.finetune->kind)},
              {"mode", dim_mode_name(c.finetune->mode)},
              {"hyper", hyper_to_json(c.finetune->hyper)}};
    Json augs = Json::array();
    for (Augmentation a : c.finetune->augmentations) augs.push_back(augmentation_name(a));
    f["augmentations"] = augs;
    j["finetune"] = f;
  }
  j["probe"] = {{"learning_rate", c.probe.learning_rate},
                {"batch_size", c.probe.batch_size},
                {"patience", c.probe.patience},
                {"max_epochs", c.probe.max_epochs}};
  j["split"] = c.split;
  j["seed"] = c.seed;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  detail::reject_unknown(j, {"name", "dataset", "synth", "encoder", "flow_dir", "composition",
                             "canonical_side", "normalize", "finetune", "probe", "split", "seed",
                             "output_dir"},
                         "experiment config");
  ExperimentConfig c;
  detail::read_opt(j, "name", c.name);
  detail::read_opt(j, "dataset", c.dataset);
  if (j.contains("synth")) {
    if (!c.dataset.empty()) throw ConfigError("config sets both 'dataset' and 'synth'");
    c.synth = synth_from_json(j.at("synth"));
  }
  if (j.contains("encoder")) {
    const Json& e = j.at("encoder");
    detail::reject_unknown(e, {"kind", "width", "input_side", "seed", "gain", "store"}, "encoder");
    detail::read_opt(e, "kind", c.encoder.kind);
    if (c.encoder.kind == "file") c.encoder.input_side = 224;
    detail::read_opt(e, "width", c.encoder.width);
    detail::read_opt(e, "input_side", c.encoder.input_side);
    detail::read_opt(e, "seed", c.encoder.seed);
    detail::read_opt(e, "gain", c.encoder.gain);
    detail::read_opt(e, "store", c.encoder.store);
    if (c.encoder.kind != "mock" && c.encoder.kind != "file") {
      throw ConfigError("encoder kind must be 'mock' or 'file', got '" + c.encoder.kind + "'");
    }
    if (c.encoder.kind == "file" && c.encoder.store.empty()) {
      throw ConfigError("file encoder needs 'store'");
    }
  }
  detail::read_opt(j, "flow_dir", c.flow_dir);
  detail::read_opt(j, "composition", c.composition);
  parse_config(c.composition);
  detail::read_opt(j, "canonical_side", c.canonical_side);
  detail::read_opt(j, "normalize", c.normalize);
  if (j.contains("finetune") && !j.at("finetune").is_null()) {
    const Json& f = j.at("finetune");
    detail::reject_unknown(f, {"kind", "mode", "augmentations", "hyper"}, "finetune");
    FinetuneSpec spec;
    std::string kind = "dim", mode = "T";
    detail::read_opt(f, "kind", kind);
    detail::read_opt(f, "mode", mode);
    spec.kind = parse_head_kind(kind);
    spec.mode = parse_dim_mode(mode);
    std::vector<std::string> augs;
    detail::read_opt(f, "augmentations", augs);
    for (const auto& a : augs) spec.augmentations.push_back(parse_augmentation(a));
    if (spec.kind == HeadKind::kAugMlp && spec.augmentations.empty()) {
      throw ConfigError("aug-mlp fine-tuning needs a non-empty 'augmentations' list");
    }
    if (f.contains("hyper")) spec.hyper = hyper_from_json(f.at("hyper"));
    c.finetune = spec;
  }
  if (j.contains("probe")) {
    const Json& p = j.at("probe");
    detail::reject_unknown(p, {"learning_rate", "batch_size", "patience", "max_epochs"}, "probe");
    detail::read_opt(p, "learning_rate", c.probe.learning_rate);
    detail::read_opt(p, "batch_size", c.probe.batch_size);
    detail::read_opt(p, "patience", c.probe.patience);
    detail::read_opt(p, "max_epochs", c.probe.max_epochs);
  }
  detail::read_opt(j, "split", c.split);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "output_dir", c.output_dir);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- hashing -----------------------------------------------------------------

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("SHA-256 initialisation failed");
    }
  }

  Sha256& update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("SHA-256 update failed");
    return *this;
  }
  Sha256& update(const std::vector<std::uint8_t>& bytes) {
    return update(bytes.data(), bytes.size());
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &n) != 1) throw Error("SHA-256 final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < n; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  return Sha256().update(bytes).hex();
}

// Hash of schema, labels and exact pixel values, independent of storage.
inline std::string dataset_hash(const EpisodeDataset& ds) {
  Sha256 h;
  io::ByteWriter head;
  head.put_u64(ds.schema.size());
  for (const auto& c : ds.schema) {
    head.put_u64(c.name.size());
    head.put_bytes(c.name);
    head.put_u64(c.classes);
  }
  head.put_u64(ds.episodes.size());
  h.update(head.bytes());
  for (const auto& e : ds.episodes) {
    io::ByteWriter w;
    w.put_u64(e.id);
    w.put_u64(e.frames.size());
    for (std::size_t f = 0; f < e.frames.size(); ++f) {
      w.put_u64(e.frames[f].width());
      w.put_u64(e.frames[f].height());
      for (double v : e.frames[f].data()) w.put_f64(v);
      for (std::size_t l : e.labels[f]) w.put_u64(l);
    }
    h.update(w.bytes());
  }
  return h.hex();
}

// ---- results -------------------------------------------------------------------

inline constexpr int kResultsSchemaVersion = 1;

struct ArtifactHashes {
  std::string dataset;
  std::string embeddings;
  std::string head;  // empty without fine-tuning

  bool operator==(const ArtifactHashes&) const = default;
};

struct ResultsRecord {
  int schema_version = kResultsSchemaVersion;
  std::string name;
  Json config;
  std::vector<CategoryResult> categories;
  double mean_f1 = 0.0;
  std::size_t embedding_width = 0;
  double wall_clock_seconds = 0.0;
  ArtifactHashes hashes;

  bool operator==(const ResultsRecord&) const = default;
};

// Equality of everything a (config, seed) pair determines.
inline bool same_results(const ResultsRecord& a, const ResultsRecord& b) {
  ResultsRecord x = a;
  x.wall_clock_seconds = b.wall_clock_seconds;
  return x == b;
}

inline Json results_to_json(const ResultsRecord& r) {
  Json cats = Json::array();
  for (const auto& c : r.categories) {
    Json jc = {{"name", c.name},
               {"f1", c.f1},
               {"epochs_run", c.epochs_run},
               {"best_epoch", c.best_epoch}};
    if (c.error) jc["error"] = *c.error;
    cats.push_back(jc);
  }
  return {{"schema_version", r.schema_version},
          {"name", r.name},
          {"config", r.config},
          {"categories", cats},
          {"mean_f1", r.mean_f1},
          {"embedding_width", r.embedding_width},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"hashes",
           {{"dataset", r.hashes.dataset},
            {"embeddings", r.hashes.embeddings},
            {"head", r.hashes.head}}}};
}

inline ResultsRecord results_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw FormatError("results file has no schema_version");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kResultsSchemaVersion) {
    throw VersionError("results schema version " + std::to_string(version) +
                       " is not supported (this build reads version " +
                       std::to_string(kResultsSchemaVersion) + ")");
  }
  ResultsRecord r;
  try {
    r.name = j.at("name").get<std::string>();
    r.config = j.at("config");
    for (const Json& jc : j.at("categories")) {
      CategoryResult c;
      c.name = jc.at("name").get<std::string>();
      c.f1 = jc.at("f1").get<double>();
      c.epochs_run = jc.at("epochs_run").get<std::size_t>();
      c.best_epoch = jc.at("best_epoch").get<std::size_t>();
      if (jc.contains("error")) c.error = jc.at("error").get<std::string>();
      r.categories.push_back(std::move(c));
    }
    r.mean_f1 = j.at("mean_f1").get<double>();
    r.embedding_width = j.at("embedding_width").get<std::size_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    const Json& h = j.at("hashes");
    r.hashes = {h.at("dataset").get<std::string>(), h.at("embeddings").get<std::string>(),
                h.at("head").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed results record: ") + e.what());
  }
  const double recomputed = mean_of_categories(r.categories);
  if (std::abs(recomputed - r.mean_f1) > 1e-12) {
    throw ConsistencyError("mean_f1 " + std::to_string(r.mean_f1) +
                           " does not match the mean of its categories " +
                           std::to_string(recomputed));
  }
  return r;
}

inline void persist_results(const ResultsRecord& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << results_to_json(r).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline ResultsRecord load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return results_from_json(j);
}

// ---- pipeline ------------------------------------------------------------------

namespace detail {

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

inline EpisodeDataset load_experiment_dataset(const ExperimentConfig& c) {
  if (c.dataset.empty()) return generate_synthetic(c.synth).dataset;
  if (!std::filesystem::is_directory(c.dataset)) {
    throw IoError("dataset directory " + c.dataset + " does not exist");
  }
  return load_dataset(c.dataset);
}

inline Encoder make_encoder(const EncoderSpec& spec) {
  if (spec.kind == "mock") return Encoder::mock(spec.width, spec.input_side, spec.seed, spec.gain);
  if (!std::filesystem::exists(spec.store)) {
    throw IoError("embedding store " + spec.store + " does not exist");
  }
  return Encoder::file_backed(std::make_shared<EmbeddingStore>(read_embeddings(spec.store)),
                              spec.input_side);
}

// Imported flow for the pair (frame - 1, frame) read from
// dir/episode_<k>/flow_<frame-1>.prlf.
inline std::function<std::optional<FlowField>(std::size_t, std::size_t)> flow_importer(
    const std::string& dir) {
  if (dir.empty()) return {};
  return [dir](std::size_t episode, std::size_t frame) -> std::optional<FlowField> {
    if (frame == 0) return std::nullopt;
    const auto path = std::filesystem::path(dir) / ("episode_" + std::to_string(episode)) /
                      ("flow_" + std::to_string(frame - 1) + ".prlf");
    if (!std::filesystem::exists(path)) throw DataError("missing flow file " + path.string());
    return read_flow(path);
  };
}

// Composed representations keyed "<episode>/<frame>/composed", for storage
// between separately run stages.
inline std::vector<EmbeddingEntry> composed_entries(const EpisodeDataset& ds,
                                                    const Representations& x) {
  const auto refs = ds.refs();
  if (refs.size() != x.size()) throw DimensionError("one representation per frame expected");
  std::vector<EmbeddingEntry> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.emplace_back(EmbeddingKey{ds.episodes[refs[i].episode].id, refs[i].frame, "composed"},
                     Embedding{x[i]});
  }
  return out;
}

inline Representations composed_from_store(const EpisodeDataset& ds, const EmbeddingStore& store) {
  Representations x;
  x.reserve(ds.frame_count());
  for (const FrameRef& r : ds.refs()) {
    const EmbeddingKey key{ds.episodes[r.episode].id, r.frame, "composed"};
    const Embedding* e = store.find(key);
    if (!e) throw MissingEmbeddingError(key.str());
    x.push_back(e->values);
  }
  return x;
}

inline ResultsRecord run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  ResultsRecord record;
  record.name = config.name;
  record.config = config_to_json(config);
  const fs::path out = config.output_dir;
  const bool write = !config.output_dir.empty();

  ComposeOptions opt;
  opt.canonical_side = config.canonical_side;
  opt.normalize = config.normalize;
  opt.imported_flow = flow_importer(config.flow_dir);

  EmbeddingCache cache;
  EpisodeDataset ds;
  std::optional<Encoder> encoder;
  CompositionConfig composition;
  Representations x = detail::in_stage("compose", [&] {
    composition = parse_config(config.composition);
    ds = load_experiment_dataset(config);
    encoder = make_encoder(config.encoder);
    return compose_dataset(composition, ds, *encoder, cache, opt);
  });
  record.hashes.dataset = dataset_hash(ds);

  if (config.finetune) {
    x = detail::in_stage("finetune", [&] {
      const FinetuneSpec& f = *config.finetune;
      const auto lengths = episode_lengths(ds);
      TrainedHead t;
      switch (f.kind) {
        case HeadKind::kAugMlp:
          t = train_aug_head(ds, *encoder, cache, f.augmentations, f.hyper, config.seed,
                             config.canonical_side);
          break;
        case HeadKind::kDim:
          t = train_dim_head(x, lengths, composition, f.mode, f.hyper, config.seed);
          break;
        case HeadKind::kCpc:
          t = train_cpc_head(x, lengths, f.hyper, config.seed);
          break;
      }
      const auto bytes = encode_head(t.head);
      record.hashes.head = sha256_hex(bytes);
      if (write) io::write_file(out / "head.prlh", bytes);
      return apply_head(t.head, x);
    });
  }
  record.embedding_width = x.empty() ? 0 : x[0].size();

  const ProbeReport report = detail::in_stage("probe", [&] {
    return probe_suite(x, ds, make_splits(ds, config.split, config.seed), config.probe,
                       config.seed);
  });
  record.categories = report.categories;
  record.mean_f1 = report.mean_f1;

  detail::in_stage("persist", [&] {
    std::vector<std::uint8_t> store_bytes;
    if (encoder->kind() == EncoderKind::kMock) {
      store_bytes = encode_embeddings(cache.entries(), static_cast<std::uint32_t>(encoder->width()));
    } else {
      store_bytes = io::read_file(config.encoder.store);
    }
    record.hashes.embeddings = sha256_hex(store_bytes);
    if (write) {
      fs::create_directories(out);
      std::ofstream cfg(out / "config.json", std::ios::trunc);
      cfg << record.config.dump(2) << '\n';
      if (encoder->kind() == EncoderKind::kMock) io::write_file(out / "embeddings.prle", store_bytes);
    }
  });
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (write) detail::in_stage("persist", [&] { persist_results(record, out / "results.json"); });
  return record;
}

}  // namespace pearl
