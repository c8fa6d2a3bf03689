// pearl: command-line front end. Each subcommand reads and writes the
// documented file formats, so stages can be re-run independently.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pearl/harness.hpp"
#include "pearl/png_io.hpp"
#include "pearl/report.hpp"

namespace fs = std::filesystem;
using namespace pearl;

namespace {

struct EncoderFlags {
  std::string store;
  std::size_t width = kDefaultEmbeddingWidth;
  std::size_t side = 32;
  std::uint64_t seed = 0;
  double gain = kDefaultMockGain;

  void add(CLI::App* app) {
    app->add_option("--store", store, "PRLE store for a file-backed encoder (default: mock)");
    app->add_option("--width", width, "mock encoder embedding width")->capture_default_str();
    app->add_option("--input-side", side, "mock encoder input side")->capture_default_str();
    app->add_option("--encoder-seed", seed, "mock encoder projection seed")->capture_default_str();
    app->add_option("--gain", gain, "mock encoder projection gain")->capture_default_str();
  }

  EncoderSpec spec() const {
    EncoderSpec s;
    if (store.empty()) {
      s.width = width;
      s.input_side = side;
      s.seed = seed;
      s.gain = gain;
    } else {
      s.kind = "file";
      s.store = store;
      s.input_side = 224;
    }
    return s;
  }
};

struct ComposeFlags {
  std::string dataset;
  std::string composition = "FI";
  std::size_t canonical_side = 224;
  std::string flow_dir;
  bool normalize = false;

  void add(CLI::App* app, bool with_composition = true) {
    app->add_option("--dataset", dataset, "dataset directory")->required();
    if (with_composition) {
      app->add_option("--composition", composition, "composition, e.g. FI+2x2")
          ->capture_default_str();
    }
    app->add_option("--canonical-side", canonical_side, "side frames are resized to first")
        ->capture_default_str();
    app->add_option("--flow-dir", flow_dir, "directory of imported PRLF flow files");
    app->add_flag("--normalize", normalize, "L2-normalise embeddings before concatenation");
  }

  ComposeOptions options() const {
    ComposeOptions o;
    o.canonical_side = canonical_side;
    o.normalize = normalize;
    o.imported_flow = flow_importer(flow_dir);
    return o;
  }
};

std::vector<std::uint8_t> cache_bytes(const Encoder& enc, const EmbeddingCache& cache) {
  return encode_embeddings(cache.entries(), static_cast<std::uint32_t>(enc.width()));
}

void print_report(const ProbeReport& r) {
  for (const auto& c : r.categories) {
    if (c.error) {
      std::printf("%-16s  failed: %s\n", c.name.c_str(), c.error->c_str());
    } else {
      std::printf("%-16s  F1 %.4f  (epochs %zu, best %zu)\n", c.name.c_str(), c.f1, c.epochs_run,
                  c.best_epoch);
    }
  }
  std::printf("%-16s  F1 %.4f\n", "mean", r.mean_f1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pearl: pretrained embeddings, attention and linear probes"};
  app.require_subcommand(1);
  std::string stage;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a moving-sprite dataset");
  SynthSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--episodes", spec.episodes)->capture_default_str();
  synth->add_option("--frames", spec.frames_per_episode, "frames per episode")->capture_default_str();
  synth->add_option("--size", spec.frame_size, "frame side")->capture_default_str();
  synth->add_option("--sprites", spec.sprites)->capture_default_str();
  synth->add_option("--buckets", spec.buckets, "position classes per axis")->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();

  // encode
  auto* encode = app.add_subcommand("encode", "compute every embedding a composition needs");
  ComposeFlags enc_compose;
  EncoderFlags enc_encoder;
  std::string encode_out;
  enc_compose.add(encode);
  enc_encoder.add(encode);
  encode->add_option("--out", encode_out, "output PRLE file")->required();

  // mask
  auto* mask = app.add_subcommand("mask", "attention mask and top-k patches of one frame pair");
  ComposeFlags mask_flags;
  std::size_t mask_episode = 0, mask_frame = 1, mask_k = 4;
  std::string mask_source = "diff", mask_out;
  mask_flags.add(mask, false);
  mask->add_option("--episode", mask_episode, "episode position in the dataset")
      ->capture_default_str();
  mask->add_option("--frame", mask_frame, "frame index; paired with the previous frame")
      ->capture_default_str();
  mask->add_option("--source", mask_source, "diff or flow")
      ->check(CLI::IsMember({"diff", "flow"}))
      ->capture_default_str();
  mask->add_option("-k,--top-k", mask_k, "patches to list")->capture_default_str();
  mask->add_option("--out", mask_out, "write the mask as a grayscale PNG");

  // compose
  auto* compose_cmd = app.add_subcommand("compose", "write composed representations");
  ComposeFlags cmp_flags;
  EncoderFlags cmp_encoder;
  std::string compose_out;
  cmp_flags.add(compose_cmd);
  cmp_encoder.add(compose_cmd);
  compose_cmd->add_option("--out", compose_out, "output PRLE file (keys <ep>/<frame>/composed)")
      ->required();

  // finetune
  auto* finetune = app.add_subcommand("finetune", "train a self-supervised head");
  ComposeFlags ft_flags;
  EncoderFlags ft_encoder;
  std::string ft_kind = "dim", ft_mode = "T", ft_out;
  std::vector<std::string> ft_augs;
  HeadHyper hyper;
  std::uint64_t ft_seed = 0;
  ft_flags.add(finetune);
  ft_encoder.add(finetune);
  finetune->add_option("--kind", ft_kind, "aug-mlp, dim or cpc")->capture_default_str();
  finetune->add_option("--mode", ft_mode, "DIM mode: T, S or ST")->capture_default_str();
  finetune->add_option("--augment", ft_augs, "augmentations for aug-mlp: crop jitter blur")
      ->delimiter(',');
  finetune->add_option("--batch", hyper.batch_size)->capture_default_str();
  finetune->add_option("--lr", hyper.learning_rate)->capture_default_str();
  finetune->add_option("--epochs", hyper.epochs)->capture_default_str();
  finetune->add_option("--max-steps", hyper.max_steps)->capture_default_str();
  finetune->add_option("--temperature", hyper.temperature)->capture_default_str();
  finetune->add_option("--projection", hyper.projection)->capture_default_str();
  finetune->add_option("--cpc-steps", hyper.steps)->capture_default_str();
  finetune->add_option("--cpc-context", hyper.context)->capture_default_str();
  finetune->add_option("--seed", ft_seed)->capture_default_str();
  finetune->add_option("--out", ft_out, "output PRLH file")->required();

  // probe
  auto* probe = app.add_subcommand("probe", "linear probes on stored representations");
  std::string probe_dataset, probe_reps, probe_head, probe_out, probe_name = "probe";
  ProbeOptions popt;
  std::uint64_t probe_seed = 0;
  probe->add_option("--dataset", probe_dataset, "dataset directory")->required();
  probe->add_option("--representations", probe_reps, "PRLE file from `compose`")->required();
  probe->add_option("--head", probe_head, "apply a trained head first");
  probe->add_option("--max-epochs", popt.max_epochs)->capture_default_str();
  probe->add_option("--seed", probe_seed)->capture_default_str();
  probe->add_option("--name", probe_name)->capture_default_str();
  probe->add_option("--out", probe_out, "write a results JSON");

  // run
  auto* run = app.add_subcommand("run", "full pipeline from an experiment config");
  std::string run_config, run_out, run_composition, run_name;
  std::optional<std::uint64_t> run_seed;
  run->add_option("config", run_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "override output_dir");
  run->add_option("--composition", run_composition, "override composition");
  run->add_option("--name", run_name, "override name");
  run->add_option("--seed", run_seed, "override seed");

  // report
  auto* report = app.add_subcommand("report", "CSV table and SVG chart of results");
  std::vector<std::string> report_inputs;
  std::string report_csv, report_svg, report_reference;
  report->add_option("results", report_inputs, "results JSON files")->required();
  report->add_option("--csv", report_csv, "output CSV")->required();
  report->add_option("--svg", report_svg, "output SVG")->required();
  report->add_option("--reference", report_reference, "CSV of reference scores to plot alongside");

  // compare
  auto* compare = app.add_subcommand("compare", "per-category F1 deltas (treatment - baseline)");
  std::string cmp_base, cmp_treat;
  compare->add_option("baseline", cmp_base)->required();
  compare->add_option("treatment", cmp_treat)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      stage = "synth";
      save_dataset(synth_out, generate_synthetic(spec).dataset);
      std::printf("wrote %zu frames to %s\n", spec.episodes * spec.frames_per_episode,
                  synth_out.c_str());
    } else if (encode->parsed() || compose_cmd->parsed()) {
      ComposeFlags& f = encode->parsed() ? enc_compose : cmp_flags;
      EncoderFlags& e = encode->parsed() ? enc_encoder : cmp_encoder;
      stage = "compose";
      const EpisodeDataset ds = load_dataset(f.dataset);
      const Encoder enc = make_encoder(e.spec());
      EmbeddingCache cache;
      const Representations x = compose_dataset(parse_config(f.composition), ds, enc, cache,
                                                f.options());
      if (encode->parsed()) {
        if (enc.kind() != EncoderKind::kMock) throw ConfigError("encode needs a mock encoder");
        io::write_file(encode_out, cache_bytes(enc, cache));
        std::printf("wrote %zu embeddings to %s\n", cache.size(), encode_out.c_str());
      } else {
        write_embeddings(compose_out, composed_entries(ds, x));
        std::printf("wrote %zu x %zu representations to %s\n", x.size(),
                    x.empty() ? std::size_t{0} : x[0].size(), compose_out.c_str());
      }
    } else if (mask->parsed()) {
      stage = "mask";
      const EpisodeDataset ds = load_dataset(mask_flags.dataset);
      const Episode& ep = ds.episodes.at(mask_episode);
      if (mask_frame == 0 || mask_frame >= ep.frames.size()) {
        throw IndexError("--frame must be in 1.." + std::to_string(ep.frames.size() - 1));
      }
      const std::size_t side = mask_flags.canonical_side;
      const Frame prev = resize_bilinear(ep.frames[mask_frame - 1], side, side);
      const Frame curr = resize_bilinear(ep.frames[mask_frame], side, side);
      const auto importer = flow_importer(mask_flags.flow_dir);
      const AttentionMask m =
          mask_source == "diff"
              ? diff_mask(prev, curr)
              : flow_mask(prev, curr, importer ? importer(ep.id, mask_frame) : std::nullopt);
      std::printf("%s mask, mean %.4f\n", mask_source_name(m.source).data(), m.field.mean());
      for (const auto& p : select_top_k(score_patches(m), mask_k)) {
        std::printf("grid%zu:%zu  score %.4f  at (%zu,%zu) %zux%zu\n", p.grid, p.cell, p.score,
                    p.x, p.y, p.width, p.height);
      }
      if (!mask_out.empty()) {
        Frame img(m.width(), m.height());
        for (std::size_t y = 0; y < m.height(); ++y)
          for (std::size_t x = 0; x < m.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) img.set(x, y, c, m.field(x, y));
        write_png(mask_out, img);
      }
    } else if (finetune->parsed()) {
      stage = "finetune";
      const EpisodeDataset ds = load_dataset(ft_flags.dataset);
      const Encoder enc = make_encoder(ft_encoder.spec());
      EmbeddingCache cache;
      const HeadKind kind = parse_head_kind(ft_kind);
      const CompositionConfig composition = parse_config(ft_flags.composition);
      TrainedHead t;
      if (kind == HeadKind::kAugMlp) {
        std::vector<Augmentation> set;
        for (const auto& a : ft_augs) set.push_back(parse_augmentation(a));
        t = train_aug_head(ds, enc, cache, set, hyper, ft_seed, ft_flags.canonical_side);
      } else {
        const Representations x = compose_dataset(composition, ds, enc, cache, ft_flags.options());
        t = kind == HeadKind::kDim
                ? train_dim_head(x, episode_lengths(ds), composition, parse_dim_mode(ft_mode),
                                 hyper, ft_seed)
                : train_cpc_head(x, episode_lengths(ds), hyper, ft_seed);
      }
      write_head(ft_out, t.head);
      std::printf("%zu steps, final loss %.6f; wrote %s\n", t.log.step_losses.size(),
                  t.log.final_loss(), ft_out.c_str());
    } else if (probe->parsed()) {
      stage = "probe";
      const EpisodeDataset ds = load_dataset(probe_dataset);
      Representations x = composed_from_store(ds, read_embeddings(probe_reps));
      ResultsRecord rec;
      if (!probe_head.empty()) {
        const auto bytes = io::read_file(probe_head);
        x = apply_head(decode_head(bytes), x);
        rec.hashes.head = sha256_hex(bytes);
      }
      const ProbeReport r =
          probe_suite(x, ds, make_splits(ds, kDefaultSplit, probe_seed), popt, probe_seed);
      print_report(r);
      if (!probe_out.empty()) {
        rec.name = probe_name;
        rec.config = {{"dataset", probe_dataset}, {"representations", probe_reps},
                      {"head", probe_head}, {"seed", probe_seed},
                      {"max_epochs", popt.max_epochs}};
        rec.categories = r.categories;
        rec.mean_f1 = r.mean_f1;
        rec.embedding_width = x.empty() ? 0 : x[0].size();
        rec.hashes.dataset = dataset_hash(ds);
        rec.hashes.embeddings = sha256_hex(io::read_file(probe_reps));
        persist_results(rec, probe_out);
      }
    } else if (run->parsed()) {
      stage = "config";
      ExperimentConfig c = load_config(run_config);
      if (!run_out.empty()) c.output_dir = run_out;
      if (!run_composition.empty()) c.composition = run_composition;
      if (!run_name.empty()) c.name = run_name;
      if (run_seed) c.seed = *run_seed;
      parse_config(c.composition);
      const ResultsRecord r = run_experiment(c);
      print_report(ProbeReport{r.categories, r.mean_f1});
      std::printf("width %zu, %.1f s\n", r.embedding_width, r.wall_clock_seconds);
      if (!c.output_dir.empty()) {
        std::printf("wrote %s\n", (fs::path(c.output_dir) / "results.json").c_str());
      }
    } else if (report->parsed()) {
      stage = "report";
      std::vector<ResultsRecord> records;
      for (const auto& p : report_inputs) records.push_back(load_results(p));
      std::vector<ReportRow> reference;
      if (!report_reference.empty()) {
        reference = read_reference_csv(report_reference, report_table(records).columns);
      }
      write_report(render_report(records, reference), report_csv, report_svg);
      std::printf("wrote %s and %s\n", report_csv.c_str(), report_svg.c_str());
    } else if (compare->parsed()) {
      stage = "compare";
      const DeltaTable t = compare_runs(load_results(cmp_base), load_results(cmp_treat));
      std::printf("%-16s %10s %10s %10s\n", "category", "baseline", "treatment", "delta");
      for (const auto& d : t.categories) {
        std::printf("%-16s %10.4f %10.4f %+10.4f\n", d.name.c_str(), d.baseline, d.treatment,
                    d.delta);
      }
      std::printf("%-16s %10s %10s %+10.4f\n", "mean", "", "", t.mean_delta);
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.stage().c_str(),
                 std::string(e.what()).substr(e.stage().size() + 2).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [%s]: %s\n", stage.c_str(), e.what());
    return 2;
  }
  return 0;
}
