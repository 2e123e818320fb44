// movietour: command-line front end.
//
// Exit status: 0 success, 1 usage or configuration error, 2 data error
// (corpus, image, frames), 3 numeric divergence, 4 I/O error. Logs go to
// stderr; machine-readable results (JSON, tables) go to stdout.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "movietour/annotator.hpp"
#include "movietour/corpus.hpp"
#include "movietour/errors.hpp"
#include "movietour/model.hpp"
#include "movietour/synthetic.hpp"
#include "movietour/trainer.hpp"

namespace fs = std::filesystem;
using namespace movietour;

namespace {

template <typename... Args>
void note(fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(stderr, f, std::forward<Args>(args)...);
  std::fputc('\n', stderr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

// Label map for commands that take an optional corpus: the corpus manifest's
// map when given, the fourteen published destinations otherwise.
LabelMap labels_for(const std::optional<fs::path>& data_dir, const ModelParams<float>& params) {
  LabelMap labels = data_dir ? read_manifest(*data_dir / kManifestFile).labels : LabelMap::movietour();
  if (labels.size() != params.config.num_classes) {
    throw ConfigError(fmt::format("model has {} classes but the label map has {}{}", params.config.num_classes,
                                  labels.size(), data_dir ? "" : " (pass --data to use a corpus label map)"));
  }
  return labels;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  fs::path manifest;
  fs::path out;
  int workers = 4;
  int short_side = 128;
};

int cmd_dataset_build(const BuildArgs& a) {
  const auto& labels = LabelMap::movietour();
  const UrlManifest urls = read_url_manifest(a.manifest, labels);
  note("fetching {} URLs with {} workers", urls.rows.size(), a.workers);
  BuildOptions opt;
  opt.workers = a.workers;
  opt.short_side = a.short_side;
  const CurationReport report = build_corpus(urls, a.out, labels, opt);
  for (const auto& f : report.failures) note("warning: {}", f);
  const auto t = report.totals();
  note("stored {} new images ({} failed, {} undecodable, {} duplicates)", t.stored, t.failed, t.rejected_undecodable,
       t.rejected_duplicate);
  fmt::print("{}", report.to_json());
  return 0;
}

struct ValidateArgs {
  fs::path dir;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  std::optional<std::uint64_t> seed;
};

int cmd_dataset_validate(const ValidateArgs& a) {
  if (a.ratios.size() != 3) throw UsageError("--ratios needs exactly three values: train,val,test");
  const ScanResult scan = scan_directory(a.dir);
  for (const auto& w : scan.warnings) note("warning: {}", w);
  CorpusManifest manifest = scan.manifest;
  if (a.seed) {
    manifest = stratified_split(manifest, {a.ratios[0], a.ratios[1], a.ratios[2]}, *a.seed);
  } else {
    note("no --seed given: records are left unsplit");
  }
  write_manifest(manifest, a.dir / kManifestFile);
  note("wrote {} records to {}", manifest.records.size(), (a.dir / kManifestFile).string());

  const auto all = manifest.class_counts();
  const auto tr = manifest.class_counts(Split::kTrain);
  const auto va = manifest.class_counts(Split::kVal);
  const auto te = manifest.class_counts(Split::kTest);
  fmt::print("{:<3} {:<26} {:>6} {:>6} {:>6} {:>6}\n", "idx", "class", "total", "train", "val", "test");
  for (std::size_t c = 0; c < manifest.labels.size(); ++c) {
    fmt::print("{:<3} {:<26} {:>6} {:>6} {:>6} {:>6}\n", c, manifest.labels.at(c).name, all[c], tr[c], va[c], te[c]);
  }
  std::size_t n = manifest.records.size();
  fmt::print("{:<3} {:<26} {:>6}\n", "", "all", n);
  return 0;
}

struct SynthArgs {
  fs::path out;
  std::size_t per_class = 70;
  std::uint64_t seed = 0;
  int size = 64;
  bool plain = false;
};

int cmd_dataset_synth(const SynthArgs& a) {
  SyntheticSpec spec;
  spec.image_size = a.size;
  spec.textured = !a.plain;
  const std::size_t n = write_synthetic_corpus(a.out, LabelMap::movietour(), a.per_class, a.seed, spec);
  note("wrote {} synthetic images to {}", n, a.out.string());
  return 0;
}

struct TrainArgs {
  fs::path data;
  fs::path config;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig config = read_train_config(a.config);
  const CorpusManifest manifest = read_manifest(a.data / kManifestFile);
  const auto arch = config.architecture(static_cast<std::uint32_t>(manifest.labels.size()));
  auto params = build_model<float>(arch, config.effective_init_seed());
  note("model: {} parameters, {} classes, input {}x{}", params.parameter_count(), arch.num_classes, arch.input_size,
       arch.input_size);
  if (config.checkpoint_out.has_parent_path()) fs::create_directories(config.checkpoint_out.parent_path());
  if (config.history_out && config.history_out->has_parent_path()) {
    fs::create_directories(config.history_out->parent_path());
  }
  const auto result = train(std::move(params), manifest, a.data, config, [](const EpochMetrics& m) {
    note("epoch {:>3}  train loss {:.4f}  train acc {:.4f}  val loss {:.4f}  val acc {:.4f}{}", m.epoch, m.train_loss,
         m.train_accuracy, m.val_loss, m.val_accuracy, m.checkpoint_saved ? "  [saved]" : "");
  });
  nlohmann::ordered_json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_accuracy"] = result.best_val_accuracy;
  summary["checkpoint"] = result.best_checkpoint.string();
  summary["epochs"] = result.history.size();
  fmt::print("{}\n", summary.dump(2));
  return 0;
}

struct EvalArgs {
  fs::path model;
  fs::path data;
  std::string split = "test";
};

int cmd_eval(const EvalArgs& a) {
  const Split split = parse_split(a.split);
  const auto params = load_checkpoint(a.model);
  const CorpusManifest manifest = read_manifest(a.data / kManifestFile);
  const auto m = evaluate(params, manifest, a.data, split);
  note("{} accuracy {:.4f} ({}/{})", a.split, m.accuracy, m.correct, m.total);
  fmt::print("{}", eval_metrics_json(m, manifest.labels));
  return 0;
}

struct PredictArgs {
  fs::path model;
  fs::path image;
  std::size_t topk = 3;
  std::optional<fs::path> data;
};

int cmd_predict(const PredictArgs& a) {
  const auto params = load_checkpoint(a.model);
  const LabelMap labels = labels_for(a.data, params);
  fmt::print("{}", prediction_json(predict_image(params, a.image, a.topk), labels));
  return 0;
}

struct AnnotateArgs {
  fs::path model;
  fs::path frames;
  double threshold = 0.5;
  std::size_t window = 5;
  fs::path out;
  std::optional<fs::path> data;
};

int cmd_annotate(const AnnotateArgs& a) {
  const std::string ext = a.out.extension().string();
  if (ext != ".srt" && ext != ".json") throw UsageError(fmt::format("--out must end in .srt or .json, got \"{}\"", ext));
  const auto params = load_checkpoint(a.model);
  const LabelMap labels = labels_for(a.data, params);
  const auto frames = fs::is_directory(a.frames) ? list_frame_directory(a.frames) : read_frame_list(a.frames);
  note("annotating {} frames (threshold {}, window {})", frames.size(), a.threshold, a.window);
  const auto segments = annotate_frames(params, frames, a.threshold, a.window);
  write_text(a.out, ext == ".srt" ? emit_srt(segments, labels) : emit_json(segments, labels));
  note("wrote {} caption segments to {}", segments.size(), a.out.string());
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filming-location recognition: corpus tools, CNN training, evaluation and caption annotation."};
  app.require_subcommand(1);

  auto* dataset = app.add_subcommand("dataset", "Corpus construction and validation");
  dataset->require_subcommand(1);

  BuildArgs build;
  auto* build_cmd = dataset->add_subcommand("build", "Download, verify, deduplicate and store images from a URL list");
  build_cmd->add_option("--manifest", build.manifest, "CSV with header class,url,license")->required();
  build_cmd->add_option("--out", build.out, "Corpus directory (one subdirectory per class)")->required();
  build_cmd->add_option("--workers", build.workers, "Concurrent downloads")->capture_default_str()->check(CLI::Range(1, 64));
  build_cmd->add_option("--short-side", build.short_side, "Stored short side in pixels")
      ->capture_default_str()
      ->check(CLI::Range(8, 4096));

  ValidateArgs validate;
  auto* validate_cmd = dataset->add_subcommand("validate", "Scan a corpus, optionally split it, write manifest.jsonl");
  validate_cmd->add_option("dir", validate.dir, "Corpus directory")->required();
  validate_cmd->add_option("--ratios", validate.ratios, "Split ratios train,val,test (sum to 1)")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  validate_cmd->add_option("--seed", validate.seed, "Split seed; without it records stay unsplit");

  SynthArgs synth;
  auto* synth_cmd = dataset->add_subcommand("synth", "Write a synthetic 14-class corpus of colored shapes");
  synth_cmd->add_option("--out", synth.out, "Output corpus directory")->required();
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->required();
  synth_cmd->add_option("--size", synth.size, "Image side in pixels")->capture_default_str()->check(CLI::Range(8, 1024));
  synth_cmd->add_flag("--plain", synth.plain, "Flat backgrounds instead of textured ones");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the CNN on a split corpus");
  train_cmd->add_option("--data", train_args.data, "Corpus directory containing manifest.jsonl")->required();
  train_cmd->add_option("--config", train_args.config, "key = value training config")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split; prints metrics JSON");
  eval_cmd->add_option("--model", eval.model, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Corpus directory containing manifest.jsonl")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test")->capture_default_str();

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Top-k destinations for one image; prints JSON");
  predict_cmd->add_option("--model", predict.model, "Checkpoint file")->required();
  predict_cmd->add_option("image", predict.image, "PNG or JPEG image")->required();
  predict_cmd->add_option("--topk", predict.topk, "Number of classes to report")->capture_default_str();
  predict_cmd->add_option("--data", predict.data, "Corpus whose label map to use (default: the 14 destinations)");

  AnnotateArgs annotate;
  auto* annotate_cmd = app.add_subcommand("annotate", "Caption a sequence of timestamped frames as SRT or JSON");
  annotate_cmd->add_option("--model", annotate.model, "Checkpoint file")->required();
  annotate_cmd->add_option("--frames", annotate.frames,
                           "Directory of NNNNNNNN.jpg frames (name = milliseconds) or a list file of <ms>\\t<path>")
      ->required();
  annotate_cmd->add_option("--threshold", annotate.threshold, "Confidence below which a frame is unknown")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  annotate_cmd->add_option("--window", annotate.window, "Odd majority-vote window in frames")->capture_default_str();
  annotate_cmd->add_option("--out", annotate.out, "Output file; .srt or .json selects the format")->required();
  annotate_cmd->add_option("--data", annotate.data, "Corpus whose label map to use (default: the 14 destinations)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (build_cmd->parsed()) return cmd_dataset_build(build);
    if (validate_cmd->parsed()) return cmd_dataset_validate(validate);
    if (synth_cmd->parsed()) return cmd_dataset_synth(synth);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (predict_cmd->parsed()) return cmd_predict(predict);
    if (annotate_cmd->parsed()) return cmd_annotate(annotate);
  } catch (const DivergenceError& e) {
    note("error: {} (epoch {}, batch {})", e.what(), e.epoch(), e.batch());
    return 3;
  } catch (const std::exception& e) {
    note("error: {}", e.what());
    return exit_code_for(e);
  }
  return 1;
}
