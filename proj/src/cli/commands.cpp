#include "cdfnet/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include <CLI11.hpp>

#include "cdfnet/checkpoint.hpp"
#include "cdfnet/data.hpp"
#include "cdfnet/image_io.hpp"
#include "cdfnet/predict.hpp"
#include "cdfnet/render.hpp"
#include "cdfnet/train.hpp"

namespace cdfnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTargetSuffix = "_post_disaster_target.png";
constexpr const char* kPredictionSuffix = "_prediction.png";

constexpr const char* kPresetHelp = R"(Presets:
  desk   stage 1: lr 1.5e-4, 30 epochs; stage 2: lr 2e-4, 10 epochs; 64 px crops
  paper  stage 1: lr 1.5e-4, 120 epochs; stage 2: lr 2e-4, 20 epochs; 512 px crops
Both use Adam (0.9, 0.999, 1e-8), batch size 4, flips and quarter turns.
Stage 2 adds CutMix on classes {2,3} with probability 0.5 unless --no-cutmix.

Exit codes: 0 success, 2 configuration error, 3 runtime error.)";

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt("%.3f", *v) : std::string("  -  "); }

fs::path checkpoint_file(const fs::path& p) { return fs::is_directory(p) ? p / "model.ckpt" : p; }

UNetConfig unet_config_from_json(const json& j) {
  UNetConfig c;
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes_stage1 = j.value("num_classes_stage1", 2);
  c.num_classes_stage2 = j.value("num_classes_stage2", 5);
  if (j.contains("fusion_placement")) c.fusion_placement = j.at("fusion_placement").get<std::set<int>>();
  return c;
}

json read_sidecar(const fs::path& ckpt) {
  const auto path = ckpt.parent_path() / "model.json";
  std::ifstream f(path);
  if (!f) throw CheckpointError("missing model sidecar " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw CheckpointError("cannot parse " + path.string() + ": " + e.what());
  }
}

std::vector<SamplePair> load_dataset(const std::string& root, std::ostream& err) {
  if (root.empty()) throw ConfigError("a dataset directory is required (--data or paths.data)");
  auto index = load_xbd_layout(root);
  for (const auto& id : index.skipped) err << "skipping incomplete pair " << id << '\n';
  return load_all(index);
}

std::string strip_suffix(const std::string& name, const std::string& suffix) {
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return {};
  return name.substr(0, name.size() - suffix.size());
}

DamageMask read_mask(const fs::path& p) { return mask_from_image(read_png(p)); }

void print_epoch(std::ostream& out, Stage stage, const EpochRecord& r) {
  std::string line = fmt("%5.0f", r.epoch) + "  " + fmt("%9.5f", r.loss);
  if (r.metrics) {
    const auto& m = *r.metrics;
    line += "  " + fmt("%6.3f", m.f1_building);
    if (stage == Stage::Damage)
      line += "  " + fmt("%6.3f", m.f1_damage) + "  " + fmt("%6.3f", m.f1_overall) + "  " + fmt_opt(m.f1_per_class[1]);
  }
  out << line << std::endl;
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
};

RunConfig base_config(const CommonFlags& flags) {
  RunConfig c = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  if (flags.seed) {
    c.train.seed = *flags.seed;
    c.synth.seed = *flags.seed;
    c.cutmix.seed = *flags.seed;
  }
  return c;
}

// ---- synth ---------------------------------------------------------------

struct SynthFlags : CommonFlags {
  std::optional<int> pairs, size;
  std::string out;
};

void cmd_synth(const SynthFlags& f, std::ostream& out) {
  RunConfig c = base_config(f);
  if (f.pairs) c.synth.num_pairs = *f.pairs;
  if (f.size) c.synth.image_size = *f.size;
  if (!f.out.empty()) c.paths.out = f.out;
  if (c.paths.out.empty()) throw ConfigError("synth: an output directory is required (--out or paths.out)");
  try {
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto samples = generate_synthetic(c.synth);
  write_dataset(samples, c.paths.out);
  const auto manifest = dataset_manifest(samples);
  out << "wrote " << samples.size() << " pairs to " << c.paths.out << '\n'
      << "class pixel counts: " << manifest.at("class_pixel_counts").dump() << '\n';
}

// ---- train ---------------------------------------------------------------

struct TrainFlags : CommonFlags {
  std::optional<int> stage, epochs, batch_size, crop, base_channels, depth, eval_every;
  std::optional<double> lr, val_fraction;
  std::string data, out, from_stage1, preset;
  bool no_cutmix = false;
};

void cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = base_config(f);
  if (f.stage) {
    if (*f.stage != 1 && *f.stage != 2) throw ConfigError("--stage must be 1 or 2");
    c.stage = static_cast<Stage>(*f.stage);
  }
  if (!f.preset.empty()) c.preset = parse_preset(f.preset);
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.crop) c.train.crop_size = *f.crop;
  if (f.eval_every) c.train.eval_every = *f.eval_every;
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.val_fraction) c.val_fraction = *f.val_fraction;
  if (f.base_channels) c.model.base_channels = *f.base_channels;
  if (f.depth) c.model.depth = *f.depth;
  if (f.no_cutmix) c.cutmix_enabled = false;
  if (!f.data.empty()) c.paths.data = f.data;
  if (!f.out.empty()) c.paths.out = f.out;
  if (!f.from_stage1.empty()) c.paths.stage1_checkpoint = checkpoint_file(f.from_stage1).string();

  if (c.stage == Stage::Damage && c.paths.stage1_checkpoint.empty())
    throw ConfigError("stage 2 must start from a stage-1 checkpoint (--from-stage1)");
  if (c.paths.out.empty()) throw ConfigError("train: an output directory is required (--out or paths.out)");

  std::vector<NamedTensor> stage1;
  if (c.stage == Stage::Damage) {
    const fs::path ckpt = c.paths.stage1_checkpoint;
    stage1 = read_checkpoint(ckpt);
    const auto sidecar = read_sidecar(ckpt);
    if (sidecar.value("stage", 0) != 1) throw ConfigError("--from-stage1 does not point at a stage-1 checkpoint");
    const auto arch = unet_config_from_json(sidecar.at("model"));
    c.model.depth = arch.depth;
    c.model.base_channels = arch.base_channels;
    c.model.in_channels = arch.in_channels;
  }

  TrainConfig tc = c.resolved_train();
  try {
    c.model.validate();
    tc.validate();
  } catch (const ShapeError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  auto split = split_dataset(load_dataset(c.paths.data, err), c.val_fraction);
  UNetModel model(c.model, c.stage, tc.seed);
  json extra = json::object();
  if (c.stage == Stage::Damage) extra["transfer"] = transfer_stage1_weights(stage1, model).to_json();
  extra["train_pairs"] = split.train.size();
  extra["val_pairs"] = split.val.size();

  out << "stage " << static_cast<int>(c.stage) << ": " << split.train.size() << " train / " << split.val.size()
      << " val pairs, " << model.parameter_count() << " parameters, lr " << tc.learning_rate << ", " << tc.epochs
      << " epochs\n";
  out << (c.stage == Stage::Building ? "epoch       loss    F1_b" : "epoch       loss    F1_b    F1_d    F1_s   minor")
      << std::endl;
  const auto result = train(model, split.train, split.val, tc, [&](const EpochRecord& r) { print_epoch(out, c.stage, r); });
  write_training_artifacts(c.paths.out, model, tc, result, extra);
  out << "checkpoint written to " << (fs::path(c.paths.out) / "model.ckpt").string() << '\n';
}

// ---- predict -------------------------------------------------------------

struct PredictFlags {
  std::string checkpoint, data, out;
  int crop = 0;
  int overlap = 0;
  bool color = false;
};

void cmd_predict(const PredictFlags& f, std::ostream& out, std::ostream& err) {
  const auto model = load_model(f.checkpoint);
  const auto sidecar = read_sidecar(checkpoint_file(f.checkpoint));
  TilingOptions tiling;
  tiling.crop = f.crop > 0 ? f.crop : sidecar.at("train").value("crop_size", 64);
  tiling.overlap = f.overlap;
  if (tiling.overlap < 0 || tiling.overlap >= tiling.crop) throw ConfigError("--overlap must lie in [0, crop)");

  const auto samples = load_dataset(f.data, err);
  fs::create_directories(f.out);
  for (const auto& s : samples) {
    const auto mask = model.stage() == Stage::Building ? predict_buildings(model, s.pre, tiling)
                                                       : predict_damage(model, s.pre, s.post, tiling);
    write_png(fs::path(f.out) / (s.id + kPredictionSuffix), mask_to_image(mask));
    if (f.color) write_png(fs::path(f.out) / (s.id + "_prediction_color.png"), colorize_mask(mask));
  }
  out << "wrote " << samples.size() << " predictions to " << f.out << '\n';
}

// ---- score ---------------------------------------------------------------

struct ScoreFlags {
  std::string truth, pred, building_pred, json_path, text_path, fixture, label = "model";
  bool per_image = false;
};

MetricsReport report_from_fixture(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open fixture " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("fixture " + path.string() + ": " + e.what());
  }
  MetricsReport r;
  r.f1_building = j.at("f1_building").get<double>();
  const auto per_class = j.at("f1_per_class").get<std::vector<double>>();
  if (per_class.size() != 4) throw ConfigError("fixture: f1_per_class needs 4 values");
  for (std::size_t i = 0; i < 4; ++i) r.f1_per_class[i] = per_class[i];
  r.f1_damage = harmonic_mean(per_class);
  r.f1_overall = overall_score(r.f1_building, r.f1_damage);
  return r;
}

void cmd_score(const ScoreFlags& f, std::ostream& out) {
  json doc;
  std::string text;
  if (!f.fixture.empty()) {
    const auto report = report_from_fixture(f.fixture);
    doc = {{"f1_building", report.f1_building},
           {"f1_per_class", json::array()},
           {"f1_damage", report.f1_damage},
           {"f1_overall", report.f1_overall}};
    for (const auto& v : report.f1_per_class) doc["f1_per_class"].push_back(*v);
    text = format_score_table(report, f.label);
  } else {
    if (f.truth.empty() || f.pred.empty()) throw ConfigError("score: --truth and --pred are required");
    const auto result = score_directories(f.truth, f.pred, f.building_pred);
    doc = to_json(result.pooled);
    text = format_score_table(result.pooled, f.label) + "\n" + format_confusion_table(result.pooled.confusion);
    if (f.per_image) {
      doc["per_image"] = json::object();
      for (const auto& [id, r] : result.per_image) {
        doc["per_image"][id] = to_json(r);
        text += "\n" + format_score_table(r, id);
      }
    }
  }
  out << text;
  if (!f.json_path.empty()) std::ofstream(f.json_path, std::ios::trunc) << doc.dump(2) << '\n';
  if (!f.text_path.empty()) std::ofstream(f.text_path, std::ios::trunc) << text;
}

// ---- render --------------------------------------------------------------

struct RenderFlags {
  std::vector<std::string> masks;
  std::string pre, post, out;
};

void cmd_render(const RenderFlags& f, std::ostream& out) {
  std::vector<DamageMask> masks;
  for (const auto& p : f.masks) masks.push_back(read_mask(p));
  std::optional<Image8> pre, post;
  if (!f.pre.empty()) pre = read_png(f.pre);
  if (!f.post.empty()) post = read_png(f.post);
  const std::int64_t h = masks.front().height, w = masks.front().width;
  for (const auto* img : {pre ? &*pre : nullptr, post ? &*post : nullptr})
    if (img && (img->height != h || img->width != w)) throw RenderError("render: images and masks differ in size");
  const auto layout = render_masks(masks, pre ? &*pre : nullptr, post ? &*post : nullptr);
  write_png(f.out, layout.canvas);
  out << "wrote " << layout.panels.size() << " panels to " << f.out << '\n';
}

// ---- augment-preview -----------------------------------------------------

struct PreviewFlags : CommonFlags {
  std::string data, out;
  int n = 4;
};

void cmd_augment_preview(const PreviewFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = base_config(f);
  if (!f.data.empty()) c.paths.data = f.data;
  const auto samples = load_dataset(c.paths.data, err);
  const auto rows = augment_preview_rows(samples, c.cutmix, f.n, c.cutmix.seed);
  int mixed = 0;
  for (const auto& r : rows) mixed += r.box.has_value();
  if (mixed == 0) err << "no donor with target classes; preview shows unmixed samples\n";
  write_png(f.out, render_preview(rows).canvas);
  out << "wrote " << rows.size() << " rows (" << mixed << " mixed) to " << f.out << '\n';
}

template <typename T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

UNetModel load_model(const fs::path& path) {
  const auto ckpt = checkpoint_file(path);
  const auto sidecar = read_sidecar(ckpt);
  const int stage = sidecar.value("stage", 0);
  if (stage != 1 && stage != 2) throw CheckpointError("model sidecar has no valid stage");
  UNetModel model(unet_config_from_json(sidecar.at("model")), static_cast<Stage>(stage), 0);
  model.load_state(read_checkpoint(ckpt));
  return model;
}

std::map<std::string, fs::path> index_masks(const fs::path& dir) {
  const fs::path root = fs::is_directory(dir / "targets") ? dir / "targets" : dir;
  if (!fs::is_directory(root)) throw DatasetError("not a directory: " + root.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    for (const char* suffix : {kTargetSuffix, kPredictionSuffix}) {
      const auto id = strip_suffix(name, suffix);
      if (!id.empty()) out[id] = e.path();
    }
  }
  return out;
}

ScoreResult score_directories(const fs::path& truth, const fs::path& pred, const fs::path& building_pred) {
  const auto truths = index_masks(truth);
  if (truths.empty()) throw DatasetError("no truth masks under " + truth.string());
  const auto preds = index_masks(pred);
  const auto buildings = building_pred.empty() ? std::map<std::string, fs::path>{} : index_masks(building_pred);

  ScoreResult out;
  ConfusionMatrix damage, building;
  for (const auto& [id, path] : truths) {
    const auto p = preds.find(id);
    if (p == preds.end()) throw DatasetError("no prediction for " + id + " under " + pred.string());
    const auto t = read_mask(path);
    const auto d = read_mask(p->second);
    if (d.height != t.height || d.width != t.width) throw DatasetError("prediction for " + id + " has the wrong size");
    ConfusionMatrix cm;
    cm.accumulate(t, d);
    ConfusionMatrix bcm;
    if (!building_pred.empty()) {
      const auto b = buildings.find(id);
      if (b == buildings.end()) throw DatasetError("no building prediction for " + id);
      bcm.accumulate(collapse_to_building(t), read_mask(b->second));
      building += bcm;
    }
    out.per_image.emplace(id, make_report(cm, building_pred.empty() ? nullptr : &bcm));
    damage += cm;
  }
  out.pooled = make_report(damage, building_pred.empty() ? nullptr : &building);
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage building damage segmentation with cross-directional fusion and hard-class CutMix", "cdfnet"};
  app.footer(kPresetHelp);
  app.require_subcommand(1);

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic pre/post dataset in xBD layout");
  optional_option(s, "--pairs", synth.pairs, "Number of pairs (default 50)");
  optional_option(s, "--size", synth.size, "Tile side in pixels (default 64)");
  optional_option(s, "--seed", synth.seed, "Generator seed (default 0)");
  s->add_option("--out", synth.out, "Output dataset directory");
  s->add_option("--config", synth.config, "JSON config file")->check(CLI::ExistingFile);

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Train stage 1 (buildings) or stage 2 (damage)");
  t->add_option("--config", tr.config, "JSON config file")->check(CLI::ExistingFile);
  optional_option(t, "--stage", tr.stage, "1 = building segmentation, 2 = damage classification");
  t->add_option("--data", tr.data, "Dataset root in xBD layout");
  t->add_option("--out", tr.out, "Run directory for model.ckpt, model.json and train_log.jsonl");
  t->add_option("--from-stage1", tr.from_stage1, "Stage-1 run directory or checkpoint (required for stage 2)");
  t->add_option("--preset", tr.preset, "Schedule preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  optional_option(t, "--epochs", tr.epochs, "Override the preset epoch count");
  optional_option(t, "--lr", tr.lr, "Override the preset learning rate");
  optional_option(t, "--batch-size", tr.batch_size, "Batch size (default 4)");
  optional_option(t, "--crop", tr.crop, "Training crop size");
  optional_option(t, "--eval-every", tr.eval_every, "Held-out evaluation interval in epochs, 0 = last epoch only");
  optional_option(t, "--val-fraction", tr.val_fraction, "Fraction of pairs held out (default 0.2)");
  optional_option(t, "--base-channels", tr.base_channels, "Channels at the first encoder level (default 16)");
  optional_option(t, "--depth", tr.depth, "Number of down-sampling levels (default 3)");
  optional_option(t, "--seed", tr.seed, "Seed for initialisation, shuffling and augmentation");
  t->add_flag("--no-cutmix", tr.no_cutmix, "Disable hard-class CutMix in stage 2");

  PredictFlags pr;
  auto* p = app.add_subcommand("predict", "Write per-pair prediction masks");
  p->add_option("--checkpoint", pr.checkpoint, "Run directory or model.ckpt")->required();
  p->add_option("--data", pr.data, "Dataset root in xBD layout")->required();
  p->add_option("--out", pr.out, "Directory for <id>_prediction.png")->required();
  p->add_option("--crop", pr.crop, "Tile size (default: training crop)");
  p->add_option("--overlap", pr.overlap, "Tile overlap in pixels (default 0)");
  p->add_flag("--color", pr.color, "Also write colour-coded masks");

  ScoreFlags sc;
  auto* c = app.add_subcommand("score", "Pooled F1 metrics and confusion table");
  c->add_option("--truth", sc.truth, "Truth masks, or a dataset root with targets/");
  c->add_option("--pred", sc.pred, "Damage predictions (<id>_prediction.png)");
  c->add_option("--building-pred", sc.building_pred, "Stage-1 predictions; otherwise F1_b comes from --pred");
  c->add_option("--json", sc.json_path, "Write the report as JSON");
  c->add_option("--text", sc.text_path, "Write the text report");
  c->add_option("--label", sc.label, "Row label in the score table");
  c->add_option("--f1-fixture", sc.fixture, "Score stored F1 values {f1_building, f1_per_class[4]}")
      ->check(CLI::ExistingFile);
  c->add_flag("--per-image", sc.per_image, "Also report every pair");

  RenderFlags rf;
  auto* r = app.add_subcommand("render", "Colour-coded damage panels with legend");
  r->add_option("--mask", rf.masks, "Mask PNG (repeatable, one panel each)")->required()->check(CLI::ExistingFile);
  r->add_option("--pre", rf.pre, "Pre-disaster image shown first")->check(CLI::ExistingFile);
  r->add_option("--post", rf.post, "Post-disaster image shown second")->check(CLI::ExistingFile);
  r->add_option("--out", rf.out, "Output PNG")->required();

  PreviewFlags pv;
  auto* a = app.add_subcommand("augment-preview", "Grid of original and CutMix-ed samples");
  a->add_option("--data", pv.data, "Dataset root in xBD layout");
  a->add_option("--n", pv.n, "Number of rows (default 4)");
  optional_option(a, "--seed", pv.seed, "Preview seed");
  a->add_option("--config", pv.config, "JSON config file (cutmix section)")->check(CLI::ExistingFile);
  a->add_option("--out", pv.out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*s) cmd_synth(synth, out);
    else if (*t) cmd_train(tr, out, err);
    else if (*p) cmd_predict(pr, out, err);
    else if (*c) cmd_score(sc, out);
    else if (*r) cmd_render(rf, out);
    else if (*a) cmd_augment_preview(pv, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  return kExitOk;
}

}  // namespace cdfnet::cli
