#include "cdfnet/config.hpp"

#include <fstream>
#include <set>

namespace cdfnet {

Preset parse_preset(const std::string& name) {
  if (name == "desk") return Preset::Desk;
  if (name == "paper") return Preset::Paper;
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace {

using nlohmann::json;

const json& section(const json& doc, const char* name, std::initializer_list<const char*> allowed) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  const json& s = doc.at(name);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : s.items())
    if (!keys.count(k)) throw ConfigError(std::string("unknown config key '") + name + "." + k + "'");
  return s;
}

template <typename T>
void read(const json& s, const char* section_name, const char* key, T& out) {
  if (!s.contains(key)) return;
  try {
    out = s.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + section_name + "." + key + "': " + e.what());
  }
}

template <typename T>
void read(const json& s, const char* section_name, const char* key, std::optional<T>& out) {
  if (!s.contains(key)) return;
  T v{};
  read(s, section_name, key, v);
  out = v;
}

}  // namespace

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = preset == Preset::Paper ? TrainConfig::paper(stage) : TrainConfig::desk(stage);
  if (train.learning_rate) t.learning_rate = *train.learning_rate;
  if (train.epochs) t.epochs = *train.epochs;
  if (train.batch_size) t.batch_size = *train.batch_size;
  if (train.crop_size) t.crop_size = *train.crop_size;
  if (train.eval_every) t.eval_every = *train.eval_every;
  if (train.seed) t.seed = *train.seed;
  if (train.flip) t.basic_aug.flip = *train.flip;
  if (train.rotate) t.basic_aug.rotate = *train.rotate;
  t.cutmix.reset();
  if (stage == Stage::Damage && cutmix_enabled) t.cutmix = cutmix;
  t.stage1_checkpoint = paths.stage1_checkpoint;
  return t;
}

RunConfig apply_config(RunConfig c, const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  const std::set<std::string> top{"model", "train", "cutmix", "synth", "paths"};
  for (const auto& [k, v] : doc.items())
    if (!top.count(k)) throw ConfigError("unknown config section '" + k + "'");

  const auto& m = section(doc, "model", {"depth", "base_channels", "in_channels", "fusion_placement"});
  read(m, "model", "depth", c.model.depth);
  read(m, "model", "base_channels", c.model.base_channels);
  read(m, "model", "in_channels", c.model.in_channels);
  read(m, "model", "fusion_placement", c.model.fusion_placement);

  const auto& t = section(doc, "train", {"stage", "preset", "learning_rate", "epochs", "batch_size", "crop_size", "seed",
                                         "flip", "rotate", "eval_every", "val_fraction"});
  if (t.contains("stage")) {
    int stage = 0;
    read(t, "train", "stage", stage);
    if (stage != 1 && stage != 2) throw ConfigError("train.stage must be 1 or 2");
    c.stage = static_cast<Stage>(stage);
  }
  if (t.contains("preset")) {
    std::string preset;
    read(t, "train", "preset", preset);
    c.preset = parse_preset(preset);
  }
  read(t, "train", "learning_rate", c.train.learning_rate);
  read(t, "train", "epochs", c.train.epochs);
  read(t, "train", "batch_size", c.train.batch_size);
  read(t, "train", "crop_size", c.train.crop_size);
  read(t, "train", "seed", c.train.seed);
  read(t, "train", "flip", c.train.flip);
  read(t, "train", "rotate", c.train.rotate);
  read(t, "train", "eval_every", c.train.eval_every);
  read(t, "train", "val_fraction", c.val_fraction);

  const auto& x = section(doc, "cutmix", {"enabled", "target_classes", "probability", "box_fraction_range",
                                          "min_hard_fraction", "seed"});
  read(x, "cutmix", "enabled", c.cutmix_enabled);
  read(x, "cutmix", "target_classes", c.cutmix.target_classes);
  read(x, "cutmix", "probability", c.cutmix.probability);
  if (x.contains("box_fraction_range")) {
    std::array<double, 2> range{};
    read(x, "cutmix", "box_fraction_range", range);
    c.cutmix.box_fraction_lo = range[0];
    c.cutmix.box_fraction_hi = range[1];
  }
  read(x, "cutmix", "min_hard_fraction", c.cutmix.min_hard_fraction);
  read(x, "cutmix", "seed", c.cutmix.seed);

  const auto& s = section(doc, "synth", {"num_pairs", "image_size", "min_buildings", "max_buildings",
                                         "min_building_side", "max_building_side", "damage_distribution", "seed"});
  read(s, "synth", "num_pairs", c.synth.num_pairs);
  read(s, "synth", "image_size", c.synth.image_size);
  read(s, "synth", "min_buildings", c.synth.min_buildings);
  read(s, "synth", "max_buildings", c.synth.max_buildings);
  read(s, "synth", "min_building_side", c.synth.min_building_side);
  read(s, "synth", "max_building_side", c.synth.max_building_side);
  read(s, "synth", "damage_distribution", c.synth.damage_distribution);
  read(s, "synth", "seed", c.synth.seed);

  const auto& p = section(doc, "paths", {"data", "out", "stage1_checkpoint"});
  read(p, "paths", "data", c.paths.data);
  read(p, "paths", "out", c.paths.out);
  read(p, "paths", "stage1_checkpoint", c.paths.stage1_checkpoint);

  try {
    c.model.validate();
    c.cutmix.validate();
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) throw ConfigError("train.val_fraction must lie in [0,1)");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_config(RunConfig{}, doc);
}

nlohmann::json to_json(const RunConfig& c) {
  const TrainConfig t = c.resolved_train();
  auto cutmix = to_json(c.cutmix);
  cutmix["enabled"] = c.cutmix_enabled;
  return {{"model",
           {{"depth", c.model.depth},
            {"base_channels", c.model.base_channels},
            {"in_channels", c.model.in_channels},
            {"fusion_placement", c.model.fusion_levels()}}},
          {"train",
           {{"stage", static_cast<int>(c.stage)},
            {"preset", c.preset == Preset::Paper ? "paper" : "desk"},
            {"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"crop_size", t.crop_size},
            {"seed", t.seed},
            {"flip", t.basic_aug.flip},
            {"rotate", t.basic_aug.rotate},
            {"eval_every", t.eval_every},
            {"val_fraction", c.val_fraction}}},
          {"cutmix", cutmix},
          {"synth",
           {{"num_pairs", c.synth.num_pairs},
            {"image_size", c.synth.image_size},
            {"min_buildings", c.synth.min_buildings},
            {"max_buildings", c.synth.max_buildings},
            {"min_building_side", c.synth.min_building_side},
            {"max_building_side", c.synth.max_building_side},
            {"damage_distribution", c.synth.damage_distribution},
            {"seed", c.synth.seed}}},
          {"paths", {{"data", c.paths.data}, {"out", c.paths.out}, {"stage1_checkpoint", c.paths.stage1_checkpoint}}}};
}

}  // namespace cdfnet
