#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cdfnet/cutmix.hpp"
#include "cdfnet/data.hpp"
#include "cdfnet/train.hpp"
#include "cdfnet/unet.hpp"

namespace cdfnet {

/// Invalid or unknown configuration; maps to the CLI's config-error exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Preset { Desk, Paper };

Preset parse_preset(const std::string& name);

struct RunPaths {
  std::string data;
  std::string out;
  std::string stage1_checkpoint;
};

/// Training fields set explicitly by a config file or flag. Unset fields fall
/// back to the stage's preset.
struct TrainOverrides {
  std::optional<double> learning_rate;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<int> crop_size;
  std::optional<int> eval_every;
  std::optional<std::uint64_t> seed;
  std::optional<bool> flip;
  std::optional<bool> rotate;
};

/// Everything one invocation needs, merged from defaults, a config file and
/// command-line overrides (in that order).
///
/// File schema (every key optional, unknown keys rejected):
///   model:  depth, base_channels, in_channels, fusion_placement[int]
///   train:  stage, preset ("desk"|"paper"), learning_rate, epochs, batch_size,
///           crop_size, seed, flip, rotate, eval_every, val_fraction
///   cutmix: enabled, target_classes[int], probability, box_fraction_range[lo,hi],
///           min_hard_fraction, seed
///   synth:  num_pairs, image_size, min_buildings, max_buildings,
///           min_building_side, max_building_side, damage_distribution[4], seed
///   paths:  data, out, stage1_checkpoint
struct RunConfig {
  UNetConfig model;
  Stage stage = Stage::Building;
  Preset preset = Preset::Desk;
  TrainOverrides train;
  CutMixPolicy cutmix;
  bool cutmix_enabled = true;
  SynthConfig synth;
  RunPaths paths;
  double val_fraction = 0.2;

  /// Preset for the stage, then explicit overrides; stage 2 with CutMix
  /// enabled carries the policy, and paths.stage1_checkpoint is copied over.
  TrainConfig resolved_train() const;
};

/// Applies a parsed config document on top of `base`. Throws ConfigError on
/// unknown keys or ill-typed values.
RunConfig apply_config(RunConfig base, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// A config document in the file schema above, with training values resolved.
nlohmann::json to_json(const RunConfig& config);

}  // namespace cdfnet
