#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdfnet/cutmix.hpp"
#include "cdfnet/data.hpp"
#include "cdfnet/metrics.hpp"
#include "cdfnet/predict.hpp"
#include "cdfnet/unet.hpp"

namespace cdfnet {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Stage stage = Stage::Building;
  double learning_rate = 1.5e-4;
  int epochs = 30;
  int batch_size = 4;
  int crop_size = 64;
  std::uint64_t seed = 0;
  std::optional<CutMixPolicy> cutmix;  // stage 2 only
  AugmentFlags basic_aug;
  int eval_every = 1;                  // 0 disables per-epoch held-out evaluation
  std::string stage1_checkpoint;       // required for stage 2

  /// Desk-scale defaults: 30/10 epochs, 64 px crops, stage learning rates 1.5e-4 / 2e-4.
  static TrainConfig desk(Stage stage);
  /// Full-scale schedule: 120/20 epochs, 512 px crops, same learning rates.
  static TrainConfig paper(Stage stage);

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  std::optional<MetricsReport> metrics;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. Each epoch shuffles (seeded), crops and augments every
/// sample, applies CutMix to stage-2 batches when configured, and takes one
/// Adam step per batch on the mean per-pixel cross-entropy. Stage-1 targets are
/// building/background. Throws TrainingError on a non-finite loss (naming the
/// epoch and batch) and std::invalid_argument on an empty training set.
TrainResult train(UNetModel& model, std::span<const SamplePair> train_set, std::span<const SamplePair> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Pooled held-out metrics. Stage-1 models are scored building-vs-background.
MetricsReport evaluate(const UNetModel& model, std::span<const SamplePair> samples, const TilingOptions& tiling);

DamageMask collapse_to_building(const DamageMask& mask);

nlohmann::json to_json(const UNetConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const CutMixPolicy& policy);
nlohmann::json to_json(const EpochRecord& record);

/// Writes <dir>/model.ckpt, <dir>/model.json (config, stage, epoch, metrics
/// history, optional transfer manifest) and <dir>/train_log.jsonl.
void write_training_artifacts(const std::filesystem::path& dir, const UNetModel& model, const TrainConfig& config,
                              const TrainResult& result, const nlohmann::json& extra = nlohmann::json::object());

}  // namespace cdfnet
