#include "cdfnet/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "cdfnet/adam.hpp"

namespace cdfnet {

TrainConfig TrainConfig::desk(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.learning_rate = stage == Stage::Building ? 1.5e-4 : 2e-4;
  c.epochs = stage == Stage::Building ? 30 : 10;
  c.crop_size = 64;
  if (stage == Stage::Damage) c.cutmix = CutMixPolicy{};
  return c;
}

TrainConfig TrainConfig::paper(Stage stage) {
  TrainConfig c = desk(stage);
  c.epochs = stage == Stage::Building ? 120 : 20;
  c.crop_size = 512;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train: learning_rate must be finite and >= 0");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (crop_size < 1) throw std::invalid_argument("train: crop_size must be >= 1");
  if (eval_every < 0) throw std::invalid_argument("train: eval_every must be >= 0");
  if (stage == Stage::Damage && stage1_checkpoint.empty())
    throw std::invalid_argument("train: stage 2 must be initialised from a stage-1 checkpoint");
  if (stage == Stage::Building && cutmix)
    throw std::invalid_argument("train: CutMix applies to stage 2 (damage) only");
  if (cutmix) cutmix->validate();
}

DamageMask collapse_to_building(const DamageMask& mask) {
  DamageMask out = mask;
  for (auto& v : out.labels)
    if (v != kIgnoreLabel && v > 0) v = 1;
  return out;
}

MetricsReport evaluate(const UNetModel& model, std::span<const SamplePair> samples, const TilingOptions& tiling) {
  ConfusionMatrix cm;
  for (const auto& s : samples) {
    if (model.stage() == Stage::Building) cm.accumulate(collapse_to_building(s.mask), predict_buildings(model, s.pre, tiling));
    else cm.accumulate(s.mask, predict_damage(model, s.pre, s.post, tiling));
  }
  return make_report(cm);
}

namespace {

constexpr std::uint64_t kShuffleStream = 0;
constexpr std::uint64_t kSampleStreamBase = 1;
constexpr std::uint64_t kDonorStreamBase = 1ULL << 32;
constexpr std::uint64_t kCutMixStreamBase = 1ULL << 40;

std::vector<SamplePair> epoch_donors(std::span<const SamplePair> train_set, const std::vector<std::size_t>& donor_ids,
                                     const TrainConfig& cfg, std::uint64_t epoch_seed) {
  std::vector<SamplePair> donors;
  for (auto i : donor_ids) {
    const auto& s = train_set[i];
    if (s.height() == cfg.crop_size && s.width() == cfg.crop_size) {
      donors.push_back(s);
      continue;
    }
    auto rng = Rng::stream(epoch_seed, kDonorStreamBase + i);
    auto cropped = crop_and_augment(s, cfg.crop_size, AugmentFlags{false, false}, rng);
    if (!donor_indices(std::span<const SamplePair>(&cropped, 1), *cfg.cutmix).empty())
      donors.push_back(std::move(cropped));
  }
  return donors;
}

}  // namespace

TrainResult train(UNetModel& model, std::span<const SamplePair> train_set, std::span<const SamplePair> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: training set is empty");
  if (model.stage() != config.stage) throw std::invalid_argument("train: model stage and config stage differ");
  model.config().check_input_size(config.crop_size, config.crop_size);
  for (const auto& s : train_set) s.validate();

  Adam<float> optimizer(model.params().tensors(), AdamOptions{config.learning_rate, 0.9, 0.999, 1e-8});
  const bool mixing = config.stage == Stage::Damage && config.cutmix.has_value();
  const auto donor_ids = mixing ? donor_indices(train_set, *config.cutmix) : std::vector<std::size_t>{};
  const TilingOptions tiling{config.crop_size, 0};

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::derive(config.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = Rng::stream(epoch_seed, kShuffleStream);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    const auto donors = mixing ? epoch_donors(train_set, donor_ids, config, epoch_seed) : std::vector<SamplePair>{};

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<SamplePair> batch;
      for (std::size_t p = start; p < stop; ++p) {
        auto rng = Rng::stream(epoch_seed, kSampleStreamBase + p);
        batch.push_back(crop_and_augment(train_set[order[p]], config.crop_size, config.basic_aug, rng));
      }
      if (mixing)
        batch = augment_batch(batch, donors, *config.cutmix, Rng::derive(epoch_seed, kCutMixStreamBase + static_cast<std::uint64_t>(batches)));

      Tape<float> tape;
      Tensor<float> total;
      const float weight = 1.0f / static_cast<float>(batch.size());
      for (const auto& s : batch) {
        Tensor<float> logits;
        DamageMask target;
        if (config.stage == Stage::Building) {
          logits = model.forward(tape, s.pre);
          target = collapse_to_building(s.mask);
        } else {
          logits = model.forward(tape, s.pre, s.post);
          target = s.mask;
        }
        auto loss = scale(tape, softmax_cross_entropy(tape, logits, target.labels), weight);
        total = total.defined() ? add(tape, total, loss) : loss;
      }
      const double value = total.item();
      if (!std::isfinite(value))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      tape.backward(total);
      optimizer.step();
      loss_sum += value;
      ++batches;
    }

    EpochRecord record{epoch, loss_sum / batches, config.learning_rate, std::nullopt};
    const bool last = epoch == config.epochs;
    if (!val_set.empty() && config.eval_every > 0 && (epoch % config.eval_every == 0 || last))
      record.metrics = evaluate(model, val_set, tiling);
    if (on_epoch) on_epoch(record);
    result.history.push_back(std::move(record));
  }
  return result;
}

nlohmann::json to_json(const UNetConfig& c) {
  nlohmann::json j = {{"depth", c.depth},
                      {"base_channels", c.base_channels},
                      {"in_channels", c.in_channels},
                      {"num_classes_stage1", c.num_classes_stage1},
                      {"num_classes_stage2", c.num_classes_stage2}};
  j["fusion_placement"] = c.fusion_levels();
  return j;
}

nlohmann::json to_json(const CutMixPolicy& p) {
  return {{"target_classes", p.target_classes},
          {"probability", p.probability},
          {"box_fraction_range", {p.box_fraction_lo, p.box_fraction_hi}},
          {"min_hard_fraction", p.min_hard_fraction},
          {"seed", p.seed}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage", static_cast<int>(c.stage)},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"crop_size", c.crop_size},
          {"seed", c.seed},
          {"cutmix", c.cutmix ? to_json(*c.cutmix) : nlohmann::json()},
          {"basic_aug", {{"flip", c.basic_aug.flip}, {"rotate", c.basic_aug.rotate}}},
          {"eval_every", c.eval_every},
          {"stage1_checkpoint", c.stage1_checkpoint}};
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"lr", r.learning_rate},
          {"metrics", r.metrics ? to_json(*r.metrics) : nlohmann::json()}};
}

void write_training_artifacts(const std::filesystem::path& dir, const UNetModel& model, const TrainConfig& config,
                              const TrainResult& result, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "model.ckpt", model.state());

  nlohmann::json history = nlohmann::json::array();
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  for (const auto& r : result.history) {
    auto j = to_json(r);
    log << j.dump() << '\n';
    history.push_back(std::move(j));
  }
  nlohmann::json sidecar = {{"stage", static_cast<int>(model.stage())},
                            {"epoch", result.history.empty() ? 0 : result.history.back().epoch},
                            {"model", to_json(model.config())},
                            {"train", to_json(config)},
                            {"parameter_count", model.parameter_count()},
                            {"history", history}};
  for (const auto& [k, v] : extra.items()) sidecar[k] = v;
  std::ofstream(dir / "model.json", std::ios::trunc) << sidecar.dump(2) << '\n';
}

}  // namespace cdfnet
