#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdfnet/checkpoint.hpp"
#include "cdfnet/fusion.hpp"
#include "cdfnet/ops.hpp"

namespace cdfnet {

enum class Stage : int { Building = 1, Damage = 2 };

struct UNetConfig {
  int depth = 3;
  int base_channels = 16;
  int in_channels = 3;
  int num_classes_stage1 = 2;
  int num_classes_stage2 = 5;
  // Levels 0..depth-1 fuse the skip features of that decoder level; level
  // `depth` fuses the bottleneck. Empty optional means "all levels".
  std::optional<std::set<int>> fusion_placement;

  void validate() const;
  std::set<int> fusion_levels() const;
  std::int64_t channels_at(int level) const { return static_cast<std::int64_t>(base_channels) << level; }
  /// Throws ShapeError with the padding needed when h or w is not a multiple of 2^depth.
  void check_input_size(std::int64_t h, std::int64_t w) const;
};

/// Ordered name -> tensor table. Tensors are shared handles, so looking a
/// parameter up and mutating it updates the model.
class ParamStore {
 public:
  void add(std::string name, Tensor<float> tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<float>& get(const std::string& name) const;
  Tensor<float>& get(const std::string& name);
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor<float>> tensors() const;
  std::int64_t count() const;

 private:
  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

struct EncoderFeatures {
  std::vector<Tensor<float>> skips;  // level 0 (full resolution) first
  Tensor<float> bottleneck;
};

/// Intermediates of a stage-2 forward pass, for inspection and tests.
struct Stage2Trace {
  EncoderFeatures pre;
  EncoderFeatures post;
  std::map<int, FusionIO<float>> fusions;
};

/// Twin U-Net for both stages.
///
/// Stage 1 (building) runs one encoder-decoder on the pre-disaster image and
/// ends in a 2-class head. Stage 2 (damage) passes the pre and post images
/// through the same encoder parameters, fuses each configured level with a
/// cross-directional fusion block, and decodes the fused post-branch stream,
/// concatenated with fused post skips, into 5-class logits. The decoder keeps
/// stage 1's shapes, so every backbone tensor transfers.
class UNetModel {
 public:
  UNetModel(const UNetConfig& config, Stage stage, std::uint64_t seed);

  const UNetConfig& config() const { return config_; }
  Stage stage() const { return stage_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  int num_classes() const;
  std::int64_t parameter_count() const { return params_.count(); }
  std::int64_t backbone_parameter_count() const;
  std::int64_t head_parameter_count() const;
  std::int64_t fusion_parameter_count() const;
  const FusionParams<float>& fusion(int level) const { return fusions_.at(level); }

  EncoderFeatures encode(Tape<float>& tape, const Tensor<float>& image) const;

  /// Stage-1 logits [2,H,W] for one image.
  Tensor<float> forward(Tape<float>& tape, const Tensor<float>& image) const;
  /// Stage-2 logits [5,H,W] for a pre/post pair.
  Tensor<float> forward(Tape<float>& tape, const Tensor<float>& pre, const Tensor<float>& post,
                        Stage2Trace* trace = nullptr) const;

  /// Copies every tensor of `tensors` into the model. Each model parameter must
  /// be present with identical shape; extra names are rejected.
  void load_state(const std::vector<NamedTensor>& tensors);
  std::vector<NamedTensor> state() const { return params_.entries(); }

  static bool is_backbone_name(const std::string& name);

 private:
  Tensor<float> decode(Tape<float>& tape, Tensor<float> x, const std::vector<Tensor<float>>& skips) const;
  Tensor<float> conv_relu(Tape<float>& tape, const Tensor<float>& x, const std::string& prefix) const;

  UNetConfig config_;
  Stage stage_;
  ParamStore params_;
  std::map<int, FusionParams<float>> fusions_;
};

struct TransferManifest {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
  std::vector<std::string> unused;  // checkpoint entries with no stage-2 counterpart (the building head)

  nlohmann::json to_json() const;
};

/// Initialises a stage-2 model from a stage-1 checkpoint: every backbone tensor
/// is copied, the damage head and all fusion blocks keep their fresh values.
/// A shape mismatch on a shared name, or a missing backbone tensor, throws.
TransferManifest transfer_stage1_weights(const std::vector<NamedTensor>& stage1, UNetModel& stage2);

}  // namespace cdfnet
