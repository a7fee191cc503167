#include "cdfnet/unet.hpp"

#include <algorithm>
#include <cmath>

#include "cdfnet/rng.hpp"

namespace cdfnet {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor<float> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
  return Tensor<float>(std::move(shape), std::move(data), true);
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("unet: depth must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("unet: base_channels must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("unet: in_channels must be >= 1");
  if (num_classes_stage1 != 2 || num_classes_stage2 != 5)
    throw std::invalid_argument("unet: stage heads are fixed at 2 (building) and 5 (damage) classes");
  if (fusion_placement)
    for (int level : *fusion_placement)
      if (level < 0 || level > depth)
        throw std::invalid_argument("unet: fusion level " + std::to_string(level) + " outside 0.." +
                                    std::to_string(depth));
}

std::set<int> UNetConfig::fusion_levels() const {
  if (fusion_placement) return *fusion_placement;
  std::set<int> all;
  for (int l = 0; l <= depth; ++l) all.insert(l);
  return all;
}

void UNetConfig::check_input_size(std::int64_t h, std::int64_t w) const {
  const std::int64_t m = std::int64_t{1} << depth;
  if (h % m == 0 && w % m == 0) return;
  const auto pad = [m](std::int64_t v) { return (m - v % m) % m; };
  throw ShapeError("unet: input " + std::to_string(h) + "x" + std::to_string(w) + " must be divisible by 2^" +
                   std::to_string(depth) + "=" + std::to_string(m) + "; pad by " + std::to_string(pad(h)) +
                   " rows and " + std::to_string(pad(w)) + " columns");
}

void ParamStore::add(std::string name, Tensor<float> tensor) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor<float>& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].second;
}

Tensor<float>& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].second;
}

std::vector<Tensor<float>> ParamStore::tensors() const {
  std::vector<Tensor<float>> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::int64_t>(e.second.numel());
  return n;
}

bool UNetModel::is_backbone_name(const std::string& name) {
  return starts_with(name, "enc") || starts_with(name, "bottleneck.") || starts_with(name, "dec");
}

UNetModel::UNetModel(const UNetConfig& config, Stage stage, std::uint64_t seed) : config_(config), stage_(stage) {
  config_.validate();
  auto add_conv = [&](const std::string& prefix, std::int64_t cin, std::int64_t cout, std::int64_t k) {
    auto rng = Rng::stream(seed, name_hash(prefix));
    params_.add(prefix + ".w", kaiming_uniform({cout, cin, k, k}, cin * k * k, rng));
    params_.add(prefix + ".b", Tensor<float>::zeros({cout}, true));
  };

  std::int64_t cin = config_.in_channels;
  for (int l = 0; l < config_.depth; ++l) {
    const auto c = config_.channels_at(l);
    add_conv("enc" + std::to_string(l) + ".conv1", cin, c, 3);
    add_conv("enc" + std::to_string(l) + ".conv2", c, c, 3);
    cin = c;
  }
  const auto cb = config_.channels_at(config_.depth);
  add_conv("bottleneck.conv1", cin, cb, 3);
  add_conv("bottleneck.conv2", cb, cb, 3);
  for (int l = config_.depth - 1; l >= 0; --l) {
    const auto c = config_.channels_at(l);
    add_conv("dec" + std::to_string(l) + ".conv1", config_.channels_at(l + 1) + c, c, 3);
    add_conv("dec" + std::to_string(l) + ".conv2", c, c, 3);
  }

  if (stage_ == Stage::Building) {
    add_conv("head.building", config_.channels_at(0), config_.num_classes_stage1, 1);
  } else {
    add_conv("head.damage", config_.channels_at(0), config_.num_classes_stage2, 1);
    for (int level : config_.fusion_levels()) {
      auto rng = Rng::stream(seed, name_hash("cdf" + std::to_string(level)));
      auto fp = FusionParams<float>::initialized(config_.channels_at(level), rng);
      for (auto& [name, t] : fp.named(level)) params_.add(name, t);
      fusions_.emplace(level, std::move(fp));
    }
  }
}

int UNetModel::num_classes() const {
  return stage_ == Stage::Building ? config_.num_classes_stage1 : config_.num_classes_stage2;
}

std::int64_t UNetModel::backbone_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_.entries())
    if (is_backbone_name(name)) n += static_cast<std::int64_t>(t.numel());
  return n;
}

std::int64_t UNetModel::head_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_.entries())
    if (starts_with(name, "head.")) n += static_cast<std::int64_t>(t.numel());
  return n;
}

std::int64_t UNetModel::fusion_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_.entries())
    if (starts_with(name, "cdf")) n += static_cast<std::int64_t>(t.numel());
  return n;
}

Tensor<float> UNetModel::conv_relu(Tape<float>& tape, const Tensor<float>& x, const std::string& prefix) const {
  return relu(tape, conv2d(tape, x, params_.get(prefix + ".w"), params_.get(prefix + ".b")));
}

EncoderFeatures UNetModel::encode(Tape<float>& tape, const Tensor<float>& image) const {
  if (image.rank() != 3 || image.dim(0) != config_.in_channels)
    throw ShapeError("unet: expected a [" + std::to_string(config_.in_channels) + ",H,W] image, got " +
                     shape_to_string(image.shape()));
  config_.check_input_size(image.dim(1), image.dim(2));
  EncoderFeatures out;
  Tensor<float> x = image;
  for (int l = 0; l < config_.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = conv_relu(tape, conv_relu(tape, x, p + ".conv1"), p + ".conv2");
    out.skips.push_back(x);
    x = max_pool2x2(tape, x);
  }
  out.bottleneck = conv_relu(tape, conv_relu(tape, x, "bottleneck.conv1"), "bottleneck.conv2");
  return out;
}

Tensor<float> UNetModel::decode(Tape<float>& tape, Tensor<float> x, const std::vector<Tensor<float>>& skips) const {
  for (int l = config_.depth - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    x = concat_channels(tape, upsample_nearest2x(tape, x), skips[static_cast<std::size_t>(l)]);
    x = conv_relu(tape, conv_relu(tape, x, p + ".conv1"), p + ".conv2");
  }
  const std::string head = stage_ == Stage::Building ? "head.building" : "head.damage";
  return conv2d(tape, x, params_.get(head + ".w"), params_.get(head + ".b"));
}

Tensor<float> UNetModel::forward(Tape<float>& tape, const Tensor<float>& image) const {
  if (stage_ != Stage::Building) throw std::logic_error("single-image forward is the stage-1 path");
  auto enc = encode(tape, image);
  return decode(tape, enc.bottleneck, enc.skips);
}

Tensor<float> UNetModel::forward(Tape<float>& tape, const Tensor<float>& pre, const Tensor<float>& post,
                                 Stage2Trace* trace) const {
  if (stage_ != Stage::Damage) throw std::logic_error("paired forward is the stage-2 path");
  if (pre.shape() != post.shape())
    throw ShapeError("unet: pre " + shape_to_string(pre.shape()) + " and post " + shape_to_string(post.shape()) +
                     " differ");
  auto enc_pre = encode(tape, pre);
  auto enc_post = encode(tape, post);

  auto fuse = [&](int level, const Tensor<float>& a, const Tensor<float>& b) -> Tensor<float> {
    auto it = fusions_.find(level);
    if (it == fusions_.end()) return b;
    auto io = cdf_block(tape, a, b, it->second);
    auto out = io.u_post_spa;
    if (trace) trace->fusions.emplace(level, std::move(io));
    return out;
  };

  const auto bottom = fuse(config_.depth, enc_pre.bottleneck, enc_post.bottleneck);
  std::vector<Tensor<float>> skips;
  for (int l = 0; l < config_.depth; ++l)
    skips.push_back(fuse(l, enc_pre.skips[static_cast<std::size_t>(l)], enc_post.skips[static_cast<std::size_t>(l)]));
  if (trace) {
    trace->pre = enc_pre;
    trace->post = enc_post;
  }
  return decode(tape, bottom, skips);
}

void UNetModel::load_state(const std::vector<NamedTensor>& tensors) {
  std::set<std::string> seen;
  for (const auto& [name, t] : tensors) {
    if (!params_.contains(name)) throw CheckpointError("checkpoint tensor " + name + " is not a model parameter");
    auto& dst = params_.get(name);
    if (dst.shape() != t.shape())
      throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_to_string(t.shape()) +
                            ", model expects " + shape_to_string(dst.shape()));
    std::copy(t.data().begin(), t.data().end(), dst.data().begin());
    seen.insert(name);
  }
  for (const auto& [name, t] : params_.entries())
    if (!seen.count(name)) throw CheckpointError("checkpoint is missing parameter " + name);
}

nlohmann::json TransferManifest::to_json() const {
  return {{"copied", copied}, {"fresh", fresh}, {"unused", unused}};
}

TransferManifest transfer_stage1_weights(const std::vector<NamedTensor>& stage1, UNetModel& stage2) {
  if (stage2.stage() != Stage::Damage) throw std::invalid_argument("transfer target must be a stage-2 model");
  TransferManifest manifest;
  std::set<std::string> available;
  for (const auto& [name, t] : stage1) {
    if (!stage2.params().contains(name)) {
      manifest.unused.push_back(name);
      continue;
    }
    auto& dst = stage2.params().get(name);
    if (dst.shape() != t.shape())
      throw CheckpointError("transfer: " + name + " is " + shape_to_string(t.shape()) + " in the stage-1 checkpoint but " +
                            shape_to_string(dst.shape()) + " in the stage-2 model");
    std::copy(t.data().begin(), t.data().end(), dst.data().begin());
    manifest.copied.push_back(name);
    available.insert(name);
  }
  for (const auto& [name, t] : stage2.params().entries()) {
    if (available.count(name)) continue;
    if (UNetModel::is_backbone_name(name))
      throw CheckpointError("transfer: stage-1 checkpoint lacks backbone tensor " + name);
    manifest.fresh.push_back(name);
  }
  return manifest;
}

}  // namespace cdfnet
