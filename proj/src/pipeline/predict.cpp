#include "cdfnet/predict.hpp"

#include <algorithm>

namespace cdfnet {

std::vector<std::int64_t> tile_starts(std::int64_t size, std::int64_t crop, std::int64_t overlap) {
  if (crop <= 0) throw std::invalid_argument("tiling: crop must be positive");
  if (overlap < 0 || overlap >= crop) throw std::invalid_argument("tiling: overlap must lie in [0, crop)");
  if (size <= crop) return {0};
  std::vector<std::int64_t> starts;
  const std::int64_t stride = crop - overlap;
  for (std::int64_t s = 0; s + crop < size; s += stride) starts.push_back(s);
  starts.push_back(size - crop);
  return starts;
}

namespace {

Tensor<float> extract_tile(const Tensor<float>& image, std::int64_t top, std::int64_t left, std::int64_t crop) {
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto tile = Tensor<float>::zeros({c, crop, crop});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t r = 0; r < crop && top + r < h; ++r)
      for (std::int64_t x = 0; x < crop && left + x < w; ++x) tile.at(ch, r, x) = image.at(ch, top + r, left + x);
  return tile;
}

}  // namespace

Tensor<float> predict_logits(const UNetModel& model, const Tensor<float>& pre, const Tensor<float>* post,
                             const TilingOptions& tiling) {
  const auto& cfg = model.config();
  if (pre.rank() != 3 || pre.dim(0) != cfg.in_channels)
    throw ShapeError("predict: model expects " + std::to_string(cfg.in_channels) + "-channel images, got " +
                     shape_to_string(pre.shape()));
  const bool paired = model.stage() == Stage::Damage;
  if (paired && !post) throw std::invalid_argument("predict: stage-2 model needs a post-disaster image");
  if (paired && post->shape() != pre.shape())
    throw ShapeError("predict: pre " + shape_to_string(pre.shape()) + " and post " + shape_to_string(post->shape()) +
                     " differ");
  cfg.check_input_size(tiling.crop, tiling.crop);

  const std::int64_t h = pre.dim(1), w = pre.dim(2), k = model.num_classes();
  std::vector<float> acc(static_cast<std::size_t>(k * h * w), 0.0f);
  std::vector<float> hits(static_cast<std::size_t>(h * w), 0.0f);
  Tape<float> tape(false);
  for (auto top : tile_starts(h, tiling.crop, tiling.overlap))
    for (auto left : tile_starts(w, tiling.crop, tiling.overlap)) {
      const auto pre_tile = extract_tile(pre, top, left, tiling.crop);
      const auto logits = paired ? model.forward(tape, pre_tile, extract_tile(*post, top, left, tiling.crop))
                                 : model.forward(tape, pre_tile);
      for (std::int64_t r = 0; r < tiling.crop && top + r < h; ++r)
        for (std::int64_t x = 0; x < tiling.crop && left + x < w; ++x) {
          const auto pix = static_cast<std::size_t>((top + r) * w + left + x);
          hits[pix] += 1.0f;
          for (std::int64_t c = 0; c < k; ++c) acc[static_cast<std::size_t>(c * h * w) + pix] += logits.at(c, r, x);
        }
    }
  for (std::int64_t c = 0; c < k; ++c)
    for (std::int64_t p = 0; p < h * w; ++p) acc[static_cast<std::size_t>(c * h * w + p)] /= hits[static_cast<std::size_t>(p)];
  return Tensor<float>({k, h, w}, std::move(acc));
}

DamageMask argmax_classes(const Tensor<float>& logits) {
  const std::int64_t k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  DamageMask out(h, w);
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t x = 0; x < w; ++x) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < k; ++c)
        if (logits.at(c, r, x) > logits.at(best, r, x)) best = c;
      out.at(r, x) = static_cast<std::uint8_t>(best);
    }
  return out;
}

DamageMask predict_buildings(const UNetModel& model, const Tensor<float>& pre, const TilingOptions& tiling) {
  if (model.stage() != Stage::Building) throw std::invalid_argument("predict_buildings needs a stage-1 model");
  return argmax_classes(predict_logits(model, pre, nullptr, tiling));
}

DamageMask predict_damage(const UNetModel& model, const Tensor<float>& pre, const Tensor<float>& post,
                          const TilingOptions& tiling) {
  if (model.stage() != Stage::Damage) throw std::invalid_argument("predict_damage needs a stage-2 model");
  return argmax_classes(predict_logits(model, pre, &post, tiling));
}

}  // namespace cdfnet
