#pragma once

#include <cstdint>
#include <vector>

#include "cdfnet/sample.hpp"
#include "cdfnet/unet.hpp"

namespace cdfnet {

struct TilingOptions {
  std::int64_t crop = 64;
  std::int64_t overlap = 0;
};

/// Tile origins along one axis: 0, stride, 2*stride, ... with the last tile
/// flush against the far edge. An axis shorter than the crop gets one tile.
std::vector<std::int64_t> tile_starts(std::int64_t size, std::int64_t crop, std::int64_t overlap);

/// Full-size logits assembled from crop-sized tiles. Tiles that extend past the
/// image are zero padded and the padding is dropped; logits are averaged where
/// tiles overlap. `post` must be given for stage-2 models and omitted for stage 1.
Tensor<float> predict_logits(const UNetModel& model, const Tensor<float>& pre, const Tensor<float>* post,
                             const TilingOptions& tiling);

/// Per-pixel argmax over the class axis; ties go to the lower class id.
DamageMask argmax_classes(const Tensor<float>& logits);

/// Stage-1 building mask in {0,1} from a pre-disaster image.
DamageMask predict_buildings(const UNetModel& model, const Tensor<float>& pre, const TilingOptions& tiling);

/// Stage-2 damage mask in {0..4} from a pre/post pair.
DamageMask predict_damage(const UNetModel& model, const Tensor<float>& pre, const Tensor<float>& post,
                          const TilingOptions& tiling);

}  // namespace cdfnet
