#include "cdfnet/data.hpp"

namespace cdfnet {

SamplePair crop_and_augment(const SamplePair& pair, std::int64_t crop, const AugmentFlags& flags, Rng& rng) {
  pair.validate();
  const std::int64_t h = pair.height(), w = pair.width();
  if (crop <= 0 || crop > h || crop > w)
    throw std::invalid_argument("crop " + std::to_string(crop) + " does not fit a " + std::to_string(h) + "x" +
                                std::to_string(w) + " tile");

  // The draw sequence is fixed regardless of flags so that toggling an
  // augmentation does not shift the crop positions of later samples.
  const std::int64_t top = rng.between(0, h - crop);
  const std::int64_t left = rng.between(0, w - crop);
  const bool hflip = rng.bernoulli(0.5) && flags.flip;
  const bool vflip = rng.bernoulli(0.5) && flags.flip;
  const int quarter_turns = static_cast<int>(rng.below(4)) * (flags.rotate ? 1 : 0);

  // Maps an output coordinate back to the crop-local source coordinate.
  const std::int64_t last = crop - 1;
  auto source = [&](std::int64_t r, std::int64_t c) {
    for (int k = 0; k < quarter_turns; ++k) {  // undo one counter-clockwise turn
      const std::int64_t nr = c;
      const std::int64_t nc = last - r;
      r = nr;
      c = nc;
    }
    if (vflip) r = last - r;
    if (hflip) c = last - c;
    return std::pair{top + r, left + c};
  };

  const std::int64_t channels = pair.channels();
  SamplePair out;
  out.id = pair.id;
  out.pre = Tensor<float>::zeros({channels, crop, crop});
  out.post = Tensor<float>::zeros({channels, crop, crop});
  out.mask = DamageMask(crop, crop);
  for (std::int64_t r = 0; r < crop; ++r)
    for (std::int64_t c = 0; c < crop; ++c) {
      const auto [sr, sc] = source(r, c);
      for (std::int64_t ch = 0; ch < channels; ++ch) {
        out.pre.at(ch, r, c) = pair.pre.at(ch, sr, sc);
        out.post.at(ch, r, c) = pair.post.at(ch, sr, sc);
      }
      out.mask.at(r, c) = pair.mask.at(sr, sc);
    }
  return out;
}

}  // namespace cdfnet
