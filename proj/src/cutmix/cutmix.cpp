#include "cdfnet/cutmix.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace cdfnet {

BinaryMask BinaryMask::ones(std::int64_t h, std::int64_t w) {
  return BinaryMask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 1), std::nullopt};
}

BinaryMask BinaryMask::zeros(std::int64_t h, std::int64_t w) {
  return BinaryMask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0), Box{0, 0, h, w}};
}

BinaryMask BinaryMask::from_box(std::int64_t h, std::int64_t w, const Box& box) {
  auto m = ones(h, w);
  for (std::int64_t r = box.top; r < box.top + box.height; ++r)
    for (std::int64_t c = box.left; c < box.left + box.width; ++c) m.keep[static_cast<std::size_t>(r * w + c)] = 0;
  m.box = box;
  return m;
}

void CutMixPolicy::validate() const {
  if (target_classes.empty()) throw std::invalid_argument("cutmix policy: target_classes must not be empty");
  for (auto c : target_classes)
    if (c < 1 || c > 4) throw std::invalid_argument("cutmix policy: target class " + std::to_string(c) + " not in 1..4");
  if (!(probability >= 0.0 && probability <= 1.0))
    throw std::invalid_argument("cutmix policy: probability must lie in [0,1]");
  if (!(box_fraction_lo >= 0.0 && box_fraction_lo <= box_fraction_hi && box_fraction_hi <= 1.0))
    throw std::invalid_argument("cutmix policy: box fraction range must satisfy 0 <= lo <= hi <= 1");
  if (!(min_hard_fraction >= 0.0 && min_hard_fraction <= 1.0))
    throw std::invalid_argument("cutmix policy: min_hard_fraction must lie in [0,1]");
}

std::optional<BinaryMask> sample_box(const DamageMask& donor_mask, const CutMixPolicy& policy, Rng& rng) {
  policy.validate();
  std::vector<std::size_t> hard;
  for (std::size_t i = 0; i < donor_mask.labels.size(); ++i)
    if (policy.is_target(donor_mask.labels[i])) hard.push_back(i);
  if (hard.empty()) return std::nullopt;

  const std::int64_t h = donor_mask.height, w = donor_mask.width;
  const std::int64_t short_side = std::min(h, w);
  for (int attempt = 0; attempt < kBoxAttempts; ++attempt) {
    const auto centre = hard[rng.below(hard.size())];
    const std::int64_t cr = static_cast<std::int64_t>(centre) / w;
    const std::int64_t cc = static_cast<std::int64_t>(centre) % w;
    const double frac = rng.uniform(policy.box_fraction_lo, policy.box_fraction_hi);
    const std::int64_t side =
        std::clamp<std::int64_t>(std::llround(frac * static_cast<double>(short_side)), 1, short_side);
    const std::int64_t top = std::clamp<std::int64_t>(cr - side / 2, 0, h - side);
    const std::int64_t left = std::clamp<std::int64_t>(cc - side / 2, 0, w - side);
    const Box box{top, left, side, side};

    std::int64_t inside = 0;
    for (std::int64_t r = top; r < top + side; ++r)
      for (std::int64_t c = left; c < left + side; ++c) inside += policy.is_target(donor_mask.at(r, c)) ? 1 : 0;
    if (static_cast<double>(inside) >= policy.min_hard_fraction * static_cast<double>(box.area()))
      return BinaryMask::from_box(h, w, box);
  }
  return std::nullopt;
}

SamplePair apply_cutmix(const SamplePair& recipient, const SamplePair& donor, const BinaryMask& mask) {
  recipient.validate();
  donor.validate();
  if (recipient.pre.shape() != donor.pre.shape())
    throw std::invalid_argument("apply_cutmix: recipient " + shape_to_string(recipient.pre.shape()) +
                                " and donor " + shape_to_string(donor.pre.shape()) + " differ");
  if (mask.height != recipient.height() || mask.width != recipient.width())
    throw std::invalid_argument("apply_cutmix: mask is " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width) + " but samples are " +
                                std::to_string(recipient.height()) + "x" + std::to_string(recipient.width()));

  SamplePair out = recipient.deep_copy();
  out.id = recipient.id + "+cutmix:" + donor.id;
  const std::int64_t hw = mask.height * mask.width;
  const std::int64_t channels = recipient.channels();
  for (std::int64_t i = 0; i < hw; ++i) {
    if (mask.keep[static_cast<std::size_t>(i)]) continue;
    for (std::int64_t c = 0; c < channels; ++c) {
      const auto idx = static_cast<std::size_t>(c * hw + i);
      out.pre.data()[idx] = donor.pre.data()[idx];
      out.post.data()[idx] = donor.post.data()[idx];
    }
    out.mask.labels[static_cast<std::size_t>(i)] = donor.mask.labels[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<std::size_t> donor_indices(std::span<const SamplePair> samples, const CutMixPolicy& policy) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& labels = samples[i].mask.labels;
    if (std::any_of(labels.begin(), labels.end(), [&](std::uint8_t v) { return policy.is_target(v); }))
      out.push_back(i);
  }
  return out;
}

std::vector<SamplePair> augment_batch(std::span<const SamplePair> batch, std::span<const SamplePair> donor_pool,
                                      const CutMixPolicy& policy, std::uint64_t seed) {
  policy.validate();
  std::vector<SamplePair> out;
  out.reserve(batch.size());
  if (donor_pool.empty()) {
    if (!batch.empty() && policy.probability > 0.0)
      std::clog << "[cutmix] donor pool is empty; batch of " << batch.size() << " passes through unchanged\n";
    for (const auto& s : batch) out.push_back(s.deep_copy());
    return out;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto rng = Rng::stream(seed, i);
    if (!rng.bernoulli(policy.probability)) {
      out.push_back(batch[i].deep_copy());
      continue;
    }
    const auto& donor = donor_pool[rng.below(donor_pool.size())];
    auto mask = sample_box(donor.mask, policy, rng);
    out.push_back(mask ? apply_cutmix(batch[i], donor, *mask) : batch[i].deep_copy());
  }
  return out;
}

}  // namespace cdfnet
