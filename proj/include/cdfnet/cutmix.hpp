#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "cdfnet/rng.hpp"
#include "cdfnet/sample.hpp"

namespace cdfnet {

/// Axis-aligned half-open pixel rectangle [top, top+height) x [left, left+width).
struct Box {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  bool contains(std::int64_t r, std::int64_t c) const {
    return r >= top && r < top + height && c >= left && c < left + width;
  }
  std::int64_t area() const { return height * width; }
  bool operator==(const Box&) const = default;
};

/// M in {0,1}^{HxW}: 1 keeps the recipient pixel, 0 takes the donor pixel.
struct BinaryMask {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> keep;
  std::optional<Box> box;  // the zero region when built from a single box

  static BinaryMask ones(std::int64_t h, std::int64_t w);
  static BinaryMask zeros(std::int64_t h, std::int64_t w);
  static BinaryMask from_box(std::int64_t h, std::int64_t w, const Box& box);

  std::uint8_t at(std::int64_t r, std::int64_t c) const { return keep[static_cast<std::size_t>(r * width + c)]; }
};

struct CutMixPolicy {
  std::set<std::uint8_t> target_classes{2, 3};
  double probability = 0.5;
  double box_fraction_lo = 0.2;
  double box_fraction_hi = 0.5;
  double min_hard_fraction = 0.01;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an empty or out-of-range target set,
  /// probability outside [0,1], or a box range not within 0 <= lo <= hi <= 1.
  void validate() const;
  bool is_target(std::uint8_t label) const { return target_classes.count(label) != 0; }
};

inline constexpr int kBoxAttempts = 10;

/// Draws a square cut box centred on a random target-class pixel of the donor.
/// The side is uniform in [lo,hi]*min(H,W); a box that would cross the border
/// is shifted inside so its area is never truncated. A box is accepted when the
/// fraction of its pixels in the target classes reaches min_hard_fraction.
/// Returns nullopt if the donor has no target pixels or 10 draws all fail.
std::optional<BinaryMask> sample_box(const DamageMask& donor_mask, const CutMixPolicy& policy, Rng& rng);

/// Pixelwise M*A + (1-M)*B over the pre image, post image and label, with the
/// same M for all three planes.
SamplePair apply_cutmix(const SamplePair& recipient, const SamplePair& donor, const BinaryMask& mask);

/// Samples whose masks contain at least one pixel of the policy's target classes.
std::vector<std::size_t> donor_indices(std::span<const SamplePair> samples, const CutMixPolicy& policy);

/// Mixes each batch element independently with probability policy.probability,
/// using a donor drawn uniformly from donor_pool. Element i draws from the
/// stream Rng::derive(seed, i), so results do not depend on batch order or
/// threading. Donors must share the batch's spatial size.
std::vector<SamplePair> augment_batch(std::span<const SamplePair> batch, std::span<const SamplePair> donor_pool,
                                      const CutMixPolicy& policy, std::uint64_t seed);

}  // namespace cdfnet
