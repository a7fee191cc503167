#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdfnet/ops.hpp"
#include "cdfnet/tensor.hpp"

namespace cdfnet {

inline constexpr int kNumClasses = 5;

enum class DamageClass : std::uint8_t {
  Background = 0,
  NoDamage = 1,
  Minor = 2,
  Major = 3,
  Destroyed = 4,
};

/// Per-pixel class ids in {0..4}, or kIgnoreLabel for unscored pixels.
struct DamageMask {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> labels;

  DamageMask() = default;
  DamageMask(std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h * w), fill) {}

  std::uint8_t& at(std::int64_t r, std::int64_t c) { return labels[static_cast<std::size_t>(r * width + c)]; }
  std::uint8_t at(std::int64_t r, std::int64_t c) const { return labels[static_cast<std::size_t>(r * width + c)]; }

  /// Throws std::invalid_argument if any value is outside {0..4, 255}.
  void validate() const;

  std::array<std::int64_t, kNumClasses> class_counts() const;

  bool operator==(const DamageMask&) const = default;
};

/// Co-registered pre-disaster image, post-disaster image and damage label.
/// Images are [c,H,W] with values in [0,1].
struct SamplePair {
  std::string id;
  Tensor<float> pre;
  Tensor<float> post;
  DamageMask mask;

  std::int64_t height() const { return mask.height; }
  std::int64_t width() const { return mask.width; }
  std::int64_t channels() const { return pre.dim(0); }

  /// Throws std::invalid_argument when the three planes disagree on geometry.
  void validate() const;

  SamplePair deep_copy() const { return SamplePair{id, pre.clone(), post.clone(), mask}; }
};

/// Plane-wise equality of pixel data, ignoring id.
bool same_pixels(const SamplePair& a, const SamplePair& b);

}  // namespace cdfnet
