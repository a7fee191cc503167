#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdfnet/cutmix.hpp"
#include "cdfnet/image_io.hpp"
#include "cdfnet/sample.hpp"

namespace cdfnet {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Background, no damage, minor, major, destroyed.
inline constexpr std::array<Rgb, kNumClasses> kDamagePalette{{
    {0x00, 0x00, 0x00},
    {0x00, 0xB0, 0x50},
    {0xFF, 0xD5, 0x00},
    {0xFF, 0x8C, 0x00},
    {0xE0, 0x00, 0x00},
}};

/// Canvas colour between panels; never a palette colour.
inline constexpr Rgb kGapColor{0x80, 0x80, 0x80};
inline constexpr int kPanelGap = 4;

class RenderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws RenderError on a class id outside 0..4 (ignored pixels included).
Image8 colorize_mask(const DamageMask& mask);
/// Inverse of colorize_mask. Throws RenderError on a non-palette colour.
DamageMask decode_colors(const Image8& rgb);

/// Pixel region of the composed canvas, same conventions as Box.
struct Layout {
  Image8 canvas;
  std::vector<Box> panels;
  std::vector<Box> swatches;  // legend, in class order
};

/// Places RGB panels left to right with a kPanelGap border, in rows of
/// `per_row` (0 = one row), and appends a legend strip of five swatches.
Layout compose_panels(std::span<const Image8> panels, int per_row = 0);

/// Crops `box` out of a canvas.
Image8 crop(const Image8& canvas, const Box& box);

/// Single channel or RGB image as RGB.
Image8 as_rgb(const Image8& image);

/// Optional pre and post images followed by one colourised panel per mask.
/// All inputs must share their height and width.
Layout render_masks(std::span<const DamageMask> masks, const Image8* pre = nullptr, const Image8* post = nullptr);

/// One row per sample: pre, post, mask, then the mixed pre, post, mask. Rows
/// whose sample was not mixed repeat the original.
struct PreviewRow {
  SamplePair original;
  SamplePair mixed;
  std::optional<Box> box;
};

/// Mixes n recipients drawn from `samples`, forcing probability 1 so every row
/// with a donor shows a paste. Deterministic in `seed`.
std::vector<PreviewRow> augment_preview_rows(std::span<const SamplePair> samples, const CutMixPolicy& policy, int n,
                                             std::uint64_t seed);
Layout render_preview(std::span<const PreviewRow> rows);

}  // namespace cdfnet
