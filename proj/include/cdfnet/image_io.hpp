#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cdfnet/sample.hpp"
#include "cdfnet/tensor.hpp"

namespace cdfnet {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit raster (HWC), 1 or 3 channels.
struct Image8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::int64_t w, std::int64_t h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w * h * c), fill) {}

  std::uint8_t* at(std::int64_t r, std::int64_t c) {
    return pixels.data() + static_cast<std::size_t>((r * width + c) * channels);
  }
  const std::uint8_t* at(std::int64_t r, std::int64_t c) const {
    return pixels.data() + static_cast<std::size_t>((r * width + c) * channels);
  }
  bool operator==(const Image8&) const = default;
};

void write_png(const std::filesystem::path& path, const Image8& image);
/// Grey and RGB files load as 1 and 3 channels; alpha is dropped and palette
/// images are expanded to RGB.
Image8 read_png(const std::filesystem::path& path);

/// [c,H,W] float in [0,1] -> HWC bytes, rounding to the nearest level.
Image8 to_image(const Tensor<float>& chw);
Tensor<float> from_image(const Image8& image);

Image8 mask_to_image(const DamageMask& mask);
DamageMask mask_from_image(const Image8& image);

/// Rounds every value to the nearest multiple of 1/255 so that an in-memory
/// image equals what a PNG round trip yields.
void quantize_to_8bit(Tensor<float>& chw);

}  // namespace cdfnet
