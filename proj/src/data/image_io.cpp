#include "cdfnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace cdfnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw ImageIoError("write_png: unsupported channel count " + std::to_string(image.channels));
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw ImageIoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(image.width * image.channels);
  for (std::int64_t r = 0; r < image.height; ++r)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(r) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw ImageIoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw ImageIoError(path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  Image8 image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.channels = png_get_channels(png, info);
  image.pixels.resize(static_cast<std::size_t>(image.width * image.height * image.channels));
  const auto stride = static_cast<std::size_t>(image.width * image.channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (std::int64_t r = 0; r < image.height; ++r)
    rows[static_cast<std::size_t>(r)] = image.pixels.data() + static_cast<std::size_t>(r) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

Image8 to_image(const Tensor<float>& chw) {
  if (chw.rank() != 3) throw ImageIoError("to_image expects [c,H,W], got " + shape_to_string(chw.shape()));
  const auto c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Image8 img(w, h, static_cast<int>(c));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t x = 0; x < w; ++x) img.at(r, x)[ch] = to_byte(chw.at(ch, r, x));
  return img;
}

Tensor<float> from_image(const Image8& image) {
  auto t = Tensor<float>::zeros({image.channels, image.height, image.width});
  for (int ch = 0; ch < image.channels; ++ch)
    for (std::int64_t r = 0; r < image.height; ++r)
      for (std::int64_t x = 0; x < image.width; ++x) t.at(ch, r, x) = static_cast<float>(image.at(r, x)[ch]) / 255.0f;
  return t;
}

Image8 mask_to_image(const DamageMask& mask) {
  Image8 img(mask.width, mask.height, 1);
  img.pixels = mask.labels;
  return img;
}

DamageMask mask_from_image(const Image8& image) {
  if (image.channels != 1)
    throw ImageIoError("damage masks must be single-channel, got " + std::to_string(image.channels) + " channels");
  DamageMask m(image.height, image.width);
  m.labels = image.pixels;
  return m;
}

void quantize_to_8bit(Tensor<float>& chw) {
  for (auto& v : chw.data()) v = static_cast<float>(to_byte(v)) / 255.0f;
}

}  // namespace cdfnet
