#include "cdfnet/render.hpp"

#include <algorithm>
#include <string>

namespace cdfnet {

Image8 colorize_mask(const DamageMask& mask) {
  Image8 out(mask.width, mask.height, 3);
  for (std::int64_t r = 0; r < mask.height; ++r)
    for (std::int64_t c = 0; c < mask.width; ++c) {
      const auto id = mask.at(r, c);
      if (id >= kNumClasses)
        throw RenderError("render: class id " + std::to_string(id) + " at (" + std::to_string(r) + "," +
                          std::to_string(c) + ") has no colour");
      const auto& col = kDamagePalette[id];
      auto* px = out.at(r, c);
      px[0] = col.r;
      px[1] = col.g;
      px[2] = col.b;
    }
  return out;
}

DamageMask decode_colors(const Image8& rgb) {
  if (rgb.channels != 3) throw RenderError("decode: expected an RGB image");
  DamageMask out(rgb.height, rgb.width);
  for (std::int64_t r = 0; r < rgb.height; ++r)
    for (std::int64_t c = 0; c < rgb.width; ++c) {
      const auto* px = rgb.at(r, c);
      const Rgb col{px[0], px[1], px[2]};
      const auto it = std::find(kDamagePalette.begin(), kDamagePalette.end(), col);
      if (it == kDamagePalette.end())
        throw RenderError("decode: pixel (" + std::to_string(r) + "," + std::to_string(c) + ") is not a palette colour");
      out.at(r, c) = static_cast<std::uint8_t>(it - kDamagePalette.begin());
    }
  return out;
}

Image8 as_rgb(const Image8& image) {
  if (image.channels == 3) return image;
  if (image.channels != 1) throw RenderError("render: expected a grey or RGB image");
  Image8 out(image.width, image.height, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i), 3, image.pixels[i]);
  return out;
}

namespace {

void fill(Image8& canvas, const Box& box, Rgb col) {
  for (std::int64_t r = box.top; r < box.top + box.height; ++r)
    for (std::int64_t c = box.left; c < box.left + box.width; ++c) {
      auto* px = canvas.at(r, c);
      px[0] = col.r;
      px[1] = col.g;
      px[2] = col.b;
    }
}

void blit(Image8& canvas, const Image8& src, std::int64_t top, std::int64_t left) {
  for (std::int64_t r = 0; r < src.height; ++r)
    std::copy_n(src.at(r, 0), src.width * 3, canvas.at(top + r, left));
}

}  // namespace

Layout compose_panels(std::span<const Image8> panels, int per_row) {
  if (panels.empty()) throw RenderError("render: nothing to draw");
  const std::int64_t h = panels[0].height, w = panels[0].width;
  for (const auto& p : panels) {
    if (p.height != h || p.width != w)
      throw RenderError("render: panels differ in size (" + std::to_string(p.height) + "x" + std::to_string(p.width) +
                        " vs " + std::to_string(h) + "x" + std::to_string(w) + ")");
    if (p.channels != 3) throw RenderError("render: panels must be RGB");
  }
  const auto n = static_cast<std::int64_t>(panels.size());
  const std::int64_t cols = per_row > 0 ? std::min<std::int64_t>(per_row, n) : n;
  const std::int64_t rows = (n + cols - 1) / cols;
  const std::int64_t swatch = std::clamp<std::int64_t>(h / 4, 8, 24);

  const std::int64_t width = std::max(cols * (w + kPanelGap) + kPanelGap, kNumClasses * (swatch + kPanelGap) + kPanelGap);
  const std::int64_t height = rows * (h + kPanelGap) + kPanelGap + swatch + kPanelGap;

  Layout out;
  out.canvas = Image8(width, height, 3);
  fill(out.canvas, Box{0, 0, height, width}, kGapColor);
  for (std::int64_t i = 0; i < n; ++i) {
    const Box box{kPanelGap + (i / cols) * (h + kPanelGap), kPanelGap + (i % cols) * (w + kPanelGap), h, w};
    blit(out.canvas, panels[static_cast<std::size_t>(i)], box.top, box.left);
    out.panels.push_back(box);
  }
  const std::int64_t legend_top = rows * (h + kPanelGap) + kPanelGap;
  for (int k = 0; k < kNumClasses; ++k) {
    const Box box{legend_top, kPanelGap + k * (swatch + kPanelGap), swatch, swatch};
    fill(out.canvas, box, kDamagePalette[static_cast<std::size_t>(k)]);
    out.swatches.push_back(box);
  }
  return out;
}

Image8 crop(const Image8& canvas, const Box& box) {
  if (box.top < 0 || box.left < 0 || box.top + box.height > canvas.height || box.left + box.width > canvas.width)
    throw RenderError("crop: box lies outside the canvas");
  Image8 out(box.width, box.height, canvas.channels);
  for (std::int64_t r = 0; r < box.height; ++r)
    std::copy_n(canvas.at(box.top + r, box.left), box.width * canvas.channels, out.at(r, 0));
  return out;
}

Layout render_masks(std::span<const DamageMask> masks, const Image8* pre, const Image8* post) {
  std::vector<Image8> panels;
  if (pre) panels.push_back(as_rgb(*pre));
  if (post) panels.push_back(as_rgb(*post));
  for (const auto& m : masks) panels.push_back(colorize_mask(m));
  return compose_panels(panels);
}

std::vector<PreviewRow> augment_preview_rows(std::span<const SamplePair> samples, const CutMixPolicy& policy, int n,
                                             std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("augment-preview: dataset is empty");
  if (n < 1) throw std::invalid_argument("augment-preview: n must be >= 1");
  CutMixPolicy forced = policy;
  forced.probability = 1.0;
  forced.validate();
  const auto donors = donor_indices(samples, forced);

  std::vector<PreviewRow> rows;
  auto pick = Rng::stream(seed, 0);
  for (int i = 0; i < n; ++i) {
    const auto& recipient = samples[pick.below(samples.size())];
    PreviewRow row{recipient.deep_copy(), recipient.deep_copy(), std::nullopt};
    std::vector<std::size_t> pool;
    for (auto d : donors)
      if (samples[d].id != recipient.id && samples[d].height() == recipient.height() &&
          samples[d].width() == recipient.width())
        pool.push_back(d);
    if (!pool.empty()) {
      auto rng = Rng::stream(seed, 1 + static_cast<std::uint64_t>(i));
      const auto& donor = samples[pool[rng.below(pool.size())]];
      if (auto mask = sample_box(donor.mask, forced, rng)) {
        row.mixed = apply_cutmix(recipient, donor, *mask);
        row.box = mask->box;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Layout render_preview(std::span<const PreviewRow> rows) {
  std::vector<Image8> panels;
  for (const auto& row : rows)
    for (const auto* s : {&row.original, &row.mixed}) {
      panels.push_back(as_rgb(to_image(s->pre)));
      panels.push_back(as_rgb(to_image(s->post)));
      panels.push_back(colorize_mask(s->mask));
    }
  return compose_panels(panels, 6);
}

}  // namespace cdfnet
