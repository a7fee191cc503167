#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cdfnet/data.hpp"
#include "cdfnet/image_io.hpp"

namespace cdfnet {

std::array<double, 4> xbd_damage_distribution() {
  const double total = std::accumulate(kXbdDamageCounts.begin(), kXbdDamageCounts.end(), 0.0);
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = kXbdDamageCounts[i] / total;
  return out;
}

void SynthConfig::validate() const {
  if (num_pairs < 0) throw std::invalid_argument("synth: num_pairs must be >= 0");
  if (channels != 3) throw std::invalid_argument("synth: only 3-channel images are generated");
  if (min_buildings < 1 || max_buildings < min_buildings)
    throw std::invalid_argument("synth: building count range must satisfy 1 <= min <= max");
  if (min_building_side < 2 || max_building_side < min_building_side)
    throw std::invalid_argument("synth: building side range must satisfy 2 <= min <= max");
  if (image_size < max_building_side + 2)
    throw std::invalid_argument("synth: image_size " + std::to_string(image_size) +
                                " is too small for buildings up to " + std::to_string(max_building_side) + " px");
  const double needed = static_cast<double>(min_buildings) * (min_building_side + 1) * (min_building_side + 1);
  if (needed > 0.5 * image_size * image_size)
    throw std::invalid_argument("synth: image_size " + std::to_string(image_size) + " cannot hold " +
                                std::to_string(min_buildings) + " buildings");
  double total = 0.0;
  for (double p : damage_distribution) {
    if (p < 0.0) throw std::invalid_argument("synth: damage distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("synth: damage distribution must sum to 1");
}

namespace {

struct Rect {
  std::int64_t top, left, height, width;
  bool overlaps_with_gap(const Rect& o) const {
    return top - 1 < o.top + o.height && o.top - 1 < top + height && left - 1 < o.left + o.width &&
           o.left - 1 < left + width;
  }
};

using Rgb = std::array<double, 3>;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

std::uint8_t class_at(const std::array<double, 4>& dist, double u) {
  for (std::size_t k = 0; k < 4; ++k) {
    if (u < dist[k]) return static_cast<std::uint8_t>(k + 1);
    u -= dist[k];
  }
  return 4;
}

void paint_background(Tensor<float>& img, Rng& rng) {
  const std::int64_t n = img.dim(1);
  const Rgb base{rng.uniform(0.22, 0.34), rng.uniform(0.30, 0.42), rng.uniform(0.14, 0.24)};
  // Low-frequency field from a few random plane waves plus per-pixel grain.
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves)
    w = {rng.uniform(0.02, 0.15), rng.uniform(0.02, 0.15), rng.uniform(0.0, 6.283185307179586), rng.uniform(0.02, 0.05)};
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      double field = 0.0;
      for (const auto& w : waves) field += w.amp * std::sin(w.fy * r * 6.283185307179586 + w.fx * c * 6.283185307179586 + w.phase);
      for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = clamp01(base[ch] + field + 0.025 * rng.normal());
    }
}

Rgb roof_colour(Rng& rng) {
  switch (rng.below(3)) {
    case 0: {  // concrete grey
      const double g = rng.uniform(0.50, 0.70);
      return {g, g, g + rng.uniform(-0.03, 0.03)};
    }
    case 1:  // terracotta
      return {rng.uniform(0.60, 0.72), rng.uniform(0.38, 0.48), rng.uniform(0.32, 0.42)};
    default:  // blue-grey sheet metal
      return {rng.uniform(0.45, 0.55), rng.uniform(0.52, 0.62), rng.uniform(0.60, 0.70)};
  }
}

void paint_roof(Tensor<float>& img, const Rect& b, Rng& rng) {
  const Rgb colour = roof_colour(rng);
  for (std::int64_t r = b.top; r < b.top + b.height; ++r)
    for (std::int64_t c = b.left; c < b.left + b.width; ++c) {
      const bool edge = r == b.top || c == b.left || r == b.top + b.height - 1 || c == b.left + b.width - 1;
      const double shade = edge ? -0.08 : 0.0;
      for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = clamp01(colour[ch] + shade + 0.012 * rng.normal());
    }
}

void damage_minor(Tensor<float>& post, const Rect& b, Rng& rng) {
  const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double shift = sign * rng.uniform(0.05, 0.09);
  for (std::int64_t r = b.top; r < b.top + b.height; ++r)
    for (std::int64_t c = b.left; c < b.left + b.width; ++c) {
      const double speckle = rng.bernoulli(0.25) ? sign * rng.uniform(0.04, 0.10) : 0.0;
      for (int ch = 0; ch < 3; ++ch) post.at(ch, r, c) = clamp01(post.at(ch, r, c) + shift + speckle);
    }
}

void damage_major(Tensor<float>& post, const Rect& b, Rng& rng) {
  const Rgb shift{rng.uniform(0.15, 0.25), -rng.uniform(0.03, 0.08), -rng.uniform(0.15, 0.25)};
  const double flip = rng.bernoulli(0.5) ? 1.0 : -1.0;
  // Debris covers a band along one side of the footprint.
  const bool horizontal = rng.bernoulli(0.5);
  const std::int64_t extent = horizontal ? b.height : b.width;
  const std::int64_t band = std::max<std::int64_t>(1, static_cast<std::int64_t>(extent * rng.uniform(0.3, 0.6)));
  const bool from_start = rng.bernoulli(0.5);
  for (std::int64_t r = b.top; r < b.top + b.height; ++r)
    for (std::int64_t c = b.left; c < b.left + b.width; ++c) {
      const std::int64_t pos = horizontal ? r - b.top : c - b.left;
      const bool occluded = from_start ? pos < band : pos >= extent - band;
      for (int ch = 0; ch < 3; ++ch) {
        float& v = post.at(ch, r, c);
        v = occluded ? clamp01(0.16 + 0.04 * rng.normal()) : clamp01(v + flip * shift[ch]);
      }
    }
}

void damage_destroyed(Tensor<float>& post, const Rect& b, Rng& rng) {
  for (std::int64_t r = b.top; r < b.top + b.height; ++r)
    for (std::int64_t c = b.left; c < b.left + b.width; ++c) {
      const double base = rng.uniform(0.15, 0.55);
      post.at(0, r, c) = clamp01(base + 0.08);
      post.at(1, r, c) = clamp01(base + 0.02);
      post.at(2, r, c) = clamp01(base - 0.04);
    }
}

SamplePair generate_one(const SynthConfig& cfg, std::size_t index) {
  auto rng = Rng::stream(cfg.seed, index);
  const std::int64_t n = cfg.image_size;
  SamplePair s;
  std::ostringstream id;
  id << "synth_" << std::setw(5) << std::setfill('0') << index;
  s.id = id.str();
  s.pre = Tensor<float>::zeros({3, n, n});
  s.mask = DamageMask(n, n, 0);
  paint_background(s.pre, rng);

  const auto wanted = rng.between(cfg.min_buildings, cfg.max_buildings);
  std::vector<Rect> placed;
  for (int attempt = 0; attempt < 200 && static_cast<std::int64_t>(placed.size()) < wanted; ++attempt) {
    const auto h = rng.between(cfg.min_building_side, cfg.max_building_side);
    const auto w = rng.between(cfg.min_building_side, cfg.max_building_side);
    const Rect cand{rng.between(1, n - h - 1), rng.between(1, n - w - 1), h, w};
    if (std::none_of(placed.begin(), placed.end(), [&](const Rect& o) { return cand.overlaps_with_gap(o); }))
      placed.push_back(cand);
  }
  if (static_cast<std::int64_t>(placed.size()) < cfg.min_buildings)
    throw std::invalid_argument("synth: could not place " + std::to_string(cfg.min_buildings) + " buildings in a " +
                                std::to_string(n) + "px tile");

  for (const auto& b : placed) paint_roof(s.pre, b, rng);
  // Systematic sampling over footprint area: each building still draws its class
  // from the configured distribution, but the tile's pixel shares stay close to it.
  double total_area = 0.0;
  for (const auto& b : placed) total_area += static_cast<double>(b.height * b.width);
  double cursor = rng.uniform() * total_area;
  std::vector<std::uint8_t> classes;
  for (const auto& b : placed) {
    const double area = static_cast<double>(b.height * b.width);
    classes.push_back(class_at(cfg.damage_distribution, std::fmod(cursor + 0.5 * area, total_area) / total_area));
    cursor += area;
  }
  quantize_to_8bit(s.pre);
  s.post = s.pre.clone();

  for (std::size_t i = 0; i < placed.size(); ++i) {
    const auto& b = placed[i];
    switch (classes[i]) {
      case 2: damage_minor(s.post, b, rng); break;
      case 3: damage_major(s.post, b, rng); break;
      case 4: damage_destroyed(s.post, b, rng); break;
      default: break;
    }
    for (std::int64_t r = b.top; r < b.top + b.height; ++r)
      for (std::int64_t c = b.left; c < b.left + b.width; ++c) s.mask.at(r, c) = classes[i];
  }
  quantize_to_8bit(s.post);

  // A damaged pixel must differ from its pre-disaster value in some channel.
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      if (s.mask.at(r, c) < 2) continue;
      bool same = true;
      for (int ch = 0; ch < 3; ++ch) same = same && s.pre.at(ch, r, c) == s.post.at(ch, r, c);
      if (!same) continue;
      float& v = s.post.at(0, r, c);
      v = v > 0.5f ? v - 2.0f / 255.0f : v + 2.0f / 255.0f;
    }
  quantize_to_8bit(s.post);
  return s;
}

}  // namespace

std::vector<SamplePair> generate_synthetic(const SynthConfig& config) {
  config.validate();
  std::vector<SamplePair> out;
  out.reserve(static_cast<std::size_t>(config.num_pairs));
  for (int i = 0; i < config.num_pairs; ++i) out.push_back(generate_one(config, static_cast<std::size_t>(i)));
  return out;
}

nlohmann::json dataset_manifest(std::span<const SamplePair> samples) {
  nlohmann::json pairs = nlohmann::json::array();
  std::array<std::int64_t, kNumClasses> totals{};
  for (const auto& s : samples) {
    const auto counts = s.mask.class_counts();
    for (int k = 0; k < kNumClasses; ++k) totals[k] += counts[k];
    pairs.push_back({{"id", s.id},
                     {"pre", "images/" + s.id + "_pre_disaster.png"},
                     {"post", "images/" + s.id + "_post_disaster.png"},
                     {"mask", "targets/" + s.id + "_post_disaster_target.png"},
                     {"class_pixel_counts", counts}});
  }
  return {{"format", "cdfnet-dataset-v1"}, {"class_pixel_counts", totals}, {"pairs", pairs}};
}

void write_dataset(std::span<const SamplePair> samples, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  fs::create_directories(root / "targets");
  for (const auto& s : samples) {
    write_png(root / "images" / (s.id + "_pre_disaster.png"), to_image(s.pre));
    write_png(root / "images" / (s.id + "_post_disaster.png"), to_image(s.post));
    write_png(root / "targets" / (s.id + "_post_disaster_target.png"), mask_to_image(s.mask));
  }
  std::ofstream f(root / "manifest.json");
  if (!f) throw DatasetError("cannot write manifest in " + root.string());
  f << dataset_manifest(samples).dump(2) << '\n';
}

Split split_dataset(std::vector<SamplePair> samples, double val_fraction) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("val_fraction must lie in [0,1)");
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) * val_fraction));
  Split split;
  const auto cut = samples.size() - n_val;
  split.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(cut)));
  split.val.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(cut)), std::make_move_iterator(samples.end()));
  return split;
}

}  // namespace cdfnet
