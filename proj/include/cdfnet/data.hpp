#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdfnet/rng.hpp"
#include "cdfnet/sample.hpp"

namespace cdfnet {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Polygon counts per damage level in the xBD training annotations
/// (no damage, minor, major, destroyed).
inline constexpr std::array<double, 4> kXbdDamageCounts{313003.0, 36860.0, 29904.0, 31560.0};

/// kXbdDamageCounts normalised to a distribution.
std::array<double, 4> xbd_damage_distribution();

struct SynthConfig {
  int num_pairs = 50;
  int image_size = 64;
  int channels = 3;
  int min_buildings = 2;
  int max_buildings = 6;
  int min_building_side = 6;
  int max_building_side = 16;
  std::array<double, 4> damage_distribution = xbd_damage_distribution();
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic paired-tile generator.
///
/// Each tile has a textured background and non-overlapping rectangular
/// buildings. The pre image shows every building intact. In the post image a
/// building is rendered according to its damage class:
///   1  unchanged
///   2  mild brightness shift plus speckle
///   3  strong colour shift plus a partially occluding debris patch
///   4  footprint replaced by rubble texture
/// Background pixels are identical in both images, and a building pixel differs
/// between pre and post exactly when its class is 2, 3 or 4. All values are
/// quantised to 8 bits so a PNG round trip is lossless.
std::vector<SamplePair> generate_synthetic(const SynthConfig& config);

/// Writes images/<id>_{pre,post}_disaster.png, targets/<id>_post_disaster_target.png
/// and manifest.json (ids, relative paths, per-class pixel counts).
void write_dataset(std::span<const SamplePair> samples, const std::filesystem::path& root);

nlohmann::json dataset_manifest(std::span<const SamplePair> samples);

struct PairRef {
  std::string id;
  std::filesystem::path pre_path;
  std::filesystem::path post_path;
  std::filesystem::path mask_path;

  /// Reads the three rasters. Throws DatasetError when they disagree in size.
  SamplePair load() const;
};

struct PairIndex {
  std::vector<PairRef> pairs;  // sorted by id
  std::vector<std::string> skipped;
};

/// Indexes an xBD-style tree: images/<id>_pre_disaster.png,
/// images/<id>_post_disaster.png and targets/<id>_post_disaster_target.png.
/// Incomplete pairs are reported in `skipped`. Throws DatasetError when no
/// complete pair exists.
PairIndex load_xbd_layout(const std::filesystem::path& root);

std::vector<SamplePair> load_all(const PairIndex& index);

struct AugmentFlags {
  bool flip = true;
  bool rotate = true;
};

/// One random crop position, then independent horizontal flip, vertical flip
/// and a multiple-of-90 rotation, applied identically to pre, post and mask.
SamplePair crop_and_augment(const SamplePair& pair, std::int64_t crop, const AugmentFlags& flags, Rng& rng);

/// Deterministic split: the last round(n * val_fraction) samples form the
/// validation set.
struct Split {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
};
Split split_dataset(std::vector<SamplePair> samples, double val_fraction);

}  // namespace cdfnet
