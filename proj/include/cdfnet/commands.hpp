#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "cdfnet/config.hpp"
#include "cdfnet/metrics.hpp"
#include "cdfnet/unet.hpp"

namespace cdfnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

/// Entry point of the `cdfnet` executable. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// A model restored from <dir>/model.ckpt and its model.json sidecar.
/// `path` may name the directory or the .ckpt file.
UNetModel load_model(const std::filesystem::path& path);

/// Mask files keyed by pair id. Accepts either a directory of
/// <id>_post_disaster_target.png / <id>_prediction.png files or a dataset root
/// with a targets/ subdirectory.
std::map<std::string, std::filesystem::path> index_masks(const std::filesystem::path& dir);

struct ScoreResult {
  MetricsReport pooled;
  std::map<std::string, MetricsReport> per_image;
};

/// Pools predictions against truth over every truth id. A missing prediction
/// is an error. Building predictions, when given, supply F1_b.
ScoreResult score_directories(const std::filesystem::path& truth, const std::filesystem::path& pred,
                              const std::filesystem::path& building_pred = {});

}  // namespace cdfnet::cli
