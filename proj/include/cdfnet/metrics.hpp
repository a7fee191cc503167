#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "cdfnet/sample.hpp"

namespace cdfnet {

/// counts[i][j] = pixels of true class i predicted as class j.
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

  /// Adds one tile. Pixels whose truth is the ignore label are skipped;
  /// predictions must be valid class ids.
  void accumulate(const DamageMask& truth, const DamageMask& pred);
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(int truth, int pred) const { return counts_[truth][pred]; }
  std::uint64_t& at(int truth, int pred) { return counts_[truth][pred]; }
  std::uint64_t total() const;
  const Counts& counts() const { return counts_; }

  /// Building vs background: classes 1..4 collapse to "building".
  ConfusionMatrix collapsed_to_building() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  Counts counts_{};
};

ConfusionMatrix& operator+=(ConfusionMatrix& lhs, const ConfusionMatrix& rhs);

/// 2TP / (2TP + FP + FN); 1.0 when all three counts are zero.
double f1_binary(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

/// Harmonic mean; 0 if any value is 0. An empty span yields 1.0.
double harmonic_mean(std::span<const double> values);

/// F1 of building pixels (truth and prediction in 1..4) against background.
double building_f1(const ConfusionMatrix& confusion);

struct DamageScores {
  // One-vs-rest F1 per damage class 1..4; nullopt when the class occurs in
  // neither truth nor prediction, in which case it is left out of f1_damage.
  std::array<std::optional<double>, 4> per_class{};
  double f1_damage = 0.0;
};

DamageScores damage_scores(const ConfusionMatrix& confusion);

/// 0.3 * f1_building + 0.7 * f1_damage.
double overall_score(double f1_building, double f1_damage);

using PercentMatrix = std::array<std::array<std::optional<double>, kNumClasses>, kNumClasses>;

/// Row-normalised percentages; rows with no pixels are nullopt.
PercentMatrix confusion_percentages(const ConfusionMatrix& confusion);

struct MetricsReport {
  double f1_building = 0.0;
  std::array<std::optional<double>, 4> f1_per_class{};
  double f1_damage = 0.0;
  double f1_overall = 0.0;
  ConfusionMatrix confusion;
};

/// Builds a report from pooled counts. When building_confusion is given it
/// supplies f1_building (e.g. stage-1 predictions on pre images); otherwise the
/// damage confusion is collapsed to building/background.
MetricsReport make_report(const ConfusionMatrix& damage_confusion,
                          const ConfusionMatrix* building_confusion = nullptr);

nlohmann::json to_json(const MetricsReport& report);

/// Aligned plain-text table in the column order F1_s, F1_b, F1_d, No damage,
/// Minor, Major, Destroyed, with three decimals.
std::string format_score_table(const MetricsReport& report, const std::string& row_label);

/// Row-normalised confusion table with one decimal; empty rows render as "-".
std::string format_confusion_table(const ConfusionMatrix& confusion);

}  // namespace cdfnet
