#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "cdfnet/sample.hpp"

namespace cdfnet::testing {

// Brute-force scores from flat (truth, prediction) pixel lists, no confusion matrix.
struct OracleScores {
  double f1_building = 0.0;
  std::array<std::optional<double>, 4> per_class{};
  double f1_damage = 0.0;
  double f1_overall = 0.0;
};

inline double oracle_f1(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline OracleScores oracle_scores(const std::vector<std::uint8_t>& truth, const std::vector<std::uint8_t>& pred) {
  std::vector<std::uint8_t> t, p;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] != kIgnoreLabel) {
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
  OracleScores out;
  std::uint64_t btp = 0, bfp = 0, bfn = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    btp += t[i] != 0 && p[i] != 0;
    bfp += t[i] == 0 && p[i] != 0;
    bfn += t[i] != 0 && p[i] == 0;
  }
  out.f1_building = oracle_f1(btp, bfp, bfn);

  std::size_t present = 0;
  double inv = 0.0;
  bool any_zero = false;
  for (int k = 1; k <= 4; ++k) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp += t[i] == k && p[i] == k;
      fp += t[i] != k && p[i] == k;
      fn += t[i] == k && p[i] != k;
    }
    if (tp + fp + fn == 0) continue;
    const double f = oracle_f1(tp, fp, fn);
    out.per_class[static_cast<std::size_t>(k - 1)] = f;
    ++present;
    if (f == 0.0) any_zero = true;
    else inv += 1.0 / f;
  }
  out.f1_damage = present == 0 ? 1.0 : any_zero ? 0.0 : static_cast<double>(present) / inv;
  out.f1_overall = 0.3 * out.f1_building + 0.7 * out.f1_damage;
  return out;
}

}  // namespace cdfnet::testing
