#include "cdfnet/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace cdfnet {

void ConfusionMatrix::accumulate(const DamageMask& truth, const DamageMask& pred) {
  if (truth.height != pred.height || truth.width != pred.width)
    throw std::invalid_argument("confusion accumulate: truth is " + std::to_string(truth.height) + "x" +
                                std::to_string(truth.width) + " but prediction is " + std::to_string(pred.height) +
                                "x" + std::to_string(pred.width));
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const auto t = truth.labels[i];
    if (t == kIgnoreLabel) continue;
    const auto p = pred.labels[i];
    if (t >= kNumClasses || p >= kNumClasses)
      throw std::invalid_argument("confusion accumulate: class id out of range at pixel " + std::to_string(i));
    ++counts_[t][p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) counts_[i][j] += other.counts_[i][j];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts_)
    for (auto v : row) n += v;
  return n;
}

ConfusionMatrix ConfusionMatrix::collapsed_to_building() const {
  ConfusionMatrix out;
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) out.counts_[i ? 1 : 0][j ? 1 : 0] += counts_[i][j];
  return out;
}

ConfusionMatrix& operator+=(ConfusionMatrix& lhs, const ConfusionMatrix& rhs) {
  lhs.merge(rhs);
  return lhs;
}

double f1_binary(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const auto denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) return 1.0;
  double inv = 0.0;
  for (double v : values) {
    if (v <= 0.0) return 0.0;
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

double building_f1(const ConfusionMatrix& confusion) {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) {
      const auto v = confusion.at(i, j);
      if (i && j) tp += v;
      else if (j) fp += v;
      else if (i) fn += v;
    }
  return f1_binary(tp, fp, fn);
}

DamageScores damage_scores(const ConfusionMatrix& confusion) {
  DamageScores out;
  std::vector<double> present;
  for (int k = 1; k < kNumClasses; ++k) {
    const auto tp = confusion.at(k, k);
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == k) continue;
      fp += confusion.at(o, k);
      fn += confusion.at(k, o);
    }
    if (tp + fp + fn == 0) continue;
    const double f1 = f1_binary(tp, fp, fn);
    out.per_class[static_cast<std::size_t>(k - 1)] = f1;
    present.push_back(f1);
  }
  out.f1_damage = harmonic_mean(present);
  return out;
}

double overall_score(double f1_building, double f1_damage) { return 0.3 * f1_building + 0.7 * f1_damage; }

PercentMatrix confusion_percentages(const ConfusionMatrix& confusion) {
  PercentMatrix out{};
  for (int i = 0; i < kNumClasses; ++i) {
    std::uint64_t row = 0;
    for (int j = 0; j < kNumClasses; ++j) row += confusion.at(i, j);
    if (row == 0) continue;
    for (int j = 0; j < kNumClasses; ++j)
      out[i][j] = 100.0 * static_cast<double>(confusion.at(i, j)) / static_cast<double>(row);
  }
  return out;
}

MetricsReport make_report(const ConfusionMatrix& damage_confusion, const ConfusionMatrix* building_confusion) {
  MetricsReport r;
  r.confusion = damage_confusion;
  r.f1_building = building_f1(building_confusion ? *building_confusion : damage_confusion);
  const auto scores = damage_scores(damage_confusion);
  r.f1_per_class = scores.per_class;
  r.f1_damage = scores.f1_damage;
  r.f1_overall = overall_score(r.f1_building, r.f1_damage);
  return r;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : report.f1_per_class) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& row : report.confusion.counts()) counts.push_back(row);
  nlohmann::json percent = nlohmann::json::array();
  for (const auto& row : confusion_percentages(report.confusion)) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& v : row) r.push_back(v ? nlohmann::json(*v) : nlohmann::json());
    percent.push_back(std::move(r));
  }
  return {{"f1_building", report.f1_building}, {"f1_per_class", per_class},
          {"f1_damage", report.f1_damage},     {"f1_overall", report.f1_overall},
          {"confusion_counts", counts},        {"confusion_percent", percent}};
}

std::string format_score_table(const MetricsReport& report, const std::string& row_label) {
  static constexpr const char* kHeaders[] = {"F1_s", "F1_b", "F1_d", "No damage", "Minor", "Major", "Destroyed"};
  const std::size_t label_width = std::max<std::size_t>(row_label.size(), 8);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_width)) << "" << std::right;
  for (const char* h : kHeaders) os << "  " << std::setw(9) << h;
  os << '\n' << std::left << std::setw(static_cast<int>(label_width)) << row_label << std::right << std::fixed
     << std::setprecision(3);
  for (double v : {report.f1_overall, report.f1_building, report.f1_damage}) os << "  " << std::setw(9) << v;
  for (const auto& v : report.f1_per_class) {
    os << "  " << std::setw(9);
    if (v) os << *v;
    else os << "-";
  }
  os << '\n';
  return os.str();
}

std::string format_confusion_table(const ConfusionMatrix& confusion) {
  static constexpr const char* kRows[] = {"Background (C0)", "No damage (C1)", "Minor Damage (C2)",
                                          "Major Damage (C3)", "Destroyed (C4)"};
  const auto pct = confusion_percentages(confusion);
  std::ostringstream os;
  os << std::left << std::setw(18) << "Damage Level" << std::right;
  for (int j = 0; j < kNumClasses; ++j) os << std::setw(7) << ("C" + std::to_string(j));
  os << '\n' << std::fixed << std::setprecision(1);
  for (int i = 0; i < kNumClasses; ++i) {
    os << std::left << std::setw(18) << kRows[i] << std::right;
    for (int j = 0; j < kNumClasses; ++j) {
      if (pct[i][j]) os << std::setw(7) << *pct[i][j];
      else os << std::setw(9) << "—";  // multi-byte glyph, pad to the same visual width
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cdfnet
