#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ivg/datamodel.hpp"

namespace ivg {

/// A predicted or gold moment, either in seconds or in inclusive feature indices.
using Moment = std::variant<TimeInterval, BoundaryIndices>;

/// Continuous IoU in seconds. Two identical zero-length intervals score 1.
double iou(const TimeInterval& a, const TimeInterval& b);
/// Index IoU with inclusive spans: a single index has length 1.
double iou(const BoundaryIndices& a, const BoundaryIndices& b);
/// Throws std::invalid_argument when the kinds differ.
double iou(const Moment& a, const Moment& b);

/// 100 * fraction of examples whose best IoU among the first n predictions is
/// strictly greater than mu.
double recall_at_n(std::span<const std::vector<Moment>> predictions, std::span<const Moment> golds, int n, double mu);

/// 100 * mean top-1 IoU.
double mean_iou(std::span<const Moment> predictions, std::span<const Moment> golds);

inline constexpr std::array<double, 4> kIouThresholds = {0.1, 0.3, 0.5, 0.7};

struct EvalReport {
  std::map<double, double> r1_iou;  ///< threshold -> percentage
  double mean_iou = 0.0;            ///< percentage
  std::size_t n_examples = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// R@1 at every threshold in kIouThresholds plus mIoU.
EvalReport make_report(std::span<const Moment> predictions, std::span<const Moment> golds);

/// One row per model; columns are R@1 at each threshold and mIoU.
std::string report_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace ivg
