#include "ivg/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ivg {

double iou(const TimeInterval& a, const TimeInterval& b) {
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
  if (uni <= 0.0) return (a.start_s == b.start_s && a.end_s == b.end_s) ? 1.0 : 0.0;
  return inter / uni;
}

double iou(const BoundaryIndices& a, const BoundaryIndices& b) {
  const int inter = std::max(0, std::min(a.i_end, b.i_end) - std::max(a.i_start, b.i_start) + 1);
  const int uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const Moment& a, const Moment& b) {
  if (a.index() != b.index()) throw std::invalid_argument("iou: cannot compare seconds with feature indices");
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        return iou(x, std::get<T>(b));
      },
      a);
}

double recall_at_n(std::span<const std::vector<Moment>> predictions, std::span<const Moment> golds, int n, double mu) {
  if (golds.empty()) throw std::invalid_argument("recall_at_n: no gold moments");
  if (predictions.size() != golds.size()) throw std::invalid_argument("recall_at_n: prediction/gold count mismatch");
  if (n < 1) throw std::invalid_argument("recall_at_n: n must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i].empty()) throw std::invalid_argument("recall_at_n: example without predictions");
    const std::size_t k = std::min(predictions[i].size(), static_cast<std::size_t>(n));
    double best = 0.0;
    for (std::size_t j = 0; j < k; ++j) best = std::max(best, iou(predictions[i][j], golds[i]));
    if (best > mu) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(golds.size());
}

double mean_iou(std::span<const Moment> predictions, std::span<const Moment> golds) {
  if (predictions.size() != golds.size()) throw std::invalid_argument("mean_iou: prediction/gold count mismatch");
  if (golds.empty()) throw std::invalid_argument("mean_iou: no examples");
  double total = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) total += iou(predictions[i], golds[i]);
  return 100.0 * total / static_cast<double>(golds.size());
}

EvalReport make_report(std::span<const Moment> predictions, std::span<const Moment> golds) {
  EvalReport r;
  r.n_examples = golds.size();
  if (golds.empty()) {
    for (double mu : kIouThresholds) r.r1_iou[mu] = 0.0;
    return r;
  }
  std::vector<std::vector<Moment>> top1;
  top1.reserve(predictions.size());
  for (const auto& p : predictions) top1.push_back({p});
  for (double mu : kIouThresholds) r.r1_iou[mu] = recall_at_n(top1, golds, 1, mu);
  r.mean_iou = mean_iou(predictions, golds);
  return r;
}

namespace {
std::string threshold_key(double mu) {
  std::ostringstream os;
  os << mu;
  return os.str();
}
}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json r1 = nlohmann::json::object();
  for (const auto& [mu, v] : r1_iou) r1[threshold_key(mu)] = v;
  return nlohmann::json{{"r1_iou", r1}, {"mean_iou", mean_iou}, {"n_examples", n_examples}}.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  for (const auto& [k, v] : j.at("r1_iou").items()) r.r1_iou[std::stod(k)] = v.get<double>();
  r.mean_iou = j.at("mean_iou").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  return r;
}

std::string report_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << "model";
  for (double mu : kIouThresholds) os << ",IoU=" << mu;
  os << ",mIoU\n" << std::fixed << std::setprecision(2);
  for (const auto& [name, r] : rows) {
    os << name;
    for (double mu : kIouThresholds) {
      auto it = r.r1_iou.find(mu);
      os << ',' << (it == r.r1_iou.end() ? 0.0 : it->second);
    }
    os << ',' << r.mean_iou << '\n';
  }
  return os.str();
}

}  // namespace ivg
