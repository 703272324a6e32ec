#include <doctest.h>

#include "../common/checks.hpp"
#include "ivg/metrics.hpp"

using namespace ivg;
using namespace ivg::testing;

namespace {

TimeInterval sec(double a, double b) { return {a, b, 100.0}; }

}  // namespace

TEST_CASE("iou in seconds") {
  CHECK(iou(sec(2, 8), sec(2, 8)) == 1.0);
  CHECK(iou(sec(0, 1), sec(2, 3)) == 0.0);
  CHECK(iou(sec(0, 10), sec(5, 15)) == doctest::Approx(0.33333).epsilon(1e-5));
  CHECK(iou(sec(0, 10), sec(5, 15)) == doctest::Approx(5.0 / 15.0).epsilon(1e-15));
  CHECK(iou(sec(4, 4), sec(4, 4)) == 1.0);
}

TEST_CASE("iou in indices counts inclusive spans") {
  CHECK(iou(BoundaryIndices{3, 3, 10}, BoundaryIndices{3, 3, 10}) == 1.0);
  CHECK(iou(BoundaryIndices{0, 4, 10}, BoundaryIndices{3, 6, 10}) == doctest::Approx(2.0 / 7.0));
  CHECK(iou(BoundaryIndices{0, 1, 10}, BoundaryIndices{2, 3, 10}) == 0.0);
  CHECK_THROWS_AS(iou(Moment{sec(0, 1)}, Moment{BoundaryIndices{0, 1, 4}}), std::invalid_argument);
}

TEST_CASE("iou closed form matches grid enumeration on random pairs") {
  // Endpoints sit on a grid of 1e-4 of the span, so cell counting is exact.
  Rng rng(1);
  const double span = 50.0, cell = 1e-4 * span;
  for (int k = 0; k < 200; ++k) {
    auto draw = [&] {
      long long a = static_cast<long long>(rng.below(10001)), b = static_cast<long long>(rng.below(10001));
      if (a == b) b = a == 10000 ? a - 1 : a + 1;
      if (a > b) std::swap(a, b);
      return std::pair{static_cast<double>(a) * cell, static_cast<double>(b) * cell};
    };
    const auto [a0, a1] = draw();
    const auto [b0, b1] = draw();
    const double closed = iou(sec(a0, a1), sec(b0, b1));
    CHECK(std::abs(closed - grid_iou(a0, a1, b0, b1, cell)) <= 1e-6);
    CHECK(closed == iou(sec(b0, b1), sec(a0, a1)));
  }
}

TEST_CASE("index iou matches enumeration") {
  Rng rng(2);
  for (int k = 0; k < 500; ++k) {
    const int t = 1 + static_cast<int>(rng.below(40));
    auto draw = [&] {
      int a = static_cast<int>(rng.below(t)), b = static_cast<int>(rng.below(t));
      if (a > b) std::swap(a, b);
      return BoundaryIndices{a, b, t};
    };
    const auto x = draw(), y = draw();
    CHECK(iou(x, y) == doctest::Approx(enumerated_index_iou(x, y)).epsilon(1e-15));
  }
}

TEST_CASE("recall and mean iou on the two-example set") {
  const std::vector<std::vector<Moment>> preds{{sec(0, 10)}, {sec(2, 8)}};
  const std::vector<Moment> golds{sec(5, 15), sec(2, 8)};
  CHECK(recall_at_n(preds, golds, 1, 0.5) == 50.0);
  const std::vector<Moment> top1{sec(0, 10), sec(2, 8)};
  CHECK(mean_iou(top1, golds) == doctest::Approx(66.667).epsilon(1e-5));
  CHECK(recall_at_n(preds, golds, 1, 0.0) == 100.0);
  CHECK(recall_at_n(preds, golds, 1, 1.0) == 0.0);
  // Strict threshold: an IoU of exactly mu is a miss.
  CHECK(recall_at_n(preds, golds, 1, 1.0 / 3.0) == 50.0);
}

TEST_CASE("metric edge cases") {
  const std::vector<Moment> golds{sec(0, 1), sec(3, 4)};
  CHECK(mean_iou(golds, golds) == 100.0);
  const std::vector<Moment> disjoint{sec(10, 11), sec(20, 21)};
  CHECK(mean_iou(disjoint, golds) == 0.0);
  CHECK_THROWS(mean_iou(std::vector<Moment>{sec(0, 1)}, golds));
  CHECK_THROWS(recall_at_n(std::vector<std::vector<Moment>>{}, std::vector<Moment>{}, 1, 0.5));
}

TEST_CASE("recall and mean iou against hand enumeration on 10-example fixtures") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Moment>> preds;
    std::vector<Moment> golds, top1;
    for (int i = 0; i < 10; ++i) {
      const int t = 16;
      auto draw = [&] {
        int a = static_cast<int>(rng.below(t)), b = static_cast<int>(rng.below(t));
        if (a > b) std::swap(a, b);
        return BoundaryIndices{a, b, t};
      };
      std::vector<Moment> list;
      for (int k = 0; k < 3; ++k) list.push_back(draw());
      preds.push_back(list);
      top1.push_back(list[0]);
      golds.push_back(draw());
    }
    for (int n = 1; n <= 3; ++n)
      for (double mu : {0.1, 0.3, 0.5, 0.7}) {
        int hits = 0;
        for (int i = 0; i < 10; ++i) {
          double best = 0.0;
          for (int k = 0; k < n; ++k)
            best = std::max(best, enumerated_index_iou(std::get<BoundaryIndices>(preds[i][k]),
                                                       std::get<BoundaryIndices>(golds[i])));
          hits += best > mu;
        }
        CHECK(recall_at_n(preds, golds, n, mu) == doctest::Approx(10.0 * hits));
      }
    double total = 0.0;
    for (int i = 0; i < 10; ++i)
      total += enumerated_index_iou(std::get<BoundaryIndices>(top1[i]), std::get<BoundaryIndices>(golds[i]));
    CHECK(mean_iou(top1, golds) == doctest::Approx(10.0 * total));
  }
}

TEST_CASE("recall is monotone in mu and n") {
  Rng rng(4);
  std::vector<std::vector<Moment>> preds;
  std::vector<Moment> golds;
  for (int i = 0; i < 50; ++i) {
    std::vector<Moment> list;
    for (int k = 0; k < 5; ++k) {
      double a = rng.uniform(0, 30), b = rng.uniform(0, 30);
      if (a > b) std::swap(a, b);
      list.push_back(TimeInterval{a, b, 30.0});
    }
    preds.push_back(list);
    double a = rng.uniform(0, 30), b = rng.uniform(0, 30);
    if (a > b) std::swap(a, b);
    golds.push_back(TimeInterval{a, b, 30.0});
  }
  for (int n = 1; n <= 5; ++n) {
    double prev = 101.0;
    for (double mu = 0.0; mu <= 1.0; mu += 0.05) {
      const double r = recall_at_n(preds, golds, n, mu);
      CHECK(r <= prev);
      prev = r;
      if (n > 1) CHECK(r >= recall_at_n(preds, golds, n - 1, mu));
    }
  }
}

TEST_CASE("report, JSON and CSV") {
  const std::vector<Moment> preds{BoundaryIndices{0, 3, 8}, BoundaryIndices{2, 5, 8}};
  const std::vector<Moment> golds{BoundaryIndices{0, 3, 8}, BoundaryIndices{4, 7, 8}};
  const auto r = make_report(preds, golds);
  CHECK(r.n_examples == 2);
  CHECK(r.r1_iou.at(0.1) == 100.0);
  CHECK(r.r1_iou.at(0.5) == 50.0);
  CHECK(r.mean_iou == doctest::Approx(100.0 * (1.0 + 2.0 / 6.0) / 2.0));
  for (auto it = std::next(r.r1_iou.begin()); it != r.r1_iou.end(); ++it) CHECK(it->second <= std::prev(it)->second);
  CHECK(EvalReport::from_json(r.to_json()) == r);
  const auto csv = report_table_csv({{"full", r}, {"w/o IVG", r}});
  CHECK(csv.rfind("model,IoU=0.1,IoU=0.3,IoU=0.5,IoU=0.7,mIoU\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
