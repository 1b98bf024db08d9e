#include <doctest.h>

#include <fstream>
#include <sstream>

#include "strack/eval.hpp"
#include "test_util.hpp"

using namespace strack;

namespace {

const Box kTruth{0, 0, 10, 10};

// Boxes sharing the truth's top-left corner with IoU w/10 exactly.
Box with_iou_tenths(double w) { return {0, 0, w, 10}; }

std::vector<Box> shifted(std::vector<Box> boxes, double dx, double dy) {
  for (Box& b : boxes) {
    b.x += dx;
    b.y += dy;
  }
  return boxes;
}

}  // namespace

TEST_CASE("success curve on hand-enumerated fixtures") {
  SUBCASE("two frames with IoU 0.4 and 0.8") {
    const auto r = success_curve({with_iou_tenths(4), with_iou_tenths(8)}, {kTruth, kTruth});
    for (int t = 0; t <= 100; ++t) {
      const double expect = t < 40 ? 1.0 : t < 80 ? 0.5 : 0.0;
      CHECK(r.curve[t] == expect);
    }
    CHECK(r.auc == 60.0 / 101.0);
  }
  SUBCASE("perfect tracker") {
    const std::vector<Box> gt{kTruth, Box{3, 4, 5, 6}, Box{7.25, 1.5, 2, 9}};
    const auto r = success_curve(gt, gt);
    for (int t = 0; t < 100; ++t) CHECK(r.curve[t] == 1.0);
    CHECK(r.curve[100] == 0.0);
    CHECK(r.auc == 100.0 / 101.0);
  }
  SUBCASE("disjoint boxes") {
    const auto r = success_curve({Box{20, 20, 5, 5}, Box{-30, 0, 5, 5}}, {kTruth, kTruth});
    for (double v : r.curve) CHECK(v == 0.0);
    CHECK(r.auc == 0.0);
  }
}

TEST_CASE("precision curve on hand-enumerated fixtures") {
  // Centre errors 5 and 30.
  const auto r = precision_curve({Box{5, 0, 10, 10}, Box{0, 30, 10, 10}}, {kTruth, kTruth});
  for (int t = 0; t <= 50; ++t) CHECK(r.curve[t] == (t < 5 ? 0.0 : t < 30 ? 0.5 : 1.0));
  CHECK(r.at_20 == 0.5);

  const auto zero = precision_curve({kTruth}, {kTruth});
  CHECK(zero.at_20 == 1.0);
  const auto far = precision_curve({Box{25, 0, 10, 10}}, {kTruth});
  CHECK(far.at_20 == 0.0);
  CHECK(far.curve[24] == 0.0);
  CHECK(far.curve[25] == 1.0);
}

TEST_CASE("length checks") {
  CHECK_THROWS_AS(success_curve({kTruth}, {kTruth, kTruth}), std::invalid_argument);
  CHECK_THROWS_AS(precision_curve({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_sequence({kTruth}, {kTruth}), std::invalid_argument);
}

TEST_CASE("evaluate_sequence drops the initialisation frame") {
  // Frame 1 is a miss that would otherwise count.
  const auto r = evaluate_sequence({Box{50, 50, 5, 5}, with_iou_tenths(4), with_iou_tenths(8)},
                                   {kTruth, kTruth, kTruth});
  CHECK(r.frames == 2);
  CHECK(r.success.auc == 60.0 / 101.0);
  CHECK(r.mean_iou == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("metrics are translation invariant and average by frames over concatenations") {
  Rng rng(4);
  std::vector<Box> pred, gt;
  for (int i = 0; i < 30; ++i) {
    gt.push_back({rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(5, 30), rng.uniform(5, 30)});
    const Box& g = gt.back();
    pred.push_back({g.x + rng.uniform(-8, 8), g.y + rng.uniform(-8, 8), g.w * rng.uniform(0.7, 1.3), g.h});
  }
  const auto base = success_curve(pred, gt);
  const auto moved = success_curve(shifted(pred, 64, 64), shifted(gt, 64, 64));
  CHECK(base.curve == moved.curve);
  CHECK(precision_curve(pred, gt).curve == precision_curve(shifted(pred, 64, 64), shifted(gt, 64, 64)).curve);

  const std::vector<Box> p1(pred.begin(), pred.begin() + 10), g1(gt.begin(), gt.begin() + 10);
  const std::vector<Box> p2(pred.begin() + 10, pred.end()), g2(gt.begin() + 10, gt.end());
  const auto a = success_curve(p1, g1), b = success_curve(p2, g2);
  for (int t = 0; t <= 100; ++t) {
    CHECK(base.curve[t] == doctest::Approx((10 * a.curve[t] + 20 * b.curve[t]) / 30).epsilon(1e-14));
  }
}

TEST_CASE("average_reports is the mean of per-run values") {
  const auto a = evaluate_sequence({kTruth, with_iou_tenths(4), with_iou_tenths(8)}, {kTruth, kTruth, kTruth});
  const auto b = evaluate_sequence({kTruth, kTruth}, {kTruth, kTruth});
  const auto m = average_reports({a, b});
  CHECK(m.success.auc == doctest::Approx((60.0 / 101.0 + 100.0 / 101.0) / 2).epsilon(1e-15));
  CHECK(m.mean_iou == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m.frames == 3);
  CHECK_THROWS_AS(average_reports({}), std::invalid_argument);
}

TEST_CASE("compare table") {
  OpeReport hi, lo;
  hi.success.auc = 0.7;
  hi.precision.at_20 = 0.9;
  lo.success.auc = 0.5;
  lo.precision.at_20 = 0.25;
  const std::string single = compare({{"both", hi}});
  CHECK(single == "name     AUC  Pre@20\n"
                  "both  0.7000  0.9000\n");
  const std::string two = compare({{"spatial", lo}, {"both", hi}, {"alpha", lo}});
  CHECK(two == "name        AUC  Pre@20\n"
               "both     0.7000  0.9000\n"
               "alpha    0.5000  0.2500\n"
               "spatial  0.5000  0.2500\n");
  CHECK_THROWS_AS(compare({{"x", hi}, {"x", lo}}), std::invalid_argument);
  CHECK_THROWS_AS(compare({}), std::invalid_argument);
}

TEST_CASE("curve files") {
  const auto dir = strack::testing::scratch_dir("curves");
  const auto r = evaluate_sequence({kTruth, with_iou_tenths(4), with_iou_tenths(8)}, {kTruth, kTruth, kTruth});
  write_curve_files(dir / "run", r);
  std::ifstream s(dir / "run.success.txt"), p(dir / "run.precision.txt");
  std::vector<std::string> sl, pl;
  for (std::string line; std::getline(s, line);) sl.push_back(line);
  for (std::string line; std::getline(p, line);) pl.push_back(line);
  REQUIRE(sl.size() == 101);
  REQUIRE(pl.size() == 51);
  CHECK(sl[0] == "0.00 1.000000");
  CHECK(sl[40] == "0.40 0.500000");
  CHECK(sl[100] == "1.00 0.000000");
  CHECK(pl[20] == "20.00 1.000000");
}
