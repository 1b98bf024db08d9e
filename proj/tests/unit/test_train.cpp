#include <doctest.h>

#include "strack/suites.hpp"
#include "strack/train.hpp"

using namespace strack;

TEST_CASE("training set: counts, shapes, targets and determinism") {
  TrackerConfig cfg;
  const Model model = make_model(cfg, 1);
  std::vector<Sequence> seqs;
  for (const auto& s : training_suite(5, 2, 8)) seqs.push_back(synthesize(s, 1));

  TrainingSetConfig tc;
  tc.samples = 7;
  tc.boxes_per_crop = 3;
  const auto set = build_training_set(seqs, model, tc);
  REQUIRE(set.size() == 3);
  std::size_t boxes = 0;
  for (const auto& c : set) {
    CHECK(c.boxes.size() == c.targets.size());
    CHECK(c.shallow2d.shape() == Shape{16, 24, 24});
    CHECK(c.deep3d.shape() == Shape{16, 12, 12});
    CHECK(c.patch_extent == 96.0);
    for (double t : c.targets) {
      CHECK(t >= 0.0);
      CHECK(t <= 1.0);
    }
    boxes += c.boxes.size();
  }
  CHECK(boxes == 7);

  const auto again = build_training_set(seqs, model, tc);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(again[i].boxes == set[i].boxes);
    CHECK(again[i].deep2d == set[i].deep2d);
  }

  tc.samples = 0;
  CHECK_THROWS_AS(build_training_set(seqs, model, tc), std::invalid_argument);
  CHECK_THROWS_AS(build_training_set({}, model, TrainingSetConfig{}), std::invalid_argument);
}

TEST_CASE("suites respect their motion envelopes") {
  for (const auto& s : easy_suite(1)) {
    const auto& cv = std::get<ConstantVelocity>(s.motion);
    CHECK(std::hypot(cv.vx, cv.vy) <= 2.0);
    CHECK(s.distractors == 0);
    CHECK_NOTHROW(trajectory(s));
  }
  for (const auto& s : fast_suite(1)) {
    const auto& j = std::get<Jump>(s.motion);
    CHECK(j.magnitude >= 0.5 * std::max(s.target.w, s.target.h));
    CHECK_NOTHROW(trajectory(s));
  }
  CHECK(easy_suite(1).size() == 10);
  CHECK(fast_suite(1) == fast_suite(1));
}
