#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "strack/sequence_io.hpp"
#include "test_util.hpp"

using namespace strack;
using strack::testing::scratch_dir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

SequenceSpec small_spec() {
  SequenceSpec s;
  s.frames = 6;
  s.width = 64;
  s.height = 48;
  s.target = {10, 10, 12, 9};
  s.texture_seed = 5;
  s.motion = ConstantVelocity{2, 1};
  s.background_seed = 9;
  return s;
}

}  // namespace

TEST_CASE("ppm round trip and header errors") {
  const auto dir = scratch_dir("ppm");
  Image img(5, 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(dir / "a.ppm", img);
  CHECK(read_ppm(dir / "a.ppm") == img);

  spit(dir / "b.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_ppm(dir / "b.ppm"), FormatError);
  spit(dir / "c.ppm", "P6\n2 2\n255\nabc");
  CHECK_THROWS_WITH_AS(read_ppm(dir / "c.ppm"), doctest::Contains("truncated"), FormatError);
  spit(dir / "d.ppm", "P6\n# comment\n1 1\n255\nxyz");
  CHECK(read_ppm(dir / "d.ppm").at(2, 0, 0) == 'z');
}

TEST_CASE("box lines parse and malformed lines name the line") {
  auto boxes = parse_boxes("10.5,20,30,40\n1,2,3,4\n", "gt");
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0] == Box{10.5, 20, 30, 40});
  CHECK(parse_boxes("1,2,3,4", "gt").size() == 1);
  CHECK_THROWS_WITH_AS(parse_boxes("1,2,3,4\n1,2,3\n", "gt"), doctest::Contains("gt:2:"), FormatError);
  CHECK_THROWS_WITH_AS(parse_boxes("1,2,x,4\n", "gt"), doctest::Contains("gt:1:"), FormatError);
}

TEST_CASE("results format and round trip") {
  const auto dir = scratch_dir("results");
  write_results(dir / "r.txt", {Box{1, 2, 3, 4}});
  CHECK(slurp(dir / "r.txt") == "1.000000,2.000000,3.000000,4.000000\n");

  write_results(dir / "empty.txt", {});
  CHECK(slurp(dir / "empty.txt").empty());
  CHECK(read_results(dir / "empty.txt").empty());

  // Values on the 1e-6 grid survive the six-digit format exactly.
  Rng rng(3);
  std::vector<Box> boxes;
  for (int i = 0; i < 50; ++i) {
    auto q = [&](double lo, double hi) { return std::round(rng.uniform(lo, hi) * 1e6) / 1e6; };
    boxes.push_back({q(-50, 500), q(-50, 500), q(0.5, 100), q(0.5, 100)});
  }
  write_results(dir / "rt.txt", boxes);
  CHECK(read_results(dir / "rt.txt") == boxes);
}

TEST_CASE("read_sequence layout and errors") {
  const auto dir = scratch_dir("seq");
  std::filesystem::create_directories(dir / "frames");
  for (int i = 1; i <= 3; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%04d.ppm", i);
    write_ppm(dir / "frames" / name, Image(4, 4));
  }
  spit(dir / "groundtruth.txt", "1,1,2,2\n1,1,2,2\n1,1,2,2\n");
  Sequence s = read_sequence(dir);
  CHECK(s.frames.size() == 3);
  CHECK(s.groundtruth.size() == 3);

  spit(dir / "groundtruth.txt", "1,1,2,2\n1,1,2,2\n");
  CHECK_THROWS_WITH_AS(read_sequence(dir), doctest::Contains("3 frames but 2"), FormatError);
  spit(dir / "groundtruth.txt", "1,1,2,2\n1,1,2,2\n1,1,2,2\n1,1,2,2\n");
  CHECK_THROWS_WITH_AS(read_sequence(dir), doctest::Contains("missing frame"), FormatError);
  spit(dir / "groundtruth.txt", "1,1,2,2\n1,1\n1,1,2,2\n");
  CHECK_THROWS_WITH_AS(read_sequence(dir), doctest::Contains("groundtruth.txt:2:"), FormatError);
}

TEST_CASE("spec parsing, formatting and validation") {
  const SequenceSpec s = small_spec();
  CHECK(parse_spec(format_spec(s)) == s);

  SequenceSpec j = s;
  j.motion = Jump{5, 3.25};
  j.distractors = 2;
  j.illumination_lo = 0.8;
  j.illumination_hi = 1.1;
  CHECK(parse_spec(format_spec(j)) == j);

  CHECK_THROWS_AS(parse_spec("frames = 3\nextent = 64,48\ntarget = 1,1,5,5,0\ncolour = 3\n"), SpecError);
  CHECK_THROWS_AS(parse_spec("frames = 3\nextent = 64,48\n"), SpecError);
  CHECK_THROWS_AS(parse_spec("frames = 3\nframes = 4\nextent = 64,48\ntarget = 1,1,5,5,0\n"), SpecError);
  CHECK_THROWS_AS(parse_spec("frames = 3\nextent = 64,48\ntarget = 1,1,5,5,0\nmotion = spiral 1\n"), SpecError);
  // Target drifts out through the right border.
  CHECK_THROWS_WITH_AS(parse_spec("frames = 40\nextent = 64,48\ntarget = 10,10,8,8,0\n"
                                  "motion = constant-velocity 2,0\n"),
                       doctest::Contains("frame"), SpecError);
}

TEST_CASE("trajectories follow the motion models") {
  SequenceSpec s = small_spec();
  auto gt = trajectory(s);
  REQUIRE(gt.size() == 6);
  for (int t = 0; t < 6; ++t) {
    CHECK(gt[t].x == 10.0 + 2.0 * t);
    CHECK(gt[t].y == 10.0 + 1.0 * t);
    CHECK(gt[t].w == 12.0);
  }

  s.frames = 21;
  s.width = 200;
  s.height = 200;
  s.target = {80, 80, 20, 20};
  s.motion = Jump{5, 15.0};
  gt = trajectory(s);
  for (int t = 1; t < 21; ++t) {
    const double d = std::hypot(gt[t].cx() - gt[t - 1].cx(), gt[t].cy() - gt[t - 1].cy());
    CHECK(d == (t % 5 == 0 ? 15.0 : 0.0));
  }
  CHECK(gt[20] == gt[0]);  // +x, +y, -x, -y

  s.motion = Sinusoidal{10, 0, 8};
  gt = trajectory(s);
  CHECK(gt[2].x == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(gt[6].x == doctest::Approx(70.0).epsilon(1e-12));
}

TEST_CASE("generation is deterministic and round-trips ground truth exactly") {
  SequenceSpec s = small_spec();
  s.target = {10.1, 10.3, 12.7, 9.2};
  s.motion = ConstantVelocity{0.7, 0.3};
  s.distractors = 1;
  s.illumination_lo = 0.9;
  s.illumination_hi = 1.2;
  const auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  generate(s, 11, a);
  generate(s, 11, b);
  for (const char* f : {"groundtruth.txt", "frames/0001.ppm", "frames/0006.ppm"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const Sequence seq = read_sequence(a);
  CHECK(seq.groundtruth == trajectory(s));
  for (const Box& g : seq.groundtruth) {
    CHECK(g.x >= 1.0);
    CHECK(g.y >= 1.0);
    CHECK(g.x + g.w <= s.width - 1.0);
    CHECK(g.y + g.h <= s.height - 1.0);
  }
  CHECK(synthesize(s, 11).frames == seq.frames);
  CHECK_FALSE(synthesize(s, 12).frames == seq.frames);
}

TEST_CASE("target pixels differ from the background") {
  SequenceSpec s = small_spec();
  s.frames = 1;
  const Sequence seq = synthesize(s, 1);
  SequenceSpec empty = s;
  empty.target = {1, 1, 1, 1};
  const Sequence bg = synthesize(empty, 1);
  int changed = 0;
  for (Index y = 12; y < 18; ++y) {
    for (Index x = 12; x < 20; ++x) changed += seq.frames[0].at(0, y, x) != bg.frames[0].at(0, y, x);
  }
  CHECK(changed > 40);
}
