#include "strack/suites.hpp"

#include <cmath>

#include "strack/rng.hpp"

namespace strack {

namespace {

constexpr Index kWidth = 200;
constexpr Index kHeight = 160;

SequenceSpec base_spec(Rng& rng, int frames) {
  SequenceSpec s;
  s.frames = frames;
  s.width = kWidth;
  s.height = kHeight;
  s.target.w = std::round(rng.uniform(18, 30));
  s.target.h = std::round(rng.uniform(18, 30));
  s.texture_seed = rng.next_u64() >> 12;
  s.background_seed = rng.next_u64() >> 12;
  return s;
}

// Places the target so its whole trajectory keeps a 2 px margin, given the
// extreme offsets the motion reaches.
void place(SequenceSpec& s, Rng& rng, double lo_x, double hi_x, double lo_y, double hi_y) {
  const double min_x = 2.0 - lo_x, max_x = kWidth - 2.0 - s.target.w - hi_x;
  const double min_y = 2.0 - lo_y, max_y = kHeight - 2.0 - s.target.h - hi_y;
  s.target.x = std::round(rng.uniform(min_x, std::max(min_x, max_x)));
  s.target.y = std::round(rng.uniform(min_y, std::max(min_y, max_y)));
}

SequenceSpec constant_velocity(Rng& rng, int frames, double max_speed) {
  SequenceSpec s = base_spec(rng, frames);
  const double speed = rng.uniform(0.5, max_speed), angle = rng.uniform(0, 2 * M_PI);
  // Quantised to 1/64 px so the spec file round-trips through short decimals.
  const double vx = std::round(64 * speed * std::cos(angle)) / 64, vy = std::round(64 * speed * std::sin(angle)) / 64;
  s.motion = ConstantVelocity{vx, vy};
  const double span = frames - 1;
  place(s, rng, std::min(0.0, vx * span), std::max(0.0, vx * span), std::min(0.0, vy * span),
        std::max(0.0, vy * span));
  return s;
}

SequenceSpec jump(Rng& rng, int frames) {
  SequenceSpec s = base_spec(rng, frames);
  const double size = std::max(s.target.w, s.target.h);
  const double magnitude = std::round(rng.uniform(0.5, 0.8) * size);
  s.motion = Jump{4 + static_cast<int>(rng.below(3)), magnitude};
  place(s, rng, 0.0, magnitude, 0.0, magnitude);
  return s;
}

SequenceSpec sinusoidal(Rng& rng, int frames) {
  SequenceSpec s = base_spec(rng, frames);
  const double ax = std::round(rng.uniform(5, 25)), ay = std::round(rng.uniform(5, 25));
  s.motion = Sinusoidal{ax, ay, std::round(rng.uniform(12, 30))};
  place(s, rng, -ax, ax, -ay, ay);
  return s;
}

}  // namespace

std::vector<SequenceSpec> easy_suite(std::uint64_t seed, int count, int frames) {
  Rng rng(seed);
  std::vector<SequenceSpec> out;
  for (int i = 0; i < count; ++i) out.push_back(constant_velocity(rng, frames, 2.0));
  return out;
}

std::vector<SequenceSpec> fast_suite(std::uint64_t seed, int count, int frames) {
  Rng rng(seed);
  std::vector<SequenceSpec> out;
  for (int i = 0; i < count; ++i) out.push_back(jump(rng, frames));
  return out;
}

std::vector<SequenceSpec> training_suite(std::uint64_t seed, int count, int frames) {
  Rng rng(seed);
  std::vector<SequenceSpec> out;
  for (int i = 0; i < count; ++i) {
    switch (i % 3) {
      case 0: out.push_back(constant_velocity(rng, frames, 3.0)); break;
      case 1: out.push_back(sinusoidal(rng, frames)); break;
      default: out.push_back(jump(rng, frames)); break;
    }
    out.back().distractors = static_cast<int>(rng.below(2));
  }
  return out;
}

}  // namespace strack
