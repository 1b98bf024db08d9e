#ifndef STRACK_SEQUENCE_IO_HPP_
#define STRACK_SEQUENCE_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "strack/box.hpp"
#include "strack/grid.hpp"

namespace strack {

// Malformed or inconsistent on-disk data; messages name the file and line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB, interleaved, row-major.
struct Image {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(Index w, Index h) : width(w), height(h), rgb(static_cast<std::size_t>(3 * w * h), 0) {}

  bool empty() const { return rgb.empty(); }
  std::uint8_t at(Index c, Index y, Index x) const { return rgb[static_cast<std::size_t>(3 * (y * width + x) + c)]; }
  std::uint8_t& at(Index c, Index y, Index x) { return rgb[static_cast<std::size_t>(3 * (y * width + x) + c)]; }

  bool operator==(const Image&) const = default;
};

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

struct Sequence {
  std::vector<Image> frames;
  std::vector<Box> groundtruth;
};

// <dir>/frames/0001.ppm ... and <dir>/groundtruth.txt, one box per frame.
Sequence read_sequence(const std::filesystem::path& dir);

// "x,y,w,h" per line, LF endings.
std::vector<Box> parse_boxes(const std::string& text, const std::string& source);
std::vector<Box> read_boxes(const std::filesystem::path& path);
// Writes "%.6f" fields; an empty list gives an empty file.
void write_results(const std::filesystem::path& path, const std::vector<Box>& boxes);
std::vector<Box> read_results(const std::filesystem::path& path);

struct ConstantVelocity {
  double vx = 0.0, vy = 0.0;  // px per frame
  bool operator==(const ConstantVelocity&) const = default;
};
struct Sinusoidal {
  double ax = 0.0, ay = 0.0, period = 1.0;  // offset a·sin(2πt/period)
  bool operator==(const Sinusoidal&) const = default;
};
// Every `period` frames the target jumps `magnitude` px along +x, +y, -x, -y in turn.
struct Jump {
  int period = 1;
  double magnitude = 0.0;
  bool operator==(const Jump&) const = default;
};
using Motion = std::variant<ConstantVelocity, Sinusoidal, Jump>;

struct SequenceSpec {
  int frames = 0;
  Index width = 0, height = 0;
  Box target;
  std::uint64_t texture_seed = 0;
  Motion motion = ConstantVelocity{};
  int distractors = 0;
  double illumination_lo = 1.0, illumination_hi = 1.0;  // brightness multiplier, first to last frame
  std::uint64_t background_seed = 0;

  bool operator==(const SequenceSpec&) const = default;
};

// Thrown for specs that cannot be generated (unknown keys, bad values, a
// target leaving the frame).
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// "key = value" lines; '#' starts a comment. Keys: frames, extent (W,H),
// target (x,y,w,h,texture_seed), motion ("constant-velocity vx,vy",
// "sinusoidal ax,ay,period" or "jump period,magnitude"), distractors,
// illumination_ramp (lo,hi), background (seed).
SequenceSpec parse_spec(const std::string& text);
SequenceSpec read_spec(const std::filesystem::path& path);
std::string format_spec(const SequenceSpec& spec);

// Ground-truth trajectory, frame 0 first. Throws SpecError when the target
// comes within 1 px of the frame border.
std::vector<Box> trajectory(const SequenceSpec& spec);

// Renders frames in memory; deterministic in (spec, seed).
Sequence synthesize(const SequenceSpec& spec, std::uint64_t seed);
// synthesize() written in the read_sequence layout.
void generate(const SequenceSpec& spec, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace strack

#endif  // STRACK_SEQUENCE_IO_HPP_
