#include "strack/sequence_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include "strack/rng.hpp"

namespace strack {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

// Shortest decimal that parses back to the same double.
std::string exact_decimal(double v) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string box_line(const Box& b, bool exact) {
  if (exact) {
    return exact_decimal(b.x) + "," + exact_decimal(b.y) + "," + exact_decimal(b.w) + "," +
           exact_decimal(b.h) + "\n";
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", b.x, b.y, b.w, b.h);
  return buf;
}

fs::path frame_path(const fs::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%04zu.ppm", index);
  return dir / "frames" / name;
}

// ---- spec parsing ----

std::vector<double> numbers(std::string_view key, std::string_view value, std::size_t count) {
  auto fields = split(value, ',');
  std::vector<double> out(fields.size());
  bool ok = fields.size() == count;
  for (std::size_t i = 0; ok && i < fields.size(); ++i) ok = parse_number(fields[i], out[i]);
  if (!ok) {
    throw SpecError("spec key '" + std::string(key) + "' expects " + std::to_string(count) +
                    " comma-separated numbers, got '" + std::string(value) + "'");
  }
  return out;
}

std::uint64_t seed_value(std::string_view key, double v) {
  if (v < 0 || v != std::floor(v) || v > 9e15) {
    throw SpecError("spec key '" + std::string(key) + "' expects a non-negative integer seed");
  }
  return static_cast<std::uint64_t>(v);
}

int count_value(std::string_view key, double v, int min) {
  if (v != std::floor(v) || v < min || v > 1e6) {
    throw SpecError("spec key '" + std::string(key) + "' expects an integer >= " + std::to_string(min));
  }
  return static_cast<int>(v);
}

Motion parse_motion(std::string_view value) {
  const auto space = value.find_first_of(" \t");
  const std::string_view kind = value.substr(0, space);
  const std::string_view args = space == std::string_view::npos ? "" : trim(value.substr(space));
  if (kind == "constant-velocity") {
    auto v = numbers("motion", args, 2);
    return ConstantVelocity{v[0], v[1]};
  }
  if (kind == "sinusoidal") {
    auto v = numbers("motion", args, 3);
    if (!(v[2] > 0)) throw SpecError("sinusoidal motion needs a positive period");
    return Sinusoidal{v[0], v[1], v[2]};
  }
  if (kind == "jump") {
    auto v = numbers("motion", args, 2);
    return Jump{count_value("motion", v[0], 1), v[1]};
  }
  throw SpecError("unknown motion model '" + std::string(kind) +
                  "' (expected constant-velocity, sinusoidal or jump)");
}

std::string format_motion(const Motion& m) {
  if (auto* c = std::get_if<ConstantVelocity>(&m)) {
    return "constant-velocity " + exact_decimal(c->vx) + "," + exact_decimal(c->vy);
  }
  if (auto* s = std::get_if<Sinusoidal>(&m)) {
    return "sinusoidal " + exact_decimal(s->ax) + "," + exact_decimal(s->ay) + "," +
           exact_decimal(s->period);
  }
  const auto& j = std::get<Jump>(m);
  return "jump " + std::to_string(j.period) + "," + exact_decimal(j.magnitude);
}

void validate(const SequenceSpec& s) {
  if (s.frames < 1) throw SpecError("spec needs frames >= 1");
  if (s.width < 8 || s.height < 8) throw SpecError("spec extent must be at least 8x8");
  if (!s.target.valid()) throw SpecError("spec target needs positive finite size");
  if (!(s.illumination_lo > 0) || !(s.illumination_hi > 0)) {
    throw SpecError("illumination_ramp multipliers must be positive");
  }
  if (s.distractors < 0) throw SpecError("distractors must be non-negative");
}

// ---- rendering ----

double clamp_byte(double v) { return std::clamp(v, 0.0, 255.0); }

// 3×3 checkerboard stretched over the target, each square its own seeded
// light or dark colour, plus fixed per-texel noise. Squares are kept coarse
// because fine checks alias through the strided backbone.
struct Texture {
  Index width = 0, height = 0;
  std::vector<std::array<double, 3>> texels;

  Texture(std::uint64_t seed, Index w, Index h) : width(w), height(h) {
    Rng rng(seed ^ 0x7e87u);
    constexpr Index kBlocks = 3;
    std::array<std::array<double, 3>, kBlocks * kBlocks> colours{};
    for (Index i = 0; i < kBlocks * kBlocks; ++i) {
      const bool light = ((i / kBlocks) + (i % kBlocks)) % 2 == 0;
      for (auto& c : colours[static_cast<std::size_t>(i)]) c = light ? rng.uniform(150, 240) : rng.uniform(15, 100);
    }
    texels.resize(static_cast<std::size_t>(w * h));
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const Index b = std::min(y * kBlocks / h, kBlocks - 1) * kBlocks + std::min(x * kBlocks / w, kBlocks - 1);
        auto& t = texels[static_cast<std::size_t>(y * w + x)];
        for (int c = 0; c < 3; ++c) t[c] = clamp_byte(colours[static_cast<std::size_t>(b)][c] + rng.uniform(-25, 25));
      }
    }
  }

  const std::array<double, 3>& at(Index x, Index y) const {
    x = std::clamp<Index>(x, 0, width - 1);
    y = std::clamp<Index>(y, 0, height - 1);
    return texels[static_cast<std::size_t>(y * width + x)];
  }
};

// Smooth value noise at 16 px spacing plus fine per-pixel grain.
std::vector<double> background(std::uint64_t seed, Index w, Index h) {
  Rng rng(seed ^ 0xba59u);
  constexpr Index kSpacing = 16;
  const Index gw = w / kSpacing + 2, gh = h / kSpacing + 2;
  std::vector<double> coarse(static_cast<std::size_t>(3 * gw * gh));
  for (double& v : coarse) v = rng.uniform(70, 180);
  std::vector<double> out(static_cast<std::size_t>(3 * w * h));
  for (Index y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / kSpacing;
    const Index y0 = static_cast<Index>(gy);
    const double fy = gy - static_cast<double>(y0);
    for (Index x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / kSpacing;
      const Index x0 = static_cast<Index>(gx);
      const double fx = gx - static_cast<double>(x0);
      for (Index c = 0; c < 3; ++c) {
        auto g = [&](Index yy, Index xx) { return coarse[static_cast<std::size_t>((yy * gw + xx) * 3 + c)]; };
        const double v = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
                         fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
        out[static_cast<std::size_t>(3 * (y * w + x) + c)] = v + rng.uniform(-12, 12);
      }
    }
  }
  return out;
}

void paint(std::vector<double>& canvas, Index w, Index h, const Box& box, const Texture& tex) {
  const Index x_lo = std::max<Index>(0, static_cast<Index>(std::floor(box.x - 0.5)));
  const Index y_lo = std::max<Index>(0, static_cast<Index>(std::floor(box.y - 0.5)));
  const Index x_hi = std::min<Index>(w - 1, static_cast<Index>(std::ceil(box.x + box.w)));
  const Index y_hi = std::min<Index>(h - 1, static_cast<Index>(std::ceil(box.y + box.h)));
  for (Index y = y_lo; y <= y_hi; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (cy < box.y || cy >= box.y + box.h) continue;
    for (Index x = x_lo; x <= x_hi; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx < box.x || cx >= box.x + box.w) continue;
      const auto& t = tex.at(static_cast<Index>(cx - box.x), static_cast<Index>(cy - box.y));
      for (Index c = 0; c < 3; ++c) canvas[static_cast<std::size_t>(3 * (y * w + x) + c)] = t[c];
    }
  }
}

}  // namespace

Image read_ppm(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (next_token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  Index w = 0, h = 0, maxval = 0;
  if (!parse_number(next_token(), w) || !parse_number(next_token(), h) ||
      !parse_number(next_token(), maxval) || w < 1 || h < 1) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t bytes = static_cast<std::size_t>(3 * w * h);
  if (data.size() < pos + bytes) throw FormatError(path.string() + ": truncated pixel data");
  Image img(w, h);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(pos), bytes, img.rgb.begin());
  return img;
}

void write_ppm(const fs::path& path, const Image& image) {
  std::string text = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  text.append(image.rgb.begin(), image.rgb.end());
  write_file(path, text);
}

std::vector<Box> parse_boxes(const std::string& text, const std::string& source) {
  std::vector<Box> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + start, end - start);
    const auto fields = split(line, ',');
    std::array<double, 4> v{};
    bool ok = fields.size() == 4;
    for (std::size_t i = 0; ok && i < 4; ++i) ok = parse_number(fields[i], v[i]);
    if (!ok) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected x,y,w,h, got '" +
                        std::string(trim(line)) + "'");
    }
    out.push_back({v[0], v[1], v[2], v[3]});
    start = end + 1;
  }
  return out;
}

std::vector<Box> read_boxes(const fs::path& path) { return parse_boxes(read_file(path), path.string()); }

void write_results(const fs::path& path, const std::vector<Box>& boxes) {
  std::string text;
  for (const Box& b : boxes) text += box_line(b, false);
  write_file(path, text);
}

std::vector<Box> read_results(const fs::path& path) { return read_boxes(path); }

Sequence read_sequence(const fs::path& dir) {
  const fs::path gt = dir / "groundtruth.txt";
  if (!fs::exists(gt)) throw FormatError(gt.string() + ": missing ground truth");
  Sequence seq;
  seq.groundtruth = read_boxes(gt);
  for (std::size_t i = 1;; ++i) {
    const fs::path p = frame_path(dir, i);
    if (!fs::exists(p)) {
      if (i <= seq.groundtruth.size()) throw FormatError(p.string() + ": missing frame");
      break;
    }
    seq.frames.push_back(read_ppm(p));
  }
  if (seq.frames.size() != seq.groundtruth.size()) {
    throw FormatError(dir.string() + ": " + std::to_string(seq.frames.size()) + " frames but " +
                      std::to_string(seq.groundtruth.size()) + " ground-truth boxes");
  }
  if (seq.frames.empty()) throw FormatError(dir.string() + ": sequence has no frames");
  return seq;
}

SequenceSpec parse_spec(const std::string& text) {
  SequenceSpec spec;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw SpecError("spec line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (seen[key]) throw SpecError("spec key '" + key + "' given twice");
    seen[key] = true;
    if (key == "frames") {
      spec.frames = count_value(key, numbers(key, value, 1)[0], 1);
    } else if (key == "extent") {
      auto v = numbers(key, value, 2);
      spec.width = count_value(key, v[0], 8);
      spec.height = count_value(key, v[1], 8);
    } else if (key == "target") {
      auto v = numbers(key, value, 5);
      spec.target = {v[0], v[1], v[2], v[3]};
      spec.texture_seed = seed_value(key, v[4]);
    } else if (key == "motion") {
      spec.motion = parse_motion(value);
    } else if (key == "distractors") {
      spec.distractors = count_value(key, numbers(key, value, 1)[0], 0);
    } else if (key == "illumination_ramp") {
      auto v = numbers(key, value, 2);
      spec.illumination_lo = v[0];
      spec.illumination_hi = v[1];
    } else if (key == "background") {
      spec.background_seed = seed_value(key, numbers(key, value, 1)[0]);
    } else {
      throw SpecError("unknown spec key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  for (const char* required : {"frames", "extent", "target"}) {
    if (!seen[required]) throw SpecError(std::string("spec is missing required key '") + required + "'");
  }
  trajectory(spec);  // rejects targets that leave the frame
  return spec;
}

SequenceSpec read_spec(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FormatError& e) {
    throw SpecError(e.what());
  }
  return parse_spec(text);
}

std::string format_spec(const SequenceSpec& s) {
  const Box& t = s.target;
  std::string out;
  out += "frames = " + std::to_string(s.frames) + "\n";
  out += "extent = " + std::to_string(s.width) + "," + std::to_string(s.height) + "\n";
  out += "target = " + exact_decimal(t.x) + "," + exact_decimal(t.y) + "," + exact_decimal(t.w) + "," +
         exact_decimal(t.h) + "," + std::to_string(s.texture_seed) + "\n";
  out += "motion = " + format_motion(s.motion) + "\n";
  out += "distractors = " + std::to_string(s.distractors) + "\n";
  out += "illumination_ramp = " + exact_decimal(s.illumination_lo) + "," + exact_decimal(s.illumination_hi) + "\n";
  out += "background = " + std::to_string(s.background_seed) + "\n";
  return out;
}

std::vector<Box> trajectory(const SequenceSpec& spec) {
  validate(spec);
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(spec.frames));
  Box b = spec.target;
  for (int t = 0; t < spec.frames; ++t) {
    if (auto* c = std::get_if<ConstantVelocity>(&spec.motion)) {
      b.x = spec.target.x + c->vx * t;
      b.y = spec.target.y + c->vy * t;
    } else if (auto* s = std::get_if<Sinusoidal>(&spec.motion)) {
      const double phase = std::sin(2.0 * M_PI * t / s->period);
      b.x = spec.target.x + s->ax * phase;
      b.y = spec.target.y + s->ay * phase;
    } else {
      const auto& j = std::get<Jump>(spec.motion);
      if (t > 0 && t % j.period == 0) {
        switch ((t / j.period - 1) % 4) {
          case 0: b.x += j.magnitude; break;
          case 1: b.y += j.magnitude; break;
          case 2: b.x -= j.magnitude; break;
          default: b.y -= j.magnitude; break;
        }
      }
    }
    const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
    if (b.x < 1.0 || b.y < 1.0 || b.x + b.w > w - 1.0 || b.y + b.h > h - 1.0) {
      throw SpecError("target leaves the frame (1 px margin) at frame " + std::to_string(t + 1));
    }
    out.push_back(b);
  }
  return out;
}

Sequence synthesize(const SequenceSpec& spec, std::uint64_t seed) {
  Sequence seq;
  seq.groundtruth = trajectory(spec);
  const Index w = spec.width, h = spec.height;
  const std::vector<double> bg = background(spec.background_seed, w, h);
  const Index tw = static_cast<Index>(std::ceil(spec.target.w)), th = static_cast<Index>(std::ceil(spec.target.h));
  const Texture target_tex(spec.texture_seed, tw, th);

  Rng rng(seed);
  struct Distractor {
    Box box;
    double vx, vy;
    Texture tex;
  };
  std::vector<Distractor> distractors;
  for (int k = 0; k < spec.distractors; ++k) {
    Box b{rng.uniform(0, static_cast<double>(w) - spec.target.w), rng.uniform(0, static_cast<double>(h) - spec.target.h),
          spec.target.w, spec.target.h};
    const double vx = rng.uniform(-1.5, 1.5), vy = rng.uniform(-1.5, 1.5);
    distractors.push_back({b, vx, vy, Texture(spec.texture_seed + 1000003ULL * (k + 1), tw, th)});
  }

  for (int t = 0; t < spec.frames; ++t) {
    std::vector<double> canvas = bg;
    for (auto& d : distractors) {
      paint(canvas, w, h, d.box, d.tex);
      d.box.x += d.vx;
      d.box.y += d.vy;
      if (d.box.x < 0 || d.box.x + d.box.w > static_cast<double>(w)) d.vx = -d.vx;
      if (d.box.y < 0 || d.box.y + d.box.h > static_cast<double>(h)) d.vy = -d.vy;
    }
    paint(canvas, w, h, seq.groundtruth[static_cast<std::size_t>(t)], target_tex);
    const double ramp = spec.frames > 1 ? static_cast<double>(t) / (spec.frames - 1) : 0.0;
    const double gain = spec.illumination_lo + (spec.illumination_hi - spec.illumination_lo) * ramp;
    Image img(w, h);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      img.rgb[i] = static_cast<std::uint8_t>(std::lround(clamp_byte(canvas[i] * gain + 3.0 * rng.normal())));
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void generate(const SequenceSpec& spec, std::uint64_t seed, const fs::path& dir) {
  const Sequence seq = synthesize(spec, seed);
  fs::create_directories(dir / "frames");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) write_ppm(frame_path(dir, i + 1), seq.frames[i]);
  std::string gt;
  for (const Box& b : seq.groundtruth) gt += box_line(b, true);
  write_file(dir / "groundtruth.txt", gt);
}

}  // namespace strack
