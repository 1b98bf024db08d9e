#include "strack/model_file.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string_view>
#include <type_traits>

namespace strack {

namespace {

constexpr std::string_view kMagic = "STRACK-MODEL";

std::string shape_text(const Shape& shape) {
  if (shape.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::string list_text(const std::vector<Index>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

void put_double(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

class Writer {
 public:
  template <class T>
  void integer(std::string_view name, T& v) {
    if constexpr (std::is_enum_v<T>) {
      header_ << "int " << name << ' ' << static_cast<long long>(v) << '\n';
    } else {
      header_ << "int " << name << ' ' << v << '\n';
    }
  }
  template <class E>
  void enumeration(std::string_view name, E& v, int) { integer(name, v); }
  void real(std::string_view name, double& v) {
    header_ << "real " << name << '\n';
    put_double(payload_, v);
  }
  void list(std::string_view name, std::vector<Index>& v) { header_ << "list " << name << ' ' << list_text(v) << '\n'; }
  void grid(std::string_view name, Grid& g) {
    header_ << "grid " << name << ' ' << shape_text(g.shape()) << '\n';
    for (Index i = 0; i < g.size(); ++i) put_double(payload_, g[i]);
  }
  // Writes `present` and, on load, tells the caller whether to visit the
  // optional member.
  bool flag(std::string_view name, bool present) {
    integer(name, present);
    return present;
  }
  void count(std::string_view name, std::size_t& n) { integer(name, n); }

  std::string finish() const {
    std::string out = std::string(kMagic) + ' ' + std::to_string(kModelFormatVersion) + '\n';
    out += header_.str();
    out += "payload " + std::to_string(payload_.size() / 8) + '\n';
    out += payload_;
    return out;
  }

 private:
  std::ostringstream header_;
  std::string payload_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : source_(std::move(source)) {
    std::size_t pos = 0;
    for (;;) {
      const std::size_t end = bytes.find('\n', pos);
      if (end == std::string::npos) fail("truncated header");
      std::string line = bytes.substr(pos, end - pos);
      pos = end + 1;
      if (line.rfind("payload ", 0) == 0) {
        unsigned long long n = 0;
        parse_number(std::string_view(line).substr(8), n, "payload");
        if (bytes.size() - pos != n * 8) {
          fail("payload is " + std::to_string(bytes.size() - pos) + " bytes, header promises " +
               std::to_string(n * 8));
        }
        payload_ = bytes.data() + pos;
        payload_count_ = static_cast<std::size_t>(n);
        break;
      }
      lines_.push_back(std::move(line));
    }
    const std::string expect = std::string(kMagic) + ' ' + std::to_string(kModelFormatVersion);
    const std::string& magic = lines_.empty() ? expect : lines_.front();
    if (lines_.empty() || magic.rfind(kMagic, 0) != 0) fail("not a model file");
    if (magic != expect) {
      fail("unsupported model version '" + magic.substr(std::min(magic.size(), kMagic.size() + 1)) + "', expected " +
           std::to_string(kModelFormatVersion));
    }
    next_ = 1;
  }

  template <class T>
  void integer(std::string_view name, T& v) {
    const std::string value = record("int", name);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      unsigned long long u = 0;
      parse_number(value, u, name);
      v = static_cast<T>(u);
    } else {
      long long x = 0;
      parse_number(value, x, name);
      if constexpr (std::is_same_v<T, bool>) {
        if (x != 0 && x != 1) fail("bad flag value for " + std::string(name));
        v = x == 1;
      } else {
        v = static_cast<T>(x);
      }
    }
  }
  template <class E>
  void enumeration(std::string_view name, E& v, int count) {
    integer(name, v);
    const auto x = static_cast<long long>(v);
    if (x < 0 || x >= count) fail("value out of range for " + std::string(name));
  }
  void real(std::string_view name, double& v) {
    if (!record("real", name).empty()) fail("unexpected value on real record " + std::string(name));
    v = take(name);
  }
  void list(std::string_view name, std::vector<Index>& v) {
    const std::string value = record("list", name);
    v.clear();
    if (value == "-") return;
    for (const auto& part : split(value, ',')) {
      long long x = 0;
      parse_number(part, x, name);
      v.push_back(static_cast<Index>(x));
    }
  }
  void grid(std::string_view name, Grid& g) {
    const std::string value = record("grid", name);
    if (value == "-") {
      g = Grid();
      return;
    }
    Shape shape;
    for (const auto& part : split(value, 'x')) {
      long long x = 0;
      parse_number(part, x, name);
      if (x <= 0) fail("bad shape '" + value + "' for " + std::string(name));
      shape.push_back(static_cast<Index>(x));
    }
    if (shape.size() > 5) fail("bad shape '" + value + "' for " + std::string(name));
    Eigen::VectorXd data(shape_product(shape));
    for (Index i = 0; i < data.size(); ++i) data[i] = take(name);
    g = Grid(std::move(shape), std::move(data));
  }
  bool flag(std::string_view name, bool) {
    bool present = false;
    integer(name, present);
    return present;
  }
  void count(std::string_view name, std::size_t& n) {
    integer(name, n);
    if (n > 1024) fail("implausible count for " + std::string(name));
  }

  void finish() const {
    if (next_ != lines_.size()) fail("unexpected record '" + lines_[next_] + "'");
    if (cursor_ != payload_count_) {
      fail("payload holds " + std::to_string(payload_count_) + " values, header uses " + std::to_string(cursor_));
    }
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_ + ": " + what); }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
      const std::size_t end = s.find(sep, start);
      out.push_back(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
      if (end == std::string::npos) return out;
      start = end + 1;
    }
  }

  template <class N>
  void parse_number(std::string_view text, N& out, std::string_view name) const {
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (text.empty() || ec != std::errc() || p != text.data() + text.size()) {
      fail("bad number '" + std::string(text) + "' for " + std::string(name));
    }
  }

  // Returns what follows "<kind> <name>" on the next header line.
  std::string record(std::string_view kind, std::string_view name) {
    const std::string prefix = std::string(kind) + ' ' + std::string(name);
    if (next_ >= lines_.size()) fail("header ended before '" + prefix + "'");
    const std::string& line = lines_[next_];
    if (line.rfind(prefix, 0) != 0 || (line.size() > prefix.size() && line[prefix.size()] != ' ')) {
      fail("header line " + std::to_string(next_ + 1) + ": expected '" + prefix + "', got '" + line + "'");
    }
    ++next_;
    return line.size() > prefix.size() ? line.substr(prefix.size() + 1) : std::string();
  }

  double take(std::string_view name) {
    if (cursor_ >= payload_count_) fail("payload too short at " + std::string(name));
    return get_double(payload_ + 8 * cursor_++);
  }

  std::string source_;
  std::vector<std::string> lines_;
  std::size_t next_ = 0;
  const char* payload_ = nullptr;
  std::size_t payload_count_ = 0;
  std::size_t cursor_ = 0;
};

std::string indexed(std::string_view prefix, std::size_t i, std::string_view field) {
  return std::string(prefix) + std::to_string(i) + '.' + std::string(field);
}

template <class A>
void visit(A& a, ConvKernel& k, const std::string& name) {
  a.grid(name + ".weights", k.weights);
  a.grid(name + ".bias", k.bias);
  a.list(name + ".stride", k.stride);
  a.list(name + ".pad_lo", k.pad_lo);
  a.list(name + ".pad_hi", k.pad_hi);
}

template <class A>
void visit(A& a, BackboneParams& b, const std::string& name) {
  a.enumeration(name + ".mode", b.mode, 2);
  std::size_t n = b.stages.size();
  a.count(name + ".stages", n);
  b.stages.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    visit(a, b.stages[i].conv, indexed(name + ".stage", i, "conv"));
    a.integer(indexed(name + ".stage", i, "relu"), b.stages[i].relu);
  }
  a.integer(name + ".tap_shallow", b.tap_points[0]);
  a.integer(name + ".tap_deep", b.tap_points[1]);
  a.integer(name + ".factor_shallow", b.downsample_factors[0]);
  a.integer(name + ".factor_deep", b.downsample_factors[1]);
  a.integer(name + ".channels", b.channels);
  a.integer(name + ".patch_extent", b.patch_extent);
  a.integer(name + ".clip_len", b.clip_len);
}

template <class A>
void visit(A& a, FamParams& f, const std::string& name) {
  a.enumeration(name + ".mode", f.mode, 2);
  if (a.flag(name + ".has_fusion_conv", f.fusion_conv.has_value())) {
    if (!f.fusion_conv) f.fusion_conv.emplace();
    visit(a, *f.fusion_conv, name + ".fusion_conv");
  } else {
    f.fusion_conv.reset();
  }
  visit(a, f.awp_conv, name + ".awp_conv");
  a.real(name + ".amplification", f.amplification);
  a.grid(name + ".attn_kernel", f.attn_kernel);
  a.real(name + ".attn_bias", f.attn_bias);
}

template <class A>
void visit(A& a, TrackerConfig& c) {
  a.integer("config.patch_extent", c.patch_extent);
  a.real("config.search_scale", c.search_scale);
  a.integer("config.clip_len", c.clip_len);
  a.integer("config.update_period", c.update_period);
  a.integer("config.init_augmentations", c.init_augmentations);
  a.integer("config.channels", c.channels);
  a.integer("config.factor_shallow", c.downsample_factors[0]);
  a.integer("config.factor_deep", c.downsample_factors[1]);
  a.enumeration("config.stream", c.stream, 3);
  a.enumeration("config.fusion", c.fusion, 2);
  a.integer("config.attention", c.switches.attention);
  a.enumeration("config.pooling", c.switches.pooling, 2);
  a.enumeration("config.scorer", c.scorer, 2);
  a.integer("config.proposals", c.proposals);
  a.real("config.proposal_noise", c.proposal_noise);
  a.real("config.lost_ratio", c.lost_ratio);
  ClassifierConfig& k = c.classifier;
  a.integer("config.classifier.hidden_channels", k.hidden_channels);
  a.integer("config.classifier.kernel_size", k.kernel_size);
  a.real("config.classifier.lambda1", k.lambda1);
  a.real("config.classifier.lambda2", k.lambda2);
  a.enumeration("config.classifier.phi1", k.phi1, 2);
  a.enumeration("config.classifier.phi2", k.phi2, 2);
  a.real("config.classifier.leaky_slope", k.leaky_slope);
  a.integer("config.classifier.capacity", k.capacity);
  a.real("config.classifier.learning_rate", k.learning_rate);
  a.real("config.classifier.sigma_factor", k.sigma_factor);
  a.integer("config.classifier.init_gn", k.init_budget.gauss_newton);
  a.integer("config.classifier.init_cg", k.init_budget.conjugate_gradient);
  a.integer("config.classifier.update_gn", k.update_budget.gauss_newton);
  a.integer("config.classifier.update_cg", k.update_budget.conjugate_gradient);
  a.integer("config.seed", c.seed);
}

template <class A>
void visit(A& a, Model& m) {
  visit(a, m.defaults);
  visit(a, m.spatial, "spatial");
  visit(a, m.temporal, "temporal");
  visit(a, m.estimator.fam_shallow, "fam_shallow");
  visit(a, m.estimator.fam_deep, "fam_deep");
  a.grid("head.w1", m.estimator.head.w1);
  a.grid("head.b1", m.estimator.head.b1);
  a.grid("head.w2", m.estimator.head.w2);
  a.grid("head.b2", m.estimator.head.b2);
}

}  // namespace

std::string serialize_model(const Model& model) {
  Model copy = model;
  Writer w;
  visit(w, copy);
  return w.finish();
}

Model deserialize_model(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  Model m;
  visit(r, m);
  r.finish();
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open model file");
  std::ostringstream s;
  s << in.rdbuf();
  return deserialize_model(s.str(), path.string());
}

}  // namespace strack
