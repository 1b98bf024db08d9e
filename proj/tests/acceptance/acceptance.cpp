// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Oracles are computed here, independently of the code under test.

#include <Eigen/Cholesky>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "strack/autodiff.hpp"
#include "strack/eval.hpp"
#include "strack/model_file.hpp"
#include "strack/suites.hpp"
#include "strack/train.hpp"

namespace fs = std::filesystem;
using namespace strack;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

// Runs one criterion; an exception is a failure with the message as detail.
void criterion(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, title, pass, detail);
  } catch (const std::exception& e) {
    report(id, title, false, std::string("threw: ") + e.what());
  }
}

Grid random_grid(Rng& rng, Shape shape, double scale = 1.0) {
  Grid g(std::move(shape));
  for (Index i = 0; i < g.size(); ++i) g[i] = scale * rng.normal();
  return g;
}

// ---- finite differences -----------------------------------------------------

// Central differences against `grad`, relative error with a 1e-2 floor on the
// denominator (exact zeros otherwise make the ratio meaningless).
double fd_error(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& grad,
                const Eigen::VectorXd& point, double eps = 1e-5) {
  double worst = 0.0;
  Eigen::VectorXd p = point;
  for (Index i = 0; i < p.size(); ++i) {
    p[i] = point[i] + eps;
    const double up = f(p);
    p[i] = point[i] - eps;
    const double down = f(p);
    p[i] = point[i];
    const double num = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(num), std::abs(grad[i]), 1e-2});
    worst = std::max(worst, std::abs(num - grad[i]) / denom);
  }
  return worst;
}

Eigen::VectorXd concat(const std::vector<Grid>& grids) {
  Index n = 0;
  for (const auto& g : grids) n += g.size();
  Eigen::VectorXd v(n);
  Index at = 0;
  for (const auto& g : grids) {
    v.segment(at, g.size()) = g.data();
    at += g.size();
  }
  return v;
}

std::vector<Grid> split_like(const Eigen::VectorXd& v, const std::vector<Grid>& like) {
  std::vector<Grid> out;
  Index at = 0;
  for (const auto& g : like) {
    out.emplace_back(g.shape(), Eigen::VectorXd(v.segment(at, g.size())));
    at += g.size();
  }
  return out;
}

constexpr int kPoints = 5;

std::pair<bool, std::string> gradient_fidelity() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  auto note = [&](double e, const std::string& name) {
    ++checks;
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  for (OpTag tag : kAllOpTags) {
    for (int p = 0; p < kPoints; ++p) {
      const OpCase c = random_op_case(tag, rng);
      const Grid ct = random_grid(rng, apply_op(tag, c.inputs, c.attrs).shape());
      const Eigen::VectorXd grad = concat(vjp(tag, c.inputs, ct, c.attrs));
      auto f = [&](const Eigen::VectorXd& v) {
        const auto in = split_like(v, c.inputs);
        return apply_op(tag, in, c.attrs).data().dot(ct.data());
      };
      note(fd_error(f, grad, concat(c.inputs)), std::string(op_tag_name(tag)));
    }
  }
  // Full FAM forward over both fusion modes and every switch setting.
  const FamSwitches switch_sets[] = {{true, Pooling::awp}, {true, Pooling::gap}, {false, Pooling::awp}};
  for (int p = 0; p < 2 * kPoints; ++p) {
    const FusionMode mode = p % 2 ? FusionMode::sum : FusionMode::concat;
    const FamSwitches sw = switch_sets[p % 3];
    const Grid a = random_grid(rng, {4, 6, 5}), b = random_grid(rng, {4, 6, 5});
    FamParams params = make_fam_params(rng, 4, mode);
    for (Index i = 0; i < params.attn_kernel.size(); ++i) params.attn_kernel[i] = 0.5 * rng.normal();
    for (Index i = 0; i < params.awp_conv.bias.size(); ++i) params.awp_conv.bias[i] = 0.3 * rng.normal();
    params.attn_bias = rng.uniform(-0.5, 0.5);
    params.amplification = rng.uniform(1.0, 3.0);
    const Grid up = random_grid(rng, {4, 6, 5});
    const FamGrads g = fam_backward(a, b, params, sw, up);
    const Eigen::VectorXd flat = pack(params);
    Eigen::VectorXd point(a.size() + b.size() + flat.size()), grad(point.size());
    point << a.data(), b.data(), flat;
    grad << g.x2d.data(), g.x3d.data(), pack(g.params);
    auto f = [&](const Eigen::VectorXd& v) {
      const Grid x2(a.shape(), Eigen::VectorXd(v.head(a.size())));
      const Grid x3(b.shape(), Eigen::VectorXd(v.segment(a.size(), b.size())));
      FamParams q = params;
      unpack(v.tail(flat.size()), q);
      return fam_forward(x2, x3, q, sw).data().dot(up.data());
    };
    note(fd_error(f, grad, point), "fam");
  }
  // IoU head, including the gradient with respect to the box.
  for (int p = 0; p < kPoints; ++p) {
    const Grid s = random_grid(rng, {3, 8, 8}), d = random_grid(rng, {2, 4, 4});
    IouHeadParams params = make_iou_head(rng, 3, 2, 12);
    for (Index i = 0; i < params.b1.size(); ++i) params.b1[i] = 0.3 * rng.normal();
    const Box box{rng.uniform(1, 8), rng.uniform(1, 8), rng.uniform(8, 18), rng.uniform(8, 18)};
    const double upstream = rng.uniform(0.5, 1.5);
    const IouHeadGrads g = iou_head_backward({s, d, 32.0}, box, params, upstream);
    const Eigen::VectorXd flat = pack(params);
    const Index np = flat.size();
    Eigen::VectorXd point(np + s.size() + d.size() + 4), grad(point.size());
    point << flat, s.data(), d.data(), box.vec();
    grad << pack(g.params), g.shallow.data(), g.deep.data(), g.box;
    auto f = [&](const Eigen::VectorXd& v) {
      IouHeadParams q = params;
      unpack(v.head(np), q);
      const Grid s2(s.shape(), Eigen::VectorXd(v.segment(np, s.size())));
      const Grid d2(d.shape(), Eigen::VectorXd(v.segment(np + s.size(), d.size())));
      const Eigen::Vector4d bv = v.tail(4);
      return upstream * iou_head_forward({s2, d2, 32.0}, Box{bv[0], bv[1], bv[2], bv[3]}, q);
    };
    note(fd_error(f, grad, point), "iou_head");
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 60.0,
          fmt("%d checks (%zu ops + FAM + IoU head), max rel error %.2e (%s), %.1f s", checks,
              std::size(kAllOpTags), worst, worst_name.c_str(), secs)};
}

// ---- solver oracle -----------------------------------------------------------

std::pair<bool, std::string> solver_oracle() {
  Rng rng(1002);
  ClassifierConfig cfg;
  cfg.lambda1 = cfg.lambda2 = 1e-2;
  ClassifierState s = make_classifier(rng, 2, cfg);
  TrainingSample t;
  t.x = random_grid(rng, {2, 8, 8});
  t.y = make_label_map(Box::from_center(3.5, 4.5, 3, 4), {8, 8, 1.0});
  set_initial_memory(s, {t});

  // Dense normal equations built with plain loops: hidden = w1·x per pixel,
  // J[(i,j), (h,a,b)] = hidden[h, i+a-pad, j+b-pad] (zero outside).
  const Index H = cfg.hidden_channels, K = cfg.kernel_size, pad = s.w2.pad_lo[0];
  std::vector<double> hidden(H * 64, 0.0);
  for (Index h = 0; h < H; ++h) {
    for (Index c = 0; c < 2; ++c) {
      for (Index p = 0; p < 64; ++p) hidden[h * 64 + p] += s.w1.weights[h * 2 + c] * t.x[c * 64 + p];
    }
  }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(64, H * K * K);
  for (Index i = 0; i < 8; ++i) {
    for (Index j = 0; j < 8; ++j) {
      for (Index h = 0; h < H; ++h) {
        for (Index a = 0; a < K; ++a) {
          for (Index b = 0; b < K; ++b) {
            const Index y = i + a - pad, x = j + b - pad;
            if (y >= 0 && y < 8 && x >= 0 && x < 8) J(i * 8 + j, (h * K + a) * K + b) = hidden[h * 64 + y * 8 + x];
          }
        }
      }
    }
  }
  const double gamma = s.memory[0].gamma;
  Eigen::MatrixXd A = gamma * J.transpose() * J;
  A.diagonal().array() += cfg.lambda2;
  const Eigen::VectorXd w = A.ldlt().solve(gamma * J.transpose() * t.y.data());
  const double oracle = gamma * (J * w - t.y.data()).squaredNorm() + cfg.lambda2 * w.squaredNorm() +
                        cfg.lambda1 * s.w1.weights.data().squaredNorm();

  const auto trace = optimize(s, 6, 32, OptimizeWhich::w2_only);
  const double gap = std::abs(trace.back() - oracle) / oracle;
  const double value_diff = std::abs(objective(s) - oracle);
  return {gap < 1e-6 && value_diff < 1e-8,
          fmt("oracle loss %.12f, relative gap %.2e, objective diff %.2e", oracle, gap, value_diff)};
}

// ---- FAM identities ------------------------------------------------------------

std::pair<bool, std::string> awp_gap_identity() {
  Rng rng(1004);
  int pooled_diff = 0, output_diff = 0;
  for (int i = 0; i < 100; ++i) {
    const Index c = 1 + static_cast<Index>(rng.below(12));
    const Index h = 1 + static_cast<Index>(rng.below(12)), w = 1 + static_cast<Index>(rng.below(12));
    FamParams p = make_fam_params(rng, c, FusionMode::sum);
    p.awp_conv.weights.set_zero();
    p.awp_conv.bias.set_zero();
    p.amplification = 2.0;
    const Grid a = random_grid(rng, {c, h, w}, 2.0), b = random_grid(rng, {c, h, w}, 2.0);
    const Grid xs = fuse(a, b, p);
    pooled_diff += !(awp(xs, p) == global_average_pool(xs));
    output_diff += !(fam_forward(a, b, p, {true, Pooling::awp}) == fam_forward(a, b, p, {true, Pooling::gap}));
  }
  return {pooled_diff == 0 && output_diff == 0,
          fmt("100 fused maps: %d pooled vectors and %d FAM outputs differ bitwise", pooled_diff, output_diff)};
}

std::pair<bool, std::string> attention_range() {
  Rng rng(1005);
  long entries = 0, outside = 0;
  double lo = 1.0, hi = 0.0;
  int bypass_diff = 0;
  for (int i = 0; i < 200; ++i) {
    const Index c = 2 + static_cast<Index>(rng.below(15));
    const FusionMode mode = i % 2 ? FusionMode::sum : FusionMode::concat;
    FamParams p = make_fam_params(rng, c, mode, 5, rng.uniform(1.0, 3.0));
    for (Index k = 0; k < p.attn_kernel.size(); ++k) p.attn_kernel[k] += 0.5 * rng.normal();
    for (Index k = 0; k < p.awp_conv.bias.size(); ++k) p.awp_conv.bias[k] = 0.5 * rng.normal();
    p.attn_bias = rng.normal();
    const Grid a = random_grid(rng, {c, 6, 6}, 2.0), b = random_grid(rng, {c, 6, 6}, 2.0);
    for (Pooling pool : {Pooling::awp, Pooling::gap}) {
      const FamTrace tr = fam_forward_traced(a, b, p, {true, pool});
      for (Index k = 0; k < tr.attention.size(); ++k) {
        const double v = tr.attention[k];
        ++entries;
        outside += !(v > 0.0 && v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    bypass_diff += !(fam_forward(a, b, p, {false, Pooling::awp}) == fuse(a, b, p));
  }
  return {outside == 0 && bypass_diff == 0,
          fmt("%ld attention weights in [%.4f, %.4f], %ld outside (0,1); attention=off differs from X_S on %d of 200",
              entries, lo, hi, outside, bypass_diff)};
}

// ---- refinement --------------------------------------------------------------

std::pair<bool, std::string> refinement() {
  Rng rng(1006);
  int improved = 0;
  double gain = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Box truth{rng.uniform(20, 200), rng.uniform(20, 200), rng.uniform(10, 60), rng.uniform(10, 60)};
    const double angle = rng.uniform(0, 2 * M_PI);
    Box start = truth;
    start.x += 0.2 * truth.w * std::cos(angle);
    start.y += 0.2 * truth.h * std::sin(angle);
    const double before = iou(start, truth);
    const Box out = refine(start, [&](const Box& b) { return iou(b, truth); }, kDefaultProposals,
                           kDefaultProposalNoise, rng);
    const double after = iou(out, truth);
    improved += after > before;
    gain += after - before;
  }
  return {improved >= 950, fmt("%d of 1000 trials improved (mean IoU gain %.4f)", improved, gain / 1000)};
}

// ---- tracking ----------------------------------------------------------------

struct SequenceRun {
  std::vector<Box> boxes;
  std::vector<std::vector<double>> traces;  // init trace, then one per update
  std::vector<int> updates;
  std::size_t init_memory = 0;
  OpeReport ope;
};

SequenceRun run_sequence(const Sequence& seq, const Model& model, const TrackerConfig& cfg) {
  SequenceRun r;
  TrackerState st = tracker_init(seq.frames[0], seq.groundtruth[0], model, cfg);
  r.init_memory = st.classifier.memory.size();
  r.traces.push_back(st.init_trace);
  r.boxes.push_back(seq.groundtruth[0]);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    const StepReport rep = tracker_step(st, seq.frames[f], &seq.groundtruth[f]);
    r.boxes.push_back(rep.box);
    if (rep.updated) {
      r.updates.push_back(rep.frame);
      r.traces.push_back(rep.update_trace);
    }
  }
  r.ope = evaluate_sequence(r.boxes, seq.groundtruth);
  return r;
}

struct SuiteRun {
  std::vector<SequenceRun> runs;
  double mean_auc = 0.0;
  double mean_iou = 0.0;
  double seconds = 0.0;
};

SuiteRun run_suite(const std::vector<Sequence>& seqs, const Model& model, TrackerConfig cfg, StreamMode mode) {
  const auto t0 = Clock::now();
  cfg.stream = mode;
  SuiteRun s;
  for (const auto& seq : seqs) {
    s.runs.push_back(run_sequence(seq, model, cfg));
    s.mean_auc += s.runs.back().ope.success.auc / static_cast<double>(seqs.size());
    s.mean_iou += s.runs.back().ope.mean_iou / static_cast<double>(seqs.size());
  }
  s.seconds = seconds_since(t0);
  return s;
}

// Sequence i of a suite is synthesized with seed base + 1 + i, as `strack synth --suite` does.
std::vector<Sequence> synthesize_suite(const std::vector<SequenceSpec>& specs, std::uint64_t base) {
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < specs.size(); ++i) out.push_back(synthesize(specs[i], base + 1 + i));
  return out;
}

// ---- protocol ----------------------------------------------------------------

std::pair<bool, std::string> protocol(const Model& model, const std::vector<SuiteRun>& suites) {
  // Updates at frames ≡ 0 mod 10 and 30 initial samples, over every suite run.
  int bad_updates = 0, bad_memory = 0, runs = 0;
  for (const auto& suite : suites) {
    for (const auto& r : suite.runs) {
      ++runs;
      std::vector<int> expect;
      for (int f = 10; f <= static_cast<int>(r.boxes.size()); f += 10) expect.push_back(f);
      bad_updates += r.updates != expect;
      bad_memory += r.init_memory != 30;
    }
  }

  // Clip padding: the clip at frame k holds the frames seen so far, key frame
  // last, with the leading slots copying the first frame's patch.
  SequenceSpec spec = easy_suite(9, 1).front();
  spec.frames = 5;
  const Sequence seq = synthesize(spec, 9);
  TrackerConfig cfg = model.defaults;
  TrackerState st = tracker_init(seq.frames[0], seq.groundtruth[0], model, cfg);
  const CropGeometry g = crop_geometry(Box{30.25, 20.5, 18, 14}, cfg.search_scale, cfg.patch_extent);
  std::vector<Grid> patches;
  for (const auto& f : seq.frames) patches.push_back(crop_roi(f, g));
  const Index clip = cfg.clip_len, e = cfg.patch_extent, plane = e * e;
  int bad_slots = 0;
  for (int seen = 1; seen <= 4; ++seen) {
    if (seen > 1) tracker_step(st, seq.frames[seen - 1]);
    const Grid c = assemble_clip(st, g);
    for (Index slot = 0; slot < clip; ++slot) {
      const int src = std::max<int>(0, seen - static_cast<int>(clip) + static_cast<int>(slot));
      for (Index ch = 0; ch < 3; ++ch) {
        const auto got = c.data().segment((ch * clip + slot) * plane, plane);
        const auto want = patches[src].data().segment(ch * plane, plane);
        bad_slots += got != want;
      }
    }
  }
  return {bad_updates == 0 && bad_memory == 0 && bad_slots == 0,
          fmt("%d runs: %d with off-schedule updates, %d without 30 init samples; %d mismatched clip slots "
              "over frames 1-4",
              runs, bad_updates, bad_memory, bad_slots)};
}

// ---- determinism -------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::pair<bool, std::string> determinism(const Model& model) {
  const fs::path dir = fs::temp_directory_path() / "strack_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_model(dir / "model.bin", model);
  generate(fast_suite(300).front(), 301, dir / "seq");

  const std::string base = std::string("\"") + STRACK_CLI + "\" track --seq \"" + (dir / "seq").string() +
                           "\" --model \"" + (dir / "model.bin").string() + "\" --seed 5 --stream both --fusion concat"
                           " --attention on --pooling awp --scorer learned --out ";
  const int rc1 = std::system((base + "\"" + (dir / "a.txt").string() + "\" > /dev/null").c_str());
  const int rc2 = std::system((base + "\"" + (dir / "b.txt").string() + "\" > /dev/null").c_str());
  const std::string a = slurp(dir / "a.txt"), b = slurp(dir / "b.txt");
  const bool same_results = rc1 == 0 && rc2 == 0 && !a.empty() && a == b;

  const std::string bytes = serialize_model(model);
  const Model loaded = load_model(dir / "model.bin");
  const bool round_trip = loaded == model && serialize_model(loaded) == bytes && slurp(dir / "model.bin") == bytes;
  fs::remove_all(dir);
  return {same_results && round_trip,
          fmt("cmd_track exit %d/%d, results %s (%zu bytes); model file %s (%zu bytes)", rc1, rc2,
              same_results ? "byte-identical" : "DIFFER", a.size(), round_trip ? "round-trips bit-exactly" : "DIFFERS",
              bytes.size())};
}

// ---- metrics -------------------------------------------------------------------

std::pair<bool, std::string> metric_fixtures() {
  int mismatches = 0;
  auto expect = [&](double got, double want) { mismatches += got != want; };
  const Box unit{0, 0, 10, 10};

  // Perfect tracker: every IoU is 1, success is strict so θ=1.00 scores 0.
  {
    const std::vector<Box> gt{unit, Box{3, 4, 5, 6}, Box{7.25, 1.5, 2, 9}};
    const auto s = success_curve(gt, gt);
    const auto p = precision_curve(gt, gt);
    for (int t = 0; t <= 100; ++t) expect(s.curve[t], t < 100 ? 1.0 : 0.0);
    expect(s.auc, 100.0 / 101.0);
    for (int t = 0; t <= 50; ++t) expect(p.curve[t], 1.0);
    expect(p.at_20, 1.0);
  }
  // Disjoint boxes, centre errors hypot(17.5, 17.5) ≈ 24.75 and hypot(32.5, 2.5) ≈ 32.60.
  {
    const std::vector<Box> pred{Box{20, 20, 5, 5}, Box{-30, 0, 5, 5}}, gt{unit, unit};
    const auto s = success_curve(pred, gt);
    const auto p = precision_curve(pred, gt);
    for (int t = 0; t <= 100; ++t) expect(s.curve[t], 0.0);
    expect(s.auc, 0.0);
    for (int t = 0; t <= 50; ++t) expect(p.curve[t], t < 25 ? 0.0 : t < 33 ? 0.5 : 1.0);
    expect(p.at_20, 0.0);
  }
  // Shared top-left corner, widths 2.5/5/7.5/10: IoUs 0.25, 0.5, 0.75, 1 and
  // centre errors 3.75, 2.5, 1.25, 0.
  {
    const std::vector<Box> pred{Box{0, 0, 2.5, 10}, Box{0, 0, 5, 10}, Box{0, 0, 7.5, 10}, unit};
    const std::vector<Box> gt(4, unit);
    const auto s = success_curve(pred, gt);
    const auto p = precision_curve(pred, gt);
    for (int t = 0; t <= 100; ++t) expect(s.curve[t], t < 25 ? 1.0 : t < 50 ? 0.75 : t < 75 ? 0.5 : t < 100 ? 0.25 : 0.0);
    // 25·1 + 25·0.75 + 25·0.5 + 25·0.25 = 62.5
    expect(s.auc, 62.5 / 101.0);
    const double pre[] = {0.25, 0.25, 0.5, 0.75};
    for (int t = 0; t <= 50; ++t) expect(p.curve[t], t < 4 ? pre[t] : 1.0);
    expect(p.at_20, 1.0);
  }
  return {mismatches == 0, fmt("3 fixtures (perfect, disjoint, graded), %d values differ from hand enumeration", mismatches)};
}

}  // namespace

int main() {
  const auto t_all = Clock::now();

  criterion(1, "gradient fidelity", gradient_fidelity);
  criterion(2, "solver oracle", solver_oracle);

  // Shared by 3 and 7-11: the offline pipeline on the seeded training suite,
  // then the easy and fast suites with the learned scorer.
  const auto t_train = Clock::now();
  TrainResult trained;
  bool have_model = false;
  try {
    trained = train_model(synthesize_suite(training_suite(100), 100), TrackerConfig{}, 7, 30, 500);
    have_model = true;
  } catch (const std::exception& e) {
    std::printf("training failed: %s\n", e.what());
  }
  const double train_secs = seconds_since(t_train);
  std::vector<SuiteRun> suites;
  SuiteRun easy, fast_both, fast_spatial, fast_temporal;
  if (have_model) {
    const TrackerConfig cfg = trained.model.defaults;
    try {
      easy = run_suite(synthesize_suite(easy_suite(200), 200), trained.model, cfg, StreamMode::both);
      const auto fast = synthesize_suite(fast_suite(300), 300);
      fast_both = run_suite(fast, trained.model, cfg, StreamMode::both);
      fast_spatial = run_suite(fast, trained.model, cfg, StreamMode::spatial);
      fast_temporal = run_suite(fast, trained.model, cfg, StreamMode::temporal);
      suites = {easy, fast_both, fast_spatial, fast_temporal};
    } catch (const std::exception& e) {
      std::printf("suite run failed: %s\n", e.what());
    }
  }

  criterion(3, "GN monotonicity", [&]() -> std::pair<bool, std::string> {
    if (suites.empty()) return {false, "no suite runs"};
    long traces = 0, steps = 0, violations = 0;
    double worst = 0.0;
    for (const auto& s : suites) {
      for (const auto& r : s.runs) {
        for (const auto& tr : r.traces) {
          ++traces;
          for (std::size_t i = 1; i < tr.size(); ++i) {
            ++steps;
            worst = std::max(worst, tr[i] - tr[i - 1]);
            violations += tr[i] > tr[i - 1] + 1e-10;
          }
        }
      }
    }
    return {violations == 0 && steps > 0,
            fmt("%ld traces, %ld GN steps over 40 suite runs, %ld rises beyond 1e-10 (largest change %+.2e)", traces,
                steps, violations, worst)};
  });
  criterion(4, "AWP-GAP identity", awp_gap_identity);
  criterion(5, "attention range and bypass", attention_range);
  criterion(6, "refinement improves boxes", refinement);

  criterion(7, "easy-suite tracking", [&]() -> std::pair<bool, std::string> {
    if (suites.empty()) return {false, "no suite runs"};
    const double total = train_secs + easy.seconds;
    return {easy.mean_auc >= 0.55 && easy.mean_iou >= 0.6 && total < 300.0,
            fmt("mean AUC %.4f, mean IoU %.4f; training %.1f s + tracking %.1f s", easy.mean_auc, easy.mean_iou,
                train_secs, easy.seconds)};
  });
  criterion(8, "fast-motion stream ordering", [&]() -> std::pair<bool, std::string> {
    if (suites.empty()) return {false, "no suite runs"};
    return {fast_both.mean_iou >= fast_spatial.mean_iou && fast_both.mean_iou >= fast_temporal.mean_iou,
            fmt("suite mean IoU both %.4f, spatial %.4f, temporal %.4f", fast_both.mean_iou, fast_spatial.mean_iou,
                fast_temporal.mean_iou)};
  });
  criterion(9, "offline training", [&]() -> std::pair<bool, std::string> {
    if (!have_model) return {false, "training failed"};
    const auto& mse = trained.report.epoch_mse;
    int rises = 0;
    for (std::size_t i = 1; i < mse.size(); ++i) rises += mse[i] > mse[i - 1];
    const double ratio = mse.back() / trained.report.baseline_mse;
    return {mse.size() <= 30 && ratio < 0.5 && rises <= 2,
            fmt("%zu crops, %zu epochs, MSE %.5f -> %.5f, variance %.5f (ratio %.3f), %d rises", trained.crops,
                mse.size(), trained.report.initial_mse, mse.back(), trained.report.baseline_mse, ratio, rises)};
  });
  criterion(10, "protocol conformance", [&]() -> std::pair<bool, std::string> {
    if (suites.empty()) return {false, "no suite runs"};
    return protocol(trained.model, suites);
  });
  criterion(11, "determinism", [&]() -> std::pair<bool, std::string> {
    if (!have_model) return {false, "training failed"};
    return determinism(trained.model);
  });
  criterion(12, "metric correctness", metric_fixtures);

  std::printf("%d of 12 criteria passed (%.1f s)\n", 12 - failures, seconds_since(t_all));
  return failures ? 1 : 0;
}
