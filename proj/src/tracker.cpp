#include "strack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace strack {

namespace {

constexpr Augmentation kAugmentationCycle[] = {Augmentation::rotation,    Augmentation::blur,
                                               Augmentation::channel_dropout, Augmentation::translation,
                                               Augmentation::flip,        Augmentation::brightness};
constexpr double kMaxRotationDeg = 15.0;
constexpr double kMaxTranslation = 0.1;  // fraction of the patch extent
constexpr double kMaxBrightness = 0.1;
constexpr double kMinBoxSide = 4.0;

// Bilinear sample of channel c at continuous patch coordinates (pixel centres
// at +0.5), replicating the border.
double sample_clamped(const Grid& patch, Index c, double x, double y) {
  const Index h = patch.dim(1), w = patch.dim(2);
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  const Index x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
  const Index x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
  return (1 - ay) * ((1 - ax) * patch(c, y0, x0) + ax * patch(c, y0, x1)) +
         ay * ((1 - ax) * patch(c, y1, x0) + ax * patch(c, y1, x1));
}

template <typename Map>
Grid resample(const Grid& patch, Map source_of) {
  Grid out = Grid::like(patch);
  const Index h = patch.dim(1), w = patch.dim(2);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      const auto [sx, sy] = source_of(static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5);
      for (Index c = 0; c < patch.dim(0); ++c) out(c, i, j) = sample_clamped(patch, c, sx, sy);
    }
  }
  return out;
}

Grid key_frame(const Grid& clip) {
  const Index c = clip.dim(0), f = clip.dim(1), h = clip.dim(2), w = clip.dim(3);
  Grid out({c, h, w});
  for (Index ch = 0; ch < c; ++ch) {
    out.data().segment(ch * h * w, h * w) = clip.data().segment(((ch * f) + f - 1) * h * w, h * w);
  }
  return out;
}

BackboneTaps zero_taps(const BackboneParams& p) {
  const Index s = tap_extent(p, 0), d = tap_extent(p, 1);
  return {Grid({p.channels, s, s}), Grid({p.channels, d, d})};
}

struct FusedFeatures {
  Grid shallow;
  Grid deep;
};

// With one stream disabled its zero map is summed in, so fusion passes the
// other stream through unchanged whatever the fusion setting; AWP and
// attention still apply.
FamParams single_stream(FamParams p) {
  p.mode = FusionMode::sum;
  return p;
}

FusedFeatures fused_features(TrackerState& state, const Grid& clip) {
  const StreamTaps taps = extract_streams(state.model, state.config.stream, clip, &state.counters);
  const auto& est = state.model.estimator;
  const auto& sw = state.config.switches;
  if (state.config.stream != StreamMode::both) {
    return {fam_forward(taps.spatial.shallow, taps.temporal.shallow, single_stream(est.fam_shallow), sw),
            fam_forward(taps.spatial.deep, taps.temporal.deep, single_stream(est.fam_deep), sw)};
  }
  return {fam_forward(taps.spatial.shallow, taps.temporal.shallow, est.fam_shallow, sw),
          fam_forward(taps.spatial.deep, taps.temporal.deep, est.fam_deep, sw)};
}

// Label for a box in patch coordinates; the centre is pulled inside the patch.
Grid label_for(const Box& patch_box, const Grid& deep, const TrackerState& state) {
  const double e = static_cast<double>(state.config.patch_extent);
  const double cx = std::clamp(patch_box.cx(), 0.0, e), cy = std::clamp(patch_box.cy(), 0.0, e);
  const FeatureGeometry geo{deep.dim(1), deep.dim(2), e / static_cast<double>(deep.dim(2))};
  return make_label_map(Box::from_center(cx, cy, patch_box.w, patch_box.h), geo,
                        state.config.classifier.sigma_factor);
}

Box keep_in_frame(Box b, const Image& frame) {
  const double fw = static_cast<double>(frame.width), fh = static_cast<double>(frame.height);
  const double w = std::clamp(b.w, kMinBoxSide, std::max(kMinBoxSide, fw));
  const double h = std::clamp(b.h, kMinBoxSide, std::max(kMinBoxSide, fh));
  return Box::from_center(std::clamp(b.cx(), 0.0, fw), std::clamp(b.cy(), 0.0, fh), w, h);
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

void validate(const TrackerConfig& c) {
  if (c.clip_len < 1) throw ConfigError("clip_len must be at least 1");
  if (c.update_period < 1) throw ConfigError("update_period must be at least 1");
  if (c.init_augmentations < 1 || static_cast<std::size_t>(c.init_augmentations) > c.classifier.capacity) {
    throw ConfigError("init_augmentations must lie in [1, memory capacity]");
  }
  if (c.patch_extent < 1 || c.patch_extent % c.downsample_factors[1] != 0) {
    throw ConfigError("patch_extent must be divisible by the deepest downsample factor");
  }
  if (!(c.search_scale > 0.0)) throw ConfigError("search_scale must be positive");
  if (c.proposals < 1) throw ConfigError("proposal count must be at least 1");
  if (!(c.proposal_noise >= 0.0)) throw ConfigError("proposal noise must be non-negative");
}

Model make_model(const TrackerConfig& config, std::uint64_t seed) {
  validate(config);
  Rng rng(seed);
  Model m;
  m.defaults = config;
  m.spatial = make_toy_backbone(rng.next_u64(), BackboneMode::spatial, config.channels,
                                config.downsample_factors, config.patch_extent);
  m.temporal = make_toy_backbone(rng.next_u64(), BackboneMode::temporal, config.channels,
                                 config.downsample_factors, config.patch_extent, config.clip_len);
  Rng fam_rng = rng.split();
  m.estimator.fam_shallow = make_fam_params(fam_rng, config.channels, config.fusion);
  m.estimator.fam_deep = make_fam_params(fam_rng, config.channels, config.fusion);
  Rng head_rng = rng.split();
  m.estimator.head = make_iou_head(head_rng, config.channels, config.channels);
  return m;
}

void check_compatible(const Model& model, const TrackerConfig& config) {
  validate(config);
  if (model.spatial.patch_extent != config.patch_extent || model.temporal.patch_extent != config.patch_extent) {
    throw ConfigError("model was built for patch extent " + std::to_string(model.spatial.patch_extent) +
                      ", config asks for " + std::to_string(config.patch_extent));
  }
  if (model.temporal.clip_len != config.clip_len) {
    throw ConfigError("model temporal stream expects clips of " + std::to_string(model.temporal.clip_len) +
                      " frames, config asks for " + std::to_string(config.clip_len));
  }
  if (model.spatial.channels != config.channels || model.spatial.downsample_factors != config.downsample_factors) {
    throw ConfigError("model channels or downsample factors differ from the config");
  }
  if (config.fusion == FusionMode::concat &&
      (!model.estimator.fam_shallow.fusion_conv || !model.estimator.fam_deep.fusion_conv)) {
    throw ConfigError("concat fusion needs the fusion conv, which the model lacks");
  }
}

CropGeometry crop_geometry(const Box& box, double search_scale, Index extent) {
  if (!box.valid()) throw std::invalid_argument("crop needs a box with positive area");
  const double side = search_scale * std::sqrt(box.w * box.h);
  CropGeometry g;
  g.scale = side / static_cast<double>(extent);
  g.x0 = box.cx() - 0.5 * side;
  g.y0 = box.cy() - 0.5 * side;
  g.extent = extent;
  return g;
}

Grid crop_roi(const Image& frame, const CropGeometry& g) {
  if (frame.empty()) throw std::invalid_argument("cannot crop an empty frame");
  const Index e = g.extent;
  Grid out({3, e, e});
  const double max_x = static_cast<double>(frame.width - 1), max_y = static_cast<double>(frame.height - 1);
  for (Index i = 0; i < e; ++i) {
    const double fy = std::clamp(g.y0 + (static_cast<double>(i) + 0.5) * g.scale - 0.5, 0.0, max_y);
    const Index y0 = static_cast<Index>(fy), y1 = std::min(y0 + 1, frame.height - 1);
    const double ay = fy - static_cast<double>(y0);
    for (Index j = 0; j < e; ++j) {
      const double fx = std::clamp(g.x0 + (static_cast<double>(j) + 0.5) * g.scale - 0.5, 0.0, max_x);
      const Index x0 = static_cast<Index>(fx), x1 = std::min(x0 + 1, frame.width - 1);
      const double ax = fx - static_cast<double>(x0);
      for (Index c = 0; c < 3; ++c) {
        const double v = (1 - ay) * ((1 - ax) * frame.at(c, y0, x0) + ax * frame.at(c, y0, x1)) +
                         ay * ((1 - ax) * frame.at(c, y1, x0) + ax * frame.at(c, y1, x1));
        out(c, i, j) = v / 255.0;
      }
    }
  }
  return out;
}

StreamTaps extract_streams(const Model& model, StreamMode mode, const Grid& clip, EvalCounters* counters) {
  StreamTaps taps;
  if (mode != StreamMode::temporal) {
    taps.spatial = extract_spatial(key_frame(clip), model.spatial);
    if (counters) ++counters->spatial;
  } else {
    taps.spatial = zero_taps(model.spatial);
  }
  if (mode != StreamMode::spatial) {
    taps.temporal = extract_temporal(clip, model.temporal);
    if (counters) ++counters->temporal;
  } else {
    taps.temporal = zero_taps(model.temporal);
  }
  return taps;
}

Grid stack_clip(const std::vector<Grid>& patches) {
  if (patches.empty()) throw ShapeError("clip needs at least one patch");
  const Shape& s = patches.front().shape();
  const Index f = static_cast<Index>(patches.size()), plane = s[1] * s[2];
  Grid clip({s[0], f, s[1], s[2]});
  for (Index t = 0; t < f; ++t) {
    require_same_shape(patches.front(), patches[static_cast<std::size_t>(t)], "clip patch");
    for (Index c = 0; c < s[0]; ++c) {
      clip.data().segment((c * f + t) * plane, plane) =
          patches[static_cast<std::size_t>(t)].data().segment(c * plane, plane);
    }
  }
  return clip;
}

Grid augment(const Grid& patch, Box& box, Augmentation kind, Rng& rng) {
  const double e = static_cast<double>(patch.dim(2));
  switch (kind) {
    case Augmentation::identity:
      return patch;
    case Augmentation::rotation: {
      // About the patch centre, which is where crops put the target.
      const double a = rng.uniform(-kMaxRotationDeg, kMaxRotationDeg) * M_PI / 180.0;
      const double ca = std::cos(a), sa = std::sin(a), m = 0.5 * e;
      return resample(patch, [&](double x, double y) {
        const double dx = x - m, dy = y - m;
        return std::pair{m + ca * dx + sa * dy, m - sa * dx + ca * dy};
      });
    }
    case Augmentation::blur: {
      Grid out = Grid::like(patch);
      const Index h = patch.dim(1), w = patch.dim(2);
      for (Index c = 0; c < patch.dim(0); ++c) {
        for (Index i = 0; i < h; ++i) {
          for (Index j = 0; j < w; ++j) {
            double s = 0.0;
            for (Index di = -1; di <= 1; ++di) {
              for (Index dj = -1; dj <= 1; ++dj) {
                s += patch(c, std::clamp<Index>(i + di, 0, h - 1), std::clamp<Index>(j + dj, 0, w - 1));
              }
            }
            out(c, i, j) = s / 9.0;
          }
        }
      }
      return out;
    }
    case Augmentation::channel_dropout: {
      Grid out = patch;
      const Index c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(patch.dim(0))));
      const Index plane = patch.dim(1) * patch.dim(2);
      out.data().segment(c * plane, plane).setZero();
      return out;
    }
    case Augmentation::translation: {
      const double tx = rng.uniform(-kMaxTranslation, kMaxTranslation) * e;
      const double ty = rng.uniform(-kMaxTranslation, kMaxTranslation) * e;
      box.x += tx;
      box.y += ty;
      return resample(patch, [&](double x, double y) { return std::pair{x - tx, y - ty}; });
    }
    case Augmentation::flip: {
      box.x = e - box.x - box.w;
      return resample(patch, [&](double x, double y) { return std::pair{e - x, y}; });
    }
    case Augmentation::brightness: {
      Grid out = patch;
      out.array() = (out.array() * (1.0 + rng.uniform(-kMaxBrightness, kMaxBrightness))).min(1.0);
      return out;
    }
  }
  return patch;
}

Grid classify_clip(TrackerState& state, const Grid& clip) {
  return classifier_forward(fused_features(state, clip).deep, state.classifier);
}

TrackerState tracker_init(const Image& frame, const Box& box, const Model& model, const TrackerConfig& config) {
  check_compatible(model, config);
  if (frame.empty()) throw std::invalid_argument("cannot initialise on an empty frame");
  if (!box.valid()) throw std::invalid_argument("initial box must have positive area");

  TrackerState s;
  s.config = config;
  s.model = model;
  s.model.estimator.fam_shallow.mode = config.fusion;
  s.model.estimator.fam_deep.mode = config.fusion;
  s.rng = Rng(config.seed);

  const CropGeometry g = crop_geometry(box, config.search_scale, config.patch_extent);
  const Grid patch = crop_roi(frame, g);
  std::vector<TrainingSample> samples;
  for (int k = 0; k < config.init_augmentations; ++k) {
    const Augmentation kind = k == 0 ? Augmentation::identity : kAugmentationCycle[(k - 1) % 6];
    Box b = g.to_patch(box);
    const Grid p = augment(patch, b, kind, s.rng);
    const Grid clip = stack_clip(std::vector<Grid>(static_cast<std::size_t>(config.clip_len), p));
    const FusedFeatures f = fused_features(s, clip);
    TrainingSample t;
    t.y = label_for(b, f.deep, s);
    t.x = f.deep;
    samples.push_back(std::move(t));
  }
  s.classifier = make_classifier(s.rng, config.channels, config.classifier);
  set_initial_memory(s.classifier, std::move(samples));
  const auto& budget = config.classifier.init_budget;
  s.init_trace = optimize(s.classifier, budget.gauss_newton, budget.conjugate_gradient, OptimizeWhich::both);

  s.peaks.push_back(locate_peak(classifier_forward(s.classifier.memory.front().x, s.classifier)).score);
  s.frames.push_back(frame);
  s.box = box;
  s.frame = 1;
  return s;
}

Grid assemble_clip(const TrackerState& state, const CropGeometry& geometry) {
  if (state.frames.empty()) throw std::logic_error("clip needs at least one frame");
  std::vector<Grid> patches;
  for (const Image& f : state.frames) patches.push_back(crop_roi(f, geometry));
  while (static_cast<Index>(patches.size()) < state.config.clip_len) patches.insert(patches.begin(), patches.front());
  return stack_clip(patches);
}

StepReport tracker_step(TrackerState& s, const Image& frame, const Box* truth) {
  if (s.frame < 1) throw std::logic_error("tracker_step before tracker_init");
  if (s.config.scorer == ScorerKind::oracle && truth == nullptr) {
    throw std::invalid_argument("the oracle scorer needs the ground-truth box");
  }
  ++s.frame;
  s.frames.push_back(frame);
  while (static_cast<Index>(s.frames.size()) > s.config.clip_len) s.frames.pop_front();

  const CropGeometry g = crop_geometry(s.box, s.config.search_scale, s.config.patch_extent);
  const FusedFeatures f = fused_features(s, assemble_clip(s, g));
  const Peak peak = locate_peak(classifier_forward(f.deep, s.classifier));

  const double stride = static_cast<double>(s.config.patch_extent) / static_cast<double>(f.deep.dim(2));
  const double u = (static_cast<double>(peak.col) + peak.col_offset) * stride;
  const double v = (static_cast<double>(peak.row) + peak.row_offset) * stride;
  const Box initial = Box::from_center(g.x0 + u * g.scale, g.y0 + v * g.scale, s.box.w, s.box.h);

  BoxScorer scorer;
  if (s.config.scorer == ScorerKind::oracle) {
    scorer = [truth](const Box& b) { return iou(b, *truth); };
  } else {
    const HeadFeatures hf{f.shallow, f.deep, static_cast<double>(s.config.patch_extent)};
    const Box window{0.0, 0.0, hf.patch_extent, hf.patch_extent};
    scorer = [&](const Box& b) {
      const Box p = g.to_patch(b);
      return iou(p, window) > 0.0 ? iou_head_forward(hf, p, s.model.estimator.head) : 0.0;
    };
  }
  const Box final_box =
      keep_in_frame(refine(initial, scorer, s.config.proposals, s.config.proposal_noise, s.rng), frame);

  StepReport report;
  report.frame = s.frame;
  report.box = final_box;
  report.peak = peak.score;
  report.lost = peak.score < s.config.lost_ratio * median(s.peaks);
  s.peaks.push_back(peak.score);

  memory_update(s.classifier, f.deep, label_for(g.to_patch(final_box), f.deep, s),
                s.config.classifier.learning_rate);
  if (s.frame % s.config.update_period == 0) {
    const auto& budget = s.config.classifier.update_budget;
    report.update_trace =
        optimize(s.classifier, budget.gauss_newton, budget.conjugate_gradient, OptimizeWhich::w2_only);
    report.updated = true;
    s.update_frames.push_back(s.frame);
  }
  s.box = final_box;
  return report;
}

std::vector<StepReport> track_sequence(const Sequence& seq, const Model& model, const TrackerConfig& config) {
  if (seq.frames.empty() || seq.groundtruth.empty()) {
    throw std::invalid_argument("tracking needs at least one frame with its initial box");
  }
  const bool have_truth = seq.groundtruth.size() == seq.frames.size();
  TrackerState state = tracker_init(seq.frames[0], seq.groundtruth[0], model, config);
  std::vector<StepReport> out;
  out.push_back({1, seq.groundtruth[0], state.peaks.front(), false, false, {}});
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    out.push_back(tracker_step(state, seq.frames[i], have_truth ? &seq.groundtruth[i] : nullptr));
  }
  return out;
}

}  // namespace strack
