#include "strack/train.hpp"

#include <cmath>
#include <stdexcept>

namespace strack {

std::vector<TrainingCrop> build_training_set(const std::vector<Sequence>& sequences, const Model& model,
                                             const TrainingSetConfig& config) {
  if (sequences.empty()) throw std::invalid_argument("training needs at least one sequence");
  if (config.samples < 1 || config.boxes_per_crop < 1) {
    throw std::invalid_argument("training set needs positive sample and box counts");
  }
  for (const Sequence& s : sequences) {
    if (s.frames.empty() || s.frames.size() != s.groundtruth.size()) {
      throw std::invalid_argument("training sequences need one ground-truth box per frame");
    }
  }
  const TrackerConfig& tc = model.defaults;
  const double e = static_cast<double>(tc.patch_extent);
  Rng rng(config.seed);
  std::vector<TrainingCrop> out;
  int remaining = config.samples;
  while (remaining > 0) {
    const Sequence& seq = sequences[rng.below(sequences.size())];
    const std::size_t t = rng.below(seq.frames.size());
    const Box& truth = seq.groundtruth[t];

    const double side = std::sqrt(truth.w * truth.h);
    const double cx = truth.cx() + rng.uniform(-1, 1) * config.centre_jitter * side;
    const double cy = truth.cy() + rng.uniform(-1, 1) * config.centre_jitter * side;
    const double k = std::exp(rng.uniform(-1, 1) * config.scale_jitter);
    const CropGeometry g =
        crop_geometry(Box::from_center(cx, cy, truth.w * k, truth.h * k), tc.search_scale, tc.patch_extent);

    std::vector<Grid> patches;
    for (Index i = tc.clip_len - 1; i >= 0; --i) {
      const std::size_t f = t >= static_cast<std::size_t>(i) ? t - static_cast<std::size_t>(i) : 0;
      patches.push_back(crop_roi(seq.frames[f], g));
    }
    const StreamTaps taps = extract_streams(model, StreamMode::both, stack_clip(patches));

    TrainingCrop crop;
    crop.shallow2d = taps.spatial.shallow;
    crop.shallow3d = taps.temporal.shallow;
    crop.deep2d = taps.spatial.deep;
    crop.deep3d = taps.temporal.deep;
    crop.patch_extent = e;
    const Box target = g.to_patch(truth);
    const int n = std::min(remaining, config.boxes_per_crop);
    crop.boxes = sample_training_boxes(target, n, Box{0.0, 0.0, e, e}, rng);
    for (const Box& b : crop.boxes) crop.targets.push_back(iou(b, target));
    remaining -= n;
    out.push_back(std::move(crop));
  }
  return out;
}

TrainResult train_model(const std::vector<Sequence>& sequences, const TrackerConfig& config,
                        std::uint64_t seed, int epochs, int samples) {
  TrainResult r;
  r.model = make_model(config, seed);
  TrainingSetConfig set;
  set.samples = samples;
  set.seed = seed;
  const auto data = build_training_set(sequences, r.model, set);
  r.crops = data.size();
  FitConfig fit;
  fit.epochs = epochs;
  fit.switches = config.switches;
  fit.seed = seed;
  r.report = fit_offline(data, r.model.estimator, fit);
  return r;
}

}  // namespace strack
