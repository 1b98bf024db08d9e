#ifndef STRACK_TRAIN_HPP_
#define STRACK_TRAIN_HPP_

#include <cstdint>
#include <vector>

#include "strack/box_estimator.hpp"
#include "strack/sequence_io.hpp"
#include "strack/tracker.hpp"

namespace strack {

struct TrainingSetConfig {
  int samples = 500;        // candidate boxes in total
  int boxes_per_crop = 2;
  double centre_jitter = 0.3;  // crop centre offset, fraction of target size
  double scale_jitter = 0.15;  // crop size jitter, log scale
  std::uint64_t seed = 0;
};

// Crops around jittered ground truth with the clip of preceding frames, both
// streams extracted with the model's frozen backbones, and candidate boxes at
// stratified IoU levels.
std::vector<TrainingCrop> build_training_set(const std::vector<Sequence>& sequences, const Model& model,
                                             const TrainingSetConfig& config);

// The offline pipeline behind `strack train`: a fresh model from `config`,
// the training set, then fit_offline on the estimator. One seed drives the
// model weights, the crop sampling and the crop order.
struct TrainResult {
  Model model;
  FitReport report;
  std::size_t crops = 0;
};
TrainResult train_model(const std::vector<Sequence>& sequences, const TrackerConfig& config,
                        std::uint64_t seed, int epochs = 30, int samples = 500);

}  // namespace strack

#endif  // STRACK_TRAIN_HPP_
