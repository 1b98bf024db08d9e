#ifndef STRACK_TRACKER_HPP_
#define STRACK_TRACKER_HPP_

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "strack/backbone.hpp"
#include "strack/box.hpp"
#include "strack/box_estimator.hpp"
#include "strack/classifier.hpp"
#include "strack/fam.hpp"
#include "strack/grid.hpp"
#include "strack/rng.hpp"
#include "strack/sequence_io.hpp"

namespace strack {

enum class StreamMode { spatial, temporal, both };
enum class ScorerKind { learned, oracle };

struct TrackerConfig {
  Index patch_extent = 96;
  double search_scale = 5.0;
  Index clip_len = 4;
  int update_period = 10;
  int init_augmentations = 30;
  Index channels = 16;
  std::array<Index, 2> downsample_factors{4, 8};
  StreamMode stream = StreamMode::both;
  FusionMode fusion = FusionMode::concat;
  FamSwitches switches;
  ScorerKind scorer = ScorerKind::learned;
  int proposals = kDefaultProposals;
  double proposal_noise = kDefaultProposalNoise;
  double lost_ratio = 0.25;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;

  bool operator==(const TrackerConfig&) const = default;
};

// Thrown when a tracker configuration is invalid or does not fit the model.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void validate(const TrackerConfig& config);

// Frozen weights shared by every sequence: both backbone streams, one FAM per
// tap and the IoU head, plus the configuration they were built for.
struct Model {
  BackboneParams spatial;
  BackboneParams temporal;
  EstimatorParams estimator;
  TrackerConfig defaults;

  bool operator==(const Model&) const = default;
};

Model make_model(const TrackerConfig& config, std::uint64_t seed);

// Throws ConfigError when `config` needs something the model lacks
// (patch extent, clip length, channels, or the concat fusion conv).
void check_compatible(const Model& model, const TrackerConfig& config);

// Square search window of side search_scale·sqrt(w·h) centred on a box.
// Patch coordinate u maps to frame coordinate x0 + u·scale.
struct CropGeometry {
  double x0 = 0.0;
  double y0 = 0.0;
  double scale = 1.0;
  Index extent = 0;

  Box to_patch(const Box& b) const { return {(b.x - x0) / scale, (b.y - y0) / scale, b.w / scale, b.h / scale}; }
  Box to_frame(const Box& b) const { return {x0 + b.x * scale, y0 + b.y * scale, b.w * scale, b.h * scale}; }
};

CropGeometry crop_geometry(const Box& box, double search_scale, Index extent);

// Bilinear resample of the window to 3×E×E in [0, 1]; samples outside the
// frame take the nearest edge pixel.
Grid crop_roi(const Image& frame, const CropGeometry& geometry);

// Raw backbone taps; a disabled stream contributes zero maps.
struct StreamTaps {
  BackboneTaps spatial;
  BackboneTaps temporal;
};

struct EvalCounters {
  long spatial = 0;
  long temporal = 0;
};

// clip: 3 × clip_len × E × E with the key frame last.
StreamTaps extract_streams(const Model& model, StreamMode mode, const Grid& clip,
                           EvalCounters* counters = nullptr);

// Stack of patches along the frame axis, key frame last.
Grid stack_clip(const std::vector<Grid>& patches);

struct StepReport {
  int frame = 0;  // 1-based
  Box box;
  double peak = 0.0;
  bool lost = false;
  bool updated = false;
  std::vector<double> update_trace;  // classifier loss trace when updated
};

struct TrackerState {
  TrackerConfig config;
  Model model;
  ClassifierState classifier;
  std::deque<Image> frames;  // last clip_len raw frames, oldest first
  Box box;
  int frame = 0;
  Rng rng;
  std::vector<double> peaks;
  EvalCounters counters;
  std::vector<double> init_trace;
  std::vector<int> update_frames;
};

// Builds the augmented first-frame training set, fills the classifier memory
// and fits both classifier layers.
TrackerState tracker_init(const Image& frame, const Box& box, const Model& model,
                          const TrackerConfig& config);

// The last clip_len frames cropped with one shared window; missing leading
// frames repeat the earliest frame.
Grid assemble_clip(const TrackerState& state, const CropGeometry& geometry);

// Processes the next frame. `truth` is required by the oracle scorer and
// ignored otherwise.
StepReport tracker_step(TrackerState& state, const Image& frame, const Box* truth = nullptr);

// Classification response of the deep tap for a patch/clip, as used by init
// and step.
Grid classify_clip(TrackerState& state, const Grid& clip);

// Runs init on frame 1 and step on every later frame.
std::vector<StepReport> track_sequence(const Sequence& sequence, const Model& model,
                                       const TrackerConfig& config);

// Patch augmentation used to build the first-frame training set; `box` is in
// patch coordinates and is moved with the content.
enum class Augmentation { identity, rotation, blur, channel_dropout, translation, flip, brightness };
Grid augment(const Grid& patch, Box& box, Augmentation kind, Rng& rng);

}  // namespace strack

#endif  // STRACK_TRACKER_HPP_
