#ifndef STRACK_BOX_ESTIMATOR_HPP_
#define STRACK_BOX_ESTIMATOR_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

#include "strack/box.hpp"
#include "strack/fam.hpp"
#include "strack/grid.hpp"
#include "strack/rng.hpp"

namespace strack {

inline constexpr int kDefaultProposals = 10;
inline constexpr double kDefaultProposalNoise = 0.1;

// Each proposal draws, in order, u_cx, u_cy, u_w, u_h ~ U(-1, 1):
// centre += u·noise·size, size *= exp(u·noise).
std::vector<Box> generate_proposals(const Box& box, int n, double noise, Rng& rng);

using BoxScorer = std::function<double(const Box&)>;

// Scores [initial, proposals...] and returns the coordinate-wise mean of the
// three best; equal scores keep candidate order.
Box refine(const Box& initial, const BoxScorer& scorer, int n, double noise, Rng& rng);

// MLP head over box-pooled features of both taps plus four box coordinates.
struct IouHeadParams {
  Grid w1;  // hidden × in
  Grid b1;  // hidden
  Grid w2;  // 1 × hidden
  Grid b2;  // 1

  bool operator==(const IouHeadParams&) const = default;
};

// Input length 9·(c_shallow + c_deep) + 4; weights N(0, 1/fan_in), biases zero.
IouHeadParams make_iou_head(Rng& rng, Index c_shallow, Index c_deep, Index hidden = 64);

Eigen::VectorXd pack(const IouHeadParams& params);
void unpack(const Eigen::VectorXd& flat, IouHeadParams& params);

// FAM outputs for one patch of side `patch_extent` pixels. A map of width w
// has stride patch_extent / w, and cell i sits at patch coordinate i·stride.
struct HeadFeatures {
  const Grid& shallow;
  const Grid& deep;
  double patch_extent;
};

// Box in patch pixels. Throws std::invalid_argument when the box does not
// overlap the patch.
double iou_head_forward(const HeadFeatures& features, const Box& box, const IouHeadParams& params);

struct IouHeadGrads {
  Grid shallow;
  Grid deep;
  IouHeadParams params;
  Eigen::Vector4d box;  // d/d(x, y, w, h)
};

// Gradient of upstream·head(features, box).
IouHeadGrads iou_head_backward(const HeadFeatures& features, const Box& box,
                               const IouHeadParams& params, double upstream);

// Everything the offline fit touches: one FAM per tap and the head.
struct EstimatorParams {
  FamParams fam_shallow;
  FamParams fam_deep;
  IouHeadParams head;

  bool operator==(const EstimatorParams&) const = default;
};

// Backbone taps of one training crop with its candidate boxes (patch pixels)
// and their true IoU with the ground truth.
struct TrainingCrop {
  Grid shallow2d, shallow3d;
  Grid deep2d, deep3d;
  double patch_extent = 0.0;
  std::vector<Box> boxes;
  std::vector<double> targets;
};

struct FitConfig {
  int epochs = 30;
  double fam_learning_rate = 5e-4;
  double head_learning_rate = 1e-3;
  double decay = 0.2;  // applied every epochs/3 epochs
  int batch_crops = 1;  // crops per Adam step
  FamSwitches switches;
  std::uint64_t seed = 0;  // crop order, shuffled once
};

struct FitReport {
  std::vector<double> epoch_mse;  // full-set MSE after each epoch
  double initial_mse = 0.0;
  double baseline_mse = 0.0;  // variance of the targets
};

// Adam on the MSE between head output and target, one step per batch of
// crops with gradients averaged over their boxes. Throws NumericError on a non-finite loss.
FitReport fit_offline(const std::vector<TrainingCrop>& data, EstimatorParams& params,
                      const FitConfig& config);

double dataset_mse(const std::vector<TrainingCrop>& data, const EstimatorParams& params,
                   const FamSwitches& switches);

// `count` candidates around `truth` whose IoU with it is stratified over
// [0.1, 1.0] (one draw per 0.1-wide bin, cycling from a random bin), all
// centred inside `bounds`.
std::vector<Box> sample_training_boxes(const Box& truth, int count, const Box& bounds, Rng& rng);

}  // namespace strack

#endif  // STRACK_BOX_ESTIMATOR_HPP_
