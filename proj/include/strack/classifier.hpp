#ifndef STRACK_CLASSIFIER_HPP_
#define STRACK_CLASSIFIER_HPP_

#include <vector>

#include "strack/box.hpp"
#include "strack/grid.hpp"
#include "strack/rng.hpp"
#include "strack/tensor_ops.hpp"

namespace strack {

enum class Activation { identity, leaky_relu };

struct SolverBudget {
  int gauss_newton = 1;
  int conjugate_gradient = 5;

  bool operator==(const SolverBudget&) const = default;
};

struct ClassifierConfig {
  Index hidden_channels = 64;
  Index kernel_size = 4;
  double lambda1 = 1e-2;
  double lambda2 = 1e-2;
  Activation phi1 = Activation::identity;
  Activation phi2 = Activation::identity;
  double leaky_slope = 0.05;
  std::size_t capacity = 50;
  double learning_rate = 0.01;
  double sigma_factor = 0.25;
  SolverBudget init_budget{6, 10};
  SolverBudget update_budget{1, 5};

  bool operator==(const ClassifierConfig&) const = default;
};

struct TrainingSample {
  Grid x;             // c' × h' × w'
  Grid y;             // 1 × h' × w'
  double gamma = 0.0;
  bool initial = false;  // first-frame samples are never evicted

  bool operator==(const TrainingSample& o) const;
};

// Two-layer fully convolutional filter f(x) = Φ2(w2 ∗ Φ1(w1 ∗ x)) plus the
// weighted sample memory it is fit to.
struct ClassifierState {
  ConvKernel w1;  // hidden × c' × 1 × 1, no bias
  ConvKernel w2;  // 1 × hidden × k × k, no bias, extent-preserving padding
  std::vector<TrainingSample> memory;
  ClassifierConfig config;

  bool operator==(const ClassifierState& o) const;
};

// w1 ~ N(0, 1/c'), w2 = 0.
ClassifierState make_classifier(Rng& rng, Index in_channels, const ClassifierConfig& config = {});

Grid classifier_forward(const Grid& x, const ClassifierState& state);

struct ClassifierGrads {
  Grid w1;
  Grid w2;
};
ClassifierGrads classifier_vjp(const Grid& x, const ClassifierState& state, const Grid& cotangent);

// Feature grid geometry: `stride` patch pixels per cell; cell (i, j) sits at
// patch coordinate (j·stride, i·stride).
struct FeatureGeometry {
  Index height = 0;
  Index width = 0;
  double stride = 1.0;
};

// Gaussian label with its unit peak on the cell nearest the box centre and
// σ = sigma_factor·sqrt(w'·h') in cells. Throws std::invalid_argument for a
// degenerate box or a centre outside the patch.
Grid make_label_map(const Box& box, const FeatureGeometry& geometry, double sigma_factor = 0.25);

// Σ_j γ_j‖f(x_j) − y_j‖² + λ1‖w1‖² + λ2‖w2‖². Throws std::logic_error on empty memory.
double objective(const ClassifierState& state);

enum class OptimizeWhich { both, w2_only };

// Gauss-Newton with conjugate-gradient inner solves of
// (JᵀΓJ + Λ)Δ = −(JᵀΓr + λ∘w). Each step is backtracked (halving) until the
// loss does not increase, so the returned trace (initial loss first, one entry
// per GN step) is non-increasing. Throws NumericError on a non-finite loss.
std::vector<double> optimize(ClassifierState& state, int n_gn, int n_cg, OptimizeWhich which);

// Replaces the memory with `samples` at equal weight, all marked initial.
void set_initial_memory(ClassifierState& state, std::vector<TrainingSample> samples);

// Decays existing weights by (1−η), appends the new sample at weight η,
// renormalises, and evicts the lowest-weight non-initial sample past capacity.
// A sample added to an empty memory gets weight 1 and counts as initial.
void memory_update(ClassifierState& state, Grid x, Grid y, double learning_rate);

struct Peak {
  Index row = 0;
  Index col = 0;
  double row_offset = 0.0;  // sub-cell refinement in [-0.5, 0.5]
  double col_offset = 0.0;
  double score = 0.0;
};

Peak locate_peak(const Grid& response);

}  // namespace strack

#endif  // STRACK_CLASSIFIER_HPP_
