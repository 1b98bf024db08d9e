#ifndef STRACK_AUTODIFF_HPP_
#define STRACK_AUTODIFF_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "strack/grid.hpp"
#include "strack/rng.hpp"

namespace strack {

enum class OpTag {
  conv1d,  // conv1d_cross_channel
  conv2d,
  conv3d,
  sigmoid,
  relu,
  elementwise_mul,
  elementwise_add,
  scalar_scale,
  global_average_pool,
  bilinear_box_pool,
  dense,
};

inline constexpr OpTag kAllOpTags[] = {
    OpTag::conv1d,          OpTag::conv2d,          OpTag::conv3d,
    OpTag::sigmoid,         OpTag::relu,            OpTag::elementwise_mul,
    OpTag::elementwise_add, OpTag::scalar_scale,    OpTag::global_average_pool,
    OpTag::bilinear_box_pool, OpTag::dense};

std::string_view op_tag_name(OpTag tag);
// Throws std::invalid_argument on an unknown tag.
OpTag parse_op_tag(std::string_view name);

// Stride/padding for the convolution tags; ignored elsewhere.
struct OpAttributes {
  std::vector<Index> stride;
  std::vector<Index> pad_lo;
  std::vector<Index> pad_hi;
};

// Input conventions per tag:
//   conv1d            {v, kernel}
//   conv2d, conv3d    {input, weights, bias}
//   sigmoid, relu     {x}
//   elementwise_*     {a, b}
//   scalar_scale      {x, s (length 1)}
//   global_average_pool {x}
//   bilinear_box_pool {features, box (length 4: x, y, w, h)}
//   dense             {x, weights, bias}
Grid apply_op(OpTag tag, std::span<const Grid> inputs, const OpAttributes& attrs = {});

// One cotangent per input, in input order.
std::vector<Grid> vjp(OpTag tag, std::span<const Grid> inputs, const Grid& cotangent,
                      const OpAttributes& attrs = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index worst_coordinate = -1;
};

// Central differences (f(p+εe)-f(p-εe))/2ε against `gradient` over every
// coordinate. The relative error uses max(|analytic|, |numeric|, floor) as the
// denominator so exactly-zero components do not blow up. Throws NumericError
// naming the coordinate when any evaluation is non-finite.
GradCheckReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& gradient, const Eigen::VectorXd& point,
                                  double eps = 1e-5, double floor = 1e-2);

using VjpFunction = std::function<std::vector<Grid>(OpTag, std::span<const Grid>, const Grid&,
                                                     const OpAttributes&)>;

// Checks vjp() for one op at the given inputs: contracts the output with a
// random cotangent drawn from `seed` and finite-differences that scalar over
// every input coordinate. `vjp_fn` replaces vjp() when set.
GradCheckReport check_op_gradient(OpTag tag, std::span<const Grid> inputs,
                                  const OpAttributes& attrs, std::uint64_t seed,
                                  double eps = 1e-5, const VjpFunction& vjp_fn = {});

struct OpCase {
  std::vector<Grid> inputs;
  OpAttributes attrs;
};

// A small random instance of `tag` (non-trivial strides/padding for the
// convolutions, box points away from integer cell coordinates for pooling).
OpCase random_op_case(OpTag tag, Rng& rng);

// Flattens a list of grids into one vector and back; used to drive
// finite_diff_check over multi-input ops.
Eigen::VectorXd flatten(std::span<const Grid> grids);
std::vector<Grid> unflatten(const Eigen::VectorXd& flat, std::span<const Grid> like);

}  // namespace strack

#endif  // STRACK_AUTODIFF_HPP_
