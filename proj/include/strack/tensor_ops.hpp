#ifndef STRACK_TENSOR_OPS_HPP_
#define STRACK_TENSOR_OPS_HPP_

#include <Eigen/Core>

#include <vector>

#include "strack/grid.hpp"
#include "strack/rng.hpp"

namespace strack {

// Cross-correlation kernel (no flip) with zero padding.
// weights: out × in × k_1 [× k_2 [× k_3]]; bias: rank-1 of length out, or empty for no bias.
// Padding may be asymmetric (pad_lo before, pad_hi after) so even kernels can
// preserve extent.
struct ConvKernel {
  Grid weights;
  Grid bias;
  std::vector<Index> stride;
  std::vector<Index> pad_lo;
  std::vector<Index> pad_hi;

  Index spatial_rank() const { return weights.rank() - 2; }
  Index out_channels() const { return weights.dim(0); }
  Index in_channels() const { return weights.dim(1); }
  bool has_bias() const { return !bias.empty(); }

  bool operator==(const ConvKernel&) const = default;
};

// Symmetric padding, uniform stride. An empty bias grid means no bias term.
ConvKernel make_kernel(Grid weights, Grid bias, Index stride, Index pad);

// Weights drawn N(0, 1/fan_in); bias zero (or absent when with_bias is false).
ConvKernel random_kernel(Rng& rng, Shape weight_shape, bool with_bias, Index stride, Index pad);

// Output spatial extents; throws ShapeError naming the offending axis.
Shape conv_output_shape(const Shape& input, const ConvKernel& kernel);

// im2col matrix: (in_channels·kernel volume) × output positions, so that
// conv(input) = weights.matrix(out, rows) · conv_patches(input).
RowMatrix conv_patches(const Grid& input, const ConvKernel& kernel);

Grid conv2d(const Grid& input, const ConvKernel& kernel);
Grid conv3d(const Grid& input, const ConvKernel& kernel);

struct ConvGrads {
  Grid input;
  Grid weights;
  Grid bias;  // empty when the kernel has no bias
};

// Reverse mode for conv2d/conv3d. `need_input` skips the col2im pass when false.
ConvGrads conv_vjp(const Grid& input, const ConvKernel& kernel, const Grid& cotangent,
                   bool need_input = true);

// 1D convolution across the channel axis of a vector; odd k, zero padding (k-1)/2.
Grid conv1d_cross_channel(const Grid& v, const Grid& kernel);
struct Conv1dGrads {
  Grid v;
  Grid kernel;
};
Conv1dGrads conv1d_cross_channel_vjp(const Grid& v, const Grid& kernel, const Grid& cotangent);

// c×h×w -> c
Grid global_average_pool(const Grid& x);
Grid global_average_pool_vjp(const Shape& input_shape, const Grid& cotangent);

Grid sigmoid(const Grid& x);
double sigmoid(double x);
Grid sigmoid_vjp(const Grid& x, const Grid& cotangent);

Grid relu(const Grid& x);
Grid relu_vjp(const Grid& x, const Grid& cotangent);

Grid leaky_relu(const Grid& x, double slope);
Grid leaky_relu_derivative(const Grid& x, double slope);

Grid elementwise_mul(const Grid& a, const Grid& b);
Grid elementwise_add(const Grid& a, const Grid& b);
Grid scalar_scale(const Grid& x, double s);

// Samples a fixed 3×3 grid of points at the cell centres of `box` (x, y, w, h in
// feature-cell units; integer coordinates are cell centres) with bilinear
// interpolation and zero outside the map. c×h×w -> c×3×3.
inline constexpr Index kBoxPoolCells = 3;
Grid bilinear_box_pool(const Grid& features, const Eigen::Vector4d& box);
struct BoxPoolGrads {
  Grid features;
  Eigen::Vector4d box;
};
BoxPoolGrads bilinear_box_pool_vjp(const Grid& features, const Eigen::Vector4d& box,
                                   const Grid& cotangent);

// y = W x + b with W out×in.
Grid dense(const Grid& x, const Grid& weights, const Grid& bias);
struct DenseGrads {
  Grid x;
  Grid weights;
  Grid bias;
};
DenseGrads dense_vjp(const Grid& x, const Grid& weights, const Grid& cotangent);

// Stack along axis 0.
Grid concat_channels(const Grid& a, const Grid& b);

}  // namespace strack

#endif  // STRACK_TENSOR_OPS_HPP_
