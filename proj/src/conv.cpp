#include <array>
#include <cmath>
#include <string>

#include "strack/tensor_ops.hpp"

namespace strack {

namespace {

// Convolution geometry with the spatial axes right-aligned into three slots;
// unused leading slots have extent 1 and no padding.
struct ConvGeometry {
  Index cin = 0;
  Index cout = 0;
  std::array<Index, 3> in{1, 1, 1};
  std::array<Index, 3> k{1, 1, 1};
  std::array<Index, 3> stride{1, 1, 1};
  std::array<Index, 3> pad_lo{0, 0, 0};
  std::array<Index, 3> out{1, 1, 1};

  Index rows() const { return cin * k[0] * k[1] * k[2]; }
  Index positions() const { return out[0] * out[1] * out[2]; }
};

ConvGeometry make_geometry(const Shape& input, const ConvKernel& kernel) {
  const Index nsp = kernel.spatial_rank();
  if (nsp < 1 || nsp > 3) {
    throw ShapeError("convolution weights must have rank 3..5, got " +
                     shape_string(kernel.weights.shape()));
  }
  if (static_cast<Index>(input.size()) != nsp + 1) {
    throw ShapeError("convolution input " + shape_string(input) + " must have rank " +
                     std::to_string(nsp + 1));
  }
  if (static_cast<Index>(kernel.stride.size()) != nsp ||
      static_cast<Index>(kernel.pad_lo.size()) != nsp ||
      static_cast<Index>(kernel.pad_hi.size()) != nsp) {
    throw ShapeError("stride/padding must list one entry per spatial axis");
  }
  if (kernel.has_bias() && (kernel.bias.rank() != 1 || kernel.bias.dim(0) != kernel.out_channels())) {
    throw ShapeError("bias " + shape_string(kernel.bias.shape()) + " does not match " +
                     std::to_string(kernel.out_channels()) + " output channels");
  }
  if (input[0] != kernel.in_channels()) {
    throw ShapeError("axis 0 (channels): input has " + std::to_string(input[0]) +
                     ", kernel expects " + std::to_string(kernel.in_channels()));
  }
  ConvGeometry g;
  g.cin = input[0];
  g.cout = kernel.out_channels();
  const Index offset = 3 - nsp;
  for (Index a = 0; a < nsp; ++a) {
    const Index slot = offset + a;
    const Index in = input[static_cast<std::size_t>(a + 1)];
    const Index k = kernel.weights.dim(a + 2);
    const Index s = kernel.stride[static_cast<std::size_t>(a)];
    const Index lo = kernel.pad_lo[static_cast<std::size_t>(a)];
    const Index hi = kernel.pad_hi[static_cast<std::size_t>(a)];
    if (s < 1 || lo < 0 || hi < 0) {
      throw ShapeError("axis " + std::to_string(a + 1) + ": stride must be positive and padding non-negative");
    }
    const Index padded = in + lo + hi;
    if (padded < k) {
      throw ShapeError("axis " + std::to_string(a + 1) + ": padded extent " + std::to_string(padded) +
                       " smaller than kernel extent " + std::to_string(k));
    }
    g.in[slot] = in;
    g.k[slot] = k;
    g.stride[slot] = s;
    g.pad_lo[slot] = lo;
    g.out[slot] = (padded - k) / s + 1;
  }
  return g;
}

// rows × positions patch matrix.
RowMatrix im2col(const Grid& input, const ConvGeometry& g) {
  RowMatrix cols(g.rows(), g.positions());
  const double* src = input.data().data();
  Index row = 0;
  for (Index c = 0; c < g.cin; ++c) {
    for (Index a = 0; a < g.k[0]; ++a) {
      for (Index b = 0; b < g.k[1]; ++b) {
        for (Index e = 0; e < g.k[2]; ++e, ++row) {
          double* dst = cols.row(row).data();
          Index p = 0;
          for (Index o0 = 0; o0 < g.out[0]; ++o0) {
            const Index i0 = o0 * g.stride[0] - g.pad_lo[0] + a;
            const bool v0 = i0 >= 0 && i0 < g.in[0];
            for (Index o1 = 0; o1 < g.out[1]; ++o1) {
              const Index i1 = o1 * g.stride[1] - g.pad_lo[1] + b;
              const bool v1 = v0 && i1 >= 0 && i1 < g.in[1];
              const double* line = v1 ? src + ((c * g.in[0] + i0) * g.in[1] + i1) * g.in[2] : nullptr;
              for (Index o2 = 0; o2 < g.out[2]; ++o2, ++p) {
                const Index i2 = o2 * g.stride[2] - g.pad_lo[2] + e;
                dst[p] = (v1 && i2 >= 0 && i2 < g.in[2]) ? line[i2] : 0.0;
              }
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const RowMatrix& cols, const ConvGeometry& g, Grid& out) {
  double* dst = out.data().data();
  Index row = 0;
  for (Index c = 0; c < g.cin; ++c) {
    for (Index a = 0; a < g.k[0]; ++a) {
      for (Index b = 0; b < g.k[1]; ++b) {
        for (Index e = 0; e < g.k[2]; ++e, ++row) {
          const double* src = cols.row(row).data();
          Index p = 0;
          for (Index o0 = 0; o0 < g.out[0]; ++o0) {
            const Index i0 = o0 * g.stride[0] - g.pad_lo[0] + a;
            const bool v0 = i0 >= 0 && i0 < g.in[0];
            for (Index o1 = 0; o1 < g.out[1]; ++o1) {
              const Index i1 = o1 * g.stride[1] - g.pad_lo[1] + b;
              const bool v1 = v0 && i1 >= 0 && i1 < g.in[1];
              double* line = v1 ? dst + ((c * g.in[0] + i0) * g.in[1] + i1) * g.in[2] : nullptr;
              for (Index o2 = 0; o2 < g.out[2]; ++o2, ++p) {
                const Index i2 = o2 * g.stride[2] - g.pad_lo[2] + e;
                if (v1 && i2 >= 0 && i2 < g.in[2]) line[i2] += src[p];
              }
            }
          }
        }
      }
    }
  }
}

Shape output_shape(const ConvGeometry& g, Index nsp) {
  Shape s{g.cout};
  for (Index a = 3 - nsp; a < 3; ++a) s.push_back(g.out[static_cast<std::size_t>(a)]);
  return s;
}

Grid convolve(const Grid& input, const ConvKernel& kernel) {
  const ConvGeometry g = make_geometry(input.shape(), kernel);
  const RowMatrix cols = im2col(input, g);
  Grid out(output_shape(g, kernel.spatial_rank()));
  auto o = out.matrix(g.cout, g.positions());
  o.noalias() = kernel.weights.matrix(g.cout, g.rows()) * cols;
  if (kernel.has_bias()) o.colwise() += kernel.bias.data();
  return out;
}

}  // namespace

ConvKernel make_kernel(Grid weights, Grid bias, Index stride, Index pad) {
  const auto nsp = static_cast<std::size_t>(weights.rank() - 2);
  ConvKernel k{std::move(weights), std::move(bias), std::vector<Index>(nsp, stride),
               std::vector<Index>(nsp, pad), std::vector<Index>(nsp, pad)};
  return k;
}

ConvKernel random_kernel(Rng& rng, Shape weight_shape, bool with_bias, Index stride, Index pad) {
  Grid w(weight_shape);
  const double fan_in = static_cast<double>(w.size() / weight_shape[0]);
  const double scale = 1.0 / std::sqrt(fan_in);
  for (Index i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
  Grid b = with_bias ? Grid({weight_shape[0]}) : Grid();
  return make_kernel(std::move(w), std::move(b), stride, pad);
}

Shape conv_output_shape(const Shape& input, const ConvKernel& kernel) {
  return output_shape(make_geometry(input, kernel), kernel.spatial_rank());
}

RowMatrix conv_patches(const Grid& input, const ConvKernel& kernel) {
  return im2col(input, make_geometry(input.shape(), kernel));
}

Grid conv2d(const Grid& input, const ConvKernel& kernel) {
  if (kernel.spatial_rank() != 2) throw ShapeError("conv2d needs a rank-4 weight grid");
  return convolve(input, kernel);
}

Grid conv3d(const Grid& input, const ConvKernel& kernel) {
  if (kernel.spatial_rank() != 3) throw ShapeError("conv3d needs a rank-5 weight grid");
  return convolve(input, kernel);
}

ConvGrads conv_vjp(const Grid& input, const ConvKernel& kernel, const Grid& cotangent,
                   bool need_input) {
  const ConvGeometry g = make_geometry(input.shape(), kernel);
  if (cotangent.shape() != output_shape(g, kernel.spatial_rank())) {
    throw ShapeError("conv cotangent shape " + shape_string(cotangent.shape()) +
                     " does not match output");
  }
  const RowMatrix cols = im2col(input, g);
  const auto G = cotangent.matrix(g.cout, g.positions());
  ConvGrads out;
  out.weights = Grid::like(kernel.weights);
  out.weights.matrix(g.cout, g.rows()).noalias() = G * cols.transpose();
  if (kernel.has_bias()) {
    out.bias = Grid({g.cout});
    out.bias.data() = G.rowwise().sum();
  }
  if (need_input) {
    const RowMatrix dcols = kernel.weights.matrix(g.cout, g.rows()).transpose() * G;
    out.input = Grid::like(input);
    col2im_accumulate(dcols, g, out.input);
  }
  return out;
}

}  // namespace strack
