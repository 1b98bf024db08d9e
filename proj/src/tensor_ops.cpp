#include <cmath>
#include <string>

#include "strack/tensor_ops.hpp"

namespace strack {

Grid conv1d_cross_channel(const Grid& v, const Grid& kernel) {
  if (v.rank() != 1 || kernel.rank() != 1) throw ShapeError("conv1d_cross_channel expects rank-1 grids");
  const Index k = kernel.size();
  if (k % 2 == 0) throw ShapeError("conv1d_cross_channel kernel size must be odd, got " + std::to_string(k));
  const Index half = (k - 1) / 2;
  const Index c = v.size();
  Grid out({c});
  for (Index i = 0; i < c; ++i) {
    double acc = 0.0;
    for (Index t = 0; t < k; ++t) {
      const Index j = i + t - half;
      if (j >= 0 && j < c) acc += kernel[t] * v[j];
    }
    out[i] = acc;
  }
  return out;
}

Conv1dGrads conv1d_cross_channel_vjp(const Grid& v, const Grid& kernel, const Grid& cotangent) {
  require_same_shape(v, cotangent, "conv1d_cross_channel cotangent");
  const Index k = kernel.size();
  if (k % 2 == 0) throw ShapeError("conv1d_cross_channel kernel size must be odd, got " + std::to_string(k));
  const Index half = (k - 1) / 2;
  const Index c = v.size();
  Conv1dGrads g{Grid::like(v), Grid::like(kernel)};
  for (Index i = 0; i < c; ++i) {
    for (Index t = 0; t < k; ++t) {
      const Index j = i + t - half;
      if (j < 0 || j >= c) continue;
      g.v[j] += kernel[t] * cotangent[i];
      g.kernel[t] += v[j] * cotangent[i];
    }
  }
  return g;
}

Grid global_average_pool(const Grid& x) {
  if (x.rank() != 3) throw ShapeError("global_average_pool expects c×h×w, got " + shape_string(x.shape()));
  const Index c = x.dim(0);
  const Index hw = x.dim(1) * x.dim(2);
  Grid out({c});
  out.data() = x.matrix(c, hw).rowwise().sum() / static_cast<double>(hw);
  return out;
}

Grid global_average_pool_vjp(const Shape& input_shape, const Grid& cotangent) {
  Grid dx(input_shape);
  const Index c = input_shape.at(0);
  const Index hw = input_shape.at(1) * input_shape.at(2);
  if (cotangent.size() != c) throw ShapeError("global_average_pool cotangent length mismatch");
  auto m = dx.matrix(c, hw);
  for (Index i = 0; i < c; ++i) m.row(i).setConstant(cotangent[i] / static_cast<double>(hw));
  return dx;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Grid sigmoid(const Grid& x) {
  Grid out = Grid::like(x);
  for (Index i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Grid sigmoid_vjp(const Grid& x, const Grid& cotangent) {
  require_same_shape(x, cotangent, "sigmoid cotangent");
  Grid out = Grid::like(x);
  for (Index i = 0; i < x.size(); ++i) {
    const double s = sigmoid(x[i]);
    out[i] = cotangent[i] * s * (1.0 - s);
  }
  return out;
}

Grid relu(const Grid& x) {
  Grid out = x;
  out.data() = x.data().cwiseMax(0.0);
  return out;
}

Grid relu_vjp(const Grid& x, const Grid& cotangent) {
  require_same_shape(x, cotangent, "relu cotangent");
  Grid out = cotangent;
  out.array() *= (x.array() > 0.0).cast<double>();
  return out;
}

Grid leaky_relu(const Grid& x, double slope) {
  Grid out = x;
  out.array() = (x.array() > 0.0).select(x.array(), slope * x.array());
  return out;
}

Grid leaky_relu_derivative(const Grid& x, double slope) {
  Grid out = Grid::like(x);
  out.array() = (x.array() > 0.0).select(Eigen::ArrayXd::Ones(x.size()), slope);
  return out;
}

Grid elementwise_mul(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "elementwise_mul");
  Grid out = a;
  out.array() *= b.array();
  return out;
}

Grid elementwise_add(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "elementwise_add");
  Grid out = a;
  out.array() += b.array();
  return out;
}

Grid scalar_scale(const Grid& x, double s) {
  Grid out = x;
  out.array() *= s;
  return out;
}

namespace {

struct Tap {
  Index r0, c0;
  double fr, fc;
};

Tap locate(double row, double col) {
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  return {static_cast<Index>(r0), static_cast<Index>(c0), row - r0, col - c0};
}

double at_or_zero(const Grid& f, Index ch, Index r, Index c) {
  if (r < 0 || c < 0 || r >= f.dim(1) || c >= f.dim(2)) return 0.0;
  return f(ch, r, c);
}

void add_if_inside(Grid& f, Index ch, Index r, Index c, double v) {
  if (r < 0 || c < 0 || r >= f.dim(1) || c >= f.dim(2)) return;
  f(ch, r, c) += v;
}

double cell_fraction(Index i) { return (static_cast<double>(i) + 0.5) / static_cast<double>(kBoxPoolCells); }

}  // namespace

Grid bilinear_box_pool(const Grid& features, const Eigen::Vector4d& box) {
  if (features.rank() != 3) throw ShapeError("bilinear_box_pool expects c×h×w features");
  const Index c = features.dim(0);
  Grid out({c, kBoxPoolCells, kBoxPoolCells});
  for (Index i = 0; i < kBoxPoolCells; ++i) {
    for (Index j = 0; j < kBoxPoolCells; ++j) {
      const Tap t = locate(box[1] + cell_fraction(i) * box[3], box[0] + cell_fraction(j) * box[2]);
      const double w00 = (1 - t.fr) * (1 - t.fc), w01 = (1 - t.fr) * t.fc;
      const double w10 = t.fr * (1 - t.fc), w11 = t.fr * t.fc;
      for (Index ch = 0; ch < c; ++ch) {
        out(ch, i, j) = w00 * at_or_zero(features, ch, t.r0, t.c0) +
                        w01 * at_or_zero(features, ch, t.r0, t.c0 + 1) +
                        w10 * at_or_zero(features, ch, t.r0 + 1, t.c0) +
                        w11 * at_or_zero(features, ch, t.r0 + 1, t.c0 + 1);
      }
    }
  }
  return out;
}

BoxPoolGrads bilinear_box_pool_vjp(const Grid& features, const Eigen::Vector4d& box,
                                   const Grid& cotangent) {
  const Index c = features.dim(0);
  if (cotangent.shape() != Shape{c, kBoxPoolCells, kBoxPoolCells}) {
    throw ShapeError("bilinear_box_pool cotangent shape mismatch");
  }
  BoxPoolGrads g{Grid::like(features), Eigen::Vector4d::Zero()};
  for (Index i = 0; i < kBoxPoolCells; ++i) {
    for (Index j = 0; j < kBoxPoolCells; ++j) {
      const Tap t = locate(box[1] + cell_fraction(i) * box[3], box[0] + cell_fraction(j) * box[2]);
      const double w00 = (1 - t.fr) * (1 - t.fc), w01 = (1 - t.fr) * t.fc;
      const double w10 = t.fr * (1 - t.fc), w11 = t.fr * t.fc;
      double d_row = 0.0, d_col = 0.0;
      for (Index ch = 0; ch < c; ++ch) {
        const double up = cotangent(ch, i, j);
        if (up == 0.0) continue;
        const double f00 = at_or_zero(features, ch, t.r0, t.c0);
        const double f01 = at_or_zero(features, ch, t.r0, t.c0 + 1);
        const double f10 = at_or_zero(features, ch, t.r0 + 1, t.c0);
        const double f11 = at_or_zero(features, ch, t.r0 + 1, t.c0 + 1);
        add_if_inside(g.features, ch, t.r0, t.c0, w00 * up);
        add_if_inside(g.features, ch, t.r0, t.c0 + 1, w01 * up);
        add_if_inside(g.features, ch, t.r0 + 1, t.c0, w10 * up);
        add_if_inside(g.features, ch, t.r0 + 1, t.c0 + 1, w11 * up);
        d_col += up * ((1 - t.fr) * (f01 - f00) + t.fr * (f11 - f10));
        d_row += up * ((1 - t.fc) * (f10 - f00) + t.fc * (f11 - f01));
      }
      g.box[0] += d_col;
      g.box[2] += d_col * cell_fraction(j);
      g.box[1] += d_row;
      g.box[3] += d_row * cell_fraction(i);
    }
  }
  return g;
}

Grid dense(const Grid& x, const Grid& weights, const Grid& bias) {
  if (weights.rank() != 2 || x.size() != weights.dim(1)) {
    throw ShapeError("dense: input length " + std::to_string(x.size()) + " vs weights " +
                     shape_string(weights.shape()));
  }
  if (bias.size() != weights.dim(0)) throw ShapeError("dense: bias length mismatch");
  Grid out({weights.dim(0)});
  out.data().noalias() = weights.matrix(weights.dim(0), weights.dim(1)) * x.data();
  out.data() += bias.data();
  return out;
}

DenseGrads dense_vjp(const Grid& x, const Grid& weights, const Grid& cotangent) {
  const Index out = weights.dim(0), in = weights.dim(1);
  if (cotangent.size() != out) throw ShapeError("dense cotangent length mismatch");
  DenseGrads g{Grid::like(x), Grid::like(weights), Grid({out})};
  g.x.data().noalias() = weights.matrix(out, in).transpose() * cotangent.data();
  g.weights.matrix(out, in).noalias() = cotangent.data() * x.data().transpose();
  g.bias.data() = cotangent.data();
  return g;
}

Grid concat_channels(const Grid& a, const Grid& b) {
  if (a.rank() != b.rank() || a.rank() < 2) throw ShapeError("concat_channels rank mismatch");
  for (Index ax = 1; ax < a.rank(); ++ax) {
    if (a.dim(ax) != b.dim(ax)) {
      throw ShapeError("concat_channels: axis " + std::to_string(ax) + " differs " +
                       shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
  }
  Shape s = a.shape();
  s[0] += b.dim(0);
  Grid out(s);
  out.data().head(a.size()) = a.data();
  out.data().tail(b.size()) = b.data();
  return out;
}

}  // namespace strack
