#include "strack/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "strack/rng.hpp"
#include "strack/tensor_ops.hpp"

namespace strack {

namespace {

struct TagName {
  OpTag tag;
  std::string_view name;
};

constexpr TagName kTagNames[] = {
    {OpTag::conv1d, "conv1d"},
    {OpTag::conv2d, "conv2d"},
    {OpTag::conv3d, "conv3d"},
    {OpTag::sigmoid, "sigmoid"},
    {OpTag::relu, "relu"},
    {OpTag::elementwise_mul, "elementwise-mul"},
    {OpTag::elementwise_add, "elementwise-add"},
    {OpTag::scalar_scale, "scalar-scale"},
    {OpTag::global_average_pool, "global-average-pool"},
    {OpTag::bilinear_box_pool, "bilinear-box-pool"},
    {OpTag::dense, "dense"},
};

void require_inputs(OpTag tag, std::span<const Grid> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw std::invalid_argument(std::string(op_tag_name(tag)) + " expects " + std::to_string(n) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
}

ConvKernel kernel_from(std::span<const Grid> inputs, const OpAttributes& attrs) {
  const auto nsp = static_cast<std::size_t>(inputs[1].rank() - 2);
  ConvKernel k{inputs[1], inputs[2], attrs.stride, attrs.pad_lo, attrs.pad_hi};
  if (k.stride.empty()) k.stride.assign(nsp, 1);
  if (k.pad_lo.empty()) k.pad_lo.assign(nsp, 0);
  if (k.pad_hi.empty()) k.pad_hi = k.pad_lo;
  return k;
}

Eigen::Vector4d as_box(const Grid& g) {
  if (g.size() != 4) throw ShapeError("box input must have 4 entries");
  return g.data().head<4>();
}

}  // namespace

std::string_view op_tag_name(OpTag tag) {
  for (const auto& e : kTagNames) {
    if (e.tag == tag) return e.name;
  }
  return "?";
}

OpTag parse_op_tag(std::string_view name) {
  for (const auto& e : kTagNames) {
    if (e.name == name) return e.tag;
  }
  throw std::invalid_argument("unknown op-tag '" + std::string(name) + "'");
}

Grid apply_op(OpTag tag, std::span<const Grid> inputs, const OpAttributes& attrs) {
  switch (tag) {
    case OpTag::conv1d:
      require_inputs(tag, inputs, 2);
      return conv1d_cross_channel(inputs[0], inputs[1]);
    case OpTag::conv2d:
      require_inputs(tag, inputs, 3);
      return conv2d(inputs[0], kernel_from(inputs, attrs));
    case OpTag::conv3d:
      require_inputs(tag, inputs, 3);
      return conv3d(inputs[0], kernel_from(inputs, attrs));
    case OpTag::sigmoid:
      require_inputs(tag, inputs, 1);
      return sigmoid(inputs[0]);
    case OpTag::relu:
      require_inputs(tag, inputs, 1);
      return relu(inputs[0]);
    case OpTag::elementwise_mul:
      require_inputs(tag, inputs, 2);
      return elementwise_mul(inputs[0], inputs[1]);
    case OpTag::elementwise_add:
      require_inputs(tag, inputs, 2);
      return elementwise_add(inputs[0], inputs[1]);
    case OpTag::scalar_scale:
      require_inputs(tag, inputs, 2);
      return scalar_scale(inputs[0], inputs[1][0]);
    case OpTag::global_average_pool:
      require_inputs(tag, inputs, 1);
      return global_average_pool(inputs[0]);
    case OpTag::bilinear_box_pool:
      require_inputs(tag, inputs, 2);
      return bilinear_box_pool(inputs[0], as_box(inputs[1]));
    case OpTag::dense:
      require_inputs(tag, inputs, 3);
      return dense(inputs[0], inputs[1], inputs[2]);
  }
  throw std::invalid_argument("unknown op-tag");
}

std::vector<Grid> vjp(OpTag tag, std::span<const Grid> inputs, const Grid& cotangent,
                      const OpAttributes& attrs) {
  switch (tag) {
    case OpTag::conv1d: {
      require_inputs(tag, inputs, 2);
      auto g = conv1d_cross_channel_vjp(inputs[0], inputs[1], cotangent);
      return {std::move(g.v), std::move(g.kernel)};
    }
    case OpTag::conv2d:
    case OpTag::conv3d: {
      require_inputs(tag, inputs, 3);
      auto g = conv_vjp(inputs[0], kernel_from(inputs, attrs), cotangent);
      return {std::move(g.input), std::move(g.weights), std::move(g.bias)};
    }
    case OpTag::sigmoid:
      require_inputs(tag, inputs, 1);
      return {sigmoid_vjp(inputs[0], cotangent)};
    case OpTag::relu:
      require_inputs(tag, inputs, 1);
      return {relu_vjp(inputs[0], cotangent)};
    case OpTag::elementwise_mul:
      require_inputs(tag, inputs, 2);
      return {elementwise_mul(cotangent, inputs[1]), elementwise_mul(cotangent, inputs[0])};
    case OpTag::elementwise_add:
      require_inputs(tag, inputs, 2);
      require_same_shape(inputs[0], cotangent, "elementwise_add cotangent");
      return {cotangent, cotangent};
    case OpTag::scalar_scale: {
      require_inputs(tag, inputs, 2);
      require_same_shape(inputs[0], cotangent, "scalar_scale cotangent");
      Grid ds({1});
      ds[0] = inputs[0].data().dot(cotangent.data());
      return {scalar_scale(cotangent, inputs[1][0]), std::move(ds)};
    }
    case OpTag::global_average_pool:
      require_inputs(tag, inputs, 1);
      return {global_average_pool_vjp(inputs[0].shape(), cotangent)};
    case OpTag::bilinear_box_pool: {
      require_inputs(tag, inputs, 2);
      auto g = bilinear_box_pool_vjp(inputs[0], as_box(inputs[1]), cotangent);
      Grid db({4});
      db.data() = g.box;
      return {std::move(g.features), std::move(db)};
    }
    case OpTag::dense: {
      require_inputs(tag, inputs, 3);
      auto g = dense_vjp(inputs[0], inputs[1], cotangent);
      return {std::move(g.x), std::move(g.weights), std::move(g.bias)};
    }
  }
  throw std::invalid_argument("unknown op-tag");
}

GradCheckReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& gradient, const Eigen::VectorXd& point,
                                  double eps, double floor) {
  if (gradient.size() != point.size()) {
    throw ShapeError("finite_diff_check: gradient has " + std::to_string(gradient.size()) +
                     " entries, point has " + std::to_string(point.size()));
  }
  GradCheckReport report;
  Eigen::VectorXd p = point;
  for (Index i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double fp = f(p);
    p[i] = saved - eps;
    const double fm = f(p);
    p[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(gradient[i])) {
      throw NumericError("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double denom = std::max({std::abs(gradient[i]), std::abs(numeric), floor});
    const double rel = std::abs(gradient[i] - numeric) / denom;
    if (rel > report.max_rel_error || report.worst_coordinate < 0) {
      report.max_rel_error = std::max(rel, report.max_rel_error);
      report.worst_coordinate = i;
    }
  }
  return report;
}

GradCheckReport check_op_gradient(OpTag tag, std::span<const Grid> inputs,
                                  const OpAttributes& attrs, std::uint64_t seed, double eps,
                                  const VjpFunction& vjp_fn) {
  const Grid out = apply_op(tag, inputs, attrs);
  Rng rng(seed);
  Grid cot = Grid::like(out);
  for (Index i = 0; i < cot.size(); ++i) cot[i] = rng.normal();
  const auto grads = vjp_fn ? vjp_fn(tag, inputs, cot, attrs) : vjp(tag, inputs, cot, attrs);
  const std::vector<Grid> like(inputs.begin(), inputs.end());
  auto f = [&](const Eigen::VectorXd& flat) {
    const auto in = unflatten(flat, like);
    return apply_op(tag, in, attrs).data().dot(cot.data());
  };
  return finite_diff_check(f, flatten(grads), flatten(like), eps);
}

namespace {

Grid random_grid(Rng& rng, Shape shape) {
  Grid g(std::move(shape));
  for (Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
  return g;
}

// Keeps relu inputs away from the kink.
Grid random_grid_off_zero(Rng& rng, Shape shape) {
  Grid g(std::move(shape));
  for (Index i = 0; i < g.size(); ++i) {
    const double v = rng.uniform(0.1, 1.5);
    g[i] = rng.uniform() < 0.5 ? -v : v;
  }
  return g;
}

}  // namespace

OpCase random_op_case(OpTag tag, Rng& rng) {
  OpCase c;
  switch (tag) {
    case OpTag::conv1d:
      c.inputs = {random_grid(rng, {7}), random_grid(rng, {5})};
      break;
    case OpTag::conv2d:
      c.inputs = {random_grid(rng, {2, 5, 6}), random_grid(rng, {3, 2, 3, 3}), random_grid(rng, {3})};
      c.attrs = {{1, 2}, {1, 1}, {1, 2}};
      break;
    case OpTag::conv3d:
      c.inputs = {random_grid(rng, {2, 4, 5, 5}), random_grid(rng, {2, 2, 2, 3, 3}),
                  random_grid(rng, {2})};
      c.attrs = {{2, 1, 2}, {0, 1, 1}, {0, 1, 1}};
      break;
    case OpTag::sigmoid:
      c.inputs = {random_grid(rng, {3, 4})};
      break;
    case OpTag::relu:
      c.inputs = {random_grid_off_zero(rng, {3, 4})};
      break;
    case OpTag::elementwise_mul:
    case OpTag::elementwise_add:
      c.inputs = {random_grid(rng, {2, 3, 3}), random_grid(rng, {2, 3, 3})};
      break;
    case OpTag::scalar_scale:
      c.inputs = {random_grid(rng, {2, 3, 3}), random_grid(rng, {1})};
      break;
    case OpTag::global_average_pool:
      c.inputs = {random_grid(rng, {3, 4, 5})};
      break;
    case OpTag::bilinear_box_pool: {
      // Sample points land at fractional offsets in (0.05, 0.95) of a cell.
      Grid box({4});
      for (;;) {
        box[0] = rng.uniform(-1.0, 3.0);
        box[1] = rng.uniform(-1.0, 3.0);
        box[2] = rng.uniform(1.0, 5.0);
        box[3] = rng.uniform(1.0, 5.0);
        bool ok = true;
        for (int i = 0; i < 3 && ok; ++i) {
          for (int axis = 0; axis < 2 && ok; ++axis) {
            const double p = box[axis] + (i + 0.5) / 3.0 * box[axis + 2];
            const double frac = p - std::floor(p);
            ok = frac > 0.05 && frac < 0.95;
          }
        }
        if (ok) break;
      }
      c.inputs = {random_grid(rng, {3, 6, 7}), box};
      break;
    }
    case OpTag::dense:
      c.inputs = {random_grid(rng, {6}), random_grid(rng, {4, 6}), random_grid(rng, {4})};
      break;
  }
  return c;
}

Eigen::VectorXd flatten(std::span<const Grid> grids) {
  Index n = 0;
  for (const auto& g : grids) n += g.size();
  Eigen::VectorXd out(n);
  Index off = 0;
  for (const auto& g : grids) {
    out.segment(off, g.size()) = g.data();
    off += g.size();
  }
  return out;
}

std::vector<Grid> unflatten(const Eigen::VectorXd& flat, std::span<const Grid> like) {
  std::vector<Grid> out;
  out.reserve(like.size());
  Index off = 0;
  for (const auto& g : like) {
    if (g.empty()) {
      out.emplace_back();
      continue;
    }
    out.emplace_back(g.shape(), Eigen::VectorXd(flat.segment(off, g.size())));
    off += g.size();
  }
  if (off != flat.size()) throw ShapeError("unflatten: length mismatch");
  return out;
}

}  // namespace strack
