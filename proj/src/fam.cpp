#include "strack/fam.hpp"

#include <string>

namespace strack {

FamParams make_fam_params(Rng& rng, Index channels, FusionMode mode, Index kernel_size,
                          double amplification) {
  if (kernel_size % 2 == 0) throw ShapeError("attention kernel size must be odd");
  FamParams p;
  p.mode = mode;
  p.fusion_conv = random_kernel(rng, {channels, 2 * channels, 1, 1}, true, 1, 0);
  p.awp_conv = random_kernel(rng, {channels, channels, 3, 3}, true, 1, 1);
  p.amplification = amplification;
  p.attn_kernel = Grid({kernel_size});
  p.attn_kernel[(kernel_size - 1) / 2] = 1.0;
  return p;
}

Grid fuse(const Grid& x2d, const Grid& x3d, const FamParams& params) {
  require_same_shape(x2d, x3d, "fuse");
  if (params.mode == FusionMode::sum) return elementwise_add(x2d, x3d);
  if (!params.fusion_conv) throw ShapeError("concat fusion requires a fusion conv");
  if (params.fusion_conv->in_channels() != 2 * x2d.dim(0) ||
      params.fusion_conv->out_channels() != x2d.dim(0)) {
    throw ShapeError("fusion conv must map " + std::to_string(2 * x2d.dim(0)) + " -> " +
                     std::to_string(x2d.dim(0)) + " channels");
  }
  return conv2d(concat_channels(x2d, x3d), *params.fusion_conv);
}

Grid awp(const Grid& xs, const FamParams& params) {
  Grid w = sigmoid(conv2d(xs, params.awp_conv));
  w.array() *= params.amplification;
  return global_average_pool(elementwise_mul(w, xs));
}

Grid channel_attention(const Grid& pooled, const FamParams& params) {
  Grid logits = conv1d_cross_channel(pooled, params.attn_kernel);
  logits.array() += params.attn_bias;
  return sigmoid(logits);
}

Grid reweight_channels(const Grid& x, const Grid& weights) {
  if (weights.size() != x.dim(0)) throw ShapeError("channel weights length mismatch");
  Grid out = x;
  const Index c = x.dim(0);
  out.matrix(c, x.size() / c).array().colwise() *= weights.data().array();
  return out;
}

FamTrace fam_forward_traced(const Grid& x2d, const Grid& x3d, const FamParams& params,
                            const FamSwitches& switches) {
  FamTrace t;
  t.x2d = x2d;
  t.x3d = x3d;
  t.fused = fuse(x2d, x3d, params);
  if (!switches.attention) {
    t.output = t.fused;
    return t;
  }
  if (switches.pooling == Pooling::awp) {
    t.awp_logits = conv2d(t.fused, params.awp_conv);
    Grid w = sigmoid(t.awp_logits);
    w.array() *= params.amplification;
    t.pooled = global_average_pool(elementwise_mul(w, t.fused));
  } else {
    t.pooled = global_average_pool(t.fused);
  }
  t.attn_logits = conv1d_cross_channel(t.pooled, params.attn_kernel);
  t.attn_logits.array() += params.attn_bias;
  t.attention = sigmoid(t.attn_logits);
  t.output = reweight_channels(t.fused, t.attention);
  return t;
}

Grid fam_forward(const Grid& x2d, const Grid& x3d, const FamParams& params,
                 const FamSwitches& switches) {
  return fam_forward_traced(x2d, x3d, params, switches).output;
}

namespace {

FamParams zero_like(const FamParams& p) {
  FamParams z;
  z.mode = p.mode;
  if (p.fusion_conv) {
    z.fusion_conv = *p.fusion_conv;
    z.fusion_conv->weights.set_zero();
    if (z.fusion_conv->has_bias()) z.fusion_conv->bias.set_zero();
  }
  z.awp_conv = p.awp_conv;
  z.awp_conv.weights.set_zero();
  if (z.awp_conv.has_bias()) z.awp_conv.bias.set_zero();
  z.amplification = 0.0;
  z.attn_kernel = Grid::like(p.attn_kernel);
  z.attn_bias = 0.0;
  return z;
}

}  // namespace

FamGrads fam_backward(const FamTrace& t, const FamParams& params, const FamSwitches& switches,
                      const Grid& upstream) {
  require_same_shape(t.output, upstream, "fam_backward upstream");
  FamGrads g;
  g.params = zero_like(params);
  const Index c = t.fused.dim(0);
  const Index hw = t.fused.size() / c;

  Grid d_fused;
  if (!switches.attention) {
    d_fused = upstream;
  } else {
    // out[c] = fused[c] * attention[c]
    d_fused = reweight_channels(upstream, t.attention);
    Grid d_att({c});
    d_att.data() = (upstream.matrix(c, hw).array() * t.fused.matrix(c, hw).array()).rowwise().sum();
    Grid d_logits = sigmoid_vjp(t.attn_logits, d_att);
    g.params.attn_bias = d_logits.data().sum();
    auto c1 = conv1d_cross_channel_vjp(t.pooled, params.attn_kernel, d_logits);
    g.params.attn_kernel = std::move(c1.kernel);
    Grid d_pooled_map = global_average_pool_vjp(t.fused.shape(), c1.v);
    if (switches.pooling == Pooling::gap) {
      d_fused.array() += d_pooled_map.array();
    } else {
      const Grid s = sigmoid(t.awp_logits);
      // pooled = GAP(A s ⊙ fused)
      d_fused.array() += d_pooled_map.array() * params.amplification * s.array();
      Grid d_w = elementwise_mul(d_pooled_map, t.fused);  // dL/d(A s)
      g.params.amplification = d_w.data().dot(s.data());
      Grid d_s = scalar_scale(d_w, params.amplification);
      Grid d_z = sigmoid_vjp(t.awp_logits, d_s);
      auto cg = conv_vjp(t.fused, params.awp_conv, d_z);
      d_fused.array() += cg.input.array();
      g.params.awp_conv.weights = std::move(cg.weights);
      if (params.awp_conv.has_bias()) g.params.awp_conv.bias = std::move(cg.bias);
    }
  }

  if (params.mode == FusionMode::sum) {
    g.x2d = d_fused;
    g.x3d = std::move(d_fused);
  } else {
    auto cg = conv_vjp(concat_channels(t.x2d, t.x3d), *params.fusion_conv, d_fused);
    g.x2d = Grid(t.x2d.shape(), Eigen::VectorXd(cg.input.data().head(t.x2d.size())));
    g.x3d = Grid(t.x3d.shape(), Eigen::VectorXd(cg.input.data().tail(t.x3d.size())));
    g.params.fusion_conv->weights = std::move(cg.weights);
    if (params.fusion_conv->has_bias()) g.params.fusion_conv->bias = std::move(cg.bias);
  }
  return g;
}

FamGrads fam_backward(const Grid& x2d, const Grid& x3d, const FamParams& params,
                      const FamSwitches& switches, const Grid& upstream) {
  return fam_backward(fam_forward_traced(x2d, x3d, params, switches), params, switches, upstream);
}

Eigen::VectorXd pack(const FamParams& p) {
  std::vector<double> v;
  auto push = [&](const Grid& g) { v.insert(v.end(), g.data().begin(), g.data().end()); };
  if (p.fusion_conv) {
    push(p.fusion_conv->weights);
    push(p.fusion_conv->bias);
  }
  push(p.awp_conv.weights);
  push(p.awp_conv.bias);
  v.push_back(p.amplification);
  push(p.attn_kernel);
  v.push_back(p.attn_bias);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

void unpack(const Eigen::VectorXd& flat, FamParams& p) {
  Index off = 0;
  auto pull = [&](Grid& g) {
    if (off + g.size() > flat.size()) throw ShapeError("FAM parameter vector too short");
    g.data() = flat.segment(off, g.size());
    off += g.size();
  };
  auto pull_scalar = [&](double& s) {
    if (off >= flat.size()) throw ShapeError("FAM parameter vector too short");
    s = flat[off++];
  };
  if (p.fusion_conv) {
    pull(p.fusion_conv->weights);
    pull(p.fusion_conv->bias);
  }
  pull(p.awp_conv.weights);
  pull(p.awp_conv.bias);
  pull_scalar(p.amplification);
  pull(p.attn_kernel);
  pull_scalar(p.attn_bias);
  if (off != flat.size()) throw ShapeError("FAM parameter vector too long");
}

}  // namespace strack
