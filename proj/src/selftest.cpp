#include "strack/selftest.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <exception>

#include "strack/autodiff.hpp"
#include "strack/box_estimator.hpp"
#include "strack/classifier.hpp"
#include "strack/fam.hpp"
#include "strack/model_file.hpp"
#include "strack/tracker.hpp"

namespace strack {

namespace {

constexpr double kGradTolerance = 1e-6;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Grid random_grid(Rng& rng, Shape shape, double scale = 1.0) {
  Grid g(std::move(shape));
  for (Index i = 0; i < g.size(); ++i) g[i] = scale * rng.normal();
  return g;
}

SelftestCheck worst_gradient(std::string name, const std::vector<double>& errors) {
  double worst = 0.0;
  for (double e : errors) worst = std::max(worst, e);
  return {std::move(name), worst < kGradTolerance, fmt("max rel error %.2e", worst)};
}

std::vector<SelftestCheck> op_gradients(const SelftestOptions& o) {
  VjpFunction corrupt;
  if (o.corrupt_vjp) {
    corrupt = [](OpTag tag, std::span<const Grid> in, const Grid& ct, const OpAttributes& attrs) {
      auto g = vjp(tag, in, ct, attrs);
      g.front().array() *= 1.001;
      return g;
    };
  }
  std::vector<SelftestCheck> out;
  Rng rng(101);
  for (OpTag tag : kAllOpTags) {
    std::vector<double> errors;
    for (int p = 0; p < o.gradient_points; ++p) {
      OpCase c = random_op_case(tag, rng);
      errors.push_back(check_op_gradient(tag, c.inputs, c.attrs, rng.next_u64(), 1e-5, corrupt).max_rel_error);
    }
    out.push_back(worst_gradient("gradient/" + std::string(op_tag_name(tag)), errors));
  }
  return out;
}

SelftestCheck fam_gradient(const SelftestOptions& o) {
  Rng rng(102);
  std::vector<double> errors;
  for (int p = 0; p < o.gradient_points; ++p) {
    const FusionMode mode = p % 2 ? FusionMode::sum : FusionMode::concat;
    const FamSwitches sw{p % 3 != 2, p % 4 == 3 ? Pooling::gap : Pooling::awp};
    const Grid a = random_grid(rng, {4, 6, 6}), b = random_grid(rng, {4, 6, 6});
    FamParams params = make_fam_params(rng, 4, mode);
    for (Index i = 0; i < params.attn_kernel.size(); ++i) params.attn_kernel[i] = 0.5 * rng.normal();
    for (Index i = 0; i < params.awp_conv.bias.size(); ++i) params.awp_conv.bias[i] = 0.3 * rng.normal();
    params.attn_bias = 0.2;
    params.amplification = 1.7;
    const Grid up = random_grid(rng, {4, 6, 6});
    const FamGrads g = fam_backward(a, b, params, sw, up);

    const Index na = a.size(), nb = b.size();
    const Eigen::VectorXd flat = pack(params);
    Eigen::VectorXd point(na + nb + flat.size()), grad(point.size());
    point << a.data(), b.data(), flat;
    grad << g.x2d.data(), g.x3d.data(), pack(g.params);
    auto f = [&](const Eigen::VectorXd& v) {
      const Grid x2(a.shape(), Eigen::VectorXd(v.head(na)));
      const Grid x3(b.shape(), Eigen::VectorXd(v.segment(na, nb)));
      FamParams q = params;
      unpack(v.tail(flat.size()), q);
      return fam_forward(x2, x3, q, sw).data().dot(up.data());
    };
    errors.push_back(finite_diff_check(f, grad, point).max_rel_error);
  }
  return worst_gradient("gradient/fam", errors);
}

SelftestCheck head_gradient(const SelftestOptions& o) {
  Rng rng(103);
  std::vector<double> errors;
  for (int p = 0; p < o.gradient_points; ++p) {
    const Grid s = random_grid(rng, {2, 8, 8}), d = random_grid(rng, {3, 4, 4});
    IouHeadParams params = make_iou_head(rng, 2, 3, 8);
    for (Index i = 0; i < params.b1.size(); ++i) params.b1[i] = 0.3 * rng.normal();
    // Pooling points stay off cell boundaries, where the bilinear map has kinks.
    const Box box{3.3 + p, 5.1 + 0.2 * p, 13.7, 9.9};
    const IouHeadGrads g = iou_head_backward({s, d, 32.0}, box, params, 0.7);

    const Eigen::VectorXd flat = pack(params);
    const Index np = flat.size();
    Eigen::VectorXd point(np + s.size() + d.size() + 4), grad(point.size());
    point << flat, s.data(), d.data(), box.vec();
    grad << pack(g.params), g.shallow.data(), g.deep.data(), g.box;
    auto f = [&](const Eigen::VectorXd& v) {
      IouHeadParams q = params;
      unpack(v.head(np), q);
      const Grid s2(s.shape(), Eigen::VectorXd(v.segment(np, s.size())));
      const Grid d2(d.shape(), Eigen::VectorXd(v.segment(np + s.size(), d.size())));
      const Eigen::Vector4d bv = v.tail(4);
      return 0.7 * iou_head_forward({s2, d2, 32.0}, Box{bv[0], bv[1], bv[2], bv[3]}, q);
    };
    errors.push_back(finite_diff_check(f, grad, point).max_rel_error);
  }
  return worst_gradient("gradient/iou_head", errors);
}

// One sample, c'=2, 8×8, identity activations, w1 held fixed: the objective is
// a ridge regression in w2 with a closed-form minimiser.
SelftestCheck solver_oracle() {
  Rng rng(104);
  ClassifierState s = make_classifier(rng, 2, ClassifierConfig{});
  TrainingSample t;
  t.x = random_grid(rng, {2, 8, 8});
  t.y = make_label_map(Box::from_center(4, 3, 4, 4), {8, 8, 1.0});
  set_initial_memory(s, {t});

  const Grid hidden = conv2d(t.x, s.w1);
  const Index n = s.w2.weights.size();
  Eigen::MatrixXd J(t.y.size(), n);
  ConvKernel unit = s.w2;
  for (Index k = 0; k < n; ++k) {
    unit.weights.set_zero();
    unit.weights[k] = 1.0;
    J.col(k) = conv2d(hidden, unit).data();
  }
  const double gamma = s.memory[0].gamma, lambda = s.config.lambda2;
  Eigen::MatrixXd A = gamma * J.transpose() * J;
  A.diagonal().array() += lambda;
  const Eigen::VectorXd w = A.ldlt().solve(gamma * J.transpose() * t.y.data());
  const double oracle = gamma * (J * w - t.y.data()).squaredNorm() + lambda * w.squaredNorm() +
                        s.config.lambda1 * s.w1.weights.data().squaredNorm();

  const auto trace = optimize(s, 6, 32, OptimizeWhich::w2_only);
  const double gap = std::abs(trace.back() - oracle) / oracle;
  const double diff = std::abs(objective(s) - oracle);
  return {"solver-oracle", gap < 1e-6 && diff < 1e-8,
          fmt("relative gap %.2e", gap) + fmt(", objective diff %.2e", diff)};
}

SelftestCheck awp_gap() {
  Rng rng(105);
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const Index c = 1 + static_cast<Index>(rng.below(8));
    const Index h = 1 + static_cast<Index>(rng.below(9)), w = 1 + static_cast<Index>(rng.below(9));
    FamParams p = make_fam_params(rng, c, FusionMode::sum);
    p.awp_conv.weights.set_zero();
    p.awp_conv.bias.set_zero();
    p.amplification = 2.0;
    const Grid xs = random_grid(rng, {c, h, w}, 3.0);
    mismatches += !(awp(xs, p) == global_average_pool(xs));
  }
  return {"awp-gap", mismatches == 0, std::to_string(mismatches) + " of 100 maps differ"};
}

SelftestCheck attention_range() {
  Rng rng(106);
  bool ok = true;
  for (int i = 0; i < 50 && ok; ++i) {
    FamParams p = make_fam_params(rng, 6, FusionMode::concat);
    for (Index k = 0; k < p.attn_kernel.size(); ++k) p.attn_kernel[k] = 0.5 * rng.normal();
    p.attn_bias = rng.normal();
    const Grid w = channel_attention(random_grid(rng, {6}, 3.0), p);
    ok = (w.array() > 0.0).all() && (w.array() < 1.0).all();
    const Grid a = random_grid(rng, {6, 5, 5}), b = random_grid(rng, {6, 5, 5});
    ok = ok && fam_forward(a, b, p, {false, Pooling::awp}) == fuse(a, b, p);
  }
  return {"attention-range", ok, ok ? "weights in (0,1), bypass exact" : "out-of-range weight or bypass mismatch"};
}

SelftestCheck determinism() {
  SequenceSpec spec;
  spec.frames = 12;
  spec.width = 120;
  spec.height = 90;
  spec.target = {50, 35, 20, 16};
  spec.motion = ConstantVelocity{1.0, 0.5};
  spec.texture_seed = 2;
  spec.background_seed = 3;
  const Sequence seq = synthesize(spec, 4);
  TrackerConfig cfg;
  cfg.seed = 9;
  const Model model = make_model(cfg, 5);
  const auto a = track_sequence(seq, model, cfg);
  const auto b = track_sequence(seq, model, cfg);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].box == b[i].box && a[i].peak == b[i].peak;
  const bool round_trip = deserialize_model(serialize_model(model)) == model;
  return {"determinism", same && round_trip,
          std::string(same ? "tracker rerun identical" : "tracker rerun differs") +
              (round_trip ? ", model file round trip exact" : ", model file round trip differs")};
}

}  // namespace

std::vector<SelftestCheck> run_selftest(const SelftestOptions& options) {
  std::vector<SelftestCheck> out;
  auto record = [&](SelftestCheck c) {
    if (options.on_result) options.on_result(c);
    out.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      record(fn());
    } catch (const std::exception& e) {
      record({name, false, std::string("threw: ") + e.what()});
    }
  };
  try {
    for (auto& c : op_gradients(options)) record(std::move(c));
  } catch (const std::exception& e) {
    record({"gradient/ops", false, std::string("threw: ") + e.what()});
  }
  guarded("gradient/fam", [&] { return fam_gradient(options); });
  guarded("gradient/iou_head", [&] { return head_gradient(options); });
  guarded("solver-oracle", solver_oracle);
  guarded("awp-gap", awp_gap);
  guarded("attention-range", attention_range);
  guarded("determinism", determinism);
  return out;
}

}  // namespace strack
