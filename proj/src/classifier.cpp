#include "strack/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace strack {

namespace {

Grid activate(const Grid& z, Activation a, double slope) {
  return a == Activation::identity ? z : leaky_relu(z, slope);
}

// Elementwise Φ'(z); empty for identity so callers can skip the multiply.
Grid activation_slope(const Grid& z, Activation a, double slope) {
  return a == Activation::identity ? Grid() : leaky_relu_derivative(z, slope);
}

void scale_by(Grid& g, const Grid& slope) {
  if (!slope.empty()) g.array() *= slope.array();
}

ConvKernel with_weights(const ConvKernel& k, Eigen::Ref<const Eigen::VectorXd> w) {
  ConvKernel out = k;
  out.weights.data() = w;
  return out;
}

struct Forward {
  Grid h1;  // Φ1(w1 ∗ x)
  Grid d1;  // Φ1'
  Grid z2;
  Grid d2;  // Φ2'
  Grid out;
};

// With identity Φ1 the two layers collapse into a single conv of x with
// kernel w1ᵀw2 (in_channels × k × k).
ConvKernel combined_kernel(const ClassifierState& s, const Grid& w1, const Grid& w2) {
  const Index h = s.w1.out_channels(), c = s.w1.in_channels();
  const Index kk = s.w2.weights.dim(2) * s.w2.weights.dim(3);
  ConvKernel k = s.w2;
  k.weights = Grid({1, c, s.w2.weights.dim(2), s.w2.weights.dim(3)});
  k.weights.matrix(c, kk).noalias() = w1.matrix(h, c).transpose() * w2.matrix(h, kk);
  return k;
}

bool factored(const ClassifierState& s) { return s.config.phi1 == Activation::identity; }

Forward forward_traced(const Grid& x, const ClassifierState& s) {
  const auto& c = s.config;
  Forward f;
  if (factored(s)) {
    f.z2 = conv2d(x, combined_kernel(s, s.w1.weights, s.w2.weights));
  } else {
    const Grid z1 = conv2d(x, s.w1);
    f.h1 = activate(z1, c.phi1, c.leaky_slope);
    f.d1 = activation_slope(z1, c.phi1, c.leaky_slope);
    f.z2 = conv2d(f.h1, s.w2);
  }
  f.d2 = activation_slope(f.z2, c.phi2, c.leaky_slope);
  f.out = activate(f.z2, c.phi2, c.leaky_slope);
  return f;
}

void check_input(const Grid& x, const ClassifierState& s) {
  if (x.rank() != 3 || x.dim(0) != s.w1.in_channels()) {
    throw ShapeError("classifier input " + shape_string(x.shape()) + " expects " +
                     std::to_string(s.w1.in_channels()) + " channels");
  }
}

// Linearization of every memory sample at the current weights. With identity
// Φ1 the Jacobian products run on each sample's cached im2col matrix P:
// J v = vec(w1ᵀv2 + v1ᵀw2)ᵀ P and Jᵀu goes through G = P u.
class GaussNewtonSystem {
 public:
  GaussNewtonSystem(const ClassifierState& s, OptimizeWhich which) : s_(s), which_(which) {
    const ConvKernel shape = combined_kernel(s, s.w1.weights, s.w2.weights);
    for (const auto& m : s.memory) {
      Linearized l{&m, forward_traced(m.x, s), Grid(), RowMatrix()};
      l.residual = l.f.out;
      l.residual.data() -= m.y.data();
      if (factored(s)) l.patches = conv_patches(m.x, shape);
      lin_.push_back(std::move(l));
    }
  }

  Index n1() const { return which_ == OptimizeWhich::both ? s_.w1.weights.size() : 0; }
  Index n2() const { return s_.w2.weights.size(); }
  Index dim() const { return n1() + n2(); }

  Eigen::VectorXd weights() const {
    Eigen::VectorXd w(dim());
    if (n1() > 0) w.head(n1()) = s_.w1.weights.data();
    w.tail(n2()) = s_.w2.weights.data();
    return w;
  }

  Eigen::VectorXd lambdas() const {
    Eigen::VectorXd l(dim());
    l.head(n1()).setConstant(s_.config.lambda1);
    l.tail(n2()).setConstant(s_.config.lambda2);
    return l;
  }

  // Jᵀ Γ J v + Λ v
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = lambdas().cwiseProduct(v);
    const ConvKernel v2 = with_weights(s_.w2, v.tail(n2()));
    const ConvKernel v1 = n1() > 0 ? with_weights(s_.w1, v.head(n1())) : ConvKernel{};
    Eigen::RowVectorXd kv;
    if (factored(s_)) {
      ConvKernel k = combined_kernel(s_, s_.w1.weights, v2.weights);
      if (n1() > 0) k.weights.data() += combined_kernel(s_, v1.weights, s_.w2.weights).weights.data();
      kv = k.weights.data().transpose();
    }
    for (const auto& l : lin_) {
      Grid jv;
      if (factored(s_)) {
        jv = Grid::like(l.residual);
        jv.data() = (kv * l.patches).transpose();
      } else {
        jv = conv2d(l.f.h1, v2);
        if (n1() > 0) {
          Grid t = conv2d(l.sample->x, v1);
          scale_by(t, l.f.d1);
          jv.data() += conv2d(t, s_.w2).data();
        }
      }
      scale_by(jv, l.f.d2);
      jv.data() *= l.sample->gamma;
      out += transpose(l, jv);
    }
    return out;
  }

  // −(Jᵀ Γ r + Λ w)
  Eigen::VectorXd rhs() const {
    Eigen::VectorXd b = -lambdas().cwiseProduct(weights());
    for (const auto& l : lin_) {
      Grid u = l.residual;
      u.data() *= l.sample->gamma;
      b -= transpose(l, u);
    }
    return b;
  }

 private:
  struct Linearized {
    const TrainingSample* sample;
    Forward f;
    Grid residual;
    RowMatrix patches;
  };

  // Jᵀ u for one sample.
  Eigen::VectorXd transpose(const Linearized& l, Grid u) const {
    Eigen::VectorXd g(dim());
    scale_by(u, l.f.d2);
    if (factored(s_)) {
      const Index h = s_.w1.out_channels(), c = s_.w1.in_channels(), kk = n2() / h;
      Eigen::VectorXd gp = l.patches * u.data();
      const Eigen::Map<const RowMatrix> G(gp.data(), c, kk);
      Eigen::Map<RowMatrix>(g.tail(n2()).data(), h, kk).noalias() = s_.w1.weights.matrix(h, c) * G;
      if (n1() > 0) {
        Eigen::Map<RowMatrix>(g.head(n1()).data(), h, c).noalias() =
            s_.w2.weights.matrix(h, kk) * G.transpose();
      }
      return g;
    }
    ConvGrads g2 = conv_vjp(l.f.h1, s_.w2, u, n1() > 0);
    g.tail(n2()) = g2.weights.data();
    if (n1() > 0) {
      scale_by(g2.input, l.f.d1);
      g.head(n1()) = conv_vjp(l.sample->x, s_.w1, g2.input, false).weights.data();
    }
    return g;
  }

  const ClassifierState& s_;
  OptimizeWhich which_;
  std::vector<Linearized> lin_;
};

Eigen::VectorXd conjugate_gradient(const GaussNewtonSystem& sys, const Eigen::VectorXd& b, int iters) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const double stop = 1e-30 * std::max(rr, 1e-300);
  for (int k = 0; k < iters && rr > stop; ++k) {
    const Eigen::VectorXd ap = sys.apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return x;
}

void set_weights(ClassifierState& s, OptimizeWhich which, const Eigen::VectorXd& w) {
  const Index n2 = s.w2.weights.size();
  s.w2.weights.data() = w.tail(n2);
  if (which == OptimizeWhich::both) s.w1.weights.data() = w.head(w.size() - n2);
}

double checked_objective(const ClassifierState& s) {
  const double loss = objective(s);
  if (!std::isfinite(loss)) throw NumericError("classifier loss is not finite");
  return loss;
}

}  // namespace

bool TrainingSample::operator==(const TrainingSample& o) const {
  return x == o.x && y == o.y && gamma == o.gamma && initial == o.initial;
}

bool ClassifierState::operator==(const ClassifierState& o) const {
  return w1 == o.w1 && w2 == o.w2 && memory == o.memory;
}

ClassifierState make_classifier(Rng& rng, Index in_channels, const ClassifierConfig& config) {
  if (in_channels < 1 || config.hidden_channels < 1 || config.kernel_size < 1) {
    throw std::invalid_argument("classifier dimensions must be positive");
  }
  ClassifierState s;
  s.config = config;
  s.w1 = random_kernel(rng, {config.hidden_channels, in_channels, 1, 1}, false, 1, 0);
  const Index k = config.kernel_size;
  s.w2.weights = Grid({1, config.hidden_channels, k, k});
  s.w2.stride = {1, 1};
  s.w2.pad_lo = {(k - 1) / 2, (k - 1) / 2};
  s.w2.pad_hi = {k / 2, k / 2};
  return s;
}

Grid classifier_forward(const Grid& x, const ClassifierState& state) {
  check_input(x, state);
  return forward_traced(x, state).out;
}

ClassifierGrads classifier_vjp(const Grid& x, const ClassifierState& state, const Grid& cotangent) {
  check_input(x, state);
  Forward f = forward_traced(x, state);
  require_same_shape(f.out, cotangent, "classifier cotangent");
  if (f.h1.empty()) f.h1 = conv2d(x, state.w1);
  Grid u = cotangent;
  scale_by(u, f.d2);
  ConvGrads g2 = conv_vjp(f.h1, state.w2, u);
  scale_by(g2.input, f.d1);
  ConvGrads g1 = conv_vjp(x, state.w1, g2.input, false);
  return {std::move(g1.weights), std::move(g2.weights)};
}

Grid make_label_map(const Box& box, const FeatureGeometry& geometry, double sigma_factor) {
  if (!box.valid()) throw std::invalid_argument("label map needs a box with positive area");
  if (geometry.height < 1 || geometry.width < 1 || !(geometry.stride > 0.0)) {
    throw std::invalid_argument("label map needs a non-empty feature grid");
  }
  const double d = geometry.stride;
  if (box.cx() < 0.0 || box.cy() < 0.0 || box.cx() > geometry.width * d ||
      box.cy() > geometry.height * d) {
    throw std::invalid_argument("box centre lies outside the patch");
  }
  const Index pr = std::clamp<Index>(std::lround(box.cy() / d), 0, geometry.height - 1);
  const Index pc = std::clamp<Index>(std::lround(box.cx() / d), 0, geometry.width - 1);
  const double sigma = sigma_factor * std::sqrt((box.w / d) * (box.h / d));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Grid y({1, geometry.height, geometry.width});
  for (Index i = 0; i < geometry.height; ++i) {
    for (Index j = 0; j < geometry.width; ++j) {
      const double di = static_cast<double>(i - pr), dj = static_cast<double>(j - pc);
      y(0, i, j) = std::exp(-(di * di + dj * dj) * inv);
    }
  }
  return y;
}

double objective(const ClassifierState& state) {
  if (state.memory.empty()) throw std::logic_error("classifier objective needs a non-empty memory");
  double loss = state.config.lambda1 * state.w1.weights.data().squaredNorm() +
                state.config.lambda2 * state.w2.weights.data().squaredNorm();
  for (const auto& m : state.memory) {
    loss += m.gamma * (classifier_forward(m.x, state).data() - m.y.data()).squaredNorm();
  }
  return loss;
}

std::vector<double> optimize(ClassifierState& state, int n_gn, int n_cg, OptimizeWhich which) {
  std::vector<double> trace{checked_objective(state)};
  for (int step = 0; step < n_gn; ++step) {
    const GaussNewtonSystem sys(state, which);
    const Eigen::VectorXd w0 = sys.weights();
    const Eigen::VectorXd delta = conjugate_gradient(sys, sys.rhs(), n_cg);

    const double before = trace.back();
    double accepted = before;
    bool moved = false;
    // The quadratic model is exact for identity activations, so the full
    // step is normally taken on the first try.
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      set_weights(state, which, w0 + t * delta);
      const double loss = checked_objective(state);
      if (loss <= before) {
        accepted = loss;
        moved = true;
        break;
      }
    }
    if (!moved) set_weights(state, which, w0);
    trace.push_back(accepted);
  }
  return trace;
}

void set_initial_memory(ClassifierState& state, std::vector<TrainingSample> samples) {
  if (samples.empty()) throw std::invalid_argument("initial memory needs at least one sample");
  if (samples.size() > state.config.capacity) {
    throw std::invalid_argument("initial samples exceed the memory capacity");
  }
  for (const auto& s : samples) {
    check_input(s.x, state);
    if (s.y.shape() != Shape{1, s.x.dim(1), s.x.dim(2)}) {
      throw ShapeError("label map " + shape_string(s.y.shape()) + " does not match features");
    }
  }
  const double gamma = 1.0 / static_cast<double>(samples.size());
  for (auto& s : samples) {
    s.gamma = gamma;
    s.initial = true;
  }
  state.memory = std::move(samples);
}

void memory_update(ClassifierState& state, Grid x, Grid y, double learning_rate) {
  auto& mem = state.memory;
  if (!mem.empty()) {
    require_same_shape(mem.front().x, x, "memory features");
    require_same_shape(mem.front().y, y, "memory labels");
  }
  if (mem.empty()) {
    mem.push_back({std::move(x), std::move(y), 1.0, true});
    return;
  }
  for (auto& m : mem) m.gamma *= 1.0 - learning_rate;
  mem.push_back({std::move(x), std::move(y), learning_rate, false});

  auto renormalize = [&] {
    double total = 0.0;
    for (const auto& m : mem) total += m.gamma;
    for (auto& m : mem) m.gamma /= total;
  };
  renormalize();
  while (mem.size() > state.config.capacity) {
    auto victim = mem.end();
    for (auto it = mem.begin(); it != mem.end(); ++it) {
      if (!it->initial && (victim == mem.end() || it->gamma < victim->gamma)) victim = it;
    }
    if (victim == mem.end()) break;
    mem.erase(victim);
    renormalize();
  }
}

Peak locate_peak(const Grid& response) {
  if (response.rank() < 2 || response.empty()) {
    throw ShapeError("locate_peak needs a non-empty 2D response");
  }
  const Index h = response.dim(response.rank() - 2);
  const Index w = response.dim(response.rank() - 1);
  if (h * w != response.size()) throw ShapeError("locate_peak needs a single-channel response");

  Index best = 0;
  for (Index i = 1; i < response.size(); ++i) {
    if (response[i] > response[best]) best = i;
  }
  Peak p;
  p.row = best / w;
  p.col = best % w;
  p.score = response[best];

  auto vertex = [](double a, double b, double c) {
    const double denom = a - 2.0 * b + c;
    if (!(denom < 0.0)) return 0.0;
    return std::clamp((a - c) / (2.0 * denom), -0.5, 0.5);
  };
  if (p.col > 0 && p.col < w - 1) {
    p.col_offset = vertex(response[best - 1], response[best], response[best + 1]);
  }
  if (p.row > 0 && p.row < h - 1) {
    p.row_offset = vertex(response[best - w], response[best], response[best + w]);
  }
  return p;
}

}  // namespace strack
