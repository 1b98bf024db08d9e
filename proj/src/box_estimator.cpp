#include "strack/box_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "strack/tensor_ops.hpp"

namespace strack {

namespace {

// Log-size coordinates are taken relative to a target spanning a fifth of the
// patch, the nominal search-region ratio.
constexpr double kNominalSizeRatio = 0.2;

struct HeadTrace {
  Eigen::Vector4d cells_shallow, cells_deep;
  Grid input;
  Grid hidden_pre;
  Grid hidden;
  double output = 0.0;
};

double stride_of(const Grid& map, double patch_extent) {
  if (map.rank() != 3 || map.dim(2) < 1) throw ShapeError("head features must be c×h×w");
  return patch_extent / static_cast<double>(map.dim(2));
}

HeadTrace head_traced(const HeadFeatures& f, const Box& box, const IouHeadParams& p) {
  if (!box.valid()) throw std::invalid_argument("iou head needs a box with positive area");
  if (iou(box, Box{0.0, 0.0, f.patch_extent, f.patch_extent}) <= 0.0) {
    throw std::invalid_argument("box lies entirely outside the patch");
  }
  HeadTrace t;
  t.cells_shallow = box.vec() / stride_of(f.shallow, f.patch_extent);
  t.cells_deep = box.vec() / stride_of(f.deep, f.patch_extent);
  const Grid ps = bilinear_box_pool(f.shallow, t.cells_shallow);
  const Grid pd = bilinear_box_pool(f.deep, t.cells_deep);
  const double e = f.patch_extent;
  t.input = Grid({ps.size() + pd.size() + 4});
  t.input.data() << ps.data(), pd.data(), box.cx() / e - 0.5, box.cy() / e - 0.5,
      std::log(box.w / (kNominalSizeRatio * e)), std::log(box.h / (kNominalSizeRatio * e));
  if (t.input.size() != p.w1.dim(1)) {
    throw ShapeError("iou head expects " + std::to_string(p.w1.dim(1)) + " inputs, features give " +
                     std::to_string(t.input.size()));
  }
  t.hidden_pre = dense(t.input, p.w1, p.b1);
  t.hidden = relu(t.hidden_pre);
  t.output = sigmoid(dense(t.hidden, p.w2, p.b2)[0]);
  return t;
}

class Adam {
 public:
  explicit Adam(Index n) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * g;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_), c2 = 1.0 - std::pow(kBeta2, t_);
    x.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

void check_crop(const TrainingCrop& c) {
  if (c.boxes.size() != c.targets.size() || c.boxes.empty()) {
    throw std::invalid_argument("training crop needs one target per box and at least one box");
  }
}

}  // namespace

std::vector<Box> generate_proposals(const Box& box, int n, double noise, Rng& rng) {
  if (n < 1) throw std::invalid_argument("proposal count must be at least 1");
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double ux = rng.uniform(-1.0, 1.0), uy = rng.uniform(-1.0, 1.0);
    const double uw = rng.uniform(-1.0, 1.0), uh = rng.uniform(-1.0, 1.0);
    const double w = box.w * std::exp(uw * noise), h = box.h * std::exp(uh * noise);
    out.push_back({box.x + ux * noise * box.w - 0.5 * (w - box.w),
                   box.y + uy * noise * box.h - 0.5 * (h - box.h), w, h});
  }
  return out;
}

Box refine(const Box& initial, const BoxScorer& scorer, int n, double noise, Rng& rng) {
  std::vector<Box> candidates{initial};
  for (const Box& b : generate_proposals(initial, n, noise, rng)) candidates.push_back(b);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const Box& b : candidates) scores.push_back(scorer(b));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t k = std::min<std::size_t>(3, order.size());
  // Offsets from the best box, so identical candidates reproduce it exactly.
  const Eigen::Vector4d base = candidates[order[0]].vec();
  Eigen::Vector4d offset = Eigen::Vector4d::Zero();
  for (std::size_t i = 1; i < k; ++i) offset += candidates[order[i]].vec() - base;
  const Eigen::Vector4d mean = base + offset / static_cast<double>(k);
  return {mean[0], mean[1], mean[2], mean[3]};
}

IouHeadParams make_iou_head(Rng& rng, Index c_shallow, Index c_deep, Index hidden) {
  const Index in = kBoxPoolCells * kBoxPoolCells * (c_shallow + c_deep) + 4;
  IouHeadParams p;
  p.w1 = Grid({hidden, in});
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  for (Index i = 0; i < p.w1.size(); ++i) p.w1[i] = s1 * rng.normal();
  p.b1 = Grid({hidden});
  p.w2 = Grid({1, hidden});
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Index i = 0; i < p.w2.size(); ++i) p.w2[i] = s2 * rng.normal();
  p.b2 = Grid({1});
  return p;
}

Eigen::VectorXd pack(const IouHeadParams& p) {
  Eigen::VectorXd flat(p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size());
  flat << p.w1.data(), p.b1.data(), p.w2.data(), p.b2.data();
  return flat;
}

void unpack(const Eigen::VectorXd& flat, IouHeadParams& p) {
  if (flat.size() != pack(p).size()) {
    throw ShapeError("iou head vector of length " + std::to_string(flat.size()) +
                     " does not match the parameter layout");
  }
  Index o = 0;
  for (Grid* g : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    g->data() = flat.segment(o, g->size());
    o += g->size();
  }
}

double iou_head_forward(const HeadFeatures& features, const Box& box, const IouHeadParams& params) {
  return head_traced(features, box, params).output;
}

IouHeadGrads iou_head_backward(const HeadFeatures& f, const Box& box, const IouHeadParams& p,
                               double upstream) {
  const HeadTrace t = head_traced(f, box, p);
  const Grid d_out({1}, Eigen::VectorXd::Constant(1, upstream * t.output * (1.0 - t.output)));
  const DenseGrads g2 = dense_vjp(t.hidden, p.w2, d_out);
  const DenseGrads g1 = dense_vjp(t.input, p.w1, relu_vjp(t.hidden_pre, g2.x));

  IouHeadGrads out;
  out.params = {g1.weights, g1.bias, g2.weights, g2.bias};
  const Index ns = f.shallow.dim(0) * kBoxPoolCells * kBoxPoolCells;
  const Index nd = f.deep.dim(0) * kBoxPoolCells * kBoxPoolCells;
  const Grid cot_s({f.shallow.dim(0), kBoxPoolCells, kBoxPoolCells}, g1.x.data().head(ns));
  const Grid cot_d({f.deep.dim(0), kBoxPoolCells, kBoxPoolCells}, g1.x.data().segment(ns, nd));
  BoxPoolGrads ps = bilinear_box_pool_vjp(f.shallow, t.cells_shallow, cot_s);
  BoxPoolGrads pd = bilinear_box_pool_vjp(f.deep, t.cells_deep, cot_d);
  out.shallow = std::move(ps.features);
  out.deep = std::move(pd.features);

  const double e = f.patch_extent;
  const Eigen::Vector4d dc = g1.x.data().tail(4);
  out.box = ps.box / stride_of(f.shallow, e) + pd.box / stride_of(f.deep, e);
  out.box[0] += dc[0] / e;
  out.box[1] += dc[1] / e;
  out.box[2] += 0.5 * dc[0] / e + dc[2] / box.w;
  out.box[3] += 0.5 * dc[1] / e + dc[3] / box.h;
  return out;
}

double dataset_mse(const std::vector<TrainingCrop>& data, const EstimatorParams& params,
                   const FamSwitches& switches) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& c : data) {
    check_crop(c);
    const Grid s = fam_forward(c.shallow2d, c.shallow3d, params.fam_shallow, switches);
    const Grid d = fam_forward(c.deep2d, c.deep3d, params.fam_deep, switches);
    const HeadFeatures hf{s, d, c.patch_extent};
    for (std::size_t i = 0; i < c.boxes.size(); ++i) {
      const double r = iou_head_forward(hf, c.boxes[i], params.head) - c.targets[i];
      total += r * r;
    }
    count += c.boxes.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

FitReport fit_offline(const std::vector<TrainingCrop>& data, EstimatorParams& params,
                      const FitConfig& config) {
  if (data.empty()) throw std::invalid_argument("offline fit needs a non-empty training set");
  if (config.epochs < 1) throw std::invalid_argument("offline fit needs at least one epoch");
  if (config.batch_crops < 1) throw std::invalid_argument("offline fit needs a positive batch size");

  FitReport report;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& c : data) {
    check_crop(c);
    for (double t : c.targets) {
      sum += t;
      sum_sq += t * t;
    }
    count += c.targets.size();
  }
  const double mean = sum / static_cast<double>(count);
  report.baseline_mse = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
  report.initial_mse = dataset_mse(data, params, config.switches);

  Eigen::VectorXd fs = pack(params.fam_shallow), fd = pack(params.fam_deep), hp = pack(params.head);
  Adam adam_s(fs.size()), adam_d(fd.size()), adam_h(hp.size());
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const int decay_period = std::max(1, config.epochs / 3);
  // One shuffle for the whole run: every epoch then ends at the same point of
  // the pass, which keeps the per-epoch loss from jittering upwards.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double scale = std::pow(config.decay, epoch / decay_period);

    const std::size_t batch = static_cast<std::size_t>(config.batch_crops);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      Eigen::VectorXd g_head = Eigen::VectorXd::Zero(hp.size());
      Eigen::VectorXd g_s = Eigen::VectorXd::Zero(fs.size()), g_d = Eigen::VectorXd::Zero(fd.size());
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const TrainingCrop& c = data[idx];
        const FamTrace ts = fam_forward_traced(c.shallow2d, c.shallow3d, params.fam_shallow, config.switches);
        const FamTrace td = fam_forward_traced(c.deep2d, c.deep3d, params.fam_deep, config.switches);
        const HeadFeatures hf{ts.output, td.output, c.patch_extent};
        Grid up_s = Grid::like(ts.output), up_d = Grid::like(td.output);
        const double inv_n = inv_batch / static_cast<double>(c.boxes.size());
        for (std::size_t b = 0; b < c.boxes.size(); ++b) {
          const double pred = iou_head_forward(hf, c.boxes[b], params.head);
          const double r = pred - c.targets[b];
          if (!std::isfinite(r)) {
            throw NumericError("offline fit diverged at epoch " + std::to_string(epoch + 1) +
                               ", crop " + std::to_string(idx));
          }
          const IouHeadGrads g = iou_head_backward(hf, c.boxes[b], params.head, 2.0 * r * inv_n);
          g_head += pack(g.params);
          up_s.data() += g.shallow.data();
          up_d.data() += g.deep.data();
        }
        g_s += pack(fam_backward(ts, params.fam_shallow, config.switches, up_s).params);
        g_d += pack(fam_backward(td, params.fam_deep, config.switches, up_d).params);
      }
      adam_h.step(hp, g_head, scale * config.head_learning_rate);
      adam_s.step(fs, g_s, scale * config.fam_learning_rate);
      adam_d.step(fd, g_d, scale * config.fam_learning_rate);
      unpack(hp, params.head);
      unpack(fs, params.fam_shallow);
      unpack(fd, params.fam_deep);
    }

    const double mse = dataset_mse(data, params, config.switches);
    if (!std::isfinite(mse)) {
      throw NumericError("offline fit produced a non-finite loss after epoch " +
                         std::to_string(epoch + 1));
    }
    report.epoch_mse.push_back(mse);
  }
  return report;
}

std::vector<Box> sample_training_boxes(const Box& truth, int count, const Box& bounds, Rng& rng) {
  constexpr int kBins = 9;
  constexpr int kAttempts = 200;
  std::vector<Box> out;
  const int first_bin = static_cast<int>(rng.below(kBins));
  for (int k = 0; k < count; ++k) {
    const double lo = 0.1 + 0.1 * ((first_bin + k) % kBins);
    const double hi = lo + 0.1;
    Box best = truth;
    double best_gap = 2.0;
    for (int a = 0; a < kAttempts; ++a) {
      const double spread = rng.uniform() * (1.2 - lo);
      Box cand = generate_proposals(truth, 1, spread, rng)[0];
      const double cx = std::clamp(cand.cx(), bounds.x, bounds.x + bounds.w);
      const double cy = std::clamp(cand.cy(), bounds.y, bounds.y + bounds.h);
      cand = Box::from_center(cx, cy, cand.w, cand.h);
      const double v = iou(cand, truth);
      const double gap = v < lo ? lo - v : (v > hi ? v - hi : 0.0);
      if (gap < best_gap) {
        best_gap = gap;
        best = cand;
      }
      if (gap == 0.0) break;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace strack
