#include "strack/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace strack {

namespace {

void check_lengths(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("prediction has " + std::to_string(pred.size()) +
                                " boxes but ground truth has " + std::to_string(gt.size()));
  }
  if (pred.empty()) throw std::invalid_argument("cannot evaluate an empty trajectory");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_curve(const std::filesystem::path& path, const std::vector<double>& curve, double step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.2f %.6f\n", static_cast<double>(i) * step, curve[i]);
    out << buf;
  }
}

}  // namespace

SuccessResult success_curve(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  check_lengths(pred, gt);
  std::vector<double> overlaps;
  for (std::size_t i = 0; i < pred.size(); ++i) overlaps.push_back(iou(pred[i], gt[i]));
  SuccessResult r;
  r.curve.resize(kSuccessThresholds);
  for (int t = 0; t < kSuccessThresholds; ++t) {
    const double theta = t / 100.0;
    const auto hits = std::count_if(overlaps.begin(), overlaps.end(), [&](double v) { return v > theta; });
    r.curve[static_cast<std::size_t>(t)] = static_cast<double>(hits) / static_cast<double>(overlaps.size());
  }
  r.auc = mean(r.curve);
  return r;
}

PrecisionResult precision_curve(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  check_lengths(pred, gt);
  std::vector<double> errors;
  for (std::size_t i = 0; i < pred.size(); ++i) errors.push_back(center_distance(pred[i], gt[i]));
  PrecisionResult r;
  r.curve.resize(kPrecisionThresholds);
  for (int t = 0; t < kPrecisionThresholds; ++t) {
    const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= t; });
    r.curve[static_cast<std::size_t>(t)] = static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  r.at_20 = r.curve[20];
  return r;
}

OpeReport evaluate_sequence(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  check_lengths(pred, gt);
  if (pred.size() < 2) throw std::invalid_argument("evaluation needs at least two frames");
  const std::vector<Box> p(pred.begin() + 1, pred.end()), g(gt.begin() + 1, gt.end());
  OpeReport r;
  r.success = success_curve(p, g);
  r.precision = precision_curve(p, g);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += iou(p[i], g[i]);
  r.mean_iou = total / static_cast<double>(p.size());
  r.frames = p.size();
  return r;
}

OpeReport average_reports(const std::vector<OpeReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("cannot average zero runs");
  OpeReport out;
  out.success.curve.assign(kSuccessThresholds, 0.0);
  out.precision.curve.assign(kPrecisionThresholds, 0.0);
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    for (int i = 0; i < kSuccessThresholds; ++i) out.success.curve[i] += r.success.curve[i] / n;
    for (int i = 0; i < kPrecisionThresholds; ++i) out.precision.curve[i] += r.precision.curve[i] / n;
    out.success.auc += r.success.auc / n;
    out.precision.at_20 += r.precision.at_20 / n;
    out.mean_iou += r.mean_iou / n;
    out.frames += r.frames;
  }
  return out;
}

std::string compare(const std::vector<NamedReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("compare needs at least one run");
  std::set<std::string> names;
  std::size_t width = 4;
  for (const auto& r : runs) {
    if (!names.insert(r.name).second) throw std::invalid_argument("duplicate run name '" + r.name + "'");
    width = std::max(width, r.name.size());
  }
  std::vector<const NamedReport*> rows;
  for (const auto& r : runs) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const NamedReport* a, const NamedReport* b) {
    if (a->report.success.auc != b->report.success.auc) return a->report.success.auc > b->report.success.auc;
    return a->name < b->name;
  });
  const int w = static_cast<int>(width);
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %6s  %6s\n", w, "name", "AUC", "Pre@20");
  out += buf;
  for (const auto* r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %6.4f  %6.4f\n", w, r->name.c_str(), r->report.success.auc,
                  r->report.precision.at_20);
    out += buf;
  }
  return out;
}

void write_curve_files(const std::filesystem::path& stem, const OpeReport& report) {
  write_curve(stem.string() + ".success.txt", report.success.curve, 0.01);
  write_curve(stem.string() + ".precision.txt", report.precision.curve, 1.0);
}

}  // namespace strack
