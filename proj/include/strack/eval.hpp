#ifndef STRACK_EVAL_HPP_
#define STRACK_EVAL_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "strack/box.hpp"

namespace strack {

inline constexpr int kSuccessThresholds = 101;   // IoU 0.00 ... 1.00
inline constexpr int kPrecisionThresholds = 51;  // 0 ... 50 px

struct SuccessResult {
  std::vector<double> curve;  // fraction with IoU > i/100
  double auc = 0.0;           // mean of the curve
};

struct PrecisionResult {
  std::vector<double> curve;  // fraction with centre error <= i px
  double at_20 = 0.0;
};

// Both throw std::invalid_argument on empty or unequal-length inputs. Every
// frame given is scored; callers drop the initialisation frame.
SuccessResult success_curve(const std::vector<Box>& pred, const std::vector<Box>& gt);
PrecisionResult precision_curve(const std::vector<Box>& pred, const std::vector<Box>& gt);

struct OpeReport {
  SuccessResult success;
  PrecisionResult precision;
  double mean_iou = 0.0;
  std::size_t frames = 0;
};

// One-pass evaluation of a tracked sequence: the first frame is the
// initialisation frame and is excluded. Needs at least two frames.
OpeReport evaluate_sequence(const std::vector<Box>& pred, const std::vector<Box>& gt);

// Mean of per-run curves, AUC, Pre@20 and mean IoU.
OpeReport average_reports(const std::vector<OpeReport>& runs);

struct NamedReport {
  std::string name;
  OpeReport report;
};

// Fixed-width table of name, AUC and Pre@20, best AUC first, ties by name.
// Throws std::invalid_argument on no runs or duplicate names.
std::string compare(const std::vector<NamedReport>& runs);

// "threshold value" per line: <stem>.success.txt and <stem>.precision.txt.
void write_curve_files(const std::filesystem::path& stem, const OpeReport& report);

}  // namespace strack

#endif  // STRACK_EVAL_HPP_
