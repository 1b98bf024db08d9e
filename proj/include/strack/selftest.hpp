#ifndef STRACK_SELFTEST_HPP_
#define STRACK_SELFTEST_HPP_

#include <functional>
#include <string>
#include <vector>

namespace strack {

struct SelftestCheck {
  std::string name;  // e.g. "gradient/conv2d", "solver-oracle"
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  // Test hook: perturbs every op vjp so the gradient checks must fail.
  bool corrupt_vjp = false;
  int gradient_points = 5;
  // Called after each check, in order.
  std::function<void(const SelftestCheck&)> on_result;
};

// Gradient checks for every op tag, the full FAM and the IoU head; the
// classifier solver against the dense ridge solution; AWP reducing to GAP;
// attention range and bypass; tracker and model-file determinism.
std::vector<SelftestCheck> run_selftest(const SelftestOptions& options = {});

}  // namespace strack

#endif  // STRACK_SELFTEST_HPP_
