#ifndef STRACK_BOX_HPP_
#define STRACK_BOX_HPP_

#include <Eigen/Core>

namespace strack {

// Axis-aligned box, top-left origin, pixel units.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const;

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
  Eigen::Vector4d vec() const { return {x, y, w, h}; }

  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);
double center_distance(const Box& a, const Box& b);

}  // namespace strack

#endif  // STRACK_BOX_HPP_
