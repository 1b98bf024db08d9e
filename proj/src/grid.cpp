#include "strack/grid.hpp"

#include <sstream>
#include <utility>

namespace strack {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_product(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 5) {
    throw ShapeError("grid rank must be 1..5, got " + std::to_string(shape.size()));
  }
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] <= 0) {
      throw ShapeError("grid extent along axis " + std::to_string(i) + " must be positive in " +
                       shape_string(shape));
    }
  }
}

}  // namespace

Grid::Grid(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_ = Eigen::VectorXd::Constant(shape_product(shape_), fill);
}

Grid::Grid(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("grid data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Grid::Grid(std::initializer_list<Index> shape, std::initializer_list<double> values)
    : Grid(Shape(shape), Eigen::VectorXd(static_cast<Index>(values.size()))) {
  Index i = 0;
  for (double v : values) data_[i++] = v;
}

Index Grid::dim(Index axis) const {
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

Eigen::Map<RowMatrix> Grid::matrix(Index rows, Index cols) {
  if (rows * cols != size()) throw ShapeError("matrix view does not cover grid " + shape_string(shape_));
  return {data_.data(), rows, cols};
}

Eigen::Map<const RowMatrix> Grid::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) throw ShapeError("matrix view does not cover grid " + shape_string(shape_));
  return {data_.data(), rows, cols};
}

Grid Grid::reshaped(Shape shape) const { return Grid(std::move(shape), data_); }

bool all_finite(const Grid& g) { return g.data().allFinite(); }

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace strack
