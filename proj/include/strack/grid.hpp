#ifndef STRACK_GRID_HPP_
#define STRACK_GRID_HPP_

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace strack {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const Shape& shape);
Index shape_product(const Shape& shape);

// Dense rank-1..5 grid of doubles, row-major. The storage is an Eigen vector so
// elementwise math composes through data().array().
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape shape, double fill = 0.0);
  Grid(Shape shape, Eigen::VectorXd data);
  Grid(std::initializer_list<Index> shape, std::initializer_list<double> values);

  static Grid like(const Grid& other, double fill = 0.0) { return Grid(other.shape_, fill); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }

  double& operator()(Index i) { return data_[i]; }
  double operator()(Index i) const { return data_[i]; }
  double& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
  double operator()(Index i, Index j) const { return data_[i * shape_[1] + j]; }
  double& operator()(Index i, Index j, Index k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  double operator()(Index i, Index j, Index k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(Index i, Index j, Index k, Index l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double operator()(Index i, Index j, Index k, Index l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  // View of the data as rows × cols (row-major); rows*cols must equal size().
  Eigen::Map<RowMatrix> matrix(Index rows, Index cols);
  Eigen::Map<const RowMatrix> matrix(Index rows, Index cols) const;

  Grid reshaped(Shape shape) const;
  void set_zero() { data_.setZero(); }

  bool operator==(const Grid& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  Eigen::VectorXd data_;
};

bool all_finite(const Grid& g);

// Throws ShapeError naming `what` when shapes differ.
void require_same_shape(const Grid& a, const Grid& b, const char* what);

}  // namespace strack

#endif  // STRACK_GRID_HPP_
