#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lfdet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Every extent is positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  /// Row-major 2D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }
  double at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }

  /// Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const { return lfdet::shape_str(shape_); }

  bool all_finite() const;
  double sum() const;
  double max_abs() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Largest elementwise |a - b|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Bitwise equality of every element (distinguishes +0/-0 and NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace lfdet
