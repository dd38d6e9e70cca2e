#ifndef L2GP_TENSOR_HPP_
#define L2GP_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "l2gp/error.hpp"

namespace l2gp {

/**
 * Dense row-major array of doubles.
 *
 * Rank 0 holds a single scalar. Matrices are rank 2 with shape {rows, cols};
 * row vectors used for per-feature quantities are {1, cols}.
 */
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw DimensionError("tensor data has " + std::to_string(data_.size()) +
                           " elements but shape " + shape_string(shape_) + " needs " +
                           std::to_string(element_count(shape_)));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  /// Builds a rows x cols matrix from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor row(std::vector<double> values) {
    const std::size_t c = values.size();
    return Tensor({1, c}, std::move(values));
  }

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  static std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t rows() const {
    require_rank2("rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2("cols");
    return shape_[1];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const double& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Bitwise-exact equality of shape and values.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void require_rank2(const char* what) const {
    if (shape_.size() != 2) {
      throw DimensionError(std::string(what) + "() needs a matrix, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace l2gp

#endif  // L2GP_TENSOR_HPP_
