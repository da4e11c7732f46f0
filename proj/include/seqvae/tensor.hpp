#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace seqvae {

/// Raised when a forward or backward value stops being finite.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised on inconsistent tensor extents.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Rank-1 tensors behave as 1 x n rows in
/// matrix contexts.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_extents();
    values_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_extents();
    if (values_.size() != shape_numel(shape_))
      throw ShapeError("value count " + std::to_string(values_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t rows() const noexcept {
    return shape_.size() >= 2 ? shape_numel(Shape(shape_.begin(), shape_.end() - 1)) : 1;
  }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(values_).subspan(r * cols(), cols()); }

  const std::vector<double>& data() const noexcept { return values_; }

  double item() const {
    if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return values_[0];
  }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool same_shape(const Tensor& o) const noexcept { return rows() == o.rows() && cols() == o.cols(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

private:
  void check_extents() const {
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> values_;
};

/// Trainable tensor with an accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace seqvae
