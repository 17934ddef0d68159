#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vads {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Dense 64-bit float tensor, row-major. Invariant: values.size() equals
/// the product of the shape and every value is finite.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double fill);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at2(std::size_t r, std::size_t c) { return values[r * shape.back() + c]; }
  double at2(std::size_t r, std::size_t c) const { return values[r * shape.back() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  /// Rows when the tensor is viewed as [prod(leading dims), last dim].
  std::size_t rows2d() const;
  std::size_t cols2d() const { return shape.empty() ? 1 : shape.back(); }

  /// Throws ValidationError if any value is non-finite.
  void check_finite(const std::string& context) const;
};

bool approx_equal(const Tensor& a, const Tensor& b, double tol);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace vads
