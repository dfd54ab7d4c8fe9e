#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cwssim {

using Shape = std::vector<std::size_t>;

/// Raised when tensor shapes or ranks do not line up for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid parameters or non-finite external data.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major n-dimensional array of doubles.
///
/// Axis labels are optional single-letter tags ("TZYX" for sequences,
/// "CZYX"/"CYX" for feature maps). When present their length equals the rank.
class TensorND {
 public:
  TensorND() = default;
  explicit TensorND(Shape shape, double fill = 0.0, std::string axis_labels = {});
  TensorND(Shape shape, std::vector<double> data, std::string axis_labels = {});

  /// Like the data constructor, but rejects NaN/Inf (for data read from outside).
  static TensorND from_external(Shape shape, std::vector<double> data,
                                std::string axis_labels = {});

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  const std::string& axis_labels() const { return labels_; }
  void set_axis_labels(std::string labels);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  std::size_t offset(std::span<const std::size_t> index) const;

  Shape strides() const;

  /// Same data, new shape (product must match). Labels are dropped.
  TensorND reshaped(Shape shape) const;

  /// Sub-tensor at position `i` along axis 0, e.g. a frame of a sequence.
  TensorND slice(std::size_t i) const;
  /// Stacks equal-shaped tensors along a new leading axis.
  static TensorND stack(std::span<const TensorND> parts);
  /// Concatenates along axis 0 (channel concatenation for feature maps).
  static TensorND concat(std::span<const TensorND> parts);

  bool same_shape(const TensorND& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  TensorND& operator+=(const TensorND& rhs);
  TensorND& operator-=(const TensorND& rhs);
  TensorND& operator*=(double s);

  friend bool operator==(const TensorND& a, const TensorND& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::string labels_;
};

TensorND operator+(TensorND a, const TensorND& b);
TensorND operator-(TensorND a, const TensorND& b);
TensorND operator*(TensorND a, double s);
/// Elementwise (Hadamard) product.
TensorND hadamard(const TensorND& a, const TensorND& b);

void require_same_shape(const TensorND& a, const TensorND& b, const char* what);

/// Separable, normalized Gaussian window over `rank` axes.
class GaussianWindow {
 public:
  /// One size per axis; each must be odd and positive.
  GaussianWindow(Shape sizes, double sigma);
  /// Isotropic window.
  static GaussianWindow isotropic(std::size_t rank, std::size_t size, double sigma);

  const Shape& sizes() const { return sizes_; }
  double sigma() const { return sigma_; }
  std::size_t rank() const { return sizes_.size(); }
  /// Normalized 1D taps for one axis.
  const std::vector<double>& taps(std::size_t axis) const { return taps_.at(axis); }
  /// Full n-D weight tensor (outer product of the per-axis taps).
  TensorND weights() const;

 private:
  Shape sizes_;
  double sigma_;
  std::vector<std::vector<double>> taps_;
};

enum class Padding { zero, reflect, valid };

/// Maps an out-of-range coordinate into [0, n) by mirror reflection
/// without repeating the edge sample (…, 2, 1, | 0, 1, 2, … ).
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// N-d cross-correlation.
///
/// `input` is (N, C_in, spatial...) and `kernel` is (C_out, C_in/groups, k...),
/// so both have the same rank. zero/reflect padding keeps the spatial size and
/// requires odd kernel extents; valid padding shrinks each axis by k-1.
TensorND conv(const TensorND& input, const TensorND& kernel, Padding padding,
              std::size_t groups = 1);

/// Adjoint of `conv` with respect to its input: given dLoss/dOutput returns
/// dLoss/dInput for an input of `input_shape`.
TensorND conv_input_grad(const TensorND& grad_output, const TensorND& kernel,
                         const Shape& input_shape, Padding padding, std::size_t groups = 1);

/// Gradient of `conv` with respect to the kernel.
TensorND conv_kernel_grad(const TensorND& input, const TensorND& grad_output,
                          const Shape& kernel_shape, Padding padding, std::size_t groups = 1);

/// Local statistics for SSIM, one value per valid window position.
struct WindowedMoments {
  TensorND mu_x, mu_y, var_x, var_y, cov_xy;
};

/// Gaussian-weighted local means, variances and covariance over every valid
/// window placement. Variances are clamped at zero.
WindowedMoments windowed_moments(const TensorND& x, const TensorND& y, const GaussianWindow& w);

/// Valid-mode separable filtering with the window's taps.
TensorND filter_valid(const TensorND& x, const GaussianWindow& w);

enum class ReduceOp { mean, sum, max, min };

/// Reduces over `axes` (empty = identity). Reduced axes are removed.
TensorND reduce(const TensorND& x, ReduceOp op, const std::vector<std::size_t>& axes);
/// Reduction over every element.
double reduce_all(const TensorND& x, ReduceOp op);

}  // namespace cwssim
