#include "cwssim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cwssim {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor axes must be positive, got " + shape_to_string(shape));
}

}  // namespace

TensorND::TensorND(Shape shape, double fill, std::string axis_labels)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
  check_shape(shape_);
  set_axis_labels(std::move(axis_labels));
}

TensorND::TensorND(Shape shape, std::vector<double> data, std::string axis_labels)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_product(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  set_axis_labels(std::move(axis_labels));
}

TensorND TensorND::from_external(Shape shape, std::vector<double> data, std::string axis_labels) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i]))
      throw ValidationError("non-finite value at element " + std::to_string(i));
  return TensorND(std::move(shape), std::move(data), std::move(axis_labels));
}

void TensorND::set_axis_labels(std::string labels) {
  if (!labels.empty() && labels.size() != shape_.size())
    throw DimensionError("axis labels '" + labels + "' do not match rank " +
                         std::to_string(shape_.size()));
  labels_ = std::move(labels);
}

Shape TensorND::strides() const {
  Shape s(shape_.size(), 1);
  for (std::size_t a = shape_.size(); a-- > 1;) s[a - 1] = s[a] * shape_[a];
  return s;
}

std::size_t TensorND::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size())
    throw DimensionError("index rank " + std::to_string(index.size()) + " vs tensor rank " +
                         std::to_string(shape_.size()));
  std::size_t off = 0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (index[a] >= shape_[a]) throw std::out_of_range("tensor index out of range");
    off = off * shape_[a] + index[a];
  }
  return off;
}

double& TensorND::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

double TensorND::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

TensorND TensorND::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  return TensorND(std::move(shape), data_);
}

TensorND TensorND::slice(std::size_t i) const {
  if (rank() < 2) throw DimensionError("slice needs rank >= 2");
  if (i >= shape_[0]) throw std::out_of_range("slice index out of range");
  Shape sub(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_product(sub);
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                        data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  std::string labels = labels_.empty() ? std::string{} : labels_.substr(1);
  return TensorND(std::move(sub), std::move(d), std::move(labels));
}

TensorND TensorND::stack(std::span<const TensorND> parts) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  Shape shape{parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  std::vector<double> d;
  d.reserve(shape_product(shape));
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape())
      throw DimensionError("stack: shape " + shape_to_string(p.shape()) + " differs from " +
                           shape_to_string(parts[0].shape()));
    d.insert(d.end(), p.values().begin(), p.values().end());
  }
  return TensorND(std::move(shape), std::move(d));
}

TensorND TensorND::concat(std::span<const TensorND> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  Shape shape = ref;
  shape[0] = 0;
  std::vector<double> d;
  for (const auto& p : parts) {
    if (p.rank() != ref.size() || !std::equal(ref.begin() + 1, ref.end(), p.shape().begin() + 1))
      throw DimensionError("concat: trailing shape of " + shape_to_string(p.shape()) +
                           " differs from " + shape_to_string(ref));
    shape[0] += p.dim(0);
    d.insert(d.end(), p.values().begin(), p.values().end());
  }
  return TensorND(std::move(shape), std::move(d));
}

bool TensorND::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const TensorND& a, const TensorND& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
}

TensorND& TensorND::operator+=(const TensorND& rhs) {
  require_same_shape(*this, rhs, "operator+");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

TensorND& TensorND::operator-=(const TensorND& rhs) {
  require_same_shape(*this, rhs, "operator-");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

TensorND& TensorND::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

TensorND operator+(TensorND a, const TensorND& b) { return a += b; }
TensorND operator-(TensorND a, const TensorND& b) { return a -= b; }
TensorND operator*(TensorND a, double s) { return a *= s; }

TensorND hadamard(const TensorND& a, const TensorND& b) {
  require_same_shape(a, b, "hadamard");
  TensorND out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian window

GaussianWindow::GaussianWindow(Shape sizes, double sigma) : sizes_(std::move(sizes)), sigma_(sigma) {
  if (!(sigma > 0.0)) throw ValidationError("window sigma must be positive");
  if (sizes_.empty()) throw ValidationError("window needs at least one axis");
  for (auto n : sizes_) {
    if (n == 0 || n % 2 == 0)
      throw ValidationError("window size must be odd and positive, got " + std::to_string(n));
    std::vector<double> t(n);
    const double c = static_cast<double>(n / 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) - c;
      t[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double s = std::accumulate(t.begin(), t.end(), 0.0);
    for (auto& v : t) v /= s;
    taps_.push_back(std::move(t));
  }
}

GaussianWindow GaussianWindow::isotropic(std::size_t rank, std::size_t size, double sigma) {
  return GaussianWindow(Shape(rank, size), sigma);
}

TensorND GaussianWindow::weights() const {
  TensorND w(sizes_, 1.0);
  const Shape st = w.strides();
  for (std::size_t i = 0; i < w.size(); ++i) {
    double v = 1.0;
    for (std::size_t a = 0; a < sizes_.size(); ++a) v *= taps_[a][(i / st[a]) % sizes_[a]];
    w[i] = v;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Convolution

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, c_out, groups, cin_per_group, cout_per_group;
  Shape in_spatial, k_spatial, out_spatial;
  // Per spatial axis: table[o * K + k] = input coordinate or -1 when it falls in zero padding.
  std::vector<std::vector<std::ptrdiff_t>> index_table;
  Shape in_strides;  // strides of the spatial block
  std::size_t in_spatial_size, out_spatial_size, k_spatial_size;
};

ConvGeometry make_geometry(const Shape& in, const Shape& k, Padding padding, std::size_t groups) {
  if (in.size() < 3 || in.size() != k.size())
    throw DimensionError("conv expects input (N,C,spatial...) and kernel (Cout,Cin/g,k...) of equal rank; got " +
                         shape_to_string(in) + " and " + shape_to_string(k));
  if (groups == 0) throw ValidationError("conv groups must be positive");
  ConvGeometry g;
  g.batch = in[0];
  g.c_in = in[1];
  g.c_out = k[0];
  g.groups = groups;
  if (g.c_in % groups || g.c_out % groups)
    throw DimensionError("channel counts " + std::to_string(g.c_in) + "/" + std::to_string(g.c_out) +
                         " not divisible by groups " + std::to_string(groups));
  g.cin_per_group = g.c_in / groups;
  g.cout_per_group = g.c_out / groups;
  if (k[1] != g.cin_per_group)
    throw DimensionError("kernel expects " + std::to_string(k[1]) + " input channels per group, input provides " +
                         std::to_string(g.cin_per_group));
  g.in_spatial.assign(in.begin() + 2, in.end());
  g.k_spatial.assign(k.begin() + 2, k.end());
  const std::size_t d = g.in_spatial.size();
  g.out_spatial.resize(d);
  g.index_table.resize(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto n = static_cast<std::ptrdiff_t>(g.in_spatial[a]);
    const auto kk = static_cast<std::ptrdiff_t>(g.k_spatial[a]);
    std::ptrdiff_t pad = 0, out = 0;
    if (padding == Padding::valid) {
      if (kk > n)
        throw DimensionError("kernel " + shape_to_string(g.k_spatial) + " larger than input " +
                             shape_to_string(g.in_spatial) + " with valid padding");
      out = n - kk + 1;
    } else {
      if (kk % 2 == 0) throw DimensionError("same-size padding needs odd kernel extents");
      pad = kk / 2;
      out = n;
    }
    g.out_spatial[a] = static_cast<std::size_t>(out);
    auto& table = g.index_table[a];
    table.resize(static_cast<std::size_t>(out * kk));
    for (std::ptrdiff_t o = 0; o < out; ++o)
      for (std::ptrdiff_t t = 0; t < kk; ++t) {
        std::ptrdiff_t i = o + t - pad;
        if (i < 0 || i >= n) i = padding == Padding::reflect ? reflect_index(i, n) : -1;
        table[static_cast<std::size_t>(o * kk + t)] = i;
      }
  }
  g.in_strides = Shape(d, 1);
  for (std::size_t a = d; a-- > 1;) g.in_strides[a - 1] = g.in_strides[a] * g.in_spatial[a];
  g.in_spatial_size = shape_product(g.in_spatial);
  g.out_spatial_size = shape_product(g.out_spatial);
  g.k_spatial_size = shape_product(g.k_spatial);
  return g;
}

Shape output_shape(const ConvGeometry& g) {
  Shape s{g.batch, g.c_out};
  s.insert(s.end(), g.out_spatial.begin(), g.out_spatial.end());
  return s;
}

/// Calls f(out_flat, in_flat, kernel_flat) for every tap that reads the input,
/// in a fixed order.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  const std::size_t d = g.in_spatial.size();
  std::vector<std::size_t> o_idx(d), k_idx(d);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const std::size_t grp = co / g.cout_per_group;
      const std::size_t out_base = (n * g.c_out + co) * g.out_spatial_size;
      for (std::size_t os = 0; os < g.out_spatial_size; ++os) {
        {
          std::size_t r = os;
          for (std::size_t a = d; a-- > 0;) {
            o_idx[a] = r % g.out_spatial[a];
            r /= g.out_spatial[a];
          }
        }
        for (std::size_t cl = 0; cl < g.cin_per_group; ++cl) {
          const std::size_t ci = grp * g.cin_per_group + cl;
          const std::size_t in_base = (n * g.c_in + ci) * g.in_spatial_size;
          const std::size_t k_base = (co * g.cin_per_group + cl) * g.k_spatial_size;
          std::fill(k_idx.begin(), k_idx.end(), 0);
          for (std::size_t ks = 0; ks < g.k_spatial_size; ++ks) {
            std::size_t in_off = 0;
            bool inside = true;
            for (std::size_t a = 0; a < d; ++a) {
              const auto i = g.index_table[a][o_idx[a] * g.k_spatial[a] + k_idx[a]];
              if (i < 0) {
                inside = false;
                break;
              }
              in_off += static_cast<std::size_t>(i) * g.in_strides[a];
            }
            if (inside) f(out_base + os, in_base + in_off, k_base + ks);
            for (std::size_t a = d; a-- > 0;) {
              if (++k_idx[a] < g.k_spatial[a]) break;
              k_idx[a] = 0;
            }
          }
        }
      }
    }
}

}  // namespace

TensorND conv(const TensorND& input, const TensorND& kernel, Padding padding, std::size_t groups) {
  const ConvGeometry g = make_geometry(input.shape(), kernel.shape(), padding, groups);
  TensorND out(output_shape(g));
  auto od = out.data();
  auto id = input.data();
  auto kd = kernel.data();
  for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t k) { od[o] += id[i] * kd[k]; });
  return out;
}

TensorND conv_input_grad(const TensorND& grad_output, const TensorND& kernel, const Shape& input_shape,
                         Padding padding, std::size_t groups) {
  const ConvGeometry g = make_geometry(input_shape, kernel.shape(), padding, groups);
  if (grad_output.shape() != output_shape(g))
    throw DimensionError("conv_input_grad: gradient shape " + shape_to_string(grad_output.shape()) +
                         " does not match output shape " + shape_to_string(output_shape(g)));
  TensorND gin(input_shape);
  auto gd = gin.data();
  auto od = grad_output.data();
  auto kd = kernel.data();
  for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t k) { gd[i] += od[o] * kd[k]; });
  return gin;
}

TensorND conv_kernel_grad(const TensorND& input, const TensorND& grad_output, const Shape& kernel_shape,
                          Padding padding, std::size_t groups) {
  const ConvGeometry g = make_geometry(input.shape(), kernel_shape, padding, groups);
  if (grad_output.shape() != output_shape(g))
    throw DimensionError("conv_kernel_grad: gradient shape " + shape_to_string(grad_output.shape()) +
                         " does not match output shape " + shape_to_string(output_shape(g)));
  TensorND gk(kernel_shape);
  auto gd = gk.data();
  auto od = grad_output.data();
  auto id = input.data();
  for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t k) { gd[k] += id[i] * od[o]; });
  return gk;
}

// ---------------------------------------------------------------------------
// Windowed statistics

namespace {

TensorND filter_axis_valid(const TensorND& x, std::size_t axis, const std::vector<double>& taps) {
  const Shape& s = x.shape();
  const std::size_t len = s[axis];
  const std::size_t k = taps.size();
  Shape os = s;
  os[axis] = len - k + 1;
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  TensorND out(os);
  const std::size_t olen = os[axis];
  auto in = x.data();
  auto od = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < olen; ++j) {
      double* dst = od.data() + (o * olen + j) * inner;
      for (std::size_t t = 0; t < k; ++t) {
        const double w = taps[t];
        const double* src = in.data() + (o * len + j + t) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
      }
    }
  return out;
}

}  // namespace

TensorND filter_valid(const TensorND& x, const GaussianWindow& w) {
  if (x.rank() != w.rank())
    throw DimensionError("window rank " + std::to_string(w.rank()) + " does not match image rank " +
                         std::to_string(x.rank()));
  for (std::size_t a = 0; a < x.rank(); ++a)
    if (w.sizes()[a] > x.dim(a))
      throw DimensionError("window " + shape_to_string(w.sizes()) + " larger than image " +
                           shape_to_string(x.shape()));
  TensorND cur = x;
  for (std::size_t a = 0; a < x.rank(); ++a) cur = filter_axis_valid(cur, a, w.taps(a));
  return cur;
}

WindowedMoments windowed_moments(const TensorND& x, const TensorND& y, const GaussianWindow& w) {
  require_same_shape(x, y, "windowed_moments");
  WindowedMoments m;
  m.mu_x = filter_valid(x, w);
  m.mu_y = filter_valid(y, w);
  m.var_x = filter_valid(hadamard(x, x), w);
  m.var_y = filter_valid(hadamard(y, y), w);
  m.cov_xy = filter_valid(hadamard(x, y), w);
  for (std::size_t i = 0; i < m.mu_x.size(); ++i) {
    const double mx = m.mu_x[i], my = m.mu_y[i];
    m.var_x[i] = std::max(0.0, m.var_x[i] - mx * mx);
    m.var_y[i] = std::max(0.0, m.var_y[i] - my * my);
    m.cov_xy[i] -= mx * my;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Reductions

TensorND reduce(const TensorND& x, ReduceOp op, const std::vector<std::size_t>& axes) {
  if (axes.empty()) return x;
  std::vector<bool> drop(x.rank(), false);
  for (auto a : axes) {
    if (a >= x.rank()) throw DimensionError("reduce axis " + std::to_string(a) + " out of range");
    drop[a] = true;
  }
  Shape out_shape;
  for (std::size_t a = 0; a < x.rank(); ++a)
    if (!drop[a]) out_shape.push_back(x.dim(a));
  if (out_shape.empty()) out_shape.push_back(1);

  const double init = op == ReduceOp::max   ? -std::numeric_limits<double>::infinity()
                      : op == ReduceOp::min ? std::numeric_limits<double>::infinity()
                                            : 0.0;
  TensorND out(out_shape, init);
  const Shape st = x.strides();
  const std::size_t count = x.size() / out.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t o = 0;
    for (std::size_t a = 0; a < x.rank(); ++a)
      if (!drop[a]) o = o * x.dim(a) + (i / st[a]) % x.dim(a);
    const double v = x[i];
    switch (op) {
      case ReduceOp::mean:
      case ReduceOp::sum: out[o] += v; break;
      case ReduceOp::max: out[o] = std::max(out[o], v); break;
      case ReduceOp::min: out[o] = std::min(out[o], v); break;
    }
  }
  if (op == ReduceOp::mean) out *= 1.0 / static_cast<double>(count);
  return out;
}

double reduce_all(const TensorND& x, ReduceOp op) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(x, op, axes)[0];
}

}  // namespace cwssim
