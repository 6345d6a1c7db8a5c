#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vseg {

/// Raised for every contract violation inside the engine (bad shapes,
/// malformed files, inconsistent configurations).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;
/// Spatial extents of a volume: depth, height, width.
using Dims3 = std::array<std::size_t, 3>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

inline std::string to_string(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

inline std::size_t volume(const Dims3& d) { return d[0] * d[1] * d[2]; }

// Dense row-major array; the last index varies fastest. Volumes are stored
// channels-first as (C, D, H, W).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    validate_extents();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    validate_extents();
    if (data_.size() != shape_size(shape_))
      throw Error("tensor " + to_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                  " values, got " + std::to_string(data_.size()));
  }

  static Tensor volume(std::size_t channels, const Dims3& d, T fill = T(0)) {
    return Tensor({channels, d[0], d[1], d[2]}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Volume accessors; valid for rank-4 (C, D, H, W) tensors.
  std::size_t channels() const { return shape_.at(0); }
  Dims3 dims() const { return {shape_.at(1), shape_.at(2), shape_.at(3)}; }
  std::size_t offset(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return ((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w;
  }
  T& at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) { return data_[offset(c, d, h, w)]; }
  const T& at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return data_[offset(c, d, h, w)];
  }
  std::span<T> channel(std::size_t c) {
    const std::size_t n = size() / shape_.at(0);
    return std::span<T>(data_).subspan(c * n, n);
  }
  std::span<const T> channel(std::size_t c) const {
    const std::size_t n = size() / shape_.at(0);
    return std::span<const T>(data_).subspan(c * n, n);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (std::size_t e : shape_)
      if (e == 0) throw Error("tensor extents must be >= 1, got " + to_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape(), T(0));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

enum class BinaryOp { add, sub, mul, max, min };

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise");
  Tensor<T> out(a.shape());
  const std::size_t n = a.size();
  const T* x = a.data();
  const T* y = b.data();
  T* z = out.data();
  switch (op) {
    case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i]; break;
    case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i]; break;
    case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i]; break;
    case BinaryOp::max: for (std::size_t i = 0; i < n; ++i) z[i] = std::max(x[i], y[i]); break;
    case BinaryOp::min: for (std::size_t i = 0; i < n; ++i) z[i] = std::min(x[i], y[i]); break;
  }
  return out;
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  require_same_shape(acc.shape(), b.shape(), "add_inplace");
  T* z = acc.data();
  const T* y = b.data();
  for (std::size_t i = 0; i < acc.size(); ++i) z[i] += y[i];
}

/// alpha * a + beta, elementwise.
template <typename T>
Tensor<T> affine(const Tensor<T>& a, T alpha, T beta) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta;
  return out;
}

/// Stacks the channels of `a` followed by those of `b`; spatial extents must match.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dims() != b.dims())
    throw Error("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  Tensor<T> out = Tensor<T>::volume(a.channels() + b.channels(), a.dims());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

/// Inverse of concat_channels: the first `first` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t first) {
  if (t.rank() != 4 || first == 0 || first >= t.channels())
    throw Error("split_channels: cannot split " + to_string(t.shape()) + " after channel " + std::to_string(first));
  const std::size_t n = t.size() / t.channels();
  auto head = t.values().subspan(0, first * n);
  auto tail = t.values().subspan(first * n);
  const Dims3 d = t.dims();
  return {Tensor<T>({first, d[0], d[1], d[2]}, std::vector<T>(head.begin(), head.end())),
          Tensor<T>({t.channels() - first, d[0], d[1], d[2]}, std::vector<T>(tail.begin(), tail.end()))};
}

enum class ReduceOp { sum, mean, max };

// Sums accumulate in double whatever the element type.
template <typename T>
T reduce_all(ReduceOp op, const Tensor<T>& a) {
  if (a.empty()) throw Error("reduce of an empty tensor");
  if (op == ReduceOp::max) return *std::max_element(a.values().begin(), a.values().end());
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  if (op == ReduceOp::mean) acc /= static_cast<double>(a.size());
  return static_cast<T>(acc);
}

/// Folds `a` over `axes`. Reduced axes are dropped, or kept with extent 1
/// when `keep_dims` is set. Reducing every axis without keep_dims yields a
/// shape-(1) tensor.
template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& a, std::span<const std::size_t> axes, bool keep_dims = false) {
  const std::size_t r = a.rank();
  std::vector<bool> reduced(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r) throw Error("reduce: axis " + std::to_string(ax) + " invalid for shape " + to_string(a.shape()));
    reduced[ax] = true;
  }
  Shape kept_shape(r);
  for (std::size_t i = 0; i < r; ++i) kept_shape[i] = reduced[i] ? 1 : a.shape()[i];

  std::vector<double> acc(shape_size(kept_shape), op == ReduceOp::max ? -INFINITY : 0.0);
  std::vector<std::size_t> idx(r, 0);
  std::vector<std::size_t> out_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) out_stride[i - 1] = out_stride[i] * kept_shape[i];
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < r; ++i)
      if (!reduced[i]) o += idx[i] * out_stride[i];
    const double v = static_cast<double>(a[flat]);
    if (op == ReduceOp::max)
      acc[o] = std::max(acc[o], v);
    else
      acc[o] += v;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < a.shape()[i]) break;
      idx[i] = 0;
    }
  }
  if (op == ReduceOp::mean) {
    const double count = static_cast<double>(a.size()) / static_cast<double>(acc.size());
    for (double& v : acc) v /= count;
  }

  Shape out_shape;
  if (keep_dims) {
    out_shape = kept_shape;
  } else {
    for (std::size_t i = 0; i < r; ++i)
      if (!reduced[i]) out_shape.push_back(a.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
  }
  std::vector<T> values(acc.begin(), acc.end());
  return Tensor<T>(std::move(out_shape), std::move(values));
}

namespace detail {

/// Source coordinate of output index `o` under the align-corners mapping.
inline double align_corners_coord(std::size_t o, std::size_t n_in, std::size_t n_out) {
  if (n_out == 1) return (static_cast<double>(n_in) - 1.0) / 2.0;
  return static_cast<double>(o) * (static_cast<double>(n_in) - 1.0) / (static_cast<double>(n_out) - 1.0);
}

struct LinearTap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

inline LinearTap linear_tap(std::size_t o, std::size_t n_in, std::size_t n_out) {
  const double x = align_corners_coord(o, n_in, n_out);
  auto lo = static_cast<std::size_t>(std::floor(x));
  if (lo >= n_in - 1) return {n_in - 1, n_in - 1, 0.0};
  return {lo, lo + 1, x - static_cast<double>(lo)};
}

template <typename T>
std::pair<std::size_t, Dims3> as_volume(const Tensor<T>& v, const char* what) {
  if (v.rank() == 3) return {1, Dims3{v.shape()[0], v.shape()[1], v.shape()[2]}};
  if (v.rank() == 4) return {v.shape()[0], v.dims()};
  throw Error(std::string(what) + ": expected a rank-3 or rank-4 volume, got " + to_string(v.shape()));
}

}  // namespace detail

/// Trilinear resampling of every channel of a (C, D, H, W) or (D, H, W)
/// volume to `out` spatial extents, align-corners convention.
template <typename T>
Tensor<T> resample_trilinear(const Tensor<T>& v, const Dims3& out) {
  auto [channels, in] = detail::as_volume(v, "resample_trilinear");
  for (std::size_t e : out)
    if (e == 0) throw Error("resample_trilinear: output extents must be >= 1");
  Shape out_shape = v.rank() == 3 ? Shape{out[0], out[1], out[2]} : Shape{channels, out[0], out[1], out[2]};
  Tensor<T> result(out_shape);
  std::array<std::vector<detail::LinearTap>, 3> taps;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < out[a]; ++o) taps[a].push_back(detail::linear_tap(o, in[a], out[a]));

  const std::size_t in_plane = in[1] * in[2];
  const std::size_t in_vol = in[0] * in_plane;
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = v.data() + c * in_vol;
    for (const auto& td : taps[0])
      for (const auto& th : taps[1])
        for (const auto& tw : taps[2]) {
          auto s = [&](std::size_t d, std::size_t h, std::size_t w) {
            return static_cast<double>(src[d * in_plane + h * in[2] + w]);
          };
          const double c00 = s(td.lo, th.lo, tw.lo) * (1 - tw.frac) + s(td.lo, th.lo, tw.hi) * tw.frac;
          const double c01 = s(td.lo, th.hi, tw.lo) * (1 - tw.frac) + s(td.lo, th.hi, tw.hi) * tw.frac;
          const double c10 = s(td.hi, th.lo, tw.lo) * (1 - tw.frac) + s(td.hi, th.lo, tw.hi) * tw.frac;
          const double c11 = s(td.hi, th.hi, tw.lo) * (1 - tw.frac) + s(td.hi, th.hi, tw.hi) * tw.frac;
          const double c0 = c00 * (1 - th.frac) + c01 * th.frac;
          const double c1 = c10 * (1 - th.frac) + c11 * th.frac;
          result[k++] = static_cast<T>(c0 * (1 - td.frac) + c1 * td.frac);
        }
  }
  return result;
}

/// Adjoint of resample_trilinear: scatters `grad` (shaped like the resampled
/// output) back onto a volume of extents `in`.
template <typename T>
Tensor<T> resample_trilinear_adjoint(const Tensor<T>& grad, const Dims3& in) {
  auto [channels, out] = detail::as_volume(grad, "resample_trilinear_adjoint");
  Shape in_shape = grad.rank() == 3 ? Shape{in[0], in[1], in[2]} : Shape{channels, in[0], in[1], in[2]};
  std::vector<double> acc(shape_size(in_shape), 0.0);
  std::array<std::vector<detail::LinearTap>, 3> taps;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < out[a]; ++o) taps[a].push_back(detail::linear_tap(o, in[a], out[a]));

  const std::size_t in_plane = in[1] * in[2];
  const std::size_t in_vol = in[0] * in_plane;
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = acc.data() + c * in_vol;
    for (const auto& td : taps[0])
      for (const auto& th : taps[1])
        for (const auto& tw : taps[2]) {
          const double g = static_cast<double>(grad[k++]);
          const std::array<std::pair<std::size_t, double>, 2> wd{{{td.lo, 1 - td.frac}, {td.hi, td.frac}}};
          const std::array<std::pair<std::size_t, double>, 2> wh{{{th.lo, 1 - th.frac}, {th.hi, th.frac}}};
          const std::array<std::pair<std::size_t, double>, 2> ww{{{tw.lo, 1 - tw.frac}, {tw.hi, tw.frac}}};
          for (auto [d, fd] : wd)
            for (auto [h, fh] : wh)
              for (auto [w, fw] : ww) dst[d * in_plane + h * in[2] + w] += g * fd * fh * fw;
        }
  }
  return Tensor<T>(std::move(in_shape), std::vector<T>(acc.begin(), acc.end()));
}

}  // namespace vseg
