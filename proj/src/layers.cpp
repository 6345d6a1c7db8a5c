#include "vseg/layers.hpp"

#include <cmath>
#include <string>

namespace vseg {

namespace {

template <typename T>
void check_volume(const Tensor<T>& x, const char* what) {
  if (x.rank() != 4) throw Error(std::string(what) + ": expected a (C, D, H, W) tensor, got " + to_string(x.shape()));
}

template <typename T>
void check_conv(const Tensor<T>& x, const ConvParams<T>& p, const char* what) {
  check_volume(x, what);
  if (x.channels() != p.in_channels())
    throw Error(std::string(what) + ": input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                std::to_string(p.in_channels()) + " (input " + to_string(x.shape()) + ", weights " +
                to_string(p.weights.shape()) + ")");
}

template <typename T>
void check_channels(const Tensor<T>& x, std::size_t expected, const char* what) {
  check_volume(x, what);
  if (x.channels() != expected)
    throw Error(std::string(what) + ": input has " + std::to_string(x.channels()) + " channels, parameters have " +
                std::to_string(expected));
}

// Output indices o in [lo, hi) for which o * stride + offset lands inside [0, n_in).
struct IndexRange {
  std::size_t lo = 0, hi = 0;
};

IndexRange tap_range(std::size_t n_in, std::size_t n_out, std::size_t stride, long offset) {
  const long s = static_cast<long>(stride);
  long lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  const long last = static_cast<long>(n_in) - 1 - offset;
  long hi = last < 0 ? 0 : last / s + 1;
  hi = std::min(hi, static_cast<long>(n_out));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Shared forward kernel. Every output voxel receives bias first, then the
// products in (in-channel, kd, kh, kw) order, whatever the stride.
template <typename T>
Tensor<T> correlate(const Tensor<T>& x, const ConvParams<T>& p, std::size_t stride) {
  const Dims3 in = x.dims();
  const Dims3 out{in[0] / stride, in[1] / stride, in[2] / stride};
  const std::size_t cin = p.in_channels(), cout = p.out_channels(), k = p.kernel();
  const long pad = static_cast<long>(k / 2);
  Tensor<T> y = Tensor<T>::volume(cout, out);
  const std::size_t in_vol = volume(in), out_vol = volume(out);
  const T* wts = p.weights.data();

  for (std::size_t co = 0; co < cout; ++co) {
    T* yc = y.data() + co * out_vol;
    std::fill(yc, yc + out_vol, p.bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + ci * in_vol;
      for (std::size_t kd = 0; kd < k; ++kd) {
        const long od_off = static_cast<long>(kd) - pad;
        const IndexRange rd = tap_range(in[0], out[0], stride, od_off);
        for (std::size_t kh = 0; kh < k; ++kh) {
          const long oh_off = static_cast<long>(kh) - pad;
          const IndexRange rh = tap_range(in[1], out[1], stride, oh_off);
          for (std::size_t kw = 0; kw < k; ++kw) {
            const long ow_off = static_cast<long>(kw) - pad;
            const IndexRange rw = tap_range(in[2], out[2], stride, ow_off);
            const T w = wts[(((co * cin + ci) * k + kd) * k + kh) * k + kw];
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * stride + od_off;
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * stride + oh_off;
                T* yrow = yc + (od * out[1] + oh) * out[2];
                const T* xrow = xc + (id * in[1] + ih) * in[2];
                if (stride == 1) {
                  const T* xs = xrow + ow_off;
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += w * xs[ow];
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += w * xrow[ow * stride + ow_off];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void check_divisible(const Tensor<T>& x, std::size_t stride, const char* what) {
  if (stride == 0) throw Error(std::string(what) + ": stride must be positive");
  for (std::size_t e : x.dims())
    if (e % stride != 0)
      throw Error(std::string(what) + ": spatial extents " + to_string(x.dims()) + " not divisible by " +
                  std::to_string(stride));
}

}  // namespace

template <typename T>
ConvParams<T>::ConvParams(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : weights({out_channels, in_channels, kernel, kernel, kernel}), bias({out_channels}) {
  if (kernel % 2 == 0) throw Error("convolution kernel must be odd, got " + std::to_string(kernel));
}

template <typename T>
PReluParams<T>::PReluParams(std::size_t channels, T initial_slope) : slope({channels}, initial_slope) {}

template <typename T>
BatchNormState<T>::BatchNormState(std::size_t channels, T init_mean, T init_std, T momentum_, T epsilon_)
    : gamma({channels}, T(1)),
      beta({channels}, T(0)),
      running_mean({channels}, init_mean),
      running_std({channels}, init_std),
      momentum(momentum_),
      epsilon(epsilon_) {
  if (momentum < T(0) || momentum > T(1)) throw Error("batch-norm momentum must lie in [0, 1]");
  if (!(epsilon > T(0))) throw Error("batch-norm epsilon must be positive");
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv(x, p, "conv3d_forward");
  return correlate(x, p, 1);
}

template <typename T>
Tensor<T> conv3d_strided_forward(const Tensor<T>& x, const ConvParams<T>& p, std::size_t stride) {
  check_conv(x, p, "conv3d_strided_forward");
  check_divisible(x, stride, "conv3d_strided_forward");
  return correlate(x, p, stride);
}

template <typename T>
Tensor<T> deconv3d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv(x, p, "deconv3d_forward");
  return correlate(repeat_voxels(x, 2), p, 1);
}

template <typename T>
Tensor<T> prelu_forward(const Tensor<T>& x, const PReluParams<T>& p) {
  check_channels(x, p.slope.size(), "prelu_forward");
  Tensor<T> y(x.shape());
  const std::size_t n = x.size() / x.channels();
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const T a = p.slope[c];
    const T* xc = x.data() + c * n;
    T* yc = y.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) yc[i] = xc[i] >= T(0) ? xc[i] : a * xc[i];
  }
  return y;
}

namespace {

struct ChannelStats {
  double mean;
  double std;  // sqrt(var), biased estimator
};

template <typename T>
ChannelStats channel_stats(std::span<const T> v) {
  double sum = 0.0;
  for (T e : v) sum += static_cast<double>(e);
  const double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (T e : v) {
    const double d = static_cast<double>(e) - mean;
    sq += d * d;
  }
  return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& x, const BatchNormState<T>& s, Mode mode, BatchStats* stats) {
  check_channels(x, s.channels(), "batchnorm_forward");
  Tensor<T> y(x.shape());
  const double eps = static_cast<double>(s.epsilon);
  if (stats) {
    stats->mean.assign(x.channels(), 0.0);
    stats->std.assign(x.channels(), 0.0);
  }
  for (std::size_t c = 0; c < x.channels(); ++c) {
    double mean, denom;
    if (mode == Mode::train) {
      const ChannelStats st = channel_stats(x.channel(c));
      mean = st.mean;
      denom = std::sqrt(st.std * st.std + eps);
      if (stats) {
        stats->mean[c] = st.mean;
        stats->std[c] = st.std;
      }
    } else {
      mean = static_cast<double>(s.running_mean[c]);
      const double rs = static_cast<double>(s.running_std[c]);
      denom = std::sqrt(rs * rs + eps);
    }
    const double g = static_cast<double>(s.gamma[c]);
    const double b = static_cast<double>(s.beta[c]);
    auto xc = x.channel(c);
    auto yc = y.channel(c);
    for (std::size_t i = 0; i < xc.size(); ++i)
      yc[i] = static_cast<T>(g * ((static_cast<double>(xc[i]) - mean) / denom) + b);
  }
  return y;
}

template <typename T>
void batchnorm_update_running(BatchNormState<T>& s, const BatchStats& stats) {
  if (stats.mean.size() != s.channels() || stats.std.size() != s.channels())
    throw Error("batchnorm_update_running: statistics do not match the channel count");
  const double alpha = static_cast<double>(s.momentum);
  for (std::size_t c = 0; c < s.channels(); ++c) {
    s.running_mean[c] = static_cast<T>(alpha * static_cast<double>(s.running_mean[c]) + (1 - alpha) * stats.mean[c]);
    s.running_std[c] = static_cast<T>(alpha * static_cast<double>(s.running_std[c]) + (1 - alpha) * stats.std[c]);
  }
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& s, Mode mode) {
  if (mode == Mode::infer) return batchnorm_apply(x, s, mode);
  BatchStats stats;
  Tensor<T> y = batchnorm_apply(x, s, mode, &stats);
  batchnorm_update_running(s, stats);
  return y;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream,
                             std::size_t stride) {
  check_conv(x, p, "conv3d_backward");
  check_divisible(x, stride, "conv3d_backward");
  const Dims3 in = x.dims();
  const Dims3 out{in[0] / stride, in[1] / stride, in[2] / stride};
  const std::size_t cin = p.in_channels(), cout = p.out_channels(), k = p.kernel();
  require_same_shape(upstream.shape(), Shape{cout, out[0], out[1], out[2]}, "conv3d_backward upstream");
  const long pad = static_cast<long>(k / 2);
  const std::size_t in_vol = volume(in), out_vol = volume(out);

  ConvGrads<T> g{zeros_like(x), zeros_like(p.weights), zeros_like(p.bias)};
  const T* wts = p.weights.data();
  T* dw = g.weights.data();

  for (std::size_t co = 0; co < cout; ++co) {
    const T* gc = upstream.data() + co * out_vol;
    double bsum = 0.0;
    for (std::size_t i = 0; i < out_vol; ++i) bsum += static_cast<double>(gc[i]);
    g.bias[co] = static_cast<T>(bsum);

    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + ci * in_vol;
      T* dxc = g.input.data() + ci * in_vol;
      for (std::size_t kd = 0; kd < k; ++kd) {
        const long od_off = static_cast<long>(kd) - pad;
        const IndexRange rd = tap_range(in[0], out[0], stride, od_off);
        for (std::size_t kh = 0; kh < k; ++kh) {
          const long oh_off = static_cast<long>(kh) - pad;
          const IndexRange rh = tap_range(in[1], out[1], stride, oh_off);
          for (std::size_t kw = 0; kw < k; ++kw) {
            const long ow_off = static_cast<long>(kw) - pad;
            const IndexRange rw = tap_range(in[2], out[2], stride, ow_off);
            const std::size_t widx = (((co * cin + ci) * k + kd) * k + kh) * k + kw;
            const T w = wts[widx];
            double wsum = 0.0;
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * stride + od_off;
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * stride + oh_off;
                const T* grow = gc + (od * out[1] + oh) * out[2];
                const std::size_t in_row = (id * in[1] + ih) * in[2];
                const T* xrow = xc + in_row;
                T* dxrow = dxc + in_row;
                T rowsum = T(0);
                if (stride == 1) {
                  const T* xs = xrow + ow_off;
                  T* dxs = dxrow + ow_off;
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) {
                    rowsum += grow[ow] * xs[ow];
                    dxs[ow] += w * grow[ow];
                  }
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) {
                    const std::size_t iw = ow * stride + ow_off;
                    rowsum += grow[ow] * xrow[iw];
                    dxrow[iw] += w * grow[ow];
                  }
                }
                wsum += static_cast<double>(rowsum);
              }
            }
            dw[widx] = static_cast<T>(wsum);
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
ConvGrads<T> deconv3d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream) {
  check_conv(x, p, "deconv3d_backward");
  ConvGrads<T> g = conv3d_backward(repeat_voxels(x, 2), p, upstream, 1);
  g.input = sum_pool(g.input, 2);
  return g;
}

template <typename T>
PReluGrads<T> prelu_backward(const Tensor<T>& x, const PReluParams<T>& p, const Tensor<T>& upstream) {
  check_channels(x, p.slope.size(), "prelu_backward");
  require_same_shape(x.shape(), upstream.shape(), "prelu_backward");
  PReluGrads<T> g{Tensor<T>(x.shape()), zeros_like(p.slope)};
  const std::size_t n = x.size() / x.channels();
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const T a = p.slope[c];
    const T* xc = x.data() + c * n;
    const T* uc = upstream.data() + c * n;
    T* dc = g.input.data() + c * n;
    double da = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (xc[i] >= T(0)) {
        dc[i] = uc[i];
      } else {
        dc[i] = a * uc[i];
        da += static_cast<double>(uc[i]) * static_cast<double>(xc[i]);
      }
    }
    g.slope[c] = static_cast<T>(da);
  }
  return g;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& x, const BatchNormState<T>& s, const Tensor<T>& upstream,
                                     Mode mode) {
  check_channels(x, s.channels(), "batchnorm_backward");
  require_same_shape(x.shape(), upstream.shape(), "batchnorm_backward");
  BatchNormGrads<T> g{Tensor<T>(x.shape()), zeros_like(s.gamma), zeros_like(s.beta)};
  const double eps = static_cast<double>(s.epsilon);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto xc = x.channel(c);
    auto uc = upstream.channel(c);
    auto dc = g.input.channel(c);
    const double gamma = static_cast<double>(s.gamma[c]);
    double mean, denom;
    if (mode == Mode::train) {
      const ChannelStats st = channel_stats(xc);
      mean = st.mean;
      denom = std::sqrt(st.std * st.std + eps);
    } else {
      mean = static_cast<double>(s.running_mean[c]);
      const double rs = static_cast<double>(s.running_std[c]);
      denom = std::sqrt(rs * rs + eps);
    }
    double sum_u = 0.0, sum_u_xhat = 0.0;
    for (std::size_t i = 0; i < xc.size(); ++i) {
      const double xhat = (static_cast<double>(xc[i]) - mean) / denom;
      sum_u += static_cast<double>(uc[i]);
      sum_u_xhat += static_cast<double>(uc[i]) * xhat;
    }
    g.beta[c] = static_cast<T>(sum_u);
    g.gamma[c] = static_cast<T>(sum_u_xhat);
    if (mode == Mode::train) {
      const double n = static_cast<double>(xc.size());
      const double mean_u = sum_u / n, mean_u_xhat = sum_u_xhat / n;
      for (std::size_t i = 0; i < xc.size(); ++i) {
        const double xhat = (static_cast<double>(xc[i]) - mean) / denom;
        dc[i] = static_cast<T>(gamma / denom * (static_cast<double>(uc[i]) - mean_u - xhat * mean_u_xhat));
      }
    } else {
      for (std::size_t i = 0; i < xc.size(); ++i) dc[i] = static_cast<T>(gamma / denom * static_cast<double>(uc[i]));
    }
  }
  return g;
}

template <typename T>
Tensor<T> repeat_voxels(const Tensor<T>& x, std::size_t factor) {
  check_volume(x, "repeat_voxels");
  const Dims3 in = x.dims();
  const Dims3 out{in[0] * factor, in[1] * factor, in[2] * factor};
  Tensor<T> y = Tensor<T>::volume(x.channels(), out);
  std::size_t k = 0;
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t d = 0; d < out[0]; ++d)
      for (std::size_t h = 0; h < out[1]; ++h)
        for (std::size_t w = 0; w < out[2]; ++w) y[k++] = x.at(c, d / factor, h / factor, w / factor);
  return y;
}

template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x, std::size_t factor) {
  check_volume(x, "sum_pool");
  check_divisible(x, factor, "sum_pool");
  const Dims3 in = x.dims();
  const Dims3 out{in[0] / factor, in[1] / factor, in[2] / factor};
  Tensor<T> y = Tensor<T>::volume(x.channels(), out);
  std::size_t k = 0;
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t d = 0; d < in[0]; ++d)
      for (std::size_t h = 0; h < in[1]; ++h)
        for (std::size_t w = 0; w < in[2]; ++w) y.at(c, d / factor, h / factor, w / factor) += x[k++];
  return y;
}

template <typename T>
Tensor<T> subsample(const Tensor<T>& x, std::size_t stride) {
  check_volume(x, "subsample");
  check_divisible(x, stride, "subsample");
  const Dims3 in = x.dims();
  const Dims3 out{in[0] / stride, in[1] / stride, in[2] / stride};
  Tensor<T> y = Tensor<T>::volume(x.channels(), out);
  std::size_t k = 0;
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t d = 0; d < out[0]; ++d)
      for (std::size_t h = 0; h < out[1]; ++h)
        for (std::size_t w = 0; w < out[2]; ++w) y[k++] = x.at(c, d * stride, h * stride, w * stride);
  return y;
}

#define VSEG_INSTANTIATE_LAYERS(T)                                                                            \
  template struct ConvParams<T>;                                                                              \
  template struct PReluParams<T>;                                                                             \
  template struct BatchNormState<T>;                                                                          \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const ConvParams<T>&);                                  \
  template Tensor<T> conv3d_strided_forward(const Tensor<T>&, const ConvParams<T>&, std::size_t);             \
  template Tensor<T> deconv3d_forward(const Tensor<T>&, const ConvParams<T>&);                                \
  template Tensor<T> prelu_forward(const Tensor<T>&, const PReluParams<T>&);                                  \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormState<T>&, Mode);                           \
  template Tensor<T> batchnorm_apply(const Tensor<T>&, const BatchNormState<T>&, Mode, BatchStats*);          \
  template void batchnorm_update_running(BatchNormState<T>&, const BatchStats&);                              \
  template ConvGrads<T> conv3d_backward(const Tensor<T>&, const ConvParams<T>&, const Tensor<T>&, std::size_t); \
  template ConvGrads<T> deconv3d_backward(const Tensor<T>&, const ConvParams<T>&, const Tensor<T>&);          \
  template PReluGrads<T> prelu_backward(const Tensor<T>&, const PReluParams<T>&, const Tensor<T>&);           \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormState<T>&, const Tensor<T>&, \
                                                Mode);                                                        \
  template Tensor<T> repeat_voxels(const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> sum_pool(const Tensor<T>&, std::size_t);                                                 \
  template Tensor<T> subsample(const Tensor<T>&, std::size_t);

VSEG_INSTANTIATE_LAYERS(float)
VSEG_INSTANTIATE_LAYERS(double)

}  // namespace vseg
