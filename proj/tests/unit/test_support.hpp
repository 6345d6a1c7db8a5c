#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "vseg/label_volume.hpp"
#include "vseg/layers.hpp"
#include "vseg/tensor.hpp"

namespace vseg::test {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

inline LabelVolume random_labels(const Dims3& dims, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, classes - 1);
  LabelVolume v(dims, classes);
  for (auto& l : v.labels) l = static_cast<std::uint8_t>(u(rng));
  return v;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

/// Align-corners source index of output `o`, rounded half up, in integers.
inline std::size_t nearest_index(std::size_t o, std::size_t n_in, std::size_t n_out) {
  if (n_out == 1) return n_in / 2;
  return (2 * o * (n_in - 1) + (n_out - 1)) / (2 * (n_out - 1));
}

/// One output voxel of an align-corners trilinear resampling, interpolating
/// along width, then height, then depth.
template <typename T>
T trilinear_oracle(const Tensor<T>& v, std::size_t c, const Dims3& at, const Dims3& out) {
  const Dims3 in = v.dims();
  std::size_t lo[3], hi[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double x = out[a] == 1 ? (in[a] - 1.0) / 2.0
                                 : static_cast<double>(at[a]) * (in[a] - 1.0) / (out[a] - 1.0);
    lo[a] = static_cast<std::size_t>(std::floor(x));
    if (lo[a] >= in[a] - 1) {
      lo[a] = hi[a] = in[a] - 1;
      f[a] = 0;
    } else {
      hi[a] = lo[a] + 1;
      f[a] = x - static_cast<double>(lo[a]);
    }
  }
  auto s = [&](std::size_t d, std::size_t h, std::size_t w) { return static_cast<double>(v.at(c, d, h, w)); };
  auto along_w = [&](std::size_t d, std::size_t h) { return s(d, h, lo[2]) * (1 - f[2]) + s(d, h, hi[2]) * f[2]; };
  auto along_h = [&](std::size_t d) { return along_w(d, lo[1]) * (1 - f[1]) + along_w(d, hi[1]) * f[1]; };
  return static_cast<T>(along_h(lo[0]) * (1 - f[0]) + along_h(hi[0]) * f[0]);
}

/// Zero-padded cross-correlation evaluated voxel by voxel: bias, then the
/// in-range taps in (in-channel, kd, kh, kw) order, accumulated in T.
template <typename T>
Tensor<T> naive_conv(const Tensor<T>& x, const ConvParams<T>& p) {
  const Dims3 n = x.dims();
  const long k = static_cast<long>(p.kernel()), pad = k / 2;
  Tensor<T> y = Tensor<T>::volume(p.out_channels(), n);
  for (std::size_t co = 0; co < p.out_channels(); ++co)
    for (long d = 0; d < static_cast<long>(n[0]); ++d)
      for (long h = 0; h < static_cast<long>(n[1]); ++h)
        for (long w = 0; w < static_cast<long>(n[2]); ++w) {
          T acc = p.bias[co];
          for (std::size_t ci = 0; ci < p.in_channels(); ++ci)
            for (long a = 0; a < k; ++a)
              for (long b = 0; b < k; ++b)
                for (long e = 0; e < k; ++e) {
                  const long id = d + a - pad, ih = h + b - pad, iw = w + e - pad;
                  if (id < 0 || ih < 0 || iw < 0 || id >= static_cast<long>(n[0]) ||
                      ih >= static_cast<long>(n[1]) || iw >= static_cast<long>(n[2]))
                    continue;
                  acc += p.weights[(((co * p.in_channels() + ci) * k + a) * k + b) * k + e] *
                         x.at(ci, id, ih, iw);
                }
          y.at(co, d, h, w) = acc;
        }
  return y;
}

template <typename T>
ConvParams<T> random_conv(std::size_t cin, std::size_t cout, std::size_t k, std::uint64_t seed) {
  ConvParams<T> p(cin, cout, k);
  p.weights = random_tensor<T>(p.weights.shape(), seed);
  p.bias = random_tensor<T>(p.bias.shape(), seed + 1000);
  return p;
}

}  // namespace vseg::test

using namespace vseg::test;
