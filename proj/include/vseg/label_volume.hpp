#pragma once

#include <cstdint>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

/// Integer-labelled 3D volume: ground truth or a prediction.
struct LabelVolume {
  Dims3 dims{1, 1, 1};
  int class_count = 2;
  std::vector<std::uint8_t> labels = std::vector<std::uint8_t>(1, 0);

  LabelVolume() = default;
  LabelVolume(const Dims3& d, int classes, std::uint8_t fill = 0);
  LabelVolume(const Dims3& d, int classes, std::vector<std::uint8_t> values);

  std::size_t size() const { return labels.size(); }
  std::size_t index(std::size_t d, std::size_t h, std::size_t w) const {
    return (d * dims[1] + h) * dims[2] + w;
  }
  std::uint8_t& at(std::size_t d, std::size_t h, std::size_t w) { return labels[index(d, h, w)]; }
  std::uint8_t at(std::size_t d, std::size_t h, std::size_t w) const { return labels[index(d, h, w)]; }

  /// Throws if any label is outside [0, class_count).
  void validate() const;

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;
};

/// Nearest-neighbour resampling under the same align-corners mapping as
/// resample_trilinear; ties round half up.
LabelVolume resample_nearest(const LabelVolume& v, const Dims3& out);

/// One-hot encoding of `labels` as a (class_count, D, H, W) tensor.
template <typename T>
Tensor<T> one_hot(const LabelVolume& labels) {
  Tensor<T> out = Tensor<T>::volume(static_cast<std::size_t>(labels.class_count), labels.dims);
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) out[labels.labels[i] * n + i] = T(1);
  return out;
}

}  // namespace vseg
