#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <utility>

#include "vseg/label_volume.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class TransformKind { identity, flip, rotate };

/// One random training-time transform. Axes index the spatial dimensions
/// (0 depth, 1 height, 2 width).
struct TransformDraw {
  TransformKind kind = TransformKind::identity;
  int axis = -1;                     // flip only
  std::array<int, 2> plane{-1, -1};  // rotate only, plane[0] < plane[1]
  double angle = 0.0;                // rotate only, radians in [0, 2pi)

  friend bool operator==(const TransformDraw&, const TransformDraw&) = default;
};

/// Kind uniform over {identity, flip, rotate}; flip axis uniform over the
/// three axes; rotation plane uniform over the three axis pairs and angle
/// uniform in [0, 2pi).
TransformDraw draw_transform(std::mt19937_64& rng);

/// Applies the same geometric transform to an image (C, D, H, W) and its
/// labels. Rotation is about the volume centre; the image is sampled
/// trilinearly, labels by nearest neighbour, and samples falling outside the
/// source volume read as 0 / background.
template <typename T>
std::pair<Tensor<T>, LabelVolume> apply_transform(const TransformDraw& t, const Tensor<T>& image,
                                                  const LabelVolume& labels);

template <typename T>
Tensor<T> crop(const Tensor<T>& v, const Dims3& offsets, const Dims3& extents);
LabelVolume crop(const LabelVolume& v, const Dims3& offsets, const Dims3& extents);

/// Shrinks each extent to extent / factor (at least 1).
template <typename T>
Tensor<T> downsample(const Tensor<T>& v, std::size_t factor);
LabelVolume downsample(const LabelVolume& v, std::size_t factor);

/// Offsets that centre an `extents` window inside `dims`.
Dims3 centered_crop_offsets(const Dims3& dims, const Dims3& extents);
/// Each extent rounded down to a multiple of `multiple`.
Dims3 floor_to_multiple(const Dims3& dims, std::size_t multiple);

enum class SourceHalf { lower, upper };

/// Replaces one half of the volume along `axis` by the reflection of the
/// other (`source`) half. The source half, including the middle layer of an
/// odd extent, must contain no foreground labels.
template <typename T>
std::pair<Tensor<T>, LabelVolume> mirror_hemisphere(const Tensor<T>& image, const LabelVolume& labels, int axis,
                                                    SourceHalf source);

}  // namespace vseg
