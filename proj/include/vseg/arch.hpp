#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace vseg {

enum class SkipMode { sum, concat, none };
enum class InitScheme { gaussian, xavier };

std::string to_string(SkipMode m);
std::string to_string(InitScheme s);
SkipMode parse_skip_mode(const std::string& s);
InitScheme parse_init_scheme(const std::string& s);

/// Number of 3x3x3 convolutional units; their output widths are listed in
/// ArchSpec::widths in network order.
inline constexpr std::size_t kUnitCount = 13;
/// Stride-2 reductions on the contracting path.
inline constexpr std::size_t kStridedCount = 3;
/// Spatial extents fed to the network must be multiples of this.
inline constexpr std::size_t kSpatialMultiple = std::size_t{1} << kStridedCount;

/// Declarative description of the U-shaped network.
struct ArchSpec {
  std::size_t in_channels = 1;
  std::size_t class_count = 5;
  // Contracting path and bottom (units 1-7), then expanding path
  // (deconv/conv pairs at 1/4, 1/2 and full resolution).
  std::array<std::size_t, kUnitCount> widths{8, 8, 16, 32, 32, 64, 64, 32, 64, 16, 32, 8, 16};
  SkipMode skip_mode = SkipMode::concat;
  std::size_t head_count = 3;
  InitScheme init = InitScheme::gaussian;
  double init_std = 0.01;
  double prelu_init = 0.25;
  double bn_momentum = 0.5;
  double bn_epsilon = 1e-5;
  double bn_init_mean = 1.0;
  double bn_init_std = 0.0;

  /// Throws vseg::Error describing the first inconsistency.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class LayerKind { conv, strided_conv, deconv, reducer, head };

/// One convolution of the network as laid out by plan_layers().
struct PlannedLayer {
  int ordinal = 0;  // position counting 1x1 reducers; 0 for segmentation heads
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  int level_in = 0;   // 0 = full resolution, n = 1/2^n
  int level_out = 0;
};

/// Every convolution in execution order: the 13 units interleaved with the
/// three 1x1 reducers, followed by the segmentation heads (full, half,
/// quarter resolution).
std::vector<PlannedLayer> plan_layers(const ArchSpec& spec);

}  // namespace vseg
