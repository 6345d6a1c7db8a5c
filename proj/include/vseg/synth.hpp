#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "vseg/optim.hpp"

namespace vseg {

struct SynthOptions {
  Dims3 dims{32, 32, 32};
  int class_count = 5;
  double noise_std = 0.1;
};

/// One centred ball of class 1 (intensity 1) on background (intensity 0).
Sample<float> synth_sphere(const Dims3& dims, double radius, double noise_std, std::mt19937_64& rng);

/// One random ellipsoid per foreground class, painted in class order;
/// class c has mean intensity c / (class_count - 1).
Sample<float> synth_spheres(const SynthOptions& opts, std::mt19937_64& rng);

/// Average voxel fraction of metacarpal, proximal, middle and distal bones
/// in hand MRI.
inline constexpr std::array<double, 4> kHandBoneFrequencies{5.13e-3, 2.29e-3, 6.78e-4, 4.32e-4};

struct HandLikeOptions {
  std::size_t chains = 4;
  // Target voxel fraction per foreground class, class 1 first. Empty takes
  // kHandBoneFrequencies, halving the last entry for any further class.
  std::vector<double> frequencies;
  double aspect = 3.0;  // capsule length over radius
  // Intensity of every capsule; 0 shades class c at 0.5 + 0.5 c / (class_count - 1).
  double bone_intensity = 0.0;
};

/// Finger-like chains: each chain is a row of capsules, one per foreground
/// class in class order, inside a soft tissue ellipsoid that is brighter
/// than the background but labelled 0. Capsule sizes are solved from the
/// target frequencies, so the rare classes come out as small bones.
Sample<float> synth_hand_like(const SynthOptions& opts, const HandLikeOptions& shape, std::mt19937_64& rng);

std::vector<double> hand_like_frequencies(const HandLikeOptions& shape, int class_count);

}  // namespace vseg
