#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/label_volume.hpp"
#include "vseg/network.hpp"
#include "vseg/optim.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

// Volume file layout, all integers little-endian, no padding:
//   "VSEG" | u16 version | u8 dtype (0 f32 image, 1 u8 labels) | u16 channels
//   | u32 D | u32 H | u32 W | payload (C, D, H, W) row-major
inline constexpr std::uint16_t kVolumeFormatVersion = 1;

enum class VolumeDtype : std::uint8_t { f32 = 0, u8 = 1 };

std::vector<std::uint8_t> encode_image(const Tensor<float>& image);
std::vector<std::uint8_t> encode_labels(const LabelVolume& labels);
/// `class_count` 0 infers max label + 1 (at least 2).
Tensor<float> decode_image(std::span<const std::uint8_t> bytes);
LabelVolume decode_labels(std::span<const std::uint8_t> bytes, int class_count = 0);
VolumeDtype peek_volume_dtype(std::span<const std::uint8_t> bytes);

void write_image(const std::filesystem::path& path, const Tensor<float>& image);
void write_labels(const std::filesystem::path& path, const LabelVolume& labels);
Tensor<float> read_image(const std::filesystem::path& path);
LabelVolume read_labels(const std::filesystem::path& path, int class_count = 0);

// Checkpoint layout, little-endian:
//   "VNET" | u16 version | u32 spec length | spec text | u32 tensor count
//   | per tensor: u16 name length | name | u8 dtype (0 f32, 2 f64) | u8 rank
//     | u32 extents[rank] | payload
inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Network<T>& net);
template <typename T>
Network<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const Network<T>& net);
template <typename T>
Network<T> read_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Dataset directory: each case is a pair <name>.image.vseg and
/// <name>.labels.vseg; cases are returned sorted by name.
std::vector<Sample<float>> load_dataset(const std::filesystem::path& dir, int class_count);
void save_sample(const std::filesystem::path& dir, const Sample<float>& s);

/// Raw little-endian array described by a sidecar text file with lines
///   dims = D H W
///   channels = C        (optional, default 1)
///   dtype = f32 | f64 | u8 | u16 | i16
struct RawLayout {
  Dims3 dims{};
  std::size_t channels = 1;
  std::string dtype = "f32";
};
RawLayout read_raw_layout(const std::filesystem::path& sidecar);
Tensor<float> import_raw_image(const std::filesystem::path& raw, const RawLayout& layout);
LabelVolume import_raw_labels(const std::filesystem::path& raw, const RawLayout& layout, int class_count = 0);

}  // namespace vseg
