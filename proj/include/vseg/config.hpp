#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vseg/arch.hpp"
#include "vseg/loss_metrics.hpp"
#include "vseg/optim.hpp"

namespace vseg {

/// Everything a run needs. Defaults are the published training setup.
struct RunConfig {
  ArchSpec arch;
  TrainConfig train;
  RegionMap regions = RegionMap::brats();
  std::uint64_t seed = 0;
  std::size_t folds = 0;  // 0 trains a single network on the whole dataset

  /// Copies `seed` into the training config and validates everything.
  void finalize();
};

/// Parses `key = value` lines; '#' starts a comment. Keys not set keep their
/// defaults; unknown keys and malformed values throw with the line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key with its current value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& c);

/// The `arch.*` and `bn.*` keys alone, as stored in checkpoints.
std::string format_arch(const ArchSpec& a);
ArchSpec parse_arch(const std::string& text);

/// "name:1,2,3;other:4"; "brats" and "per_class" select the built-in maps.
RegionMap parse_region_map(const std::string& text, int class_count);
std::string format_region_map(const RegionMap& m);

}  // namespace vseg
