#pragma once

#include <span>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

struct RfRow {
  int ordinal = 0;
  std::string name;
  LayerKind kind = LayerKind::conv;
  Dims3 input{};
  Dims3 output{};
  std::size_t receptive_field = 1;  // cubic extent in input voxels
  std::size_t features = 0;
};

/// Cumulative receptive field of every layer with a filter larger than one
/// voxel. Walking the layers in order,
///   phi_i = phi_{i-1} + 2^(eta - tau) * (kernel - 1),  phi_0 = 1,
/// where eta counts the strided convolutions before layer i and tau the
/// deconvolutions up to and including layer i. Heads are ignored.
std::vector<RfRow> receptive_field_trace(std::span<const PlannedLayer> layers, const Dims3& input);
std::vector<RfRow> receptive_field_trace(const ArchSpec& spec, const Dims3& input);

/// Aligned text table, one line per row, with markers at the end of the
/// contracting path and the start of the expanding path.
std::string format_rf_table(std::span<const RfRow> rows);
/// CSV with header ordinal,name,input,output,receptive_field,features.
std::string format_rf_csv(std::span<const RfRow> rows);

}  // namespace vseg
