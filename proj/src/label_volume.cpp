#include "vseg/label_volume.hpp"

#include <cmath>
#include <string>

namespace vseg {

namespace {

void check_dims(const Dims3& d) {
  for (std::size_t e : d)
    if (e == 0) throw Error("label volume extents must be >= 1, got " + to_string(d));
}

std::size_t nearest_index(std::size_t o, std::size_t n_in, std::size_t n_out) {
  const double x = detail::align_corners_coord(o, n_in, n_out);
  const auto i = static_cast<std::size_t>(std::floor(x + 0.5));
  return std::min(i, n_in - 1);
}

}  // namespace

LabelVolume::LabelVolume(const Dims3& d, int classes, std::uint8_t fill)
    : dims(d), class_count(classes), labels() {
  check_dims(d);
  if (classes < 1 || classes > 256) throw Error("class count must be in [1, 256]");
  labels.assign(volume(d), fill);
}

LabelVolume::LabelVolume(const Dims3& d, int classes, std::vector<std::uint8_t> values)
    : dims(d), class_count(classes), labels(std::move(values)) {
  check_dims(d);
  if (classes < 1 || classes > 256) throw Error("class count must be in [1, 256]");
  if (labels.size() != volume(d))
    throw Error("label volume " + to_string(d) + " needs " + std::to_string(volume(d)) + " values, got " +
                std::to_string(labels.size()));
}

void LabelVolume::validate() const {
  for (std::uint8_t l : labels)
    if (static_cast<int>(l) >= class_count)
      throw Error("label " + std::to_string(l) + " out of range for " + std::to_string(class_count) + " classes");
}

LabelVolume resample_nearest(const LabelVolume& v, const Dims3& out) {
  check_dims(out);
  LabelVolume result(out, v.class_count);
  std::array<std::vector<std::size_t>, 3> src;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < out[a]; ++o) src[a].push_back(nearest_index(o, v.dims[a], out[a]));
  std::size_t k = 0;
  for (std::size_t d : src[0])
    for (std::size_t h : src[1])
      for (std::size_t w : src[2]) result.labels[k++] = v.at(d, h, w);
  return result;
}

}  // namespace vseg
