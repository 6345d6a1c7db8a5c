#include "vseg/augment.hpp"

#include <cmath>
#include <numbers>

namespace vseg {

namespace {

template <typename T>
void require_congruent(const Tensor<T>& image, const LabelVolume& labels, const char* what) {
  if (image.rank() != 4) throw Error(std::string(what) + ": image must be (C, D, H, W), got " + to_string(image.shape()));
  if (image.dims() != labels.dims)
    throw Error(std::string(what) + ": image " + to_string(image.dims()) + " and labels " + to_string(labels.dims) +
                " differ in extent");
}

void require_axis(int axis, const char* what) {
  if (axis < 0 || axis > 2) throw Error(std::string(what) + ": axis must be 0, 1 or 2, got " + std::to_string(axis));
}

using Index3 = std::array<std::size_t, 3>;

template <typename F>
void for_each_voxel(const Dims3& d, F&& f) {
  Index3 p{};
  for (p[0] = 0; p[0] < d[0]; ++p[0])
    for (p[1] = 0; p[1] < d[1]; ++p[1])
      for (p[2] = 0; p[2] < d[2]; ++p[2]) f(p);
}

std::size_t linear(const Dims3& d, const Index3& p) { return (p[0] * d[1] + p[1]) * d[2] + p[2]; }

template <typename T>
std::pair<Tensor<T>, LabelVolume> flip(int axis, const Tensor<T>& image, const LabelVolume& labels) {
  const Dims3 d = labels.dims;
  const std::size_t n = volume(d);
  Tensor<T> out_image(image.shape());
  LabelVolume out_labels(d, labels.class_count);
  for_each_voxel(d, [&](const Index3& p) {
    Index3 q = p;
    q[axis] = d[axis] - 1 - p[axis];
    const std::size_t dst = linear(d, p), src = linear(d, q);
    out_labels.labels[dst] = labels.labels[src];
    for (std::size_t c = 0; c < image.channels(); ++c) out_image[c * n + dst] = image[c * n + src];
  });
  return {std::move(out_image), std::move(out_labels)};
}

template <typename T>
std::pair<Tensor<T>, LabelVolume> rotate(const std::array<int, 2>& plane, double angle, const Tensor<T>& image,
                                         const LabelVolume& labels) {
  const Dims3 d = labels.dims;
  const std::size_t n = volume(d);
  const int a = plane[0], b = plane[1];
  const double ca = (static_cast<double>(d[a]) - 1.0) / 2.0;
  const double cb = (static_cast<double>(d[b]) - 1.0) / 2.0;
  const double cs = std::cos(angle), sn = std::sin(angle);

  Tensor<T> out_image(image.shape());
  LabelVolume out_labels(d, labels.class_count);
  for_each_voxel(d, [&](const Index3& p) {
    // Inverse mapping: each output voxel reads its rotated-back source point.
    const double ua = static_cast<double>(p[a]) - ca, ub = static_cast<double>(p[b]) - cb;
    std::array<double, 3> q{static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2])};
    q[a] = ca + cs * ua + sn * ub;
    q[b] = cb - sn * ua + cs * ub;
    const std::size_t dst = linear(d, p);

    bool inside = true;
    Index3 nearest{};
    for (int k = 0; k < 3; ++k) {
      const double r = std::floor(q[k] + 0.5);
      if (r < 0.0 || r > static_cast<double>(d[k]) - 1.0) inside = false;
      else nearest[k] = static_cast<std::size_t>(r);
    }
    out_labels.labels[dst] = inside ? labels.labels[linear(d, nearest)] : std::uint8_t{0};

    std::array<long long, 3> lo{};
    std::array<double, 3> frac{};
    for (int k = 0; k < 3; ++k) {
      const double f = std::floor(q[k]);
      lo[k] = static_cast<long long>(f);
      frac[k] = q[k] - f;
    }
    for (std::size_t c = 0; c < image.channels(); ++c) {
      double acc = 0.0;
      for (int corner = 0; corner < 8; ++corner) {
        double w = 1.0;
        Index3 s{};
        bool valid = true;
        for (int k = 0; k < 3; ++k) {
          const int bit = (corner >> (2 - k)) & 1;
          const long long idx = lo[k] + bit;
          w *= bit ? frac[k] : 1.0 - frac[k];
          if (idx < 0 || idx >= static_cast<long long>(d[k])) valid = false;
          else s[k] = static_cast<std::size_t>(idx);
        }
        if (valid && w != 0.0) acc += w * static_cast<double>(image[c * n + linear(d, s)]);
      }
      out_image[c * n + dst] = static_cast<T>(acc);
    }
  });
  return {std::move(out_image), std::move(out_labels)};
}

void check_window(const Dims3& dims, const Dims3& offsets, const Dims3& extents) {
  for (int k = 0; k < 3; ++k)
    if (extents[k] == 0 || offsets[k] + extents[k] > dims[k])
      throw Error("crop window at " + to_string(offsets) + " of size " + to_string(extents) +
                  " exceeds volume " + to_string(dims));
}

Dims3 reduced(const Dims3& d, std::size_t factor) {
  if (factor == 0) throw Error("downsample factor must be >= 1");
  return {std::max<std::size_t>(1, d[0] / factor), std::max<std::size_t>(1, d[1] / factor),
          std::max<std::size_t>(1, d[2] / factor)};
}

}  // namespace

TransformDraw draw_transform(std::mt19937_64& rng) {
  TransformDraw t;
  std::uniform_int_distribution<int> kind(0, 2), three(0, 2);
  switch (kind(rng)) {
    case 0:
      break;
    case 1:
      t.kind = TransformKind::flip;
      t.axis = three(rng);
      break;
    default: {
      static constexpr std::array<std::array<int, 2>, 3> planes{{{0, 1}, {0, 2}, {1, 2}}};
      t.kind = TransformKind::rotate;
      t.plane = planes[static_cast<std::size_t>(three(rng))];
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      t.angle = angle(rng);
      break;
    }
  }
  return t;
}

template <typename T>
std::pair<Tensor<T>, LabelVolume> apply_transform(const TransformDraw& t, const Tensor<T>& image,
                                                  const LabelVolume& labels) {
  require_congruent(image, labels, "apply_transform");
  switch (t.kind) {
    case TransformKind::identity:
      return {image, labels};
    case TransformKind::flip:
      require_axis(t.axis, "flip");
      return flip(t.axis, image, labels);
    case TransformKind::rotate:
      require_axis(t.plane[0], "rotate");
      require_axis(t.plane[1], "rotate");
      if (t.plane[0] == t.plane[1]) throw Error("rotate: plane axes must be distinct");
      return rotate(t.plane, t.angle, image, labels);
  }
  throw Error("apply_transform: unknown transform kind");
}

template <typename T>
Tensor<T> crop(const Tensor<T>& v, const Dims3& offsets, const Dims3& extents) {
  if (v.rank() != 4) throw Error("crop: expected (C, D, H, W), got " + to_string(v.shape()));
  check_window(v.dims(), offsets, extents);
  Tensor<T> out = Tensor<T>::volume(v.channels(), extents);
  for (std::size_t c = 0; c < v.channels(); ++c)
    for (std::size_t z = 0; z < extents[0]; ++z)
      for (std::size_t y = 0; y < extents[1]; ++y)
        for (std::size_t x = 0; x < extents[2]; ++x)
          out.at(c, z, y, x) = v.at(c, z + offsets[0], y + offsets[1], x + offsets[2]);
  return out;
}

LabelVolume crop(const LabelVolume& v, const Dims3& offsets, const Dims3& extents) {
  check_window(v.dims, offsets, extents);
  LabelVolume out(extents, v.class_count);
  for (std::size_t z = 0; z < extents[0]; ++z)
    for (std::size_t y = 0; y < extents[1]; ++y)
      for (std::size_t x = 0; x < extents[2]; ++x)
        out.at(z, y, x) = v.at(z + offsets[0], y + offsets[1], x + offsets[2]);
  return out;
}

template <typename T>
Tensor<T> downsample(const Tensor<T>& v, std::size_t factor) {
  const Dims3 dims = detail::as_volume(v, "downsample").second;
  return resample_trilinear(v, reduced(dims, factor));
}

LabelVolume downsample(const LabelVolume& v, std::size_t factor) { return resample_nearest(v, reduced(v.dims, factor)); }

Dims3 centered_crop_offsets(const Dims3& dims, const Dims3& extents) {
  Dims3 off{};
  for (int k = 0; k < 3; ++k) {
    if (extents[k] > dims[k])
      throw Error("crop extents " + to_string(extents) + " exceed volume " + to_string(dims));
    off[k] = (dims[k] - extents[k]) / 2;
  }
  return off;
}

Dims3 floor_to_multiple(const Dims3& dims, std::size_t multiple) {
  Dims3 out{};
  for (int k = 0; k < 3; ++k) {
    out[k] = dims[k] / multiple * multiple;
    if (out[k] == 0)
      throw Error("extent " + std::to_string(dims[k]) + " is smaller than the multiple " + std::to_string(multiple));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, LabelVolume> mirror_hemisphere(const Tensor<T>& image, const LabelVolume& labels, int axis,
                                                    SourceHalf source) {
  require_congruent(image, labels, "mirror_hemisphere");
  require_axis(axis, "mirror_hemisphere");
  const Dims3 d = labels.dims;
  const std::size_t n = volume(d), e = d[axis];
  // Lower source keeps [0, ceil(e/2)); upper keeps [floor(e/2), e).
  auto in_source = [&](std::size_t i) { return source == SourceHalf::lower ? i < (e + 1) / 2 : i >= e / 2; };

  std::size_t violations = 0;
  for_each_voxel(d, [&](const Index3& p) {
    if (in_source(p[axis]) && labels.labels[linear(d, p)] != 0) ++violations;
  });
  if (violations > 0)
    throw Error("mirror_hemisphere: source half contains " + std::to_string(violations) + " foreground voxels");

  Tensor<T> out_image(image.shape());
  LabelVolume out_labels(d, labels.class_count);
  for_each_voxel(d, [&](const Index3& p) {
    Index3 q = p;
    if (!in_source(p[axis])) q[axis] = e - 1 - p[axis];
    const std::size_t dst = linear(d, p), src = linear(d, q);
    out_labels.labels[dst] = labels.labels[src];
    for (std::size_t c = 0; c < image.channels(); ++c) out_image[c * n + dst] = image[c * n + src];
  });
  return {std::move(out_image), std::move(out_labels)};
}

#define VSEG_INSTANTIATE_AUGMENT(T)                                                                              \
  template std::pair<Tensor<T>, LabelVolume> apply_transform(const TransformDraw&, const Tensor<T>&,             \
                                                             const LabelVolume&);                                \
  template Tensor<T> crop(const Tensor<T>&, const Dims3&, const Dims3&);                                         \
  template Tensor<T> downsample(const Tensor<T>&, std::size_t);                                                  \
  template std::pair<Tensor<T>, LabelVolume> mirror_hemisphere(const Tensor<T>&, const LabelVolume&, int,        \
                                                               SourceHalf);

VSEG_INSTANTIATE_AUGMENT(float)
VSEG_INSTANTIATE_AUGMENT(double)

}  // namespace vseg
