#include "vseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace vseg {

namespace {

using Point = std::array<double, 3>;

Sample<float> blank(const Dims3& dims, int class_count) {
  return Sample<float>{Tensor<float>::volume(1, dims), LabelVolume(dims, class_count), ""};
}

template <typename Inside>
void paint(Sample<float>& s, int label, double intensity, Inside&& inside) {
  const Dims3 d = s.labels.dims;
  for (std::size_t z = 0; z < d[0]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[2]; ++x) {
        if (!inside(Point{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)})) continue;
        s.labels.at(z, y, x) = static_cast<std::uint8_t>(label);
        s.image.at(0, z, y, x) = static_cast<float>(intensity);
      }
}

void add_noise(Sample<float>& s, double noise_std, std::mt19937_64& rng) {
  if (noise_std <= 0) return;
  std::normal_distribution<double> noise(0.0, noise_std);
  for (float& v : s.image.values()) v = static_cast<float>(v + noise(rng));
}

double distance_to_segment(const Point& p, const Point& a, const Point& b) {
  Point ab{}, ap{};
  double len2 = 0, t = 0;
  for (int k = 0; k < 3; ++k) {
    ab[k] = b[k] - a[k];
    ap[k] = p[k] - a[k];
    len2 += ab[k] * ab[k];
    t += ap[k] * ab[k];
  }
  t = len2 > 0 ? std::clamp(t / len2, 0.0, 1.0) : 0.0;
  double d2 = 0;
  for (int k = 0; k < 3; ++k) {
    const double r = ap[k] - t * ab[k];
    d2 += r * r;
  }
  return std::sqrt(d2);
}

}  // namespace

Sample<float> synth_sphere(const Dims3& dims, double radius, double noise_std, std::mt19937_64& rng) {
  Sample<float> s = blank(dims, 2);
  const Point c{(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0};
  paint(s, 1, 1.0, [&](const Point& p) {
    double r2 = 0;
    for (int k = 0; k < 3; ++k) r2 += (p[k] - c[k]) * (p[k] - c[k]);
    return r2 <= radius * radius;
  });
  add_noise(s, noise_std, rng);
  s.name = "sphere";
  return s;
}

Sample<float> synth_spheres(const SynthOptions& opts, std::mt19937_64& rng) {
  if (opts.class_count < 2) throw Error("synth_spheres needs at least 2 classes");
  Sample<float> s = blank(opts.dims, opts.class_count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < opts.class_count; ++c) {
    Point centre{}, radii{};
    for (int k = 0; k < 3; ++k) {
      const double e = static_cast<double>(opts.dims[k]);
      radii[k] = std::max(1.0, e * (0.12 + 0.15 * unit(rng)));
      centre[k] = radii[k] + unit(rng) * std::max(0.0, e - 1.0 - 2.0 * radii[k]);
    }
    paint(s, c, static_cast<double>(c) / (opts.class_count - 1), [&](const Point& p) {
      double q = 0;
      for (int k = 0; k < 3; ++k) q += std::pow((p[k] - centre[k]) / radii[k], 2);
      return q <= 1.0;
    });
  }
  add_noise(s, opts.noise_std, rng);
  return s;
}

std::vector<double> hand_like_frequencies(const HandLikeOptions& shape, int class_count) {
  const std::size_t n = static_cast<std::size_t>(std::max(0, class_count - 1));
  if (!shape.frequencies.empty()) {
    if (shape.frequencies.size() != n)
      throw Error("hand-like frequencies list " + std::to_string(shape.frequencies.size()) + " values for " +
                  std::to_string(n) + " foreground classes");
    return shape.frequencies;
  }
  std::vector<double> f;
  for (std::size_t c = 0; c < n; ++c)
    f.push_back(c < kHandBoneFrequencies.size() ? kHandBoneFrequencies[c] : f.back() / 2);
  return f;
}

Sample<float> synth_hand_like(const SynthOptions& opts, const HandLikeOptions& shape, std::mt19937_64& rng) {
  if (opts.class_count < 2) throw Error("synth_hand_like needs at least 2 classes");
  if (shape.chains == 0) throw Error("synth_hand_like needs at least one chain");
  if (!(shape.aspect > 0)) throw Error("synth_hand_like needs a positive aspect");
  const std::vector<double> freq = hand_like_frequencies(shape, opts.class_count);
  for (double f : freq)
    if (!(f > 0 && f < 1)) throw Error("hand-like frequencies must lie in (0, 1)");

  const Dims3 d = opts.dims;
  Sample<float> s = blank(d, opts.class_count);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double D = static_cast<double>(d[0]), H = static_cast<double>(d[1]), W = static_cast<double>(d[2]);
  const double voxels = D * H * W;

  const Point tissue_c{(D - 1) / 2, (H - 1) / 2, (W - 1) / 2};
  const Point tissue_r{0.35 * D, 0.42 * H, 0.45 * W};
  paint(s, 0, 0.25, [&](const Point& p) {
    double q = 0;
    for (int k = 0; k < 3; ++k) q += std::pow((p[k] - tissue_c[k]) / tissue_r[k], 2);
    return q <= 1.0;
  });

  // A capsule of radius r and length a*r holds pi r^3 (a + 4/3) voxels.
  std::vector<double> radii;
  for (double f : freq)
    radii.push_back(std::cbrt(f * voxels / static_cast<double>(shape.chains) /
                              (std::numbers::pi * (shape.aspect + 4.0 / 3.0))));

  const double spacing = H / static_cast<double>(shape.chains + 1);
  for (std::size_t chain = 0; chain < shape.chains; ++chain) {
    const double z = (D - 1) / 2 + 0.05 * D * jitter(rng);
    const double y = spacing * static_cast<double>(chain + 1) + 0.1 * spacing * jitter(rng);
    double x = 0.1 * W + 0.03 * W * jitter(rng);
    for (int c = 1; c < opts.class_count; ++c) {
      const double r = radii[static_cast<std::size_t>(c - 1)] * (1.0 + 0.1 * jitter(rng));
      const double length = shape.aspect * r;
      const Point a{z, y, x + r}, b{z, y, x + r + length};
      const double shade = shape.bone_intensity > 0 ? shape.bone_intensity
                                                     : 0.5 + 0.5 * static_cast<double>(c) / (opts.class_count - 1);
      paint(s, c, shade, [&](const Point& p) { return distance_to_segment(p, a, b) <= r; });
      x += length + 2.0 * r + 1.0;
    }
  }
  add_noise(s, opts.noise_std, rng);
  return s;
}

}  // namespace vseg
