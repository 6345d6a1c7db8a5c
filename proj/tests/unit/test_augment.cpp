#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_support.hpp"
#include "vseg/augment.hpp"

using namespace vseg;

namespace {

TransformDraw flip(int axis) { return TransformDraw{TransformKind::flip, axis, {-1, -1}, 0.0}; }
TransformDraw rotation(int a, int b, double angle) { return TransformDraw{TransformKind::rotate, -1, {a, b}, angle}; }

std::size_t& along(Dims3& p, int axis) { return p[static_cast<std::size_t>(axis)]; }

}  // namespace

TEST_CASE("flipping twice is the identity, bit for bit") {
  auto img = random_tensor<float>({2, 5, 6, 7}, 1);
  auto lab = random_labels({5, 6, 7}, 4, 2);
  for (int axis = 0; axis < 3; ++axis) {
    auto [i1, l1] = apply_transform(flip(axis), img, lab);
    CHECK_FALSE(i1 == img);
    auto [i2, l2] = apply_transform(flip(axis), i1, l1);
    CHECK(i2 == img);
    CHECK(l2 == lab);
  }
}

TEST_CASE("flip reverses one axis") {
  auto lab = random_labels({3, 4, 5}, 3, 3);
  auto img = random_tensor<double>({1, 3, 4, 5}, 4);
  auto [i, l] = apply_transform(flip(1), img, lab);
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w) {
        CHECK(l.at(d, h, w) == lab.at(d, 3 - h, w));
        CHECK(i.at(0, d, h, w) == img.at(0, d, 3 - h, w));
      }
}

TEST_CASE("right-angle rotation permutes indices") {
  const int planes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (const auto& pl : planes)
    for (std::size_t n : {4, 5}) {
      Dims3 dims{3, 3, 3};
      along(dims, pl[0]) = along(dims, pl[1]) = n;
      auto lab = random_labels(dims, 5, n + static_cast<std::size_t>(pl[0] * 3 + pl[1]));
      auto img = random_tensor<double>({1, dims[0], dims[1], dims[2]}, 7);
      auto [ri, rl] = apply_transform(rotation(pl[0], pl[1], std::numbers::pi / 2), img, lab);
      for (std::size_t d = 0; d < dims[0]; ++d)
        for (std::size_t h = 0; h < dims[1]; ++h)
          for (std::size_t w = 0; w < dims[2]; ++w) {
            Dims3 p{d, h, w}, q = p;
            along(q, pl[0]) = along(p, pl[1]);
            along(q, pl[1]) = n - 1 - along(p, pl[0]);
            CHECK(rl.at(d, h, w) == lab.at(q[0], q[1], q[2]));
            CHECK(ri.at(0, d, h, w) == doctest::Approx(img.at(0, q[0], q[1], q[2])).epsilon(1e-12));
          }
    }
}

TEST_CASE("rotation by zero is the identity; four quarter turns come back") {
  auto lab = random_labels({4, 4, 4}, 3, 9);
  auto img = random_tensor<float>({1, 4, 4, 4}, 10);
  auto [i0, l0] = apply_transform(rotation(0, 2, 0.0), img, lab);
  CHECK(i0 == img);
  CHECK(l0 == lab);
  LabelVolume l = lab;
  Tensor<float> i = img;
  for (int k = 0; k < 4; ++k) std::tie(i, l) = apply_transform(rotation(1, 2, std::numbers::pi / 2), i, l);
  CHECK(l == lab);
}

TEST_CASE("rotation fills uncovered voxels with background") {
  LabelVolume lab({1, 8, 8}, 2, 1);
  auto img = Tensor<float>::volume(1, {1, 8, 8}, 1.0f);
  auto [i, l] = apply_transform(rotation(1, 2, std::numbers::pi / 4), img, lab);
  CHECK(l.at(0, 0, 0) == 0);
  CHECK(i.at(0, 0, 0, 0) == 0.0f);
  CHECK(l.at(0, 4, 4) == 1);
  for (auto v : l.labels) CHECK(v < 2);
}

TEST_CASE("transform kinds are drawn uniformly") {
  std::mt19937_64 rng(123);
  const int n = 30000;
  int kinds[3] = {}, axes[3] = {}, planes[3] = {};
  double angle_sum = 0;
  for (int i = 0; i < n; ++i) {
    auto t = draw_transform(rng);
    ++kinds[static_cast<int>(t.kind)];
    if (t.kind == TransformKind::flip) ++axes[t.axis];
    if (t.kind == TransformKind::rotate) {
      ++planes[t.plane[0] + t.plane[1] - 1];
      CHECK(t.plane[0] < t.plane[1]);
      CHECK(t.angle >= 0);
      CHECK(t.angle < 2 * std::numbers::pi);
      angle_sum += t.angle;
    }
  }
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int k : kinds) CHECK(std::abs(k - n / 3.0) < 3 * sigma);
  const double sub_sigma = std::sqrt(kinds[1] * (1.0 / 3) * (2.0 / 3));
  for (int a : axes) CHECK(std::abs(a - kinds[1] / 3.0) < 3 * sub_sigma);
  for (int p : planes) CHECK(std::abs(p - kinds[2] / 3.0) < 3 * std::sqrt(kinds[2] * 2.0 / 9));
  CHECK(angle_sum / kinds[2] == doctest::Approx(std::numbers::pi).epsilon(0.03));
}

TEST_CASE("mirror_hemisphere builds a symmetric healthy volume") {
  const Dims3 dims{4, 6, 7};
  auto img = random_tensor<float>({2, 4, 6, 7}, 11);
  LabelVolume lab(dims, 5);
  lab.at(1, 2, 5) = 3;
  lab.at(2, 4, 6) = 1;
  auto [i, l] = mirror_hemisphere(img, lab, 2, SourceHalf::lower);
  for (auto v : l.labels) CHECK(v == 0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t h = 0; h < 6; ++h)
        for (std::size_t w = 0; w < 7; ++w) {
          CHECK(i.at(c, d, h, w) == i.at(c, d, h, 6 - w));
          if (w <= 3) CHECK(i.at(c, d, h, w) == img.at(c, d, h, w));
        }
  CHECK_THROWS_AS(mirror_hemisphere(img, lab, 2, SourceHalf::upper), Error);
  lab.at(0, 0, 0) = 2;
  CHECK_THROWS_AS(mirror_hemisphere(img, lab, 2, SourceHalf::lower), Error);
}

TEST_CASE("crop and preprocessing helpers") {
  auto img = random_tensor<float>({1, 6, 6, 6}, 12);
  auto c = crop(img, {1, 2, 3}, {2, 3, 3});
  CHECK(c.shape() == Shape{1, 2, 3, 3});
  CHECK(c.at(0, 1, 2, 2) == img.at(0, 2, 4, 5));
  CHECK_THROWS_AS(crop(img, {5, 0, 0}, {2, 2, 2}), Error);

  CHECK(centered_crop_offsets({10, 9, 8}, {8, 8, 8}) == Dims3{1, 0, 0});
  CHECK(floor_to_multiple({17, 8, 31}, 8) == Dims3{16, 8, 24});

  LabelVolume lab = random_labels({8, 4, 2}, 3, 13);
  CHECK(downsample(lab, 2).dims == Dims3{4, 2, 1});
  CHECK(downsample(img, 4).shape() == Shape{1, 1, 1, 1});
}
