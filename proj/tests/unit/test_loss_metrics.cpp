#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/loss_metrics.hpp"

using namespace vseg;

namespace {

std::vector<double> random_mask(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  std::vector<double> m(n);
  for (double& v : m) v = b(rng) ? 1.0 : 0.0;
  return m;
}

Tensor<double> probs_from_labels(const LabelVolume& l, double on, double off) {
  Tensor<double> p = one_hot<double>(l);
  for (double& v : p.values()) v = v > 0 ? on : off;
  return p;
}

}  // namespace

TEST_CASE("overlap of a hand example") {
  const std::vector<double> p{1, 1, 0, 0}, t{1, 0, 1, 0};
  CHECK(jaccard<double>(p, t) == doctest::Approx(1.0 / 3.0));
  CHECK(dice<double>(p, t) == doctest::Approx(0.5));
}

TEST_CASE("dice equals 2 jaccard / (1 + jaccard) on binary masks") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_mask(64, density(rng), rng), t = random_mask(64, density(rng), rng);
    const double j = jaccard<double>(p, t), d = dice<double>(p, t);
    CHECK(std::abs(d - 2 * j / (1 + j)) < 1e-6);
  }
}

TEST_CASE("per-class jaccard loss bounds") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    LabelVolume t = random_labels({3, 3, 3}, 3, i);
    Tensor<double> p({3, 3, 3, 3});
    for (double& v : p.values()) v = u(rng);
    const int classes[] = {0, 1, 2};
    auto l = jaccard_loss(p, t, classes);
    for (double c : l.per_class) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }
}

TEST_CASE("empty target with a non-empty prediction costs a full class") {
  LabelVolume t({2, 2, 2}, 2);  // all background
  Tensor<double> p = Tensor<double>::volume(2, {2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) p[8 + i] = 0.9;
  const int fg[] = {1};
  CHECK(jaccard_loss(p, t, fg).total > 0.99);

  Tensor<double> none = Tensor<double>::volume(2, {2, 2, 2});
  CHECK(jaccard_loss(none, t, fg).total < 1e-3);
}

TEST_CASE("perfect predictions") {
  LabelVolume t = random_labels({4, 4, 4}, 3, 3);
  auto p = probs_from_labels(t, 1.0, 0.0);
  const auto fg = foreground_classes(3);
  CHECK(jaccard_loss(p, t, fg).total == doctest::Approx(0.0));
  CHECK(cross_entropy(p, t) < 1e-6);
  Tensor<double> uniform = Tensor<double>::volume(3, t.dims, 1.0 / 3.0);
  CHECK(cross_entropy(uniform, t) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("jaccard loss uses sigmoid probabilities, cross-entropy softmax") {
  auto scores = random_tensor<double>({3, 2, 2, 2}, 4, -3, 3);
  LabelVolume t = random_labels({2, 2, 2}, 3, 5);
  LossOptions j;
  const auto fg = foreground_classes(3);
  CHECK(evaluate_loss(scores, t, j).value == doctest::Approx(jaccard_loss(sigmoid(scores), t, fg).total));
  LossOptions ce;
  ce.kind = LossKind::cross_entropy;
  CHECK(evaluate_loss(scores, t, ce).value == doctest::Approx(cross_entropy(softmax_channels(scores), t)));
  CHECK(evaluate_loss(scores, t, ce).per_class.empty());
}

TEST_CASE("default class set is the foreground") {
  CHECK(foreground_classes(4) == std::vector<int>{1, 2, 3});
  CHECK(all_classes(3) == std::vector<int>{0, 1, 2});
  auto scores = random_tensor<double>({3, 2, 2, 2}, 6);
  LabelVolume t = random_labels({2, 2, 2}, 3, 7);
  CHECK(evaluate_loss(scores, t, LossOptions{}).per_class.size() == 2);
}

TEST_CASE("loss gradients agree with finite differences") {
  GradCheckOptions opts;
  opts.instances = 5;
  for (const std::string name : {"jaccard_loss", "cross_entropy_loss"}) {
    CAPTURE(name);
    auto r = run_gradcheck(name, opts);
    CAPTURE(r.worst);
    CHECK(r.passed);
  }
}

TEST_CASE("confusion counts equal a brute-force confusion matrix") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LabelVolume pred = random_labels({4, 3, 5}, 5, seed), truth = random_labels({4, 3, 5}, 5, seed + 100);
    std::uint64_t matrix[5][5] = {};
    for (std::size_t i = 0; i < pred.size(); ++i) ++matrix[truth.labels[i]][pred.labels[i]];
    const std::vector<std::vector<int>> regions{{1}, {1, 2, 3, 4}, {1, 3, 4}, {4}, {0}};
    for (const auto& region : regions) {
      auto in = [&](int c) { return std::find(region.begin(), region.end(), c) != region.end(); };
      ConfusionCounts ref;
      for (int t = 0; t < 5; ++t)
        for (int p = 0; p < 5; ++p) {
          auto& slot = in(t) ? (in(p) ? ref.tp : ref.fn) : (in(p) ? ref.fp : ref.tn);
          slot += matrix[t][p];
        }
      CHECK(confusion_counts(pred, truth, region) == ref);
    }
  }
}

TEST_CASE("metrics from counts") {
  auto m = metrics_from_counts({2, 2, 1, 5});
  CHECK(*m.dice == doctest::Approx(4.0 / 7.0));
  CHECK(*m.precision == doctest::Approx(0.5));
  CHECK(*m.sensitivity == doctest::Approx(2.0 / 3.0));
  CHECK(*m.specificity == doctest::Approx(5.0 / 7.0));

  auto empty = metrics_from_counts({0, 0, 0, 8});
  CHECK_FALSE(empty.dice.has_value());
  CHECK_FALSE(empty.precision.has_value());
  CHECK_FALSE(empty.sensitivity.has_value());
  CHECK(*empty.specificity == 1.0);
}

TEST_CASE("identical volumes score one") {
  LabelVolume v = random_labels({4, 4, 4}, 5, 9);
  for (const auto& [name, region] : RegionMap::brats().regions) {
    auto m = confusion_metrics(v, v, region);
    CHECK(*m.dice == 1.0);
    CHECK(*m.precision == 1.0);
    CHECK(*m.sensitivity == 1.0);
  }
}

TEST_CASE("region maps") {
  auto b = RegionMap::brats();
  CHECK(b.at("whole") == std::vector<int>{1, 2, 3, 4});
  CHECK(b.at("core") == std::vector<int>{1, 3, 4});
  CHECK(b.at("enhanced") == std::vector<int>{4});
  CHECK_THROWS_AS(b.validate(3), Error);
  auto p = RegionMap::per_class(3);
  CHECK(p.at("class2") == std::vector<int>{2});
  CHECK(p.at("foreground") == std::vector<int>{1, 2});
}

TEST_CASE("class frequencies of a labelled octant") {
  LabelVolume v({4, 4, 4}, 2);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 2; ++w) v.at(d, h, w) = 1;
  LabelVolume empty({4, 4, 4}, 2);
  const LabelVolume set[] = {v, empty};
  auto f = class_frequencies(set);
  CHECK(f[0] == doctest::Approx((7.0 / 8.0 + 1.0) / 2));
  CHECK(f[1] == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("multiclass reference jaccard") {
  LabelVolume zero({2, 2, 2}, 3);
  CHECK(multiclass_jaccard_reference(zero, zero) == 1.0);
  LabelVolume a({1, 1, 2}, 3, std::vector<std::uint8_t>{1, 2}), b({1, 1, 2}, 3, std::vector<std::uint8_t>{2, 2});
  CHECK(multiclass_jaccard_reference(a, b) == doctest::Approx(3.0 / 4.0));
}
