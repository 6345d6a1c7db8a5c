#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "vseg/optim.hpp"
#include "vseg/synth.hpp"

using namespace vseg;

namespace {

ArchSpec tiny_spec(std::size_t classes = 2) {
  ArchSpec s;
  s.class_count = classes;
  s.widths.fill(2);
  return s;
}

std::vector<Sample<float>> spheres(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample<float>> out;
  for (std::size_t i = 0; i < n; ++i) {
    SynthOptions o;
    o.dims = {8, 8, 8};
    o.class_count = 2;
    out.push_back(synth_spheres(o, rng));
    out.back().name = "case" + std::to_string(i);
  }
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.adam.learning_rate = 1e-2;
  return c;
}

}  // namespace

TEST_CASE("first Adam step moves by lr * g / (|g| + eps)") {
  AdamConfig cfg;
  AdamState<double> state(cfg);
  Tensor<double> p({3}, {1.0, -2.0, 0.5});
  const Tensor<double> g({3}, {0.5, -0.25, 1e-3});
  Tensor<double>* params[] = {&p};
  adam_step<double>(params, std::span<const Tensor<double>>(&g, 1), state);
  const double expected[] = {1.0 - cfg.learning_rate * 0.5 / (0.5 + cfg.epsilon),
                             -2.0 + cfg.learning_rate * 0.25 / (0.25 + cfg.epsilon),
                             0.5 - cfg.learning_rate * 1e-3 / (1e-3 + cfg.epsilon)};
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  CHECK(state.step == 1);

  // A constant gradient keeps the bias-corrected moments at g and g^2.
  const double before = p[0];
  adam_step<double>(params, std::span<const Tensor<double>>(&g, 1), state);
  CHECK(before - p[0] == doctest::Approx(cfg.learning_rate * 0.5 / (0.5 + cfg.epsilon)).epsilon(1e-12));
}

TEST_CASE("zero learning rate or zero gradient leaves parameters unchanged") {
  Tensor<double> p = random_tensor<double>({5}, 1);
  const Tensor<double> orig = p;
  Tensor<double>* params[] = {&p};

  AdamConfig still;
  still.learning_rate = 0;
  AdamState<double> s1(still);
  const Tensor<double> g = random_tensor<double>({5}, 2);
  for (int i = 0; i < 3; ++i) adam_step<double>(params, std::span<const Tensor<double>>(&g, 1), s1);
  CHECK(p == orig);

  AdamState<double> s2{AdamConfig{}};
  const Tensor<double> zero({5}, 0.0);
  for (int i = 0; i < 3; ++i) adam_step<double>(params, std::span<const Tensor<double>>(&zero, 1), s2);
  CHECK(p == orig);
}

TEST_CASE("Adam rejects bad settings and mismatched gradients") {
  AdamConfig c;
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = AdamConfig{};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), Error);

  AdamState<double> s{AdamConfig{}};
  Tensor<double> p({2});
  Tensor<double>* params[] = {&p};
  const Tensor<double> g({3});
  CHECK_THROWS_AS(adam_step<double>(params, std::span<const Tensor<double>>(&g, 1), s), Error);
}

TEST_CASE("fold ranges partition the dataset") {
  auto r = fold_ranges(10, 3);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(r[1] == std::pair<std::size_t, std::size_t>{4, 7});
  CHECK(r[2] == std::pair<std::size_t, std::size_t>{7, 10});
  CHECK_THROWS_AS(fold_ranges(2, 3), Error);
}

TEST_CASE("patience zero stops after one epoch") {
  auto data = spheres(2, 1);
  TrainConfig c = quick(5);
  c.patience = 0;
  auto r = train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(data), {}, c);
  CHECK(r.epochs.size() == 1);
  CHECK(r.iterations.size() == 2);
}

TEST_CASE("training records and auxiliary losses") {
  auto data = spheres(2, 2);
  TrainConfig c = quick(2);
  c.aux_weights = {0.5, 0.25};
  std::size_t calls = 0;
  auto r = train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(data), {}, c,
                 [&](const IterationRecord&) { ++calls; });
  CHECK(calls == 4);
  for (const auto& it : r.iterations) {
    REQUIRE(it.aux_losses.size() == 2);
    CHECK(it.total_loss == doctest::Approx(it.fused_loss + 0.5 * it.aux_losses[0] + 0.25 * it.aux_losses[1]));
  }
  CHECK(r.epochs.size() == 2);
  CHECK(r.epochs[0].train_loss ==
        doctest::Approx((r.iterations[0].total_loss + r.iterations[1].total_loss) / 2));

  c.aux_weights = {0, 0};
  auto plain = train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(data), {}, c);
  for (const auto& it : plain.iterations) {
    CHECK(it.aux_losses.empty());
    CHECK(it.total_loss == it.fused_loss);
  }
}

TEST_CASE("training is deterministic and seed dependent") {
  auto data = spheres(3, 3);
  TrainConfig c = quick(2);
  c.seed = 11;
  auto run = [&] {
    return train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(data), {}, c);
  };
  auto a = run(), b = run();
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) CHECK(a.iterations[i].fused_loss == b.iterations[i].fused_loss);
  auto pa = a.last.parameters(), pb = b.last.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor == *pb[i].tensor);
  c.seed = 12;
  auto d = run();
  bool differs = false;
  for (std::size_t i = 0; i < a.iterations.size(); ++i) differs |= a.iterations[i].fused_loss != d.iterations[i].fused_loss;
  CHECK(differs);
}

TEST_CASE("the best snapshot tracks the lowest validation loss") {
  auto data = spheres(2, 4), val = spheres(1, 5);
  auto r = train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(data),
                 std::span<const Sample<float>>(val), quick(4));
  double best = INFINITY;
  for (const auto& e : r.epochs) best = std::min(best, e.val_loss);
  CHECK(r.best_val_loss == best);
  CHECK(r.epochs[r.best_epoch - r.epochs.front().epoch].val_loss == best);
  CHECK(evaluate_mean_loss(r.best, std::span<const Sample<float>>(val), LossOptions{}) == doctest::Approx(best));
}

TEST_CASE("training input checks") {
  auto data = spheres(1, 6);
  CHECK_THROWS_AS(train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(), {}, quick(1)),
                  Error);
  Sample<float> odd{Tensor<float>::volume(1, {12, 8, 8}), LabelVolume({12, 8, 8}, 2), "odd"};
  std::vector<Sample<float>> bad{odd};
  CHECK_THROWS_AS(train(Network<float>::build(tiny_spec(), 1), std::span<const Sample<float>>(bad), {}, quick(1)),
                  Error);
  TrainConfig c = quick(1);
  c.patience = 2;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("two-fold cross-validation on four volumes") {
  auto data = spheres(4, 7);
  TrainConfig c = quick(1);
  auto r = crossval(tiny_spec(), std::span<const Sample<float>>(data), 2, c, RegionMap::per_class(2));
  CHECK(r.nets.size() == 2);
  REQUIRE(r.folds.size() == 2);
  CHECK(r.folds[0].test_indices == std::vector<std::size_t>{0, 1});
  CHECK(r.folds[1].test_indices == std::vector<std::size_t>{2, 3});
  CHECK(r.region_names == std::vector<std::string>{"class1", "foreground"});
  CHECK(r.mean_dice.size() == 2);
  for (const auto& f : r.folds) {
    std::uint64_t voxels = 0;
    const auto& k = f.regions[0].counts;
    voxels = k.tp + k.fp + k.fn + k.tn;
    CHECK(voxels == 2 * 512);
  }
  CHECK_THROWS_AS(crossval(tiny_spec(), std::span<const Sample<float>>(data), 1, c, RegionMap::per_class(2)), Error);
}

TEST_CASE("threaded folds reproduce sequential folds") {
  auto data = spheres(4, 8);
  TrainConfig c = quick(1);
  auto seq = crossval(tiny_spec(), std::span<const Sample<float>>(data), 2, c, RegionMap::per_class(2), 1);
  auto par = crossval(tiny_spec(), std::span<const Sample<float>>(data), 2, c, RegionMap::per_class(2), 2);
  for (std::size_t f = 0; f < 2; ++f) {
    auto a = seq.nets[f].parameters(), b = par.nets[f].parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].tensor == *b[i].tensor);
  }
}
