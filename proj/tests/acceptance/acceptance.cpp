// Acceptance gate: one PASS/FAIL line per criterion.
//   vseg_acceptance            runs every criterion
//   vseg_acceptance 3 8        runs the listed ones
// Exit status is 0 iff every criterion run passed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "test_support.hpp"
#include "vseg/augment.hpp"
#include "vseg/commands.hpp"
#include "vseg/config.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/io.hpp"
#include "vseg/optim.hpp"
#include "vseg/rf.hpp"
#include "vseg/synth.hpp"

using namespace vseg;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (passed) detail = what;
      passed = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// 1. Receptive-field table.
Outcome receptive_field_table() {
  Outcome o;
  const auto t0 = Clock::now();
  const std::string table = rf_report(ArchSpec{}, {128, 128, 96}, false);
  const double elapsed = seconds_since(t0);

  struct Row {
    int ordinal;
    Dims3 in, out;
    std::size_t rf, features;
  };
  const Row published[] = {
      {1, {128, 128, 96}, {128, 128, 96}, 3, 8},   {2, {128, 128, 96}, {64, 64, 48}, 5, 8},
      {3, {64, 64, 48}, {64, 64, 48}, 9, 16},      {4, {64, 64, 48}, {32, 32, 24}, 13, 32},
      {5, {32, 32, 24}, {32, 32, 24}, 21, 32},     {6, {32, 32, 24}, {16, 16, 12}, 29, 64},
      {7, {16, 16, 12}, {16, 16, 12}, 45, 64},     {9, {16, 16, 12}, {32, 32, 24}, 53, 32},
      {10, {32, 32, 24}, {32, 32, 24}, 61, 64},    {12, {32, 32, 24}, {64, 64, 48}, 65, 16},
      {13, {64, 64, 48}, {64, 64, 48}, 69, 32},    {15, {64, 64, 48}, {128, 128, 96}, 71, 8},
      {16, {128, 128, 96}, {128, 128, 96}, 73, 16},
  };
  const auto rows = receptive_field_trace(ArchSpec{}, {128, 128, 96});
  o.require(rows.size() == std::size(published), "row count " + std::to_string(rows.size()));
  for (std::size_t i = 0; i < rows.size() && i < std::size(published); ++i) {
    const Row& p = published[i];
    const RfRow& r = rows[i];
    o.require(r.ordinal == p.ordinal && r.input == p.in && r.output == p.out && r.receptive_field == p.rf &&
                  r.features == p.features,
              "row " + std::to_string(p.ordinal) + " differs");
    const std::string cell = std::to_string(p.rf) + "x" + std::to_string(p.rf) + "x" + std::to_string(p.rf);
    o.require(table.find(cell) != std::string::npos, "table text lacks " + cell);
  }
  o.require(elapsed < 1.0, "took " + fmt(elapsed) + " s");
  if (o.passed) o.detail = "13 rows match, receptive field 3..73, " + fmt(elapsed * 1e3, 2) + " ms";
  return o;
}

// 2. Gradient correctness.
Outcome gradient_correctness() {
  Outcome o;
  GradCheckOptions opts;  // 20 instances, h = 1e-5, tolerance 1e-4
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t checks = 0;
  for (const GradCheckReport& r : run_gradcheck_suite(opts)) {
    ++checks;
    worst = std::max(worst, r.max_error);
    o.require(r.passed && r.instances >= 20, r.name + ": " + r.worst);
  }
  const double elapsed = seconds_since(t0);
  o.require(checks == 22, std::to_string(checks) + " checks");
  o.require(elapsed < 300, "took " + fmt(elapsed) + " s");
  if (o.passed)
    o.detail = std::to_string(checks) + " checks x 20 instances, max relative error " + fmt(worst) + ", " +
               fmt(elapsed, 2) + " s";
  return o;
}

// 3. Oracle equivalences.
Outcome oracle_equivalences() {
  Outcome o;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto x = random_tensor<float>({2, 8, 4, 6}, s);
    auto p = random_conv<float>(2, 3, 3, s + 100);
    o.require(conv3d_forward(x, p) == naive_conv(x, p), "conv vs naive loop");
    o.require(conv3d_strided_forward(x, p, 2) == subsample(conv3d_forward(x, p), 2), "strided conv");
    auto c = random_tensor<float>({2, 3, 2, 4}, s + 200);
    o.require(deconv3d_forward(c, p) == conv3d_forward(repeat_voxels(c, 2), p), "deconvolution");
  }
  for (std::uint64_t s = 0; s < 20; ++s) {
    LabelVolume pred = random_labels({5, 4, 3}, 5, s), truth = random_labels({5, 4, 3}, 5, s + 50);
    for (const auto& [name, region] : RegionMap::brats().regions) {
      ConfusionCounts ref;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool t = std::count(region.begin(), region.end(), truth.labels[i]) > 0;
        const bool q = std::count(region.begin(), region.end(), pred.labels[i]) > 0;
        ++(t ? (q ? ref.tp : ref.fn) : (q ? ref.fp : ref.tn));
      }
      o.require(confusion_counts(pred, truth, region) == ref, "confusion counts for " + name);
    }
    auto scores = random_tensor<double>({4, 3, 3, 3}, s + 300);
    LabelVolume labels = argmax_labels(scores);
    for (std::size_t i = 0; i < 27; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (scores[k * 27 + i] > scores[best * 27 + i]) best = k;
      o.require(labels.labels[i] == best, "argmax");
    }
  }
  ArchSpec spec;
  spec.class_count = 3;
  auto net = Network<float>::build(spec, 9);
  auto img = random_tensor<float>({1, 8, 8, 8}, 10);
  auto probs = sigmoid(net.infer(img).scores);
  LabelVolume predicted = predict_labels(net, img);
  for (std::size_t i = 0; i < 512; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (probs[k * 512 + i] > probs[best * 512 + i]) best = k;
    o.require(predicted.labels[i] == best, "predict_labels");
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Dims3 in{ext(rng), ext(rng), ext(rng)}, out{ext(rng), ext(rng), ext(rng)};
    auto v = random_tensor<double>({1, in[0], in[1], in[2]}, 400 + trial);
    auto r = resample_trilinear(v, out);
    LabelVolume l = random_labels(in, 4, 500 + trial);
    LabelVolume n = resample_nearest(l, out);
    for (std::size_t d = 0; d < out[0]; ++d)
      for (std::size_t h = 0; h < out[1]; ++h)
        for (std::size_t w = 0; w < out[2]; ++w) {
          o.require(r.at(0, d, h, w) == trilinear_oracle(v, 0, {d, h, w}, out), "trilinear");
          o.require(n.at(d, h, w) == l.at(nearest_index(d, in[0], out[0]), nearest_index(h, in[1], out[1]),
                                         nearest_index(w, in[2], out[2])),
                    "nearest");
        }
  }
  if (o.passed) o.detail = "conv, strided, deconv, confusion, argmax, predict, trilinear and nearest all exact";
  return o;
}

// 4. Loss algebra.
Outcome loss_algebra() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(125), t(125);
    const double dp = u(rng), dt = u(rng);
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = u(rng) < dp ? 1.0 : 0.0;
      t[k] = u(rng) < dt ? 1.0 : 0.0;
    }
    const double j = jaccard<double>(p, t), d = dice<double>(p, t);
    worst = std::max(worst, std::abs(d - 2 * j / (1 + j)));
  }
  o.require(worst < 1e-6, "dice identity off by " + fmt(worst));

  for (int i = 0; i < 200; ++i) {
    LabelVolume t = random_labels({3, 3, 3}, 4, 600 + i);
    auto probs = random_tensor<double>({4, 3, 3, 3}, 900 + i, 0.0, 1.0);
    const auto all = all_classes(4);
    for (double c : jaccard_loss(probs, t, all).per_class) o.require(c >= 0 && c <= 1, "loss outside [0, 1]");
  }
  LabelVolume background({4, 4, 4}, 2);
  auto pred = Tensor<double>::volume(2, {4, 4, 4});
  pred.at(1, 1, 1, 1) = 1.0;
  const int fg[] = {1};
  const double pathology = jaccard_loss(pred, background, fg).total;
  const double empty = jaccard_loss(Tensor<double>::volume(2, {4, 4, 4}), background, fg).total;
  o.require(pathology > 0.99, "empty target loss " + fmt(pathology));
  o.require(empty < 1e-3, "empty/empty loss " + fmt(empty));
  if (o.passed)
    o.detail = "identity error " + fmt(worst) + " over 1000 pairs, empty target " + fmt(pathology, 6) +
               ", empty/empty " + fmt(empty);
  return o;
}

// 5. Smoke training.
Outcome smoke_training() {
  Outcome o;
  std::mt19937_64 rng(5 + kSynthSeedOffset);
  std::vector<Sample<float>> data{synth_sphere({16, 16, 16}, 4.5, 0.1, rng)};
  ArchSpec spec;
  spec.class_count = 2;
  spec.widths.fill(4);
  TrainConfig cfg;
  cfg.max_epochs = 500;  // one volume, so one iteration per epoch
  cfg.patience = 500;
  cfg.augmentation = AugmentPolicy::none;
  cfg.adam.learning_rate = 1e-2;
  cfg.seed = 5;
  auto run = [&] {
    return train(Network<float>::build(spec, cfg.seed + kInitSeedOffset), std::span<const Sample<float>>(data), {},
                 cfg);
  };
  const auto t0 = Clock::now();
  TrainResult<float> a = run();
  const double elapsed = seconds_since(t0);
  TrainResult<float> b = run();

  std::size_t first = 0;
  for (const auto& it : a.iterations)
    if (it.fused_loss < 0.1) {
      first = it.iteration;
      break;
    }
  o.require(a.iterations.size() == 500, std::to_string(a.iterations.size()) + " iterations");
  o.require(first > 0, "loss never fell below 0.1 (last " + fmt(a.iterations.back().fused_loss) + ")");
  bool identical = a.iterations.size() == b.iterations.size();
  for (std::size_t i = 0; identical && i < a.iterations.size(); ++i)
    identical = a.iterations[i].fused_loss == b.iterations[i].fused_loss;
  o.require(identical, "repeat run diverged");
  if (o.passed)
    o.detail = "loss " + fmt(a.iterations.front().fused_loss) + " -> below 0.1 at iteration " +
               std::to_string(first) + ", final " + fmt(a.iterations.back().fused_loss) + ", repeat identical, " +
               fmt(elapsed, 2) + " s per run";
  return o;
}

// 6. Imbalance contrast on hand-like volumes with two rare bones.
Outcome imbalance_contrast() {
  Outcome o;
  const auto t0 = Clock::now();
  const std::vector<double> frequencies{7.42e-3, 6.78e-4, 4.32e-4};
  double jacc_rare = 0, ce_rare = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed + kSynthSeedOffset);
    SynthOptions opts;
    opts.dims = {32, 32, 32};
    opts.class_count = 4;
    HandLikeOptions shape;
    shape.frequencies = frequencies;
    std::vector<Sample<float>> train_set, val_set, test_set;
    for (int i = 0; i < 6; ++i) train_set.push_back(synth_hand_like(opts, shape, rng));
    for (int i = 0; i < 2; ++i) val_set.push_back(synth_hand_like(opts, shape, rng));
    for (int i = 0; i < 4; ++i) test_set.push_back(synth_hand_like(opts, shape, rng));

    std::vector<LabelVolume> labels;
    for (const auto& s : train_set) labels.push_back(s.labels);
    const auto f = class_frequencies(labels);
    o.require(f[2] < 1e-3 && f[3] < 1e-3, "rare classes at " + fmt(f[2]) + ", " + fmt(f[3]));

    ArchSpec spec;
    spec.class_count = 4;
    spec.widths.fill(4);
    TrainConfig cfg;
    cfg.max_epochs = 250;
    cfg.patience = 40;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = seed;

    double rare[2] = {};
    for (LossKind kind : {LossKind::jaccard, LossKind::cross_entropy}) {
      cfg.loss.kind = kind;
      auto r = train(Network<float>::build(spec, seed + kInitSeedOffset), std::span<const Sample<float>>(train_set),
                     std::span<const Sample<float>>(val_set), cfg);
      ConfusionCounts pooled[4];
      for (const auto& s : test_set) {
        const LabelVolume pred = predict_labels(r.best, s.image);
        for (int c = 2; c < 4; ++c) {
          const int region[] = {c};
          const auto k = confusion_counts(pred, s.labels, region);
          pooled[c].tp += k.tp;
          pooled[c].fp += k.fp;
          pooled[c].fn += k.fn;
          pooled[c].tn += k.tn;
        }
      }
      const double d2 = metrics_from_counts(pooled[2]).dice.value_or(0.0);
      const double d3 = metrics_from_counts(pooled[3]).dice.value_or(0.0);
      rare[kind == LossKind::jaccard ? 0 : 1] = (d2 + d3) / 2;
      per_seed += " " + to_string(kind) + "[" + std::to_string(seed) + "]=" + fmt(d2, 2) + "/" + fmt(d3, 2);
    }
    jacc_rare += rare[0] / 3;
    ce_rare += rare[1] / 3;
  }
  const double elapsed = seconds_since(t0);
  o.require(jacc_rare > 0.5, "jaccard rare-class dice " + fmt(jacc_rare));
  o.require(jacc_rare - ce_rare >= 0.2, "gap " + fmt(jacc_rare - ce_rare));
  o.require(elapsed < 1800, "took " + fmt(elapsed) + " s");
  o.detail = (o.passed ? "" : o.detail + "; ") + "mean rare dice jaccard " + fmt(jacc_rare) + ", cross-entropy " +
             fmt(ce_rare) + ";" + per_seed + "; " + fmt(elapsed, 4) + " s";
  return o;
}

// 7. Architecture variants through one pipeline.
Outcome architecture_matrix() {
  Outcome o;
  std::mt19937_64 rng(7);
  SynthOptions opts;
  opts.dims = {8, 8, 8};
  opts.class_count = 3;
  std::vector<Sample<float>> data{synth_spheres(opts, rng)};
  int variants = 0;
  for (const char* skip : {"sum", "concat", "none"})
    for (const char* heads : {"1", "3"}) {
      const std::string name = std::string(skip) + "/" + heads;
      RunConfig cfg = parse_config(std::string("arch.class_count = 3\narch.skip_mode = ") + skip +
                                   "\narch.head_count = " + heads +
                                   "\ntrain.max_epochs = 1\ntrain.patience = 1\ntrain.aux_weights = 0.5,0.5\n");
      cfg.finalize();
      auto net = Network<float>::build(cfg.arch, 1);
      auto before = encode_checkpoint(net);
      auto r = train(net, std::span<const Sample<float>>(data), {}, cfg.train);
      o.require(r.iterations.size() == 1 && std::isfinite(r.iterations[0].total_loss), name + " did not train");
      o.require(encode_checkpoint(r.last) != before, name + " parameters unchanged");
      const LabelVolume pred = predict_labels(r.last, data[0].image);
      const auto m = confusion_metrics(pred, data[0].labels, cfg.regions, "foreground");
      o.require(m.counts.tp + m.counts.fp + m.counts.fn + m.counts.tn == 512, name + " evaluation");
      ++variants;
    }
  if (o.passed) o.detail = std::to_string(variants) + " variants (sum, concat, none) x (1, 3 heads) trained and evaluated";
  return o;
}

// 8. Augmentation invariants.
Outcome augmentation_invariants() {
  Outcome o;
  auto img = random_tensor<float>({1, 6, 6, 6}, 8);
  LabelVolume lab = random_labels({6, 6, 6}, 4, 9);
  for (int axis = 0; axis < 3; ++axis) {
    TransformDraw f{TransformKind::flip, axis, {-1, -1}, 0.0};
    auto [i1, l1] = apply_transform(f, img, lab);
    auto [i2, l2] = apply_transform(f, i1, l1);
    o.require(i2 == img && l2 == lab, "double flip on axis " + std::to_string(axis));
  }
  const int planes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (const auto& pl : planes) {
    TransformDraw r{TransformKind::rotate, -1, {pl[0], pl[1]}, std::numbers::pi / 2};
    auto rl = apply_transform(r, img, lab).second;
    for (std::size_t d = 0; d < 6; ++d)
      for (std::size_t h = 0; h < 6; ++h)
        for (std::size_t w = 0; w < 6; ++w) {
          std::array<std::size_t, 3> p{d, h, w}, q = p;
          q[pl[0]] = p[pl[1]];
          q[pl[1]] = 5 - p[pl[0]];
          o.require(rl.at(d, h, w) == lab.at(q[0], q[1], q[2]), "right-angle rotation");
        }
  }
  LabelVolume tumour({6, 6, 6}, 5);
  tumour.at(2, 3, 5) = 4;
  tumour.at(4, 1, 3) = 2;
  auto [mi, ml] = mirror_hemisphere(img, tumour, 2, SourceHalf::lower);
  for (auto v : ml.labels) o.require(v == 0, "mirrored labels keep foreground");
  for (std::size_t d = 0; d < 6; ++d)
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t w = 0; w < 6; ++w) o.require(mi.at(0, d, h, w) == mi.at(0, d, h, 5 - w), "mirror symmetry");

  std::mt19937_64 rng(10);
  const int n = 30000;
  int kinds[3] = {};
  for (int i = 0; i < n; ++i) ++kinds[static_cast<int>(draw_transform(rng).kind)];
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  double worst = 0;
  for (int k : kinds) worst = std::max(worst, std::abs(k - n / 3.0) / sigma);
  o.require(worst < 3, "kind frequency " + fmt(worst) + " sigma from uniform");
  if (o.passed)
    o.detail = "double flips exact, quarter turns match, mirror symmetric and healthy, kinds " +
               std::to_string(kinds[0]) + "/" + std::to_string(kinds[1]) + "/" + std::to_string(kinds[2]) +
               " (max " + fmt(worst, 2) + " sigma)";
  return o;
}

// 9. Determinism and serialization.
Outcome determinism_and_serialization() {
  Outcome o;
  std::mt19937_64 rng(11);
  SynthOptions opts;
  opts.dims = {8, 8, 8};
  opts.class_count = 3;
  std::vector<Sample<float>> data{synth_spheres(opts, rng), synth_spheres(opts, rng)};
  ArchSpec spec;
  spec.class_count = 3;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.seed = 12;
  auto run = [&] { return train(Network<float>::build(spec, 13), std::span<const Sample<float>>(data), {}, cfg); };
  auto a = run(), b = run();
  bool same = a.iterations.size() == b.iterations.size();
  for (std::size_t i = 0; same && i < a.iterations.size(); ++i)
    same = a.iterations[i].total_loss == b.iterations[i].total_loss;
  const auto ckpt = encode_checkpoint(a.last);
  o.require(same && ckpt == encode_checkpoint(b.last), "equal seeds gave different trajectories");

  const auto img_bytes = encode_image(data[0].image);
  const auto lab_bytes = encode_labels(data[0].labels);
  o.require(encode_image(decode_image(img_bytes)) == img_bytes, "image round trip");
  o.require(encode_labels(decode_labels(lab_bytes, 3)) == lab_bytes, "label round trip");
  o.require(decode_image(img_bytes) == data[0].image && decode_labels(lab_bytes, 3) == data[0].labels,
            "decoded volume differs");

  const Network<float> reloaded = decode_checkpoint<float>(ckpt);
  o.require(encode_checkpoint(reloaded) == ckpt, "checkpoint round trip");
  const auto x = data[1].image;
  const auto s1 = a.last.infer(x), s2 = reloaded.infer(x);
  bool heads_equal = s1.heads.size() == s2.heads.size();
  for (std::size_t h = 0; heads_equal && h < s1.heads.size(); ++h) heads_equal = s1.heads[h] == s2.heads[h];
  o.require(s1.scores == s2.scores && heads_equal, "reloaded forward differs");
  if (o.passed)
    o.detail = std::to_string(a.iterations.size()) + " identical iterations, volume and " +
               std::to_string(ckpt.size()) + "-byte checkpoint round trips exact, reloaded forward bit-exact";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"receptive-field table", receptive_field_table},
      {"gradient correctness", gradient_correctness},
      {"oracle equivalences", oracle_equivalences},
      {"loss algebra", loss_algebra},
      {"smoke training", smoke_training},
      {"imbalance contrast", imbalance_contrast},
      {"architecture variants", architecture_matrix},
      {"augmentation invariants", augmentation_invariants},
      {"determinism and serialization", determinism_and_serialization},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 9) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty())
    for (int n = 1; n <= 9; ++n) selected.push_back(n);

  bool all = true;
  for (int n : selected) {
    const auto& [name, check] = criteria[n - 1];
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.passed;
    std::printf("criterion %d %s %s: %s\n", n, o.passed ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
