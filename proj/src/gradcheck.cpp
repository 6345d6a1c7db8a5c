#include "vseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "vseg/layers.hpp"
#include "vseg/network.hpp"

namespace vseg {

namespace {

using Rng = std::mt19937_64;
using TensorD = Tensor<double>;

struct Probe {
  std::string name;
  TensorD* value;
  const TensorD* grad;
};

TensorD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

LabelVolume random_labels(const Dims3& d, int classes, Rng& rng) {
  LabelVolume l(d, classes);
  std::uniform_int_distribution<int> u(0, classes - 1);
  for (auto& v : l.labels) v = static_cast<std::uint8_t>(u(rng));
  return l;
}

double project(const TensorD& r, const TensorD& out) {
  require_same_shape(r.shape(), out.shape(), "gradcheck projection");
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * out[i];
  return s;
}

class Checker {
 public:
  Checker(std::string name, const GradCheckOptions& opts) : opts_(opts) { report_.name = std::move(name); }

  /// Compares the analytic gradient of every probe against central
  /// differences of `loss`. When `pattern` is given, coordinates whose +h and
  /// -h evaluations change the activation pattern are skipped.
  void compare(const std::vector<Probe>& probes, const std::function<double()>& loss, Rng& rng,
               std::size_t coords_per_tensor,
               const std::function<std::vector<std::uint8_t>()>& pattern = {}) {
    const std::vector<std::uint8_t> base = pattern ? pattern() : std::vector<std::uint8_t>{};
    for (const Probe& p : probes) {
      require_same_shape(p.value->shape(), p.grad->shape(), "gradcheck probe");
      std::vector<std::size_t> idx(p.value->size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      if (coords_per_tensor > 0 && coords_per_tensor < idx.size()) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(coords_per_tensor);
      }
      for (std::size_t i : idx) {
        double& v = (*p.value)[i];
        const double saved = v;
        v = saved + opts_.step;
        const double up = loss();
        const bool kink_up = pattern && pattern() != base;
        v = saved - opts_.step;
        const double down = loss();
        const bool kink_down = pattern && pattern() != base;
        v = saved;
        if (kink_up || kink_down) {
          ++report_.skipped;
          continue;
        }
        const double numeric = (up - down) / (2.0 * opts_.step);
        const double err = relative_error((*p.grad)[i], numeric, opts_.floor);
        ++report_.coordinates;
        if (err >= report_.max_error) {
          report_.max_error = err;
          char detail[96];
          std::snprintf(detail, sizeof detail, "[%zu] analytic %.6e numeric %.6e", i, (*p.grad)[i], numeric);
          report_.worst = p.name + detail;
        }
      }
    }
    ++report_.instances;
  }

  GradCheckReport finish() {
    report_.passed = report_.coordinates > 0 && report_.max_error < opts_.tolerance;
    return report_;
  }

 private:
  GradCheckOptions opts_;
  GradCheckReport report_;
};

std::uint64_t name_seed(const std::string& name, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ull;
  return h ^ seed;
}

GradCheckReport check_conv(const std::string& name, const GradCheckOptions& opts, std::size_t kernel,
                           std::size_t stride, bool deconv) {
  Checker chk(name, opts);
  Rng rng(name_seed(name, opts.seed));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    std::uniform_int_distribution<std::size_t> ch(1, 3), ext(1, 3);
    const std::size_t cin = ch(rng), cout = ch(rng);
    const std::size_t m = stride;
    const Dims3 d{ext(rng) * m, ext(rng) * m, (ext(rng) + 1) * m};
    ConvParams<double> p(cin, cout, kernel);
    p.weights = random_tensor(p.weights.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    TensorD x = random_tensor({cin, d[0], d[1], d[2]}, rng);
    auto forward = [&] {
      if (deconv) return deconv3d_forward(x, p);
      return stride == 1 ? conv3d_forward(x, p) : conv3d_strided_forward(x, p, stride);
    };
    const TensorD r = random_tensor(forward().shape(), rng);
    const ConvGrads<double> g = deconv ? deconv3d_backward(x, p, r) : conv3d_backward(x, p, r, stride);
    chk.compare({{"input", &x, &g.input}, {"weights", &p.weights, &g.weights}, {"bias", &p.bias, &g.bias}},
                [&] { return project(r, forward()); }, rng, 0);
  }
  return chk.finish();
}

GradCheckReport check_prelu(const GradCheckOptions& opts) {
  Checker chk("prelu", opts);
  Rng rng(name_seed("prelu", opts.seed));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    TensorD x = random_tensor({3, 3, 4, 2}, rng);
    for (double& v : x.values())
      if (std::abs(v) < 1e-3) v = 0.5;
    PReluParams<double> p(3, 0.25);
    p.slope = random_tensor({3}, rng, 0.05, 0.5);
    const TensorD r = random_tensor(x.shape(), rng);
    const PReluGrads<double> g = prelu_backward(x, p, r);
    auto signs = [&] {
      std::vector<std::uint8_t> s(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] >= 0;
      return s;
    };
    chk.compare({{"input", &x, &g.input}, {"slope", &p.slope, &g.slope}},
                [&] { return project(r, prelu_forward(x, p)); }, rng, 0, signs);
  }
  return chk.finish();
}

GradCheckReport check_batchnorm(const GradCheckOptions& opts, Mode mode) {
  const std::string name = mode == Mode::train ? "batchnorm_train" : "batchnorm_infer";
  Checker chk(name, opts);
  Rng rng(name_seed(name, opts.seed));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    TensorD x = random_tensor({2, 3, 2, 4}, rng, -2.0, 2.0);
    BatchNormState<double> s(2, 1.0, 0.0, 0.5, 1e-5);
    s.gamma = random_tensor({2}, rng, 0.5, 1.5);
    s.beta = random_tensor({2}, rng);
    s.running_mean = random_tensor({2}, rng);
    s.running_std = random_tensor({2}, rng, 0.5, 2.0);
    const TensorD r = random_tensor(x.shape(), rng);
    const BatchNormGrads<double> g = batchnorm_backward(x, s, r, mode);
    chk.compare({{"input", &x, &g.input}, {"gamma", &s.gamma, &g.gamma}, {"beta", &s.beta, &g.beta}},
                [&] { return project(r, batchnorm_apply(x, s, mode)); }, rng, 0);
  }
  return chk.finish();
}

GradCheckReport check_resample(const GradCheckOptions& opts) {
  Checker chk("trilinear_resample", opts);
  Rng rng(name_seed("trilinear_resample", opts.seed));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    std::uniform_int_distribution<std::size_t> ext(1, 6);
    const Dims3 in{ext(rng), ext(rng), ext(rng)}, out{ext(rng), ext(rng), ext(rng)};
    TensorD x = random_tensor({2, in[0], in[1], in[2]}, rng);
    const TensorD r = random_tensor({2, out[0], out[1], out[2]}, rng);
    const TensorD g = resample_trilinear_adjoint(r, in);
    chk.compare({{"input", &x, &g}}, [&] { return project(r, resample_trilinear(x, out)); }, rng, 0);
  }
  return chk.finish();
}

GradCheckReport check_loss(const GradCheckOptions& opts, LossKind kind) {
  const std::string name = kind == LossKind::jaccard ? "jaccard_loss" : "cross_entropy_loss";
  Checker chk(name, opts);
  Rng rng(name_seed(name, opts.seed));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    const Dims3 d{3, 4, 2};
    TensorD scores = random_tensor({4, d[0], d[1], d[2]}, rng, -3.0, 3.0);
    const LabelVolume target = random_labels(d, 4, rng);
    LossOptions lo;
    lo.kind = kind;
    const TensorD g = evaluate_loss(scores, target, lo).score_grad;
    chk.compare({{"scores", &scores, &g}}, [&] { return evaluate_loss(scores, target, lo, false).value; }, rng, 0);
  }
  return chk.finish();
}

struct NetworkCase {
  SkipMode skip;
  std::size_t heads;
  LossKind loss;
};

std::string network_name(const NetworkCase& c) {
  return "network_" + to_string(c.skip) + "_heads" + std::to_string(c.heads) + "_" + to_string(c.loss);
}

std::vector<NetworkCase> network_cases() {
  std::vector<NetworkCase> out;
  for (SkipMode s : {SkipMode::sum, SkipMode::concat, SkipMode::none})
    for (std::size_t h : {std::size_t{1}, std::size_t{3}})
      for (LossKind l : {LossKind::jaccard, LossKind::cross_entropy}) out.push_back({s, h, l});
  return out;
}

GradCheckReport check_network(const NetworkCase& c, const GradCheckOptions& opts) {
  const std::string name = network_name(c);
  Checker chk(name, opts);
  Rng rng(name_seed(name, opts.seed));
  const Dims3 d{8, 8, 8};
  constexpr double kHalfWeight = 0.5, kQuarterWeight = 0.25;
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    ArchSpec spec;
    spec.in_channels = 2;
    spec.class_count = 3;
    spec.widths.fill(2);
    spec.skip_mode = c.skip;
    spec.head_count = c.heads;
    spec.init_std = 0.5;
    Network<double> net = Network<double>::build(spec, rng());
    for (auto& nt : net.parameters()) {
      if (nt.name.ends_with(".bias") || nt.name.ends_with(".bn.beta")) *nt.tensor = random_tensor(nt.tensor->shape(), rng, -0.5, 0.5);
      else if (nt.name.ends_with(".bn.gamma")) *nt.tensor = random_tensor(nt.tensor->shape(), rng, 0.5, 1.5);
      else if (nt.name.ends_with(".prelu.slope")) *nt.tensor = random_tensor(nt.tensor->shape(), rng, 0.05, 0.5);
    }
    TensorD x = random_tensor({2, d[0], d[1], d[2]}, rng, -2.0, 2.0);
    const LabelVolume target = random_labels(d, 3, rng);
    LossOptions lo;
    lo.kind = c.loss;

    auto loss = [&] {
      SegmentationOutput<double> out = net.forward(x, Mode::train);
      double total = evaluate_loss(out.scores, target, lo, false).value;
      if (c.heads == 3) {
        total += kHalfWeight * evaluate_loss(out.heads[1], resample_nearest(target, out.heads[1].dims()), lo, false).value;
        total += kQuarterWeight * evaluate_loss(out.heads[2], resample_nearest(target, out.heads[2].dims()), lo, false).value;
      }
      return total;
    };

    SegmentationOutput<double> out = net.forward(x, Mode::train);
    std::vector<TensorD> head_grads;
    if (c.heads == 3) {
      head_grads.push_back(zeros_like(out.heads[0]));
      head_grads.push_back(affine(
          evaluate_loss(out.heads[1], resample_nearest(target, out.heads[1].dims()), lo).score_grad, kHalfWeight, 0.0));
      head_grads.push_back(affine(
          evaluate_loss(out.heads[2], resample_nearest(target, out.heads[2].dims()), lo).score_grad, kQuarterWeight,
          0.0));
    }
    const NetworkGradients<double> g = net.backward(evaluate_loss(out.scores, target, lo).score_grad, head_grads);

    std::vector<Probe> probes{{"input", &x, &g.input}};
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) probes.push_back({params[i].name, params[i].tensor, &g.params[i]});
    // The reference pattern is the one left by the analytic forward pass above.
    chk.compare(probes, loss, rng, opts.coords_per_tensor, [&] { return net.activation_pattern(); });
  }
  return chk.finish();
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names{"conv3x3",         "conv1x1",         "strided_conv",       "deconv",
                                 "prelu",           "batchnorm_train", "batchnorm_infer",    "trilinear_resample",
                                 "jaccard_loss",    "cross_entropy_loss"};
  for (const NetworkCase& c : network_cases()) names.push_back(network_name(c));
  return names;
}

GradCheckReport run_gradcheck(const std::string& name, const GradCheckOptions& opts) {
  if (name == "conv3x3") return check_conv(name, opts, 3, 1, false);
  if (name == "conv1x1") return check_conv(name, opts, 1, 1, false);
  if (name == "strided_conv") return check_conv(name, opts, 3, 2, false);
  if (name == "deconv") return check_conv(name, opts, 3, 1, true);
  if (name == "prelu") return check_prelu(opts);
  if (name == "batchnorm_train") return check_batchnorm(opts, Mode::train);
  if (name == "batchnorm_infer") return check_batchnorm(opts, Mode::infer);
  if (name == "trilinear_resample") return check_resample(opts);
  if (name == "jaccard_loss") return check_loss(opts, LossKind::jaccard);
  if (name == "cross_entropy_loss") return check_loss(opts, LossKind::cross_entropy);
  for (const NetworkCase& c : network_cases())
    if (name == network_name(c)) return check_network(c, opts);
  throw Error("unknown gradient check '" + name + "'");
}

std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opts,
                                                 const std::function<void(const GradCheckReport&)>& on_report) {
  std::vector<GradCheckReport> out;
  for (const std::string& n : gradcheck_names()) {
    out.push_back(run_gradcheck(n, opts));
    if (on_report) on_report(out.back());
  }
  return out;
}

}  // namespace vseg
