#include "vseg/loss_metrics.hpp"

#include <algorithm>
#include <cmath>

namespace vseg {

namespace {

struct OverlapSums {
  double inter = 0.0, p2 = 0.0, t2 = 0.0;
};

template <typename T>
OverlapSums overlap_sums(std::span<const T> p, std::span<const T> t) {
  if (p.size() != t.size())
    throw Error("overlap: mask sizes differ (" + std::to_string(p.size()) + " vs " + std::to_string(t.size()) + ")");
  OverlapSums s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = static_cast<double>(p[i]), b = static_cast<double>(t[i]);
    s.inter += a * b;
    s.p2 += a * a;
    s.t2 += b * b;
  }
  return s;
}

template <typename T>
void check_scores(const Tensor<T>& probs, const LabelVolume& target, const char* what) {
  if (probs.rank() != 4 || probs.dims() != target.dims ||
      probs.channels() != static_cast<std::size_t>(target.class_count))
    throw Error(std::string(what) + ": scores " + to_string(probs.shape()) + " incompatible with " +
                std::to_string(target.class_count) + "-class target " + to_string(target.dims));
}

void check_classes(std::span<const int> classes, int class_count) {
  for (int c : classes)
    if (c < 0 || c >= class_count)
      throw Error("class index " + std::to_string(c) + " outside [0, " + std::to_string(class_count) + ")");
}

std::vector<double> target_mask(const LabelVolume& target, int c) {
  std::vector<double> m(target.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = target.labels[i] == c ? 1.0 : 0.0;
  return m;
}

}  // namespace

template <typename T>
double jaccard(std::span<const T> p, std::span<const T> t, double eps) {
  const OverlapSums s = overlap_sums(p, t);
  return (s.inter + eps) / (s.p2 + s.t2 - s.inter + eps);
}

template <typename T>
double dice(std::span<const T> p, std::span<const T> t, double eps) {
  const OverlapSums s = overlap_sums(p, t);
  return (2.0 * s.inter + eps) / (s.p2 + s.t2 + eps);
}

std::vector<int> foreground_classes(int class_count) {
  std::vector<int> c;
  for (int i = 1; i < class_count; ++i) c.push_back(i);
  return c;
}

std::vector<int> all_classes(int class_count) {
  std::vector<int> c;
  for (int i = 0; i < class_count; ++i) c.push_back(i);
  return c;
}

template <typename T>
JaccardLoss jaccard_loss(const Tensor<T>& probs, const LabelVolume& target, std::span<const int> classes,
                         double eps) {
  check_scores(probs, target, "jaccard_loss");
  check_classes(classes, target.class_count);
  JaccardLoss out;
  for (int c : classes) {
    const std::vector<double> t = target_mask(target, c);
    auto pc = probs.channel(static_cast<std::size_t>(c));
    OverlapSums s;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double a = static_cast<double>(pc[i]);
      s.inter += a * t[i];
      s.p2 += a * a;
      s.t2 += t[i];
    }
    const double term = 1.0 - (s.inter + eps) / (s.p2 + s.t2 - s.inter + eps);
    out.per_class.push_back(term);
    out.total += term;
  }
  return out;
}

template <typename T>
Tensor<T> jaccard_loss_grad(const Tensor<T>& probs, const LabelVolume& target, std::span<const int> classes,
                            double eps) {
  check_scores(probs, target, "jaccard_loss_grad");
  check_classes(classes, target.class_count);
  Tensor<T> grad(probs.shape());
  for (int c : classes) {
    const std::vector<double> t = target_mask(target, c);
    auto pc = probs.channel(static_cast<std::size_t>(c));
    auto gc = grad.channel(static_cast<std::size_t>(c));
    OverlapSums s;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double a = static_cast<double>(pc[i]);
      s.inter += a * t[i];
      s.p2 += a * a;
      s.t2 += t[i];
    }
    const double num = s.inter + eps;
    const double den = s.p2 + s.t2 - s.inter + eps;
    // d(num/den)/dp_i = (t_i * den - num * (2 p_i - t_i)) / den^2
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double a = static_cast<double>(pc[i]);
      gc[i] = static_cast<T>(-(t[i] * den - num * (2.0 * a - t[i])) / (den * den));
    }
  }
  return grad;
}

template <typename T>
double cross_entropy(const Tensor<T>& probs, const LabelVolume& target, double eps) {
  check_scores(probs, target, "cross_entropy");
  const std::size_t n = target.size();
  double sum = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double p = std::clamp(static_cast<double>(probs[target.labels[v] * n + v]), eps, 1.0 - eps);
    sum -= std::log(p);
  }
  return sum / static_cast<double>(n);
}

template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, const LabelVolume& target, double eps) {
  check_scores(probs, target, "cross_entropy_grad");
  const std::size_t n = target.size();
  Tensor<T> grad(probs.shape());
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t k = target.labels[v] * n + v;
    const double p = static_cast<double>(probs[k]);
    if (p > eps && p < 1.0 - eps) grad[k] = static_cast<T>(-1.0 / (static_cast<double>(n) * p));
  }
  return grad;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& scores) {
  Tensor<T> out(scores.shape());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(scores[i]))));
  return out;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& scores) {
  if (scores.rank() != 4) throw Error("softmax_channels expects (C, D, H, W), got " + to_string(scores.shape()));
  const std::size_t c_count = scores.channels(), n = scores.size() / c_count;
  Tensor<T> out(scores.shape());
  std::vector<double> e(c_count);
  for (std::size_t v = 0; v < n; ++v) {
    double m = -INFINITY;
    for (std::size_t c = 0; c < c_count; ++c) m = std::max(m, static_cast<double>(scores[c * n + v]));
    double z = 0.0;
    for (std::size_t c = 0; c < c_count; ++c) z += e[c] = std::exp(static_cast<double>(scores[c * n + v]) - m);
    for (std::size_t c = 0; c < c_count; ++c) out[c * n + v] = static_cast<T>(e[c] / z);
  }
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& grad) {
  require_same_shape(probs.shape(), grad.shape(), "softmax_backward");
  const std::size_t c_count = probs.channels(), n = probs.size() / c_count;
  Tensor<T> out(probs.shape());
  for (std::size_t v = 0; v < n; ++v) {
    double dot = 0.0;
    for (std::size_t c = 0; c < c_count; ++c)
      dot += static_cast<double>(grad[c * n + v]) * static_cast<double>(probs[c * n + v]);
    for (std::size_t c = 0; c < c_count; ++c) {
      const std::size_t k = c * n + v;
      out[k] = static_cast<T>(static_cast<double>(probs[k]) * (static_cast<double>(grad[k]) - dot));
    }
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& probs, const Tensor<T>& grad) {
  require_same_shape(probs.shape(), grad.shape(), "sigmoid_backward");
  Tensor<T> out(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = grad[i] * probs[i] * (T(1) - probs[i]);
  return out;
}

std::string to_string(LossKind k) { return k == LossKind::jaccard ? "jaccard" : "cross_entropy"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "jaccard") return LossKind::jaccard;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  throw Error("unknown loss '" + s + "' (expected jaccard or cross_entropy)");
}

template <typename T>
LossEvaluation<T> evaluate_loss(const Tensor<T>& scores, const LabelVolume& target, const LossOptions& opts,
                                bool with_grad) {
  LossEvaluation<T> out;
  if (opts.kind == LossKind::jaccard) {
    const Tensor<T> probs = sigmoid(scores);
    const std::vector<int> classes = opts.classes.empty() ? foreground_classes(target.class_count) : opts.classes;
    JaccardLoss l = jaccard_loss(probs, target, classes, opts.epsilon);
    out.value = l.total;
    out.per_class = std::move(l.per_class);
    if (with_grad) out.score_grad = sigmoid_backward(probs, jaccard_loss_grad(probs, target, classes, opts.epsilon));
  } else {
    const Tensor<T> probs = softmax_channels(scores);
    out.value = cross_entropy(probs, target, opts.epsilon);
    if (with_grad) out.score_grad = softmax_backward(probs, cross_entropy_grad(probs, target, opts.epsilon));
  }
  return out;
}

RegionMap RegionMap::brats() { return RegionMap{{{"whole", {1, 2, 3, 4}}, {"core", {1, 3, 4}}, {"enhanced", {4}}}}; }

RegionMap RegionMap::per_class(int class_count) {
  RegionMap m;
  for (int c = 1; c < class_count; ++c) m.regions.push_back({"class" + std::to_string(c), {c}});
  m.regions.push_back({"foreground", foreground_classes(class_count)});
  return m;
}

const std::vector<int>& RegionMap::at(const std::string& name) const {
  for (const auto& [n, classes] : regions)
    if (n == name) return classes;
  throw Error("unknown region '" + name + "'");
}

void RegionMap::validate(int class_count) const {
  for (const auto& [n, classes] : regions) {
    if (classes.empty()) throw Error("region '" + n + "' is empty");
    for (int c : classes)
      if (c < 1 || c >= class_count)
        throw Error("region '" + n + "' names class " + std::to_string(c) + ", outside foreground classes 1.." +
                    std::to_string(class_count - 1));
  }
}

ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& truth, std::span<const int> region) {
  if (pred.dims != truth.dims)
    throw Error("confusion metrics: shapes differ " + to_string(pred.dims) + " vs " + to_string(truth.dims));
  std::array<bool, 256> in_region{};
  for (int c : region) in_region.at(static_cast<std::size_t>(c)) = true;
  ConfusionCounts k;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = in_region[pred.labels[i]], t = in_region[truth.labels[i]];
    if (p && t)
      ++k.tp;
    else if (p)
      ++k.fp;
    else if (t)
      ++k.fn;
    else
      ++k.tn;
  }
  return k;
}

ConfusionMetrics metrics_from_counts(const ConfusionCounts& k) {
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  ConfusionMetrics m;
  m.counts = k;
  m.dice = ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn);
  m.precision = ratio(k.tp, k.tp + k.fp);
  m.sensitivity = ratio(k.tp, k.tp + k.fn);
  m.specificity = ratio(k.tn, k.tn + k.fp);
  return m;
}

ConfusionMetrics confusion_metrics(const LabelVolume& pred, const LabelVolume& truth, std::span<const int> region) {
  return metrics_from_counts(confusion_counts(pred, truth, region));
}

ConfusionMetrics confusion_metrics(const LabelVolume& pred, const LabelVolume& truth, const RegionMap& regions,
                                   const std::string& region) {
  return confusion_metrics(pred, truth, regions.at(region));
}

std::vector<double> class_frequencies(std::span<const LabelVolume> dataset) {
  if (dataset.empty()) throw Error("class_frequencies: empty dataset");
  const int classes = dataset[0].class_count;
  std::vector<double> mean(static_cast<std::size_t>(classes), 0.0);
  for (const LabelVolume& v : dataset) {
    if (v.class_count != classes) throw Error("class_frequencies: volumes disagree on class count");
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(classes), 0);
    for (std::uint8_t l : v.labels) {
      if (l >= classes) throw Error("class_frequencies: label " + std::to_string(l) + " out of range");
      ++counts[l];
    }
    for (std::size_t c = 0; c < counts.size(); ++c)
      mean[c] += static_cast<double>(counts[c]) / static_cast<double>(v.size());
  }
  for (double& m : mean) m /= static_cast<double>(dataset.size());
  return mean;
}

double multiclass_jaccard_reference(const LabelVolume& p, const LabelVolume& t) {
  if (p.dims != t.dims) throw Error("multiclass_jaccard_reference: shapes differ");
  std::uint64_t num = 0, den = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    num += std::min(p.labels[i], t.labels[i]);
    den += std::max(p.labels[i], t.labels[i]);
  }
  if (den == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

#define VSEG_INSTANTIATE_LOSS(T)                                                                                 \
  template double jaccard(std::span<const T>, std::span<const T>, double);                                     \
  template double dice(std::span<const T>, std::span<const T>, double);                                        \
  template JaccardLoss jaccard_loss(const Tensor<T>&, const LabelVolume&, std::span<const int>, double);        \
  template Tensor<T> jaccard_loss_grad(const Tensor<T>&, const LabelVolume&, std::span<const int>, double);     \
  template double cross_entropy(const Tensor<T>&, const LabelVolume&, double);                                  \
  template Tensor<T> cross_entropy_grad(const Tensor<T>&, const LabelVolume&, double);                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                 \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                                        \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template LossEvaluation<T> evaluate_loss(const Tensor<T>&, const LabelVolume&, const LossOptions&, bool);

VSEG_INSTANTIATE_LOSS(float)
VSEG_INSTANTIATE_LOSS(double)

}  // namespace vseg
