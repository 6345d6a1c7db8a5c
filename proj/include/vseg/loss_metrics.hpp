#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vseg/label_volume.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

/// Smoothing added to numerator and denominator of the overlap ratios, and
/// the probability clamp of the cross-entropy.
inline constexpr double kOverlapEpsilon = 1e-7;

// Overlap of a soft or hard mask P with a target T:
//   jaccard = (sum PT + eps) / (sum P^2 + sum T^2 - sum PT + eps)
//   dice    = (2 sum PT + eps) / (sum P^2 + sum T^2 + eps)
template <typename T>
double jaccard(std::span<const T> p, std::span<const T> t, double eps = kOverlapEpsilon);
template <typename T>
double dice(std::span<const T> p, std::span<const T> t, double eps = kOverlapEpsilon);

/// Classes 1..class_count-1.
std::vector<int> foreground_classes(int class_count);
/// Classes 0..class_count-1.
std::vector<int> all_classes(int class_count);

struct JaccardLoss {
  double total = 0.0;
  std::vector<double> per_class;  // aligned with the class set
};

/// Sum over `classes` of 1 - jaccard(P_c, onehot_c(target)). `probs` is a
/// (class_count, D, H, W) tensor of per-class probabilities.
template <typename T>
JaccardLoss jaccard_loss(const Tensor<T>& probs, const LabelVolume& target, std::span<const int> classes,
                         double eps = kOverlapEpsilon);

/// Gradient of jaccard_loss wrt `probs`; zero on channels outside `classes`.
template <typename T>
Tensor<T> jaccard_loss_grad(const Tensor<T>& probs, const LabelVolume& target, std::span<const int> classes,
                            double eps = kOverlapEpsilon);

/// Mean over voxels of -log p_true with p clamped to [eps, 1 - eps].
template <typename T>
double cross_entropy(const Tensor<T>& probs, const LabelVolume& target, double eps = kOverlapEpsilon);
template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, const LabelVolume& target, double eps = kOverlapEpsilon);

/// Elementwise logistic function.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& scores);

/// Per-voxel softmax across channels of a (C, D, H, W) tensor.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& scores);
/// Given softmax outputs and dL/dprobs, returns dL/dscores.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& grad);
/// Given sigmoid outputs and dL/dprobs, returns dL/dscores.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& probs, const Tensor<T>& grad);

enum class LossKind { jaccard, cross_entropy };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct LossOptions {
  LossKind kind = LossKind::jaccard;
  std::vector<int> classes;  // Jaccard class set; empty means all foreground classes
  double epsilon = kOverlapEpsilon;
};

template <typename T>
struct LossEvaluation {
  double value = 0.0;
  std::vector<double> per_class;  // Jaccard terms; empty for cross-entropy
  Tensor<T> score_grad;           // d value / d raw scores
};

/// Maps raw scores to probabilities (sigmoid for the Jaccard loss, softmax
/// for cross-entropy), evaluates the loss and back-propagates it to the
/// scores.
template <typename T>
LossEvaluation<T> evaluate_loss(const Tensor<T>& scores, const LabelVolume& target, const LossOptions& opts,
                                bool with_grad = true);

/// Named groups of foreground classes evaluated as one binary region.
struct RegionMap {
  std::vector<std::pair<std::string, std::vector<int>>> regions;

  /// whole = {1,2,3,4}, core = {1,3,4}, enhanced = {4} with labels
  /// 1 necrosis, 2 edema, 3 non-enhancing, 4 enhancing tumour.
  static RegionMap brats();
  /// One region per foreground class ("class1", ...) plus "foreground".
  static RegionMap per_class(int class_count);

  const std::vector<int>& at(const std::string& name) const;
  void validate(int class_count) const;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Undefined ratios (zero denominators) are std::nullopt.
struct ConfusionMetrics {
  ConfusionCounts counts;
  std::optional<double> dice, precision, sensitivity, specificity;
};

ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& truth, std::span<const int> region);
ConfusionMetrics metrics_from_counts(const ConfusionCounts& c);
ConfusionMetrics confusion_metrics(const LabelVolume& pred, const LabelVolume& truth, std::span<const int> region);
ConfusionMetrics confusion_metrics(const LabelVolume& pred, const LabelVolume& truth, const RegionMap& regions,
                                   const std::string& region);

/// Per-class voxel fraction of each volume, averaged over volumes.
std::vector<double> class_frequencies(std::span<const LabelVolume> dataset);

/// sum_i min(P_i, T_i) / sum_i max(P_i, T_i) over raw label values; 1 when
/// both volumes are all background. A reference metric, not a training loss.
double multiclass_jaccard_reference(const LabelVolume& p, const LabelVolume& t);

}  // namespace vseg
