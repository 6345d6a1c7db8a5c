#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/label_volume.hpp"
#include "vseg/layers.hpp"
#include "vseg/loss_metrics.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

/// 3x3x3 convolution followed by batch normalization and PReLU.
template <typename T>
struct ConvUnit {
  ConvParams<T> conv;
  BatchNormState<T> bn;
  PReluParams<T> act;
};

template <typename T>
struct SegmentationOutput {
  Tensor<T> scores;            // fused raw scores, (class_count, D, H, W)
  std::vector<Tensor<T>> heads;  // raw head maps: full, then half and quarter resolution
};

template <typename T>
struct NetworkGradients {
  std::vector<Tensor<T>> params;  // aligned with Network::parameters()
  Tensor<T> input;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct NamedConstTensor {
  std::string name;
  const Tensor<T>* tensor;
};

template <typename T>
struct ForwardCache;

/// The U-shaped segmentation network: three contracting blocks, a bottom
/// block, three expanding blocks with long skip connections, and one or
/// three segmentation heads whose raw maps are fused by upsampling and
/// summation.
template <typename T>
class Network {
 public:
  Network();
  ~Network();
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  /// Deterministic for a fixed seed.
  static Network build(const ArchSpec& spec, std::uint64_t seed);

  const ArchSpec& spec() const { return spec_; }

  /// Runs the network and keeps the activations needed by backward(). Train
  /// mode normalizes with batch statistics and updates running averages.
  SegmentationOutput<T> forward(const Tensor<T>& x, Mode mode);

  /// Inference-mode forward without caching; safe to call concurrently.
  SegmentationOutput<T> infer(const Tensor<T>& x) const;

  /// Reverse pass for the most recent forward(). `score_grad` is the loss
  /// gradient wrt the fused scores; `head_grads`, if given, adds gradients
  /// wrt each raw head map (same order as SegmentationOutput::heads).
  NetworkGradients<T> backward(const Tensor<T>& score_grad, std::span<const Tensor<T>> head_grads = {}) const;

  bool has_cache() const { return cache_ != nullptr; }
  void clear_cache();

  /// Sign (x >= 0) of every PReLU input recorded by the last forward();
  /// used to detect finite-difference steps across the activation kink.
  std::vector<std::uint8_t> activation_pattern() const;

  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedConstTensor<T>> parameters() const;
  /// Batch-norm running statistics.
  std::vector<NamedTensor<T>> buffers();
  std::vector<NamedConstTensor<T>> buffers() const;

  std::vector<ConvUnit<T>>& units() { return units_; }
  const std::vector<ConvUnit<T>>& units() const { return units_; }
  std::vector<ConvParams<T>>& reducers() { return reducers_; }
  const std::vector<ConvParams<T>>& reducers() const { return reducers_; }
  std::vector<ConvParams<T>>& heads() { return heads_; }
  const std::vector<ConvParams<T>>& heads() const { return heads_; }

  /// Same parameters and running statistics at another precision.
  template <typename U>
  Network<U> cast() const;

 private:
  SegmentationOutput<T> run(const Tensor<T>& x, Mode mode, ForwardCache<T>* cache,
                            std::vector<BatchStats>* stats) const;

  ArchSpec spec_;
  std::vector<ConvUnit<T>> units_;
  std::vector<ConvParams<T>> reducers_;
  std::vector<ConvParams<T>> heads_;
  std::unique_ptr<ForwardCache<T>> cache_;

  template <typename U>
  friend class Network;
};

/// Per voxel, the class with the highest score; ties go to the lowest index.
template <typename T>
LabelVolume argmax_labels(const Tensor<T>& scores);

template <typename T>
LabelVolume predict_labels(const Network<T>& net, const Tensor<T>& x);

/// Averages the members' per-class sigmoid probabilities, then takes the
/// argmax with the same tie rule as predict_labels.
template <typename T>
LabelVolume ensemble_predict(std::span<const Network<T>> nets, const Tensor<T>& x);

}  // namespace vseg
