#pragma once

#include <cstddef>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

enum class Mode { train, infer };

/// Weights (out, in, k, k, k) and bias (out) of a zero-padded 3D
/// convolution. k is 1 or 3.
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  Tensor<T> bias;

  ConvParams() = default;
  ConvParams(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

  std::size_t out_channels() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(1); }
  std::size_t kernel() const { return weights.extent(2); }
};

/// Per-channel learnable slope `a` of f(x) = max(0, x) + a * min(0, x).
template <typename T>
struct PReluParams {
  Tensor<T> slope;

  PReluParams() = default;
  PReluParams(std::size_t channels, T initial_slope);
};

/// Learnable gain/shift plus the running statistics used at inference.
/// Running values follow  r <- momentum * r + (1 - momentum) * current.
template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_std;
  T momentum = T(0.5);
  T epsilon = T(1e-5);

  BatchNormState() = default;
  BatchNormState(std::size_t channels, T init_mean, T init_std, T momentum, T epsilon);

  std::size_t channels() const { return gamma.size(); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
struct PReluGrads {
  Tensor<T> input;
  Tensor<T> slope;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Cross-correlation with zero padding k/2; output keeps the input extents.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const ConvParams<T>& p);

// Same per-voxel arithmetic as conv3d_forward, evaluated only at voxels whose
// indices are all multiples of `stride`. Extents must divide by `stride`.
template <typename T>
Tensor<T> conv3d_strided_forward(const Tensor<T>& x, const ConvParams<T>& p, std::size_t stride);

// Nearest-neighbour 2x upsampling followed by conv3d_forward.
template <typename T>
Tensor<T> deconv3d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <typename T>
Tensor<T> prelu_forward(const Tensor<T>& x, const PReluParams<T>& p);

/// Train mode normalizes with the statistics of `x` and updates the running
/// averages in `s`; infer mode uses the running averages and leaves `s` as is.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& s, Mode mode);

/// Per-channel mean and (biased) standard deviation of one batch.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Normalization step of batchnorm_forward without the running-average
/// update. In train mode the batch statistics are written to `stats`.
template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& x, const BatchNormState<T>& s, Mode mode, BatchStats* stats = nullptr);

template <typename T>
void batchnorm_update_running(BatchNormState<T>& s, const BatchStats& stats);

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream,
                             std::size_t stride = 1);

template <typename T>
ConvGrads<T> deconv3d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream);

template <typename T>
PReluGrads<T> prelu_backward(const Tensor<T>& x, const PReluParams<T>& p, const Tensor<T>& upstream);

/// Gradients of batchnorm_forward(x, s, mode). Train mode recomputes the
/// batch statistics from `x`; infer mode uses the current running values.
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& x, const BatchNormState<T>& s, const Tensor<T>& upstream,
                                     Mode mode);

// Resampling helpers shared by the strided and deconvolution paths.
template <typename T>
Tensor<T> repeat_voxels(const Tensor<T>& x, std::size_t factor);
template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x, std::size_t factor);  // adjoint of repeat_voxels
template <typename T>
Tensor<T> subsample(const Tensor<T>& x, std::size_t stride);

}  // namespace vseg
