#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/label_volume.hpp"
#include "vseg/loss_metrics.hpp"
#include "vseg/network.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

/// Moment-retention coefficients beta1 and beta2 follow the usual Adam
/// update: m = beta1 m + (1 - beta1) g, v = beta2 v + (1 - beta2) g^2.
struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.1;
  double beta2 = 0.001;
  double epsilon = 1e-8;

  void validate() const;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m, v;  // lazily shaped like the parameters on the first step

  AdamState() = default;
  explicit AdamState(const AdamConfig& c) : config(c) {}
};

/// One bias-corrected Adam update of every parameter in place.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

template <typename T>
void adam_step(Network<T>& net, std::span<const Tensor<T>> grads, AdamState<T>& state);

enum class AugmentPolicy { none, random_transform };
std::string to_string(AugmentPolicy p);
AugmentPolicy parse_augment_policy(const std::string& s);

struct TrainConfig {
  std::size_t max_epochs = 600;
  std::size_t patience = 100;
  double min_improvement = 1e-6;
  AugmentPolicy augmentation = AugmentPolicy::random_transform;
  bool shuffle = true;
  std::uint64_t seed = 0;
  LossOptions loss;
  std::vector<double> aux_weights{0.0, 0.0};  // half- and quarter-resolution heads
  AdamConfig adam;

  void validate() const;
};

/// Offsets that derive each subsystem's seed from TrainConfig::seed.
inline constexpr std::uint64_t kInitSeedOffset = 1;
inline constexpr std::uint64_t kAugmentSeedOffset = 2;
inline constexpr std::uint64_t kShuffleSeedOffset = 3;
inline constexpr std::uint64_t kSynthSeedOffset = 4;

template <typename T>
struct Sample {
  Tensor<T> image;  // (C, D, H, W)
  LabelVolume labels;
  std::string name;
};

struct IterationRecord {
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double fused_loss = 0.0;
  std::vector<double> aux_losses;  // unweighted; empty when no auxiliary weight is active
  double total_loss = 0.0;         // fused_loss + sum of weight * aux loss
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over the epoch's iterations
  double val_loss = 0.0;    // mean fused loss over the validation set, or train_loss without one
};

template <typename T>
struct TrainResult {
  Network<T> best;  // snapshot at the epoch with the lowest validation loss
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> epochs;
  std::vector<IterationRecord> iterations;
  Network<T> last;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// One whole volume per iteration. Stops at max_epochs or after `patience`
/// consecutive epochs without the validation loss improving on its running
/// best by more than min_improvement.
template <typename T>
TrainResult<T> train(Network<T> net, std::span<const Sample<T>> train_set, std::span<const Sample<T>> val_set,
                     const TrainConfig& cfg, const IterationCallback& on_iteration = {});

/// Mean fused loss of `net` in inference mode.
template <typename T>
double evaluate_mean_loss(const Network<T>& net, std::span<const Sample<T>> samples, const LossOptions& loss);

/// Contiguous [begin, end) index ranges; earlier folds take the remainder.
std::vector<std::pair<std::size_t, std::size_t>> fold_ranges(std::size_t n, std::size_t k);

struct FoldReport {
  std::size_t fold = 0;
  std::vector<std::size_t> test_indices;
  std::vector<ConfusionMetrics> regions;  // aligned with the region map, counts pooled over the test volumes
};

template <typename T>
struct CrossValResult {
  std::vector<Network<T>> nets;
  std::vector<TrainResult<T>> runs;
  std::vector<FoldReport> folds;
  std::vector<std::string> region_names;
  std::vector<std::optional<double>> mean_dice;  // per region, over folds where it is defined
};

/// Trains one network per fold on the remaining volumes and evaluates it on
/// the held-out fold. Fold i's network is built with seed cfg.seed + 1 + i;
/// with k >= 3 fold (i + 1) mod k of the training volumes serves as the
/// validation set. Folds run on up to `threads` threads.
template <typename T>
CrossValResult<T> crossval(const ArchSpec& spec, std::span<const Sample<T>> dataset, std::size_t k,
                           const TrainConfig& cfg, const RegionMap& regions, std::size_t threads = 1);

}  // namespace vseg
