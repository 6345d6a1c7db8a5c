#include "vseg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "vseg/augment.hpp"

namespace vseg {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error("adam learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error("adam beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error("adam epsilon must be > 0");
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size())
    throw Error("adam_step: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    require_same_shape(params[i]->shape(), grads[i].shape(), "adam_step gradient");
  if (state.m.empty()) {
    for (const Tensor<T>* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i)
    require_same_shape(params[i]->shape(), state.m[i].shape(), "adam_step moment");

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    const Tensor<T>& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double step = c.learning_rate * (mj / correct1) / (std::sqrt(vj / correct2) + c.epsilon);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - step);
    }
  }
}

template <typename T>
void adam_step(Network<T>& net, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  std::vector<Tensor<T>*> ptrs;
  for (auto& nt : net.parameters()) ptrs.push_back(nt.tensor);
  adam_step(std::span<Tensor<T>* const>(ptrs), grads, state);
}

std::string to_string(AugmentPolicy p) { return p == AugmentPolicy::none ? "none" : "random_transform"; }

AugmentPolicy parse_augment_policy(const std::string& s) {
  if (s == "none") return AugmentPolicy::none;
  if (s == "random_transform") return AugmentPolicy::random_transform;
  throw Error("unknown augmentation policy '" + s + "' (expected none or random_transform)");
}

void TrainConfig::validate() const {
  if (max_epochs == 0) throw Error("max_epochs must be >= 1");
  if (patience > max_epochs) throw Error("patience must not exceed max_epochs");
  if (!(min_improvement >= 0.0)) throw Error("min_improvement must be >= 0");
  if (aux_weights.size() != 2) throw Error("aux_weights needs exactly two entries (half, quarter)");
  for (double w : aux_weights)
    if (!(w >= 0.0)) throw Error("auxiliary loss weights must be >= 0");
  adam.validate();
}

namespace {

template <typename T>
void check_samples(const Network<T>& net, std::span<const Sample<T>> samples, const char* what) {
  for (const Sample<T>& s : samples) {
    if (s.image.rank() != 4 || s.image.channels() != net.spec().in_channels)
      throw Error(std::string(what) + ": sample '" + s.name + "' has image shape " + to_string(s.image.shape()) +
                  ", expected " + std::to_string(net.spec().in_channels) + " channels");
    if (s.image.dims() != s.labels.dims)
      throw Error(std::string(what) + ": sample '" + s.name + "' image and labels differ in extent");
    if (s.labels.class_count != static_cast<int>(net.spec().class_count))
      throw Error(std::string(what) + ": sample '" + s.name + "' has " + std::to_string(s.labels.class_count) +
                  " classes, the network predicts " + std::to_string(net.spec().class_count));
    for (std::size_t e : s.labels.dims)
      if (e % kSpatialMultiple != 0)
        throw Error(std::string(what) + ": sample '" + s.name + "' extents " + to_string(s.labels.dims) +
                    " are not multiples of " + std::to_string(kSpatialMultiple));
  }
}

}  // namespace

template <typename T>
double evaluate_mean_loss(const Network<T>& net, std::span<const Sample<T>> samples, const LossOptions& loss) {
  if (samples.empty()) throw Error("evaluate_mean_loss: no samples");
  double sum = 0.0;
  for (const Sample<T>& s : samples) sum += evaluate_loss(net.infer(s.image).scores, s.labels, loss, false).value;
  return sum / static_cast<double>(samples.size());
}

template <typename T>
TrainResult<T> train(Network<T> net, std::span<const Sample<T>> train_set, std::span<const Sample<T>> val_set,
                     const TrainConfig& cfg, const IterationCallback& on_iteration) {
  cfg.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  check_samples(net, train_set, "train");
  check_samples(net, val_set, "train (validation)");

  std::mt19937_64 augment_rng(cfg.seed + kAugmentSeedOffset);
  std::mt19937_64 shuffle_rng(cfg.seed + kShuffleSeedOffset);
  AdamState<T> adam(cfg.adam);
  const bool use_aux =
      net.spec().head_count == 3 && std::any_of(cfg.aux_weights.begin(), cfg.aux_weights.end(), [](double w) { return w > 0.0; });

  TrainResult<T> result;
  result.best = net;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t iteration = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    for (std::size_t idx : order) {
      const Sample<T>& s = train_set[idx];
      TransformDraw draw;
      if (cfg.augmentation == AugmentPolicy::random_transform) draw = draw_transform(augment_rng);
      auto [image, labels] = apply_transform(draw, s.image, s.labels);

      SegmentationOutput<T> out = net.forward(image, Mode::train);
      LossEvaluation<T> fused = evaluate_loss(out.scores, labels, cfg.loss);

      IterationRecord rec;
      rec.epoch = epoch;
      rec.iteration = ++iteration;
      rec.fused_loss = fused.value;
      rec.total_loss = fused.value;
      std::vector<Tensor<T>> head_grads;
      if (use_aux) {
        head_grads.push_back(zeros_like(out.heads[0]));
        for (std::size_t h = 1; h < 3; ++h) {
          const double w = cfg.aux_weights[h - 1];
          if (w == 0.0) {
            rec.aux_losses.push_back(0.0);
            head_grads.push_back(zeros_like(out.heads[h]));
            continue;
          }
          LabelVolume target = resample_nearest(labels, out.heads[h].dims());
          LossEvaluation<T> aux = evaluate_loss(out.heads[h], target, cfg.loss);
          rec.aux_losses.push_back(aux.value);
          rec.total_loss += w * aux.value;
          head_grads.push_back(affine(aux.score_grad, static_cast<T>(w), T(0)));
        }
      }

      NetworkGradients<T> g = net.backward(fused.score_grad, head_grads);
      adam_step(net, std::span<const Tensor<T>>(g.params), adam);
      net.clear_cache();
      epoch_sum += rec.total_loss;
      if (on_iteration) on_iteration(rec);
      result.iterations.push_back(std::move(rec));
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = epoch_sum / static_cast<double>(train_set.size());
    er.val_loss = val_set.empty() ? er.train_loss : evaluate_mean_loss(net, val_set, cfg.loss);
    result.epochs.push_back(er);

    if (er.val_loss < result.best_val_loss - cfg.min_improvement) {
      result.best_val_loss = er.val_loss;
      result.best_epoch = epoch;
      result.best = net;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  result.last = std::move(net);
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> fold_ranges(std::size_t n, std::size_t k) {
  if (k == 0) throw Error("fold count must be >= 1");
  if (k > n)
    throw Error("cannot split " + std::to_string(n) + " volumes into " + std::to_string(k) + " folds");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = n / k + (i < n % k ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

template <typename T>
CrossValResult<T> crossval(const ArchSpec& spec, std::span<const Sample<T>> dataset, std::size_t k,
                           const TrainConfig& cfg, const RegionMap& regions, std::size_t threads) {
  spec.validate();
  cfg.validate();
  regions.validate(static_cast<int>(spec.class_count));
  const auto ranges = fold_ranges(dataset.size(), k);
  if (k < 2) throw Error("cross-validation needs at least 2 folds");

  CrossValResult<T> res;
  res.nets.resize(k);
  res.runs.resize(k);
  res.folds.resize(k);
  for (const auto& r : regions.regions) res.region_names.push_back(r.first);

  auto run_fold = [&](std::size_t i) {
    const std::size_t val_fold = (i + 1) % k;
    std::vector<Sample<T>> train_part, val_part, test_part;
    FoldReport& report = res.folds[i];
    report.fold = i;
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t j = ranges[f].first; j < ranges[f].second; ++j) {
        if (f == i) {
          test_part.push_back(dataset[j]);
          report.test_indices.push_back(j);
        } else if (k >= 3 && f == val_fold) {
          val_part.push_back(dataset[j]);
        } else {
          train_part.push_back(dataset[j]);
        }
      }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + i;
    Network<T> net = Network<T>::build(spec, fold_cfg.seed + kInitSeedOffset);
    res.runs[i] = train(std::move(net), std::span<const Sample<T>>(train_part),
                        std::span<const Sample<T>>(val_part), fold_cfg);
    res.nets[i] = res.runs[i].best;

    for (const auto& r : regions.regions) {
      ConfusionCounts pooled;
      for (const Sample<T>& s : test_part) {
        ConfusionCounts c = confusion_counts(predict_labels(res.nets[i], s.image), s.labels, r.second);
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
        pooled.tn += c.tn;
      }
      report.regions.push_back(metrics_from_counts(pooled));
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, k);
  if (workers == 1) {
    for (std::size_t i = 0; i < k; ++i) run_fold(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < k; i += workers) run_fold(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t r = 0; r < res.region_names.size(); ++r) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const FoldReport& f : res.folds)
      if (f.regions[r].dice) {
        sum += *f.regions[r].dice;
        ++n;
      }
    res.mean_dice.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
  }
  return res;
}

#define VSEG_INSTANTIATE_OPTIM(T)                                                                              \
  template void adam_step(std::span<Tensor<T>* const>, std::span<const Tensor<T>>, AdamState<T>&);             \
  template void adam_step(Network<T>&, std::span<const Tensor<T>>, AdamState<T>&);                             \
  template double evaluate_mean_loss(const Network<T>&, std::span<const Sample<T>>, const LossOptions&);       \
  template TrainResult<T> train(Network<T>, std::span<const Sample<T>>, std::span<const Sample<T>>,            \
                                const TrainConfig&, const IterationCallback&);                                 \
  template CrossValResult<T> crossval(const ArchSpec&, std::span<const Sample<T>>, std::size_t,                \
                                      const TrainConfig&, const RegionMap&, std::size_t);

VSEG_INSTANTIATE_OPTIM(float)
VSEG_INSTANTIATE_OPTIM(double)

}  // namespace vseg
