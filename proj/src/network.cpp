#include "vseg/network.hpp"

#include <array>
#include <cmath>
#include <random>

namespace vseg {

namespace {

// Unit indices (0-based) within Network::units().
constexpr std::array<std::size_t, 3> kStridedUnits{1, 3, 5};
constexpr std::array<std::size_t, 3> kDeconvUnits{7, 9, 11};
// Skip source feeding each deconvolution's merge, same order as kDeconvUnits.
constexpr std::array<std::size_t, 3> kSkipSources{4, 2, 0};
// Reducer r consumes the output of kReducerInputs[r] and feeds kDeconvUnits[r].
constexpr std::array<std::size_t, 3> kReducerInputs{6, 8, 10};
// Head h (full, half, quarter) reads the output of kHeadInputs[h].
constexpr std::array<std::size_t, 3> kHeadInputs{12, 10, 8};

constexpr std::size_t kParamsPerUnit = 5;

bool is_strided(std::size_t u) {
  return std::find(kStridedUnits.begin(), kStridedUnits.end(), u) != kStridedUnits.end();
}
bool is_deconv(std::size_t u) {
  return std::find(kDeconvUnits.begin(), kDeconvUnits.end(), u) != kDeconvUnits.end();
}

Dims3 scaled(const Dims3& d, std::size_t level) {
  const std::size_t f = std::size_t{1} << level;
  return {d[0] / f, d[1] / f, d[2] / f};
}

}  // namespace

template <typename T>
struct UnitCache {
  Tensor<T> in;
  Tensor<T> conv_out;
  Tensor<T> bn_out;
};

template <typename T>
struct ForwardCache {
  Mode mode = Mode::train;
  Dims3 dims{};
  std::array<UnitCache<T>, kUnitCount> units;
  std::array<Tensor<T>, 3> reducer_in;
  std::array<Tensor<T>, 3> head_in;
};

template <typename T>
Network<T>::Network() = default;
template <typename T>
Network<T>::~Network() = default;
template <typename T>
Network<T>::Network(Network&&) noexcept = default;
template <typename T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;

template <typename T>
Network<T>::Network(const Network& other)
    : spec_(other.spec_), units_(other.units_), reducers_(other.reducers_), heads_(other.heads_) {}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    spec_ = other.spec_;
    units_ = other.units_;
    reducers_ = other.reducers_;
    heads_ = other.heads_;
    cache_.reset();
  }
  return *this;
}

template <typename T>
void Network<T>::clear_cache() {
  cache_.reset();
}

template <typename T>
Network<T> Network<T>::build(const ArchSpec& spec, std::uint64_t seed) {
  const std::vector<PlannedLayer> plan = plan_layers(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto init_conv = [&](const PlannedLayer& l) {
    ConvParams<T> p(l.in_channels, l.out_channels, l.kernel);
    const double k3 = static_cast<double>(l.kernel * l.kernel * l.kernel);
    const double scale =
        spec.init == InitScheme::gaussian
            ? spec.init_std
            : std::sqrt(2.0 / (static_cast<double>(l.in_channels) * k3 + static_cast<double>(l.out_channels) * k3));
    for (T& w : p.weights.values()) w = static_cast<T>(normal(rng) * scale);
    return p;
  };

  Network net;
  net.spec_ = spec;
  for (const PlannedLayer& l : plan) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::strided_conv:
      case LayerKind::deconv:
        net.units_.push_back(ConvUnit<T>{
            init_conv(l),
            BatchNormState<T>(l.out_channels, static_cast<T>(spec.bn_init_mean), static_cast<T>(spec.bn_init_std),
                              static_cast<T>(spec.bn_momentum), static_cast<T>(spec.bn_epsilon)),
            PReluParams<T>(l.out_channels, static_cast<T>(spec.prelu_init))});
        break;
      case LayerKind::reducer: net.reducers_.push_back(init_conv(l)); break;
      case LayerKind::head: net.heads_.push_back(init_conv(l)); break;
    }
  }
  return net;
}

template <typename T>
SegmentationOutput<T> Network<T>::run(const Tensor<T>& x, Mode mode, ForwardCache<T>* cache,
                                      std::vector<BatchStats>* stats) const {
  if (x.rank() != 4) throw Error("network input must be (C, D, H, W), got " + to_string(x.shape()));
  if (x.channels() != spec_.in_channels)
    throw Error("network expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                std::to_string(x.channels()));
  const Dims3 dims = x.dims();
  for (std::size_t e : dims)
    if (e % kSpatialMultiple != 0)
      throw Error("network input extents " + to_string(dims) + " must be multiples of " +
                  std::to_string(kSpatialMultiple));
  if (cache) {
    cache->mode = mode;
    cache->dims = dims;
  }
  if (stats) stats->assign(kUnitCount, BatchStats{});

  auto unit = [&](std::size_t i, const Tensor<T>& in) {
    const ConvUnit<T>& u = units_[i];
    Tensor<T> z = is_strided(i)  ? conv3d_strided_forward(in, u.conv, 2)
                  : is_deconv(i) ? deconv3d_forward(in, u.conv)
                                 : conv3d_forward(in, u.conv);
    Tensor<T> b = batchnorm_apply(z, u.bn, mode, stats ? &(*stats)[i] : nullptr);
    Tensor<T> a = prelu_forward(b, u.act);
    if (cache) cache->units[i] = UnitCache<T>{in, std::move(z), std::move(b)};
    return a;
  };
  auto merge = [&](const Tensor<T>& up, const Tensor<T>& skip) {
    switch (spec_.skip_mode) {
      case SkipMode::sum: return up + skip;
      case SkipMode::concat: return concat_channels(up, skip);
      case SkipMode::none: break;
    }
    return up;
  };

  std::array<Tensor<T>, kUnitCount> a;
  a[0] = unit(0, x);
  for (std::size_t i = 1; i <= 6; ++i) a[i] = unit(i, a[i - 1]);
  for (std::size_t r = 0; r < 3; ++r) {
    const Tensor<T>& rin = a[kReducerInputs[r]];
    if (cache) cache->reducer_in[r] = rin;
    const std::size_t d = kDeconvUnits[r];
    a[d] = unit(d, conv3d_forward(rin, reducers_[r]));
    a[d + 1] = unit(d + 1, merge(a[d], a[kSkipSources[r]]));
  }

  SegmentationOutput<T> out;
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const Tensor<T>& hin = a[kHeadInputs[h]];
    if (cache) cache->head_in[h] = hin;
    out.heads.push_back(conv3d_forward(hin, heads_[h]));
  }
  if (heads_.size() == 3) {
    Tensor<T> coarse = out.heads[1] + resample_trilinear(out.heads[2], scaled(dims, 1));
    out.scores = out.heads[0] + resample_trilinear(coarse, dims);
  } else {
    out.scores = out.heads[0];
  }
  return out;
}

template <typename T>
SegmentationOutput<T> Network<T>::forward(const Tensor<T>& x, Mode mode) {
  auto cache = std::make_unique<ForwardCache<T>>();
  std::vector<BatchStats> stats;
  SegmentationOutput<T> out = run(x, mode, cache.get(), mode == Mode::train ? &stats : nullptr);
  if (mode == Mode::train)
    for (std::size_t i = 0; i < kUnitCount; ++i) batchnorm_update_running(units_[i].bn, stats[i]);
  cache_ = std::move(cache);
  return out;
}

template <typename T>
SegmentationOutput<T> Network<T>::infer(const Tensor<T>& x) const {
  return run(x, Mode::infer, nullptr, nullptr);
}

template <typename T>
NetworkGradients<T> Network<T>::backward(const Tensor<T>& score_grad, std::span<const Tensor<T>> head_grads) const {
  if (!cache_) throw Error("Network::backward called without a cached forward pass");
  const ForwardCache<T>& c = *cache_;
  const Dims3 dims = c.dims;
  const Shape score_shape{spec_.class_count, dims[0], dims[1], dims[2]};
  require_same_shape(score_grad.shape(), score_shape, "Network::backward score gradient");
  if (!head_grads.empty() && head_grads.size() != heads_.size())
    throw Error("Network::backward: expected " + std::to_string(heads_.size()) + " head gradients, got " +
                std::to_string(head_grads.size()));

  NetworkGradients<T> g;
  g.params.resize(kUnitCount * kParamsPerUnit + 2 * reducers_.size() + 2 * heads_.size());
  const std::size_t reducer_base = kUnitCount * kParamsPerUnit;
  const std::size_t head_base = reducer_base + 2 * reducers_.size();

  // Gradients wrt each raw head map.
  std::vector<Tensor<T>> d_head(heads_.size());
  d_head[0] = score_grad;
  if (heads_.size() == 3) {
    Tensor<T> d_coarse = resample_trilinear_adjoint(score_grad, scaled(dims, 1));
    d_head[2] = resample_trilinear_adjoint(d_coarse, scaled(dims, 2));
    d_head[1] = std::move(d_coarse);
  }
  for (std::size_t h = 0; h < head_grads.size(); ++h) add_inplace(d_head[h], head_grads[h]);

  std::array<Tensor<T>, kUnitCount> da;
  auto accumulate = [](Tensor<T>& acc, Tensor<T>&& v) {
    if (acc.empty())
      acc = std::move(v);
    else
      add_inplace(acc, v);
  };
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    ConvGrads<T> hg = conv3d_backward(c.head_in[h], heads_[h], d_head[h]);
    g.params[head_base + 2 * h] = std::move(hg.weights);
    g.params[head_base + 2 * h + 1] = std::move(hg.bias);
    accumulate(da[kHeadInputs[h]], std::move(hg.input));
  }

  auto unit_back = [&](std::size_t i, const Tensor<T>& d_out) {
    const UnitCache<T>& uc = c.units[i];
    const ConvUnit<T>& u = units_[i];
    PReluGrads<T> pg = prelu_backward(uc.bn_out, u.act, d_out);
    BatchNormGrads<T> bg = batchnorm_backward(uc.conv_out, u.bn, pg.input, c.mode);
    ConvGrads<T> cg = is_deconv(i)    ? deconv3d_backward(uc.in, u.conv, bg.input)
                      : is_strided(i) ? conv3d_backward(uc.in, u.conv, bg.input, 2)
                                      : conv3d_backward(uc.in, u.conv, bg.input, 1);
    const std::size_t base = i * kParamsPerUnit;
    g.params[base + 0] = std::move(cg.weights);
    g.params[base + 1] = std::move(cg.bias);
    g.params[base + 2] = std::move(bg.gamma);
    g.params[base + 3] = std::move(bg.beta);
    g.params[base + 4] = std::move(pg.slope);
    return std::move(cg.input);
  };

  for (std::size_t r = 3; r-- > 0;) {
    const std::size_t d = kDeconvUnits[r];
    Tensor<T> d_merged = unit_back(d + 1, da[d + 1]);
    const std::size_t skip = kSkipSources[r];
    switch (spec_.skip_mode) {
      case SkipMode::sum:
        accumulate(da[skip], Tensor<T>(d_merged));
        accumulate(da[d], std::move(d_merged));
        break;
      case SkipMode::concat: {
        auto [d_up, d_skip] = split_channels(d_merged, units_[d].conv.out_channels());
        accumulate(da[skip], std::move(d_skip));
        accumulate(da[d], std::move(d_up));
        break;
      }
      case SkipMode::none: accumulate(da[d], std::move(d_merged)); break;
    }
    Tensor<T> d_reduced = unit_back(d, da[d]);
    ConvGrads<T> rg = conv3d_backward(c.reducer_in[r], reducers_[r], d_reduced);
    g.params[reducer_base + 2 * r] = std::move(rg.weights);
    g.params[reducer_base + 2 * r + 1] = std::move(rg.bias);
    accumulate(da[kReducerInputs[r]], std::move(rg.input));
  }
  for (std::size_t i = 7; i-- > 1;) accumulate(da[i - 1], unit_back(i, da[i]));
  g.input = unit_back(0, da[0]);
  return g;
}

template <typename T>
std::vector<std::uint8_t> Network<T>::activation_pattern() const {
  if (!cache_) throw Error("activation_pattern needs a cached forward pass");
  std::vector<std::uint8_t> signs;
  for (const UnitCache<T>& u : cache_->units)
    for (T v : u.bn_out.values()) signs.push_back(v >= T(0) ? 1 : 0);
  return signs;
}

template <typename T>
std::vector<NamedTensor<T>> Network<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  const std::vector<PlannedLayer> plan = plan_layers(spec_);
  std::size_t ui = 0, ri = 0, hi = 0;
  for (const PlannedLayer& l : plan) {
    if (l.kind == LayerKind::reducer) {
      out.push_back({l.name + ".weight", &reducers_[ri].weights});
      out.push_back({l.name + ".bias", &reducers_[ri].bias});
      ++ri;
    } else if (l.kind == LayerKind::head) {
      out.push_back({l.name + ".weight", &heads_[hi].weights});
      out.push_back({l.name + ".bias", &heads_[hi].bias});
      ++hi;
    } else {
      ConvUnit<T>& u = units_[ui++];
      out.push_back({l.name + ".weight", &u.conv.weights});
      out.push_back({l.name + ".bias", &u.conv.bias});
      out.push_back({l.name + ".bn.gamma", &u.bn.gamma});
      out.push_back({l.name + ".bn.beta", &u.bn.beta});
      out.push_back({l.name + ".prelu.slope", &u.act.slope});
    }
  }
  // Match the gradient layout: units, then reducers, then heads.
  std::vector<NamedTensor<T>> ordered;
  for (const auto& p : out)
    if (p.name.rfind("conv", 0) == 0 || p.name.rfind("deconv", 0) == 0) ordered.push_back(p);
  for (const auto& p : out)
    if (p.name.rfind("reduce", 0) == 0) ordered.push_back(p);
  for (const auto& p : out)
    if (p.name.rfind("head", 0) == 0) ordered.push_back(p);
  return ordered;
}

template <typename T>
std::vector<NamedConstTensor<T>> Network<T>::parameters() const {
  std::vector<NamedConstTensor<T>> out;
  for (auto& p : const_cast<Network*>(this)->parameters()) out.push_back({p.name, p.tensor});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Network<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  const std::vector<PlannedLayer> plan = plan_layers(spec_);
  std::size_t ui = 0;
  for (const PlannedLayer& l : plan) {
    if (l.kind == LayerKind::reducer || l.kind == LayerKind::head) continue;
    ConvUnit<T>& u = units_[ui++];
    out.push_back({l.name + ".bn.running_mean", &u.bn.running_mean});
    out.push_back({l.name + ".bn.running_std", &u.bn.running_std});
  }
  return out;
}

template <typename T>
std::vector<NamedConstTensor<T>> Network<T>::buffers() const {
  std::vector<NamedConstTensor<T>> out;
  for (auto& p : const_cast<Network*>(this)->buffers()) out.push_back({p.name, p.tensor});
  return out;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out = Network<U>::build(spec_, 0);
  auto src_p = parameters();
  auto dst_p = out.parameters();
  for (std::size_t i = 0; i < src_p.size(); ++i) *dst_p[i].tensor = src_p[i].tensor->template cast<U>();
  auto src_b = buffers();
  auto dst_b = out.buffers();
  for (std::size_t i = 0; i < src_b.size(); ++i) *dst_b[i].tensor = src_b[i].tensor->template cast<U>();
  return out;
}

template <typename T>
LabelVolume argmax_labels(const Tensor<T>& scores) {
  if (scores.rank() != 4) throw Error("argmax_labels expects (C, D, H, W) scores, got " + to_string(scores.shape()));
  LabelVolume out(scores.dims(), static_cast<int>(scores.channels()));
  const std::size_t n = out.size();
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.channels(); ++c)
      if (scores[c * n + v] > scores[best * n + v]) best = c;
    out.labels[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

// Sum of member sigmoid probabilities in double; the argmax of the sum equals
// the argmax of the mean.
template <typename T>
void accumulate_probabilities(Tensor<double>& acc, const Tensor<T>& scores) {
  if (acc.empty()) acc = Tensor<double>(scores.shape());
  require_same_shape(acc.shape(), scores.shape(), "ensemble member scores");
  for (std::size_t i = 0; i < scores.size(); ++i)
    acc[i] += 1.0 / (1.0 + std::exp(-static_cast<double>(scores[i])));
}

}  // namespace

template <typename T>
LabelVolume predict_labels(const Network<T>& net, const Tensor<T>& x) {
  Tensor<double> acc;
  accumulate_probabilities(acc, net.infer(x).scores);
  return argmax_labels(acc);
}

template <typename T>
LabelVolume ensemble_predict(std::span<const Network<T>> nets, const Tensor<T>& x) {
  if (nets.empty()) throw Error("ensemble_predict needs at least one network");
  for (const Network<T>& n : nets)
    if (n.spec().class_count != nets[0].spec().class_count || n.spec().in_channels != nets[0].spec().in_channels)
      throw Error("ensemble members disagree on class_count or in_channels");
  Tensor<double> acc;
  for (const Network<T>& n : nets) accumulate_probabilities(acc, n.infer(x).scores);
  return argmax_labels(acc);
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

template LabelVolume argmax_labels(const Tensor<float>&);
template LabelVolume argmax_labels(const Tensor<double>&);
template LabelVolume predict_labels(const Network<float>&, const Tensor<float>&);
template LabelVolume predict_labels(const Network<double>&, const Tensor<double>&);
template LabelVolume ensemble_predict(std::span<const Network<float>>, const Tensor<float>&);
template LabelVolume ensemble_predict(std::span<const Network<double>>, const Tensor<double>&);

}  // namespace vseg
