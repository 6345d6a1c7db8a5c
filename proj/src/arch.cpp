#include "vseg/arch.hpp"

#include <algorithm>

#include "vseg/tensor.hpp"

namespace vseg {

std::string to_string(SkipMode m) {
  switch (m) {
    case SkipMode::sum: return "sum";
    case SkipMode::concat: return "concat";
    case SkipMode::none: return "none";
  }
  return "?";
}

std::string to_string(InitScheme s) { return s == InitScheme::gaussian ? "gaussian" : "xavier"; }

SkipMode parse_skip_mode(const std::string& s) {
  if (s == "sum") return SkipMode::sum;
  if (s == "concat") return SkipMode::concat;
  if (s == "none") return SkipMode::none;
  throw Error("unknown skip mode '" + s + "' (expected sum, concat or none)");
}

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "gaussian") return InitScheme::gaussian;
  if (s == "xavier") return InitScheme::xavier;
  throw Error("unknown init scheme '" + s + "' (expected gaussian or xavier)");
}

namespace {

std::size_t halved(std::size_t c) { return std::max<std::size_t>(1, c / 2); }

// Unit index of each skip source / deconvolution pair, deepest first.
struct SkipPair {
  std::size_t deconv_unit;
  std::size_t source_unit;
};
constexpr std::array<SkipPair, 3> kSkips{{{7, 4}, {9, 2}, {11, 0}}};

}  // namespace

void ArchSpec::validate() const {
  if (in_channels == 0) throw Error("in_channels must be >= 1");
  if (class_count < 2 || class_count > 256) throw Error("class_count must be in [2, 256]");
  for (std::size_t w : widths)
    if (w == 0) throw Error("feature widths must be >= 1");
  if (head_count != 1 && head_count != 3)
    throw Error("head_count must be 1 or 3, got " + std::to_string(head_count));
  if (!(init_std > 0)) throw Error("init_std must be positive");
  if (bn_momentum < 0 || bn_momentum > 1) throw Error("bn_momentum must lie in [0, 1]");
  if (!(bn_epsilon > 0)) throw Error("bn_epsilon must be positive");
  if (bn_init_std < 0) throw Error("bn_init_std must be >= 0");
  if (skip_mode == SkipMode::sum) {
    for (const SkipPair& s : kSkips)
      if (widths[s.deconv_unit] != widths[s.source_unit])
        throw Error("skip_mode=sum needs equal widths at merge points: unit " + std::to_string(s.deconv_unit + 1) +
                    " has " + std::to_string(widths[s.deconv_unit]) + " features, skip source unit " +
                    std::to_string(s.source_unit + 1) + " has " + std::to_string(widths[s.source_unit]));
  }
}

std::vector<PlannedLayer> plan_layers(const ArchSpec& spec) {
  spec.validate();
  const auto& w = spec.widths;
  auto merged = [&](std::size_t deconv_unit, std::size_t source_unit) {
    return spec.skip_mode == SkipMode::concat ? w[deconv_unit] + w[source_unit] : w[deconv_unit];
  };
  std::vector<PlannedLayer> p;
  auto add = [&](int ordinal, std::string name, LayerKind kind, std::size_t in, std::size_t out, std::size_t k,
                 int lin, int lout) {
    p.push_back(PlannedLayer{ordinal, std::move(name), kind, in, out, k, lin, lout});
  };
  add(1, "conv01", LayerKind::conv, spec.in_channels, w[0], 3, 0, 0);
  add(2, "conv02", LayerKind::strided_conv, w[0], w[1], 3, 0, 1);
  add(3, "conv03", LayerKind::conv, w[1], w[2], 3, 1, 1);
  add(4, "conv04", LayerKind::strided_conv, w[2], w[3], 3, 1, 2);
  add(5, "conv05", LayerKind::conv, w[3], w[4], 3, 2, 2);
  add(6, "conv06", LayerKind::strided_conv, w[4], w[5], 3, 2, 3);
  add(7, "conv07", LayerKind::conv, w[5], w[6], 3, 3, 3);
  add(8, "reduce08", LayerKind::reducer, w[6], halved(w[6]), 1, 3, 3);
  add(9, "deconv09", LayerKind::deconv, halved(w[6]), w[7], 3, 3, 2);
  add(10, "conv10", LayerKind::conv, merged(7, 4), w[8], 3, 2, 2);
  add(11, "reduce11", LayerKind::reducer, w[8], halved(w[8]), 1, 2, 2);
  add(12, "deconv12", LayerKind::deconv, halved(w[8]), w[9], 3, 2, 1);
  add(13, "conv13", LayerKind::conv, merged(9, 2), w[10], 3, 1, 1);
  add(14, "reduce14", LayerKind::reducer, w[10], halved(w[10]), 1, 1, 1);
  add(15, "deconv15", LayerKind::deconv, halved(w[10]), w[11], 3, 1, 0);
  add(16, "conv16", LayerKind::conv, merged(11, 0), w[12], 3, 0, 0);
  add(0, "head_full", LayerKind::head, w[12], spec.class_count, 1, 0, 0);
  if (spec.head_count == 3) {
    add(0, "head_half", LayerKind::head, w[10], spec.class_count, 1, 1, 1);
    add(0, "head_quarter", LayerKind::head, w[8], spec.class_count, 1, 2, 2);
  }
  return p;
}

}  // namespace vseg
