#include "vseg/rf.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace vseg {

namespace {

Dims3 at_level(const Dims3& d, int level) {
  return {d[0] >> level, d[1] >> level, d[2] >> level};
}

std::string cube(std::size_t n) { return to_string(Dims3{n, n, n}); }

}  // namespace

std::vector<RfRow> receptive_field_trace(std::span<const PlannedLayer> layers, const Dims3& input) {
  int deepest = 0;
  for (const PlannedLayer& l : layers) deepest = std::max({deepest, l.level_in, l.level_out});
  for (std::size_t e : input)
    if (e == 0 || e % (std::size_t{1} << deepest) != 0)
      throw Error("input " + to_string(input) + " must be divisible by " + std::to_string(1 << deepest));

  std::vector<RfRow> rows;
  std::size_t phi = 1;
  int strided = 0, deconvs = 0;
  for (const PlannedLayer& l : layers) {
    if (l.kind == LayerKind::head) continue;
    if (l.kind == LayerKind::deconv) ++deconvs;
    const int exponent = strided - deconvs;
    if (exponent < 0) throw Error("layer " + l.name + " upsamples above the input resolution");
    phi += (std::size_t{1} << exponent) * (l.kernel - 1);
    if (l.kind == LayerKind::strided_conv) ++strided;
    if (l.kernel == 1) continue;
    rows.push_back(RfRow{l.ordinal, l.name, l.kind, at_level(input, l.level_in), at_level(input, l.level_out), phi,
                         l.out_channels});
  }
  return rows;
}

std::vector<RfRow> receptive_field_trace(const ArchSpec& spec, const Dims3& input) {
  const std::vector<PlannedLayer> layers = plan_layers(spec);
  return receptive_field_trace(std::span<const PlannedLayer>(layers), input);
}

std::string format_rf_table(std::span<const RfRow> rows) {
  std::ostringstream os;
  auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                  const std::string& e) {
    os << std::left << std::setw(13) << a << std::setw(15) << b << std::setw(15) << c << std::setw(17) << d << e
       << '\n';
  };
  line("Convolution", "Input", "Output", "Receptive Field", "Features");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RfRow& r = rows[i];
    if (i > 0 && r.kind == LayerKind::deconv && rows[i - 1].kind != LayerKind::deconv) {
      bool first_deconv = std::none_of(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(i),
                                       [](const RfRow& p) { return p.kind == LayerKind::deconv; });
      if (first_deconv) os << "Begin of expanding path\n";
    }
    line(std::to_string(r.ordinal) + ".", to_string(r.input), to_string(r.output), cube(r.receptive_field),
         std::to_string(r.features));
    const bool last_strided =
        r.kind == LayerKind::strided_conv &&
        std::none_of(rows.begin() + static_cast<std::ptrdiff_t>(i) + 1, rows.end(),
                     [](const RfRow& n) { return n.kind == LayerKind::strided_conv; });
    if (last_strided) os << "End of contracting path\n";
  }
  return os.str();
}

std::string format_rf_csv(std::span<const RfRow> rows) {
  std::ostringstream os;
  os << "ordinal,name,input,output,receptive_field,features\n";
  for (const RfRow& r : rows)
    os << r.ordinal << ',' << r.name << ',' << to_string(r.input) << ',' << to_string(r.output) << ','
       << r.receptive_field << ',' << r.features << '\n';
  return os.str();
}

}  // namespace vseg
