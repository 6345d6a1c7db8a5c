#include "vseg/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "vseg/augment.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/io.hpp"
#include "vseg/rf.hpp"
#include "vseg/synth.hpp"

namespace vseg {

namespace {

RunConfig config_or_default(const std::filesystem::path& path) {
  if (path.empty()) {
    RunConfig c;
    c.finalize();
    return c;
  }
  return load_config(path);
}

void emit(const std::filesystem::path& out, const std::string& text, std::ostream& log) {
  if (out.empty()) log << text;
  else write_text(out, text);
}

std::string num(std::optional<double> v) {
  if (!v) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << *v;
  return os.str();
}

std::string curve_csv(const std::vector<EpochRecord>& epochs) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n" << std::setprecision(9);
  for (const EpochRecord& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  return os.str();
}

std::string iterations_csv(const std::vector<IterationRecord>& its) {
  std::ostringstream os;
  os << "iteration,epoch,fused_loss,aux_half,aux_quarter,total_loss\n" << std::setprecision(9);
  for (const IterationRecord& r : its) {
    os << r.iteration << ',' << r.epoch << ',' << r.fused_loss;
    for (std::size_t i = 0; i < 2; ++i) os << ',' << (i < r.aux_losses.size() ? r.aux_losses[i] : 0.0);
    os << ',' << r.total_loss << '\n';
  }
  return os.str();
}

int infer_class_count(const std::vector<const LabelVolume*>& volumes) {
  int classes = 2;
  for (const LabelVolume* v : volumes)
    for (std::uint8_t l : v->labels) classes = std::max(classes, l + 1);
  return classes;
}

}  // namespace

Dims3 parse_dims(const std::string& text) {
  Dims3 d{};
  std::istringstream in(text);
  char sep = 0;
  if (!(in >> d[0] >> sep) || sep != 'x' || !(in >> d[1] >> sep) || sep != 'x' || !(in >> d[2]) || !in.eof() ||
      d[0] == 0 || d[1] == 0 || d[2] == 0)
    throw Error("expected extents of the form DxHxW, got '" + text + "'");
  return d;
}

int cmd_train(const TrainCommand& c, std::ostream& log) {
  RunConfig cfg = config_or_default(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.folds) cfg.folds = *c.folds;
  cfg.finalize();
  const std::vector<Sample<float>> data = load_dataset(c.data, static_cast<int>(cfg.arch.class_count));
  std::filesystem::create_directories(c.out);
  write_text(c.out / "config.txt", format_config(cfg));

  if (cfg.folds == 0) {
    std::vector<Sample<float>> val;
    if (!c.validation.empty()) val = load_dataset(c.validation, static_cast<int>(cfg.arch.class_count));
    Network<float> net = Network<float>::build(cfg.arch, cfg.seed + kInitSeedOffset);
    TrainResult<float> r = train(std::move(net), std::span<const Sample<float>>(data),
                                 std::span<const Sample<float>>(val), cfg.train, [&](const IterationRecord& it) {
                                   log << "epoch " << it.epoch << " iteration " << it.iteration << " loss "
                                       << it.total_loss << '\n';
                                 });
    write_checkpoint(c.out / "model.vnet", r.best);
    write_text(c.out / "curve.csv", curve_csv(r.epochs));
    write_text(c.out / "iterations.csv", iterations_csv(r.iterations));
    log << "best epoch " << r.best_epoch << " validation loss " << r.best_val_loss << '\n';
    return 0;
  }

  CrossValResult<float> cv =
      crossval(cfg.arch, std::span<const Sample<float>>(data), cfg.folds, cfg.train, cfg.regions, c.threads);
  std::ostringstream table;
  table << "fold";
  for (const std::string& r : cv.region_names) table << ',' << r;
  table << '\n';
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    const std::string stem = "fold" + std::to_string(i);
    write_checkpoint(c.out / (stem + ".vnet"), cv.nets[i]);
    write_text(c.out / (stem + "_curve.csv"), curve_csv(cv.runs[i].epochs));
    write_text(c.out / (stem + "_iterations.csv"), iterations_csv(cv.runs[i].iterations));
    table << i;
    for (const ConfusionMetrics& m : cv.folds[i].regions) table << ',' << num(m.dice);
    table << '\n';
  }
  table << "mean";
  for (const auto& m : cv.mean_dice) table << ',' << num(m);
  table << '\n';
  write_text(c.out / "crossval.csv", table.str());
  log << table.str();
  return 0;
}

int cmd_infer(const InferCommand& c, std::ostream& log) {
  if (c.checkpoints.empty()) throw Error("infer needs at least one checkpoint");
  std::vector<Network<float>> nets;
  for (const auto& p : c.checkpoints) nets.push_back(read_checkpoint<float>(p));
  const Tensor<float> image = read_image(c.input);
  const LabelVolume labels = nets.size() == 1
                                 ? predict_labels(nets.front(), image)
                                 : ensemble_predict(std::span<const Network<float>>(nets), image);
  write_labels(c.out, labels);
  log << "wrote " << to_string(labels.dims) << " labels from " << nets.size() << " network(s) to " << c.out.string()
      << '\n';
  return 0;
}

std::string evaluation_csv(const LabelVolume& pred, const LabelVolume& truth, const RegionMap& regions) {
  std::ostringstream os;
  os << "region,dice,precision,sensitivity,specificity,tp,fp,fn,tn\n";
  for (const auto& [name, classes] : regions.regions) {
    const ConfusionMetrics m = confusion_metrics(pred, truth, classes);
    os << name << ',' << num(m.dice) << ',' << num(m.precision) << ',' << num(m.sensitivity) << ','
       << num(m.specificity) << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ','
       << m.counts.tn << '\n';
  }
  return os.str();
}

int cmd_eval(const EvalCommand& c, std::ostream& log) {
  LabelVolume pred = read_labels(c.pred, c.class_count), truth = read_labels(c.truth, c.class_count);
  if (c.class_count == 0) pred.class_count = truth.class_count = infer_class_count({&pred, &truth});
  const std::string region_text =
      c.region_map == "brats" && pred.class_count < 5 ? std::string("per_class") : c.region_map;
  const RegionMap regions = parse_region_map(region_text, pred.class_count);
  emit(c.out, evaluation_csv(pred, truth, regions), log);
  return 0;
}

std::string rf_report(const ArchSpec& spec, const Dims3& input, bool csv) {
  const std::vector<RfRow> rows = receptive_field_trace(spec, input);
  return csv ? format_rf_csv(rows) : format_rf_table(rows);
}

int cmd_rf_report(const RfReportCommand& c, std::ostream& log) {
  const RunConfig cfg = config_or_default(c.config);
  emit(c.out, rf_report(cfg.arch, c.input, c.csv), log);
  return 0;
}

int cmd_gradcheck(const GradcheckCommand& c, std::ostream& log) {
  const RunConfig cfg = config_or_default(c.config);
  GradCheckOptions opts;
  opts.seed = c.seed.value_or(cfg.seed);
  opts.instances = c.instances;
  std::vector<std::string> names = c.only.empty() ? gradcheck_names() : c.only;
  bool ok = true;
  for (const std::string& n : names) {
    const GradCheckReport r = run_gradcheck(n, opts);
    ok = ok && r.passed;
    log << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(40) << r.name << " max rel error "
        << std::scientific << std::setprecision(3) << r.max_error << std::defaultfloat << " over " << r.coordinates
        << " coordinates (" << r.skipped << " kink steps skipped) worst " << r.worst << '\n';
  }
  log << (ok ? "all gradient checks passed" : "gradient check FAILED") << '\n';
  return ok ? 0 : 1;
}

int cmd_synth(const SynthCommand& c, std::ostream& log) {
  std::mt19937_64 rng(c.seed + kSynthSeedOffset);
  std::filesystem::create_directories(c.out);
  auto save = [&](Sample<float>& s, const std::string& name) {
    s.name = name;
    save_sample(c.out, s);
    log << "wrote " << name << ' ' << to_string(s.labels.dims) << '\n';
  };
  auto indexed = [](const std::string& stem, std::size_t i) {
    std::ostringstream os;
    os << stem << '_' << std::setw(3) << std::setfill('0') << i;
    return os.str();
  };
  SynthOptions opts{c.dims, c.class_count, c.noise};
  if (c.kind == "spheres") {
    for (std::size_t i = 0; i < c.count; ++i) {
      Sample<float> s = synth_spheres(opts, rng);
      save(s, indexed("spheres", i));
    }
  } else if (c.kind == "hand-like") {
    for (std::size_t i = 0; i < c.count; ++i) {
      Sample<float> s = synth_hand_like(opts, HandLikeOptions{c.chains, c.frequencies}, rng);
      save(s, indexed("hand", i));
    }
  } else if (c.kind == "healthy-mirror") {
    if (c.input.empty()) throw Error("healthy-mirror needs --input with an existing dataset");
    std::size_t written = 0;
    for (const Sample<float>& s : load_dataset(c.input, 0)) {
      std::optional<std::pair<Tensor<float>, LabelVolume>> mirrored;
      for (SourceHalf half : {SourceHalf::lower, SourceHalf::upper}) {
        try {
          mirrored = mirror_hemisphere(s.image, s.labels, c.axis, half);
          break;
        } catch (const Error&) {
        }
      }
      if (!mirrored) {
        log << "skipped " << s.name << ": foreground in both halves\n";
        continue;
      }
      Sample<float> h{std::move(mirrored->first), std::move(mirrored->second), ""};
      save(h, s.name + "_healthy");
      ++written;
    }
    if (written == 0) throw Error("no volume had a foreground-free half along axis " + std::to_string(c.axis));
  } else {
    throw Error("unknown synth kind '" + c.kind + "' (expected spheres, hand-like or healthy-mirror)");
  }
  return 0;
}

int cmd_freq(const FreqCommand& c, std::ostream& log) {
  std::vector<Sample<float>> data = load_dataset(c.data, c.class_count);
  std::vector<LabelVolume> labels;
  for (auto& s : data) labels.push_back(std::move(s.labels));
  if (c.class_count == 0) {
    std::vector<const LabelVolume*> ptrs;
    for (const auto& l : labels) ptrs.push_back(&l);
    const int classes = infer_class_count(ptrs);
    for (auto& l : labels) l.class_count = classes;
  }
  const std::vector<double> f = class_frequencies(std::span<const LabelVolume>(labels));
  std::ostringstream os;
  os << "dataset";
  for (std::size_t i = 0; i < f.size(); ++i) os << ',' << i;
  os << '\n' << c.data.filename().string();
  for (double v : f) os << ',' << std::setprecision(6) << v;
  os << '\n';
  emit(c.out, os.str(), log);
  return 0;
}

int cmd_import_raw(const ImportRawCommand& c, std::ostream& log) {
  const RawLayout layout = read_raw_layout(c.layout);
  if (c.labels) write_labels(c.out, import_raw_labels(c.raw, layout, c.class_count));
  else write_image(c.out, import_raw_image(c.raw, layout));
  log << "imported " << c.raw.string() << " as " << to_string(layout.dims) << '\n';
  return 0;
}

int cmd_preprocess(const PreprocessCommand& c, std::ostream& log) {
  for (const Sample<float>& s : load_dataset(c.data, 0)) {
    Tensor<float> image = downsample(s.image, c.factor);
    LabelVolume labels = downsample(s.labels, c.factor);
    const Dims3 extents = c.crop ? *c.crop : floor_to_multiple(labels.dims, kSpatialMultiple);
    const Dims3 offsets = centered_crop_offsets(labels.dims, extents);
    Sample<float> out{crop(image, offsets, extents), crop(labels, offsets, extents), s.name};
    save_sample(c.out, out);
    log << s.name << ": " << to_string(s.labels.dims) << " -> " << to_string(extents) << '\n';
  }
  return 0;
}

int cmd_augment_preview(const AugmentPreviewCommand& c, std::ostream& log) {
  const std::vector<Sample<float>> data = load_dataset(c.data, 0);
  const Sample<float>* src = &data.front();
  if (!c.name.empty()) {
    src = nullptr;
    for (const auto& s : data)
      if (s.name == c.name) src = &s;
    if (!src) throw Error("no case named '" + c.name + "' in " + c.data.string());
  }
  std::mt19937_64 rng(c.seed + kAugmentSeedOffset);
  for (std::size_t i = 0; i < c.count; ++i) {
    const TransformDraw t = draw_transform(rng);
    auto [image, labels] = apply_transform(t, src->image, src->labels);
    Sample<float> out{std::move(image), std::move(labels), src->name + "_aug" + std::to_string(i)};
    save_sample(c.out, out);
    log << out.name << ": ";
    switch (t.kind) {
      case TransformKind::identity: log << "identity"; break;
      case TransformKind::flip: log << "flip axis " << t.axis; break;
      case TransformKind::rotate:
        log << "rotate plane (" << t.plane[0] << ", " << t.plane[1] << ") by " << t.angle << " rad";
        break;
    }
    log << '\n';
  }
  return 0;
}

}  // namespace vseg
