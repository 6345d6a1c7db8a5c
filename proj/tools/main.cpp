#include <iostream>

#include "CLI11.hpp"
#include "vseg/commands.hpp"

namespace {

struct DimsOption {
  std::string text;
  vseg::Dims3 value() const { return vseg::parse_dims(text); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric segmentation network: training, inference and analysis"};
  app.require_subcommand(1);

  vseg::TrainCommand train;
  std::uint64_t train_seed = 0;
  std::size_t train_folds = 0;
  auto* t = app.add_subcommand("train", "train one network or a cross-validation ensemble");
  t->add_option("--config", train.config, "key = value configuration file")->check(CLI::ExistingFile);
  t->add_option("--data", train.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--val", train.validation, "validation dataset directory")->check(CLI::ExistingDirectory);
  t->add_option("--out", train.out, "output directory")->required();
  auto* t_seed = t->add_option("--seed", train_seed, "overrides the configured seed");
  auto* t_folds = t->add_option("--folds", train_folds, "cross-validation folds (0 trains one network)");
  t->add_option("--threads", train.threads, "folds trained concurrently")->check(CLI::PositiveNumber);

  vseg::InferCommand infer;
  auto* i = app.add_subcommand("infer", "segment a volume with one network or an ensemble");
  i->add_option("--checkpoint", infer.checkpoints, "checkpoint file; repeat for an ensemble")->required();
  i->add_option("--input", infer.input, "image volume file")->required()->check(CLI::ExistingFile);
  i->add_option("--out", infer.out, "label volume file to write")->required();

  vseg::EvalCommand eval;
  auto* e = app.add_subcommand("eval", "dice, precision, sensitivity and specificity per region");
  e->add_option("--pred", eval.pred, "predicted label volume")->required()->check(CLI::ExistingFile);
  e->add_option("--truth", eval.truth, "ground-truth label volume")->required()->check(CLI::ExistingFile);
  e->add_option("--region-map", eval.region_map, "brats, per_class or name:1,2;name:3");
  e->add_option("--classes", eval.class_count, "class count (default: inferred)");
  e->add_option("--out", eval.out, "CSV file (default: stdout)");

  vseg::RfReportCommand rf;
  DimsOption rf_input{"128x128x96"};
  auto* r = app.add_subcommand("rf-report", "receptive field and shape of every convolution");
  r->add_option("--config", rf.config, "configuration file")->check(CLI::ExistingFile);
  r->add_option("--input-shape", rf_input.text, "input extents DxHxW")->capture_default_str();
  r->add_flag("--csv", rf.csv, "CSV instead of an aligned table");
  r->add_option("--out", rf.out, "output file (default: stdout)");

  vseg::GradcheckCommand gc;
  std::uint64_t gc_seed = 0;
  auto* g = app.add_subcommand("gradcheck", "64-bit finite-difference check of every gradient");
  g->add_option("--config", gc.config, "configuration file")->check(CLI::ExistingFile);
  auto* g_seed = g->add_option("--seed", gc_seed, "overrides the configured seed");
  g->add_option("--instances", gc.instances, "random instances per check")->capture_default_str();
  g->add_option("--only", gc.only, "run only the named checks");

  vseg::SynthCommand synth;
  DimsOption synth_dims{"32x32x32"};
  auto* s = app.add_subcommand("synth", "generate labelled synthetic volumes");
  s->add_option("kind", synth.kind, "spheres, hand-like or healthy-mirror")
      ->required()
      ->check(CLI::IsMember({"spheres", "hand-like", "healthy-mirror"}));
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--input", synth.input, "source dataset for healthy-mirror")->check(CLI::ExistingDirectory);
  s->add_option("--count", synth.count)->capture_default_str();
  s->add_option("--dims", synth_dims.text, "extents DxHxW")->capture_default_str();
  s->add_option("--classes", synth.class_count)->capture_default_str();
  s->add_option("--chains", synth.chains, "finger chains per hand-like volume")->capture_default_str();
  s->add_option("--frequencies", synth.frequencies, "hand-like foreground class fractions, class 1 first")
      ->delimiter(',');
  s->add_option("--noise", synth.noise, "image noise standard deviation")->capture_default_str();
  s->add_option("--axis", synth.axis, "mirror axis for healthy-mirror")->capture_default_str();

  vseg::FreqCommand freq;
  auto* f = app.add_subcommand("freq", "average class frequency over a dataset");
  f->add_option("--data", freq.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  f->add_option("--classes", freq.class_count, "class count (default: inferred)");
  f->add_option("--out", freq.out, "CSV file (default: stdout)");

  vseg::ImportRawCommand imp;
  auto* ir = app.add_subcommand("import-raw", "convert a raw little-endian array to a volume file");
  ir->add_option("--raw", imp.raw, "raw array")->required()->check(CLI::ExistingFile);
  ir->add_option("--layout", imp.layout, "sidecar file with dims, channels and dtype")
      ->required()
      ->check(CLI::ExistingFile);
  ir->add_flag("--labels", imp.labels, "import as a label volume");
  ir->add_option("--classes", imp.class_count, "label class count (default: inferred)");
  ir->add_option("--out", imp.out, "volume file to write")->required();

  vseg::PreprocessCommand pre;
  std::string pre_crop;
  auto* p = app.add_subcommand("preprocess", "downsample then centre-crop every case of a dataset");
  p->add_option("--data", pre.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_option("--factor", pre.factor, "downsampling factor")->capture_default_str();
  p->add_option("--crop", pre_crop, "crop extents DxHxW (default: trim to multiples of 8)");

  vseg::AugmentPreviewCommand aug;
  auto* a = app.add_subcommand("augment-preview", "write randomly transformed copies of one case");
  a->add_option("--data", aug.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  a->add_option("--case", aug.name, "case name (default: first)");
  a->add_option("--seed", aug.seed)->capture_default_str();
  a->add_option("--count", aug.count)->capture_default_str();
  a->add_option("--out", aug.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*t) {
      if (*t_seed) train.seed = train_seed;
      if (*t_folds) train.folds = train_folds;
      return vseg::cmd_train(train, std::cout);
    }
    if (*i) return vseg::cmd_infer(infer, std::cout);
    if (*e) return vseg::cmd_eval(eval, std::cout);
    if (*r) {
      rf.input = rf_input.value();
      return vseg::cmd_rf_report(rf, std::cout);
    }
    if (*g) {
      if (*g_seed) gc.seed = gc_seed;
      return vseg::cmd_gradcheck(gc, std::cout);
    }
    if (*s) {
      synth.dims = synth_dims.value();
      return vseg::cmd_synth(synth, std::cout);
    }
    if (*f) return vseg::cmd_freq(freq, std::cout);
    if (*ir) return vseg::cmd_import_raw(imp, std::cout);
    if (*p) {
      if (!pre_crop.empty()) pre.crop = vseg::parse_dims(pre_crop);
      return vseg::cmd_preprocess(pre, std::cout);
    }
    if (*a) return vseg::cmd_augment_preview(aug, std::cout);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return 0;
}
