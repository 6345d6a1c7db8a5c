#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vseg/config.hpp"

namespace vseg {

// Each command writes its human-readable progress to `log` and returns the
// process exit code.

struct TrainCommand {
  std::filesystem::path config;  // empty uses the defaults
  std::filesystem::path data;
  std::filesystem::path validation;  // optional validation dataset
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
  std::size_t threads = 1;
};
int cmd_train(const TrainCommand& c, std::ostream& log);

struct InferCommand {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path input;
  std::filesystem::path out;
};
int cmd_infer(const InferCommand& c, std::ostream& log);

struct EvalCommand {
  std::filesystem::path pred;
  std::filesystem::path truth;
  std::string region_map = "brats";
  int class_count = 0;  // 0 infers from the volumes
  std::filesystem::path out;  // empty prints to the log stream
};
/// CSV columns: region,dice,precision,sensitivity,specificity,tp,fp,fn,tn.
/// Undefined ratios print as "nan".
std::string evaluation_csv(const LabelVolume& pred, const LabelVolume& truth, const RegionMap& regions);
int cmd_eval(const EvalCommand& c, std::ostream& log);

struct RfReportCommand {
  std::filesystem::path config;
  Dims3 input{128, 128, 96};
  bool csv = false;
  std::filesystem::path out;
};
std::string rf_report(const ArchSpec& spec, const Dims3& input, bool csv);
int cmd_rf_report(const RfReportCommand& c, std::ostream& log);

struct GradcheckCommand {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::size_t instances = 20;
  std::vector<std::string> only;  // empty runs every check
};
int cmd_gradcheck(const GradcheckCommand& c, std::ostream& log);

struct SynthCommand {
  std::string kind;  // spheres | hand-like | healthy-mirror
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::filesystem::path input;  // healthy-mirror source dataset
  std::size_t count = 4;
  Dims3 dims{32, 32, 32};
  int class_count = 5;
  std::size_t chains = 4;
  std::vector<double> frequencies;  // hand-like foreground fractions; empty uses hand bones
  double noise = 0.1;
  int axis = 2;
};
int cmd_synth(const SynthCommand& c, std::ostream& log);

struct FreqCommand {
  std::filesystem::path data;
  int class_count = 0;  // 0 infers from the volumes
  std::filesystem::path out;
};
int cmd_freq(const FreqCommand& c, std::ostream& log);

struct ImportRawCommand {
  std::filesystem::path raw;
  std::filesystem::path layout;
  bool labels = false;
  int class_count = 0;
  std::filesystem::path out;
};
int cmd_import_raw(const ImportRawCommand& c, std::ostream& log);

struct PreprocessCommand {
  std::filesystem::path data;
  std::filesystem::path out;
  std::size_t factor = 1;
  std::optional<Dims3> crop;  // centred; default trims to multiples of 8
};
int cmd_preprocess(const PreprocessCommand& c, std::ostream& log);

struct AugmentPreviewCommand {
  std::filesystem::path data;
  std::string name;  // case name; empty takes the first case
  std::uint64_t seed = 0;
  std::size_t count = 4;
  std::filesystem::path out;
};
int cmd_augment_preview(const AugmentPreviewCommand& c, std::ostream& log);

Dims3 parse_dims(const std::string& text);

}  // namespace vseg
