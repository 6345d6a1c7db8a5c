#include "vseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw Error("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw Error("expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("expected true or false, got '" + s + "'");
}

template <typename C>
std::string join(const C& items, const std::function<std::string(typename C::value_type)>& f) {
  std::string out;
  for (const auto& v : items) out += (out.empty() ? "" : ",") + f(v);
  return out;
}

struct Key {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

using KeyTable = std::vector<std::pair<std::string, Key>>;

void add_arch_keys(KeyTable& t) {
  auto sz = [](std::size_t ArchSpec::*f) {
    return Key{[f](const RunConfig& c) { return std::to_string(c.arch.*f); },
               [f](RunConfig& c, const std::string& v) { c.arch.*f = parse_uint(v); }};
  };
  auto dbl = [](double ArchSpec::*f) {
    return Key{[f](const RunConfig& c) { return fmt(c.arch.*f); },
               [f](RunConfig& c, const std::string& v) { c.arch.*f = parse_double(v); }};
  };
  t.emplace_back("arch.in_channels", sz(&ArchSpec::in_channels));
  t.emplace_back("arch.class_count", sz(&ArchSpec::class_count));
  t.emplace_back("arch.widths",
                 Key{[](const RunConfig& c) {
                       return join(c.arch.widths, [](std::size_t w) { return std::to_string(w); });
                     },
                     [](RunConfig& c, const std::string& v) {
                       const auto items = split(v, ',');
                       if (items.size() != kUnitCount)
                         throw Error("arch.widths needs " + std::to_string(kUnitCount) + " entries, got " +
                                     std::to_string(items.size()));
                       for (std::size_t i = 0; i < kUnitCount; ++i) c.arch.widths[i] = parse_uint(items[i]);
                     }});
  t.emplace_back("arch.skip_mode", Key{[](const RunConfig& c) { return to_string(c.arch.skip_mode); },
                                       [](RunConfig& c, const std::string& v) { c.arch.skip_mode = parse_skip_mode(v); }});
  t.emplace_back("arch.head_count", sz(&ArchSpec::head_count));
  t.emplace_back("arch.init", Key{[](const RunConfig& c) { return to_string(c.arch.init); },
                                  [](RunConfig& c, const std::string& v) { c.arch.init = parse_init_scheme(v); }});
  t.emplace_back("arch.init_std", dbl(&ArchSpec::init_std));
  t.emplace_back("arch.prelu_init", dbl(&ArchSpec::prelu_init));
  t.emplace_back("bn.momentum", dbl(&ArchSpec::bn_momentum));
  t.emplace_back("bn.epsilon", dbl(&ArchSpec::bn_epsilon));
  t.emplace_back("bn.init_mean", dbl(&ArchSpec::bn_init_mean));
  t.emplace_back("bn.init_std", dbl(&ArchSpec::bn_init_std));
}

const KeyTable& arch_keys() {
  static const KeyTable t = [] {
    KeyTable k;
    add_arch_keys(k);
    return k;
  }();
  return t;
}

const KeyTable& all_keys() {
  static const KeyTable t = [] {
    KeyTable k;
    k.emplace_back("seed", Key{[](const RunConfig& c) { return std::to_string(c.seed); },
                               [](RunConfig& c, const std::string& v) { c.seed = parse_uint(v); }});
    k.emplace_back("folds", Key{[](const RunConfig& c) { return std::to_string(c.folds); },
                                [](RunConfig& c, const std::string& v) { c.folds = parse_uint(v); }});
    add_arch_keys(k);
    k.emplace_back("train.max_epochs", Key{[](const RunConfig& c) { return std::to_string(c.train.max_epochs); },
                                           [](RunConfig& c, const std::string& v) { c.train.max_epochs = parse_uint(v); }});
    k.emplace_back("train.patience", Key{[](const RunConfig& c) { return std::to_string(c.train.patience); },
                                         [](RunConfig& c, const std::string& v) { c.train.patience = parse_uint(v); }});
    k.emplace_back("train.min_improvement",
                   Key{[](const RunConfig& c) { return fmt(c.train.min_improvement); },
                       [](RunConfig& c, const std::string& v) { c.train.min_improvement = parse_double(v); }});
    k.emplace_back("train.augmentation",
                   Key{[](const RunConfig& c) { return to_string(c.train.augmentation); },
                       [](RunConfig& c, const std::string& v) { c.train.augmentation = parse_augment_policy(v); }});
    k.emplace_back("train.shuffle", Key{[](const RunConfig& c) { return std::string(c.train.shuffle ? "true" : "false"); },
                                        [](RunConfig& c, const std::string& v) { c.train.shuffle = parse_bool(v); }});
    k.emplace_back("train.aux_weights",
                   Key{[](const RunConfig& c) { return join(c.train.aux_weights, [](double w) { return fmt(w); }); },
                       [](RunConfig& c, const std::string& v) {
                         c.train.aux_weights.clear();
                         for (const auto& item : split(v, ',')) c.train.aux_weights.push_back(parse_double(item));
                       }});
    k.emplace_back("loss.kind", Key{[](const RunConfig& c) { return to_string(c.train.loss.kind); },
                                    [](RunConfig& c, const std::string& v) { c.train.loss.kind = parse_loss_kind(v); }});
    k.emplace_back("loss.classes",
                   Key{[](const RunConfig& c) {
                         if (c.train.loss.classes.empty()) return std::string("foreground");
                         return join(c.train.loss.classes, [](int v) { return std::to_string(v); });
                       },
                       [](RunConfig& c, const std::string& v) {
                         c.train.loss.classes.clear();
                         if (v == "foreground") return;
                         for (const auto& item : split(v, ','))
                           c.train.loss.classes.push_back(static_cast<int>(parse_uint(item)));
                       }});
    k.emplace_back("loss.epsilon", Key{[](const RunConfig& c) { return fmt(c.train.loss.epsilon); },
                                       [](RunConfig& c, const std::string& v) { c.train.loss.epsilon = parse_double(v); }});
    k.emplace_back("adam.learning_rate",
                   Key{[](const RunConfig& c) { return fmt(c.train.adam.learning_rate); },
                       [](RunConfig& c, const std::string& v) { c.train.adam.learning_rate = parse_double(v); }});
    k.emplace_back("adam.beta1", Key{[](const RunConfig& c) { return fmt(c.train.adam.beta1); },
                                     [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = parse_double(v); }});
    k.emplace_back("adam.beta2", Key{[](const RunConfig& c) { return fmt(c.train.adam.beta2); },
                                     [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = parse_double(v); }});
    k.emplace_back("adam.epsilon", Key{[](const RunConfig& c) { return fmt(c.train.adam.epsilon); },
                                       [](RunConfig& c, const std::string& v) { c.train.adam.epsilon = parse_double(v); }});
    // Region maps depend on the class count, so they are resolved after all other keys.
    k.emplace_back("regions", Key{[](const RunConfig& c) { return format_region_map(c.regions); }, {}});
    return k;
  }();
  return t;
}

std::string format_keys(const RunConfig& c, const KeyTable& keys) {
  std::string out;
  for (const auto& [name, key] : keys) out += name + " = " + key.get(c) + "\n";
  return out;
}

RunConfig parse_keys(const std::string& text, const KeyTable& keys, bool resolve_regions) {
  std::map<std::string, const Key*> index;
  for (const auto& [name, key] : keys) index[name] = &key;
  RunConfig c;
  std::map<std::string, int> seen;
  std::string regions_text;
  int regions_line = 0;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = index.find(key);
    if (it == index.end()) throw Error("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen.count(key))
      throw Error("line " + std::to_string(lineno) + ": key '" + key + "' already set on line " +
                  std::to_string(seen[key]));
    seen[key] = lineno;
    if (key == "regions") {
      regions_text = value;
      regions_line = lineno;
      continue;
    }
    try {
      it->second->set(c, value);
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  if (resolve_regions) {
    const int classes = static_cast<int>(c.arch.class_count);
    if (regions_text.empty()) regions_text = classes == 5 ? "brats" : "per_class";
    try {
      c.regions = parse_region_map(regions_text, classes);
    } catch (const Error& e) {
      throw Error("line " + std::to_string(regions_line) + ": regions: " + e.what());
    }
  }
  return c;
}

}  // namespace

void RunConfig::finalize() {
  train.seed = seed;
  arch.validate();
  train.validate();
  regions.validate(static_cast<int>(arch.class_count));
  for (int cls : train.loss.classes)
    if (cls < 0 || cls >= static_cast<int>(arch.class_count))
      throw Error("loss.classes entry " + std::to_string(cls) + " is not a class of the network");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c = parse_keys(text, all_keys(), true);
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& c) { return format_keys(c, all_keys()); }

std::string format_arch(const ArchSpec& a) {
  RunConfig c;
  c.arch = a;
  return format_keys(c, arch_keys());
}

ArchSpec parse_arch(const std::string& text) {
  ArchSpec a = parse_keys(text, arch_keys(), false).arch;
  a.validate();
  return a;
}

RegionMap parse_region_map(const std::string& text, int class_count) {
  RegionMap m;
  if (text == "brats") m = RegionMap::brats();
  else if (text == "per_class") m = RegionMap::per_class(class_count);
  else {
    for (const std::string& entry : split(text, ';')) {
      if (entry.empty()) continue;
      const auto colon = entry.find(':');
      if (colon == std::string::npos) throw Error("region '" + entry + "' needs the form name:1,2");
      std::vector<int> classes;
      for (const std::string& item : split(entry.substr(colon + 1), ','))
        classes.push_back(static_cast<int>(parse_uint(item)));
      m.regions.emplace_back(trim(entry.substr(0, colon)), std::move(classes));
    }
  }
  m.validate(class_count);
  return m;
}

std::string format_region_map(const RegionMap& m) {
  std::string out;
  for (const auto& [name, classes] : m.regions) {
    if (!out.empty()) out += ";";
    out += name + ":" + join(classes, [](int v) { return std::to_string(v); });
  }
  return out;
}

}  // namespace vseg
