#include "vseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "vseg/config.hpp"

namespace vseg {

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0)
      throw Error(std::string(what_) + ": " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(std::string(what_) + ": truncated data");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

constexpr char kVolumeMagic[4] = {'V', 'S', 'E', 'G'};
constexpr char kCheckpointMagic[4] = {'V', 'N', 'E', 'T'};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error(std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

void volume_header(ByteWriter& w, VolumeDtype dtype, std::size_t channels, const Dims3& d) {
  w.bytes(kVolumeMagic, 4);
  w.u16(kVolumeFormatVersion);
  w.u8(static_cast<std::uint8_t>(dtype));
  if (channels > 0xffff) throw Error("volume file: too many channels");
  w.u16(static_cast<std::uint16_t>(channels));
  for (std::size_t e : d) w.u32(checked_u32(e, "volume extent"));
}

struct VolumeHeader {
  VolumeDtype dtype;
  std::size_t channels;
  Dims3 dims;
};

VolumeHeader read_volume_header(ByteReader& r) {
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kVolumeMagic)) throw Error("volume file: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kVolumeFormatVersion) throw Error("volume file: unsupported version " + std::to_string(version));
  const std::uint8_t dtype = r.u8();
  if (dtype > 1) throw Error("volume file: unknown dtype code " + std::to_string(dtype));
  VolumeHeader h{static_cast<VolumeDtype>(dtype), r.u16(), {}};
  for (auto& e : h.dims) e = r.u32();
  if (h.channels == 0 || volume(h.dims) == 0) throw Error("volume file: zero extent");
  return h;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::vector<std::uint8_t> encode_image(const Tensor<float>& image) {
  if (image.rank() != 4) throw Error("encode_image: expected (C, D, H, W), got " + to_string(image.shape()));
  ByteWriter w;
  volume_header(w, VolumeDtype::f32, image.channels(), image.dims());
  for (float v : image.values()) w.f32(v);
  return w.take();
}

std::vector<std::uint8_t> encode_labels(const LabelVolume& labels) {
  ByteWriter w;
  volume_header(w, VolumeDtype::u8, 1, labels.dims);
  w.bytes(labels.labels.data(), labels.labels.size());
  return w.take();
}

VolumeDtype peek_volume_dtype(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "volume file");
  return read_volume_header(r).dtype;
}

Tensor<float> decode_image(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "volume file");
  const VolumeHeader h = read_volume_header(r);
  if (h.dtype != VolumeDtype::f32) throw Error("volume file holds labels, expected an image");
  Tensor<float> out = Tensor<float>::volume(h.channels, h.dims);
  for (float& v : out.values()) v = r.f32();
  r.expect_end();
  return out;
}

LabelVolume decode_labels(std::span<const std::uint8_t> bytes, int class_count) {
  ByteReader r(bytes, "volume file");
  const VolumeHeader h = read_volume_header(r);
  if (h.dtype != VolumeDtype::u8) throw Error("volume file holds an image, expected labels");
  if (h.channels != 1) throw Error("label volume must have one channel");
  auto payload = r.bytes(volume(h.dims));
  r.expect_end();
  std::vector<std::uint8_t> values(payload.begin(), payload.end());
  if (class_count == 0) {
    const std::uint8_t mx = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
    class_count = std::max(2, mx + 1);
  }
  LabelVolume out(h.dims, class_count, std::move(values));
  out.validate();
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_image(const std::filesystem::path& path, const Tensor<float>& image) { write_file(path, encode_image(image)); }
void write_labels(const std::filesystem::path& path, const LabelVolume& labels) {
  write_file(path, encode_labels(labels));
}
Tensor<float> read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }
LabelVolume read_labels(const std::filesystem::path& path, int class_count) {
  return decode_labels(read_file(path), class_count);
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Network<T>& net) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointFormatVersion);
  const std::string spec = format_arch(net.spec());
  w.u32(checked_u32(spec.size(), "spec text"));
  w.bytes(spec.data(), spec.size());

  std::vector<NamedConstTensor<T>> tensors = net.parameters();
  for (auto& b : net.buffers()) tensors.push_back(b);
  w.u32(checked_u32(tensors.size(), "tensor count"));
  for (const auto& nt : tensors) {
    if (nt.name.size() > 0xffff) throw Error("tensor name too long");
    w.u16(static_cast<std::uint16_t>(nt.name.size()));
    w.bytes(nt.name.data(), nt.name.size());
    w.u8(std::is_same_v<T, float> ? 0 : 2);
    w.u8(static_cast<std::uint8_t>(nt.tensor->rank()));
    for (std::size_t e : nt.tensor->shape()) w.u32(checked_u32(e, "tensor extent"));
    for (T v : nt.tensor->values()) {
      if constexpr (std::is_same_v<T, float>) w.f32(v);
      else w.f64(v);
    }
  }
  return w.take();
}

template <typename T>
Network<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw Error("checkpoint: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointFormatVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  auto spec_bytes = r.bytes(r.u32());
  const ArchSpec spec = parse_arch(std::string(spec_bytes.begin(), spec_bytes.end()));
  Network<T> net = Network<T>::build(spec, 0);

  std::map<std::string, Tensor<T>*> slots;
  for (auto& nt : net.parameters()) slots[nt.name] = nt.tensor;
  for (auto& nt : net.buffers()) slots[nt.name] = nt.tensor;

  const std::uint32_t count = r.u32();
  if (count != slots.size())
    throw Error("checkpoint: " + std::to_string(count) + " tensors, the architecture needs " +
                std::to_string(slots.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_bytes = r.bytes(r.u16());
    const std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint8_t dtype = r.u8();
    if (dtype != 0 && dtype != 2) throw Error("checkpoint: tensor '" + name + "' has unknown dtype");
    Shape shape(r.u8());
    for (auto& e : shape) e = r.u32();
    auto it = slots.find(name);
    if (it == slots.end()) throw Error("checkpoint: unexpected tensor '" + name + "'");
    if (it->second->shape() != shape)
      throw Error("checkpoint: tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                  to_string(it->second->shape()));
    for (T& v : it->second->values()) v = static_cast<T>(dtype == 0 ? static_cast<double>(r.f32()) : r.f64());
    slots.erase(it);
  }
  r.expect_end();
  return net;
}

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const Network<T>& net) {
  write_file(path, encode_checkpoint(net));
}

template <typename T>
Network<T> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file(path));
}

template std::vector<std::uint8_t> encode_checkpoint(const Network<float>&);
template std::vector<std::uint8_t> encode_checkpoint(const Network<double>&);
template Network<float> decode_checkpoint(std::span<const std::uint8_t>);
template Network<double> decode_checkpoint(std::span<const std::uint8_t>);
template void write_checkpoint(const std::filesystem::path&, const Network<float>&);
template void write_checkpoint(const std::filesystem::path&, const Network<double>&);
template Network<float> read_checkpoint(const std::filesystem::path&);
template Network<double> read_checkpoint(const std::filesystem::path&);

std::vector<Sample<float>> load_dataset(const std::filesystem::path& dir, int class_count) {
  static const std::string suffix = ".image.vseg";
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string f = entry.path().filename().string();
    if (f.size() > suffix.size() && f.ends_with(suffix)) names.push_back(f.substr(0, f.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  std::vector<Sample<float>> out;
  for (const std::string& n : names) {
    Sample<float> s{read_image(dir / (n + suffix)), read_labels(dir / (n + ".labels.vseg"), class_count), n};
    if (s.image.dims() != s.labels.dims) throw Error("case '" + n + "': image and labels differ in extent");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error("no *" + suffix + " cases in " + dir.string());
  return out;
}

void save_sample(const std::filesystem::path& dir, const Sample<float>& s) {
  write_image(dir / (s.name + ".image.vseg"), s.image);
  write_labels(dir / (s.name + ".labels.vseg"), s.labels);
}

RawLayout read_raw_layout(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw Error("cannot open " + sidecar.string());
  RawLayout layout;
  bool have_dims = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(sidecar.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::istringstream value(trim(line.substr(eq + 1)));
    if (key == "dims") {
      for (auto& e : layout.dims)
        if (!(value >> e) || e == 0) throw Error(sidecar.string() + ": dims needs three positive extents");
      have_dims = true;
    } else if (key == "channels") {
      if (!(value >> layout.channels) || layout.channels == 0) throw Error(sidecar.string() + ": bad channel count");
    } else if (key == "dtype") {
      value >> layout.dtype;
      if (layout.dtype != "f32" && layout.dtype != "f64" && layout.dtype != "u8" && layout.dtype != "u16" &&
          layout.dtype != "i16")
        throw Error(sidecar.string() + ": unsupported dtype '" + layout.dtype + "'");
    } else {
      throw Error(sidecar.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!have_dims) throw Error(sidecar.string() + ": missing dims");
  return layout;
}

namespace {

std::vector<double> read_raw_values(const std::filesystem::path& raw, const RawLayout& layout) {
  const std::vector<std::uint8_t> bytes = read_file(raw);
  const std::size_t n = layout.channels * volume(layout.dims);
  const std::size_t width = layout.dtype == "f64" ? 8 : layout.dtype == "f32" ? 4 : layout.dtype == "u8" ? 1 : 2;
  if (bytes.size() != n * width)
    throw Error(raw.string() + ": expected " + std::to_string(n * width) + " bytes, found " +
                std::to_string(bytes.size()));
  ByteReader r(bytes, "raw array");
  std::vector<double> out(n);
  for (double& v : out) {
    if (layout.dtype == "f64") v = r.f64();
    else if (layout.dtype == "f32") v = r.f32();
    else if (layout.dtype == "u8") v = r.u8();
    else if (layout.dtype == "u16") v = r.u16();
    else v = static_cast<std::int16_t>(r.u16());
  }
  return out;
}

}  // namespace

Tensor<float> import_raw_image(const std::filesystem::path& raw, const RawLayout& layout) {
  const std::vector<double> values = read_raw_values(raw, layout);
  return Tensor<float>({layout.channels, layout.dims[0], layout.dims[1], layout.dims[2]},
                       std::vector<float>(values.begin(), values.end()));
}

LabelVolume import_raw_labels(const std::filesystem::path& raw, const RawLayout& layout, int class_count) {
  if (layout.channels != 1) throw Error("label arrays must have one channel");
  const std::vector<double> values = read_raw_values(raw, layout);
  std::vector<std::uint8_t> labels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0 || values[i] > 255 || values[i] != static_cast<double>(static_cast<int>(values[i])))
      throw Error(raw.string() + ": value " + std::to_string(values[i]) + " is not a label");
    labels[i] = static_cast<std::uint8_t>(values[i]);
  }
  ByteWriter w;
  volume_header(w, VolumeDtype::u8, 1, layout.dims);
  w.bytes(labels.data(), labels.size());
  return decode_labels(w.take(), class_count);
}

}  // namespace vseg
