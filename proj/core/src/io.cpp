#include "deeptwist/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "deeptwist/errors.hpp"

namespace deeptwist {

namespace {

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated, wanted " + std::to_string(n) + " more bytes", pos_);
    }
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

// ------------------------------------------------------------- datasets

Dataset load_idx(const fs::path& images, const fs::path& labels) {
  const auto img_bytes = read_file_bytes(images);
  const auto lbl_bytes = read_file_bytes(labels);

  ByteReader img(img_bytes, images.string());
  const std::uint32_t img_magic = img.u32_be();
  if (img_magic != 0x00000803) throw FormatError("IDX images: bad magic", 0);
  const std::uint32_t n = img.u32_be();
  const std::uint32_t rows = img.u32_be();
  const std::uint32_t cols = img.u32_be();
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  if (n > 0 && per == 0) throw FormatError("IDX images: zero image size", 8);

  ByteReader lbl(lbl_bytes, labels.string());
  if (lbl.u32_be() != 0x00000801) throw FormatError("IDX labels: bad magic", 0);
  const std::uint32_t nl = lbl.u32_be();
  if (nl != n) throw FormatError("IDX labels: count " + std::to_string(nl) + " != image count " + std::to_string(n), 4);

  Dataset ds;
  ds.image_shape = {1, rows, cols};
  ds.pixels.reserve(static_cast<std::size_t>(n) * per);
  ds.labels.reserve(n);
  int max_label = -1;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t* px = img.take(per);
    for (std::size_t p = 0; p < per; ++p) ds.pixels.push_back(px[p] / 255.0);
    const int label = lbl.u8();
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  return ds;
}

Dataset load_cifar10_binary(const fs::path& path) {
  constexpr std::size_t kRecord = 3073;
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % kRecord != 0) {
    throw FormatError("CIFAR-10: size " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                      bytes.size() - bytes.size() % kRecord);
  }
  Dataset ds;
  ds.image_shape = {3, 32, 32};
  ds.num_classes = 10;
  const std::size_t n = bytes.size() / kRecord;
  ds.pixels.reserve(n * 3072);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kRecord;
    if (rec[0] > 9) throw FormatError("CIFAR-10: label " + std::to_string(rec[0]) + " out of range", r * kRecord);
    ds.labels.push_back(rec[0]);
    for (std::size_t p = 1; p < kRecord; ++p) ds.pixels.push_back(rec[p] / 255.0);
  }
  return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t image_size, std::uint64_t seed,
                    const BlobOptions& options) {
  if (classes < 2) throw ArgumentError("synth_blobs: need at least 2 classes");
  if (image_size == 0 || options.channels == 0) throw ArgumentError("synth_blobs: empty images");
  Dataset ds;
  ds.image_shape = {options.channels, image_size, image_size};
  ds.num_classes = classes;
  const std::size_t px = ds.image_size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> centroids(classes, std::vector<double>(px));
  for (auto& c : centroids)
    for (auto& v : c) v = options.separation * unit(rng);

  ds.pixels.reserve(classes * per_class * px);
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t p = 0; p < px; ++p) ds.pixels.push_back(centroids[c][p] + options.noise * unit(rng));
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

// ----------------------------------------------------------- checkpoint
//
// Layout (all integers little-endian):
//   "DTW1" | u32 version | u64 seed | u64 step | u32 layer count
//   u8 input rank | u64 input extents[rank]
//   per layer:
//     u16 name length | name bytes (UTF-8) | u8 kind tag
//     u8 shape rank | u64 extents[rank] | f32 weights[prod(extents)]
//     u32 stride | u32 padding | u32 pool | u8 has_bias | f32 bias[out] if has_bias
// Parameter-free layers have shape rank 0 and no weight data.

std::vector<std::uint8_t> encode_checkpoint(const ModelState& model) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(model.seed);
  w.le<std::uint64_t>(model.step);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.layers.size()));
  w.le<std::uint8_t>(static_cast<std::uint8_t>(model.input_shape.size()));
  for (auto e : model.input_shape) w.le<std::uint64_t>(e);

  for (const auto& layer : model.layers) {
    const auto& s = layer.spec;
    if (s.name.size() > 0xFFFF) throw ArgumentError("checkpoint: layer name too long");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(s.name.size()));
    w.bytes(s.name.data(), s.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(s.kind));

    std::span<const double> weights;
    Shape shape;
    if (s.kind == LayerKind::conv2d) {
      shape = layer.kernel.tensor().shape();
      weights = layer.kernel.tensor().data();
    } else if (s.kind == LayerKind::dense) {
      shape = {layer.weights.rows(), layer.weights.cols()};
      weights = layer.weights.data();
    }
    w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) w.le<std::uint64_t>(e);
    for (double v : weights) w.f32(v);

    w.le<std::uint32_t>(static_cast<std::uint32_t>(s.stride));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(s.padding));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(s.pool));
    w.le<std::uint8_t>(s.bias ? 1 : 0);
    if (s.bias)
      for (double v : layer.bias) w.f32(v);
  }
  return w.take();
}

ModelState decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError("checkpoint: bad magic", 0);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
  }
  ModelState m;
  m.seed = r.le<std::uint64_t>();
  m.step = r.le<std::uint64_t>();
  const auto count = r.le<std::uint32_t>();
  const auto in_rank = r.u8();
  for (unsigned i = 0; i < in_rank; ++i) m.input_shape.push_back(r.le<std::uint64_t>());

  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t layer_at = r.offset();
    Layer layer;
    auto& s = layer.spec;
    s.name = r.str(r.le<std::uint16_t>());
    const auto tag = r.u8();
    if (tag < 1 || tag > 6) throw FormatError("checkpoint: unknown layer kind " + std::to_string(tag), r.offset() - 1);
    s.kind = static_cast<LayerKind>(tag);

    const auto rank = r.u8();
    Shape shape;
    for (unsigned i = 0; i < rank; ++i) shape.push_back(r.le<std::uint64_t>());
    const bool has_weights = s.kind == LayerKind::conv2d || s.kind == LayerKind::dense;
    if (has_weights != (rank > 0) || (s.kind == LayerKind::conv2d && rank != 4) ||
        (s.kind == LayerKind::dense && rank != 2)) {
      throw FormatError("checkpoint: layer '" + s.name + "' has an invalid weight shape", layer_at);
    }
    std::vector<double> values;
    if (has_weights) {
      const std::size_t n = shape_size(shape);
      r.need(n * 4);
      values.resize(n);
      for (auto& v : values) v = r.f32();
    }
    s.stride = r.le<std::uint32_t>();
    s.padding = r.le<std::uint32_t>();
    s.pool = r.le<std::uint32_t>();
    s.bias = r.u8() != 0;

    try {
      if (s.kind == LayerKind::conv2d) {
        layer.kernel = Kernel4(DenseTensor(shape, std::move(values)));
        s.d = shape[0];
        s.in = shape[2];
        s.out = shape[3];
      } else if (s.kind == LayerKind::dense) {
        layer.weights = Matrix(shape[0], shape[1], std::move(values));
        s.out = shape[0];
        s.in = shape[1];
      }
    } catch (const ArgumentError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what(), layer_at);
    }
    if (s.bias) {
      if (!has_weights) throw FormatError("checkpoint: bias on parameter-free layer", layer_at);
      layer.bias.resize(s.out);
      for (auto& v : layer.bias) v = r.f32();
    }
    m.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes", r.offset());

  if (!m.layers.empty()) {
    std::vector<LayerSpec> specs;
    for (const auto& l : m.layers) specs.push_back(l.spec);
    try {
      infer_shapes(m.input_shape, specs);
    } catch (const ArgumentError& e) {
      throw FormatError(std::string("checkpoint: inconsistent model: ") + e.what(), 0);
    }
  }
  return m;
}

void save_checkpoint(const ModelState& model, const fs::path& path) {
  const auto bytes = encode_checkpoint(model);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

ModelState load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file_bytes(path)); }

// -------------------------------------------------------------- metrics

std::string format_metrics(const std::vector<DistortionRecord>& log) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt9(r.lr) + "," + fmt9(r.loss_pre) +
           "," + fmt9(r.loss_post) + "," + fmt9(r.rel_loss_jump) + "," + fmt9(r.delta_w) + "," +
           fmt9(r.test_acc) + "\n";
  }
  return out;
}

void write_metrics(const std::vector<DistortionRecord>& log, const fs::path& path) {
  write_file_atomic(path, format_metrics(log));
}

std::vector<DistortionRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics: bad header", 0);
  offset += line.size() + 1;
  std::vector<DistortionRecord> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw FormatError("metrics: expected 8 fields", offset);
    try {
      DistortionRecord r;
      r.step = std::stoull(f[0]);
      r.epoch = std::stoull(f[1]);
      r.lr = std::stod(f[2]);
      r.loss_pre = std::stod(f[3]);
      r.loss_post = std::stod(f[4]);
      r.rel_loss_jump = std::stod(f[5]);
      r.delta_w = std::stod(f[6]);
      r.test_acc = std::stod(f[7]);
      log.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError("metrics: unparsable number", offset);
    }
    offset += line.size() + 1;
  }
  return log;
}

void write_histogram(const std::vector<HistogramBin>& bins, const fs::path& path) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (const auto& b : bins) out += fmt9(b.lo) + "," + fmt9(b.hi) + "," + std::to_string(b.count) + "\n";
  write_file_atomic(path, out);
}

// ------------------------------------------------------------- plumbing

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string git_blob_hash(const std::string& contents) {
  const std::string header = "blob " + std::to_string(contents.size()) + '\0';
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, contents.data(), contents.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  for (int lineno = 1; std::getline(ss, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ArgumentError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ArgumentError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

}  // namespace deeptwist
