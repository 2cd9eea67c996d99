#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "leafvit/cnn.hpp"
#include "leafvit/errors.hpp"
#include "leafvit/vit.hpp"

namespace leafvit {

// --- little-endian primitives ----------------------------------------------

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_]) |
                      static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)])
           << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
      throw ParseError(what_ + ": bad magic, expected \"" + magic + "\"", pos_);
    pos_ += 4;
  }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n)
      throw ParseError(what_ + ": truncated, need " + std::to_string(n) +
                           " more byte(s)",
                       bytes_.size());
  }

  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace wire

// --- file helpers -----------------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Write-to-temp then rename, so an aborted run never leaves a partial file.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()),
                           text.size()});
}

inline std::uint64_t fnv1a64_bytes(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint8_t c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// --- VITF: labeled feature records -----------------------------------------
//
//   "VITF" | u32 version=1 | u32 record count | u32 feature dim
//   | u32 class count | class names (u16 length + UTF-8 each)
//   | records (u32 label + dim f32 each), all little-endian.

struct FeatureFile {
  std::vector<std::string> class_names;
  std::size_t feature_dim = 0;
  std::vector<Sample> records;
};

inline std::vector<std::uint8_t> encode_vitf(const FeatureFile& f) {
  for (const Sample& r : f.records) {
    if (r.features.values.length() != f.feature_dim)
      throw ShapeError("encode_vitf: record dim " +
                       std::to_string(r.features.values.length()) +
                       " != header dim " + std::to_string(f.feature_dim));
    if (r.label >= f.class_names.size())
      throw DataError("encode_vitf: label " + std::to_string(r.label) +
                      " out of range for " + std::to_string(f.class_names.size()) +
                      " classes");
  }
  std::vector<std::uint8_t> out{'V', 'I', 'T', 'F'};
  wire::put_u32(out, 1);
  wire::put_u32(out, static_cast<std::uint32_t>(f.records.size()));
  wire::put_u32(out, static_cast<std::uint32_t>(f.feature_dim));
  wire::put_u32(out, static_cast<std::uint32_t>(f.class_names.size()));
  for (const std::string& name : f.class_names) {
    wire::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  for (const Sample& r : f.records) {
    wire::put_u32(out, r.label);
    for (double v : r.features.values.data())
      wire::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline FeatureFile decode_vitf(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes, "VITF");
  r.expect_magic("VITF");
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw ParseError("VITF: unsupported version " + std::to_string(version),
                     r.offset() - 4);
  const std::uint32_t n_records = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint32_t n_classes = r.u32();

  FeatureFile f;
  f.feature_dim = dim;
  f.class_names.reserve(n_classes);
  for (std::uint32_t i = 0; i < n_classes; ++i) {
    const std::uint16_t len = r.u16();
    f.class_names.push_back(r.str(len));
  }
  f.records.reserve(n_records);
  for (std::uint32_t i = 0; i < n_records; ++i) {
    Sample s;
    const std::size_t label_at = r.offset();
    s.label = r.u32();
    if (s.label >= n_classes)
      throw ParseError("VITF: record " + std::to_string(i) + " label " +
                           std::to_string(s.label) + " out of range",
                       label_at);
    Vector values(dim);
    for (std::uint32_t d = 0; d < dim; ++d) values[d] = r.f32();
    s.features.values = std::move(values);
    s.features.label = s.label;
    f.records.push_back(std::move(s));
  }
  if (!r.done())
    throw ParseError("VITF: " + std::to_string(bytes.size() - r.offset()) +
                         " trailing byte(s)",
                     r.offset());
  return f;
}

// --- VITL: named tensor container -------------------------------------------
//
//   "VITL" | u32 version=1 | u32 tensor count
//   | per tensor: u16 name length + UTF-8 name, u8 rank, rank x u32 dims,
//     row-major f32 payload, all little-endian.

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

struct TensorFile {
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const NamedTensor& require(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) throw DataError("VITL: missing tensor \"" + name + "\"");
    return *t;
  }
};

inline std::vector<std::uint8_t> encode_vitl(const TensorFile& f) {
  std::set<std::string> seen;
  for (const NamedTensor& t : f.tensors) {
    if (!seen.insert(t.name).second)
      throw DataError("encode_vitl: duplicate tensor name \"" + t.name + "\"");
    if (t.values.size() != t.element_count())
      throw ShapeError("encode_vitl: tensor \"" + t.name + "\" payload size " +
                       std::to_string(t.values.size()) +
                       " does not match its dims");
    if (t.dims.empty() || t.dims.size() > 255)
      throw ShapeError("encode_vitl: tensor \"" + t.name + "\" has bad rank");
  }
  std::vector<std::uint8_t> out{'V', 'I', 'T', 'L'};
  wire::put_u32(out, 1);
  wire::put_u32(out, static_cast<std::uint32_t>(f.tensors.size()));
  for (const NamedTensor& t : f.tensors) {
    wire::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) wire::put_u32(out, d);
    for (double v : t.values) wire::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline TensorFile decode_vitl(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes, "VITL");
  r.expect_magic("VITL");
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw ParseError("VITL: unsupported version " + std::to_string(version),
                     r.offset() - 4);
  const std::uint32_t n_tensors = r.u32();
  TensorFile f;
  f.tensors.reserve(n_tensors);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    const std::uint16_t name_len = r.u16();
    const std::size_t name_at = r.offset();
    t.name = r.str(name_len);
    if (!seen.insert(t.name).second)
      throw ParseError("VITL: duplicate tensor name \"" + t.name + "\"", name_at);
    const std::uint8_t rank = r.u8();
    if (rank == 0)
      throw ParseError("VITL: tensor \"" + t.name + "\" has rank 0",
                       r.offset() - 1);
    t.dims.reserve(rank);
    for (std::uint8_t d = 0; d < rank; ++d) t.dims.push_back(r.u32());
    const std::size_t count = t.element_count();
    t.values.reserve(count);
    for (std::size_t v = 0; v < count; ++v)
      t.values.push_back(static_cast<double>(r.f32()));
    f.tensors.push_back(std::move(t));
  }
  if (!r.done())
    throw ParseError("VITL: " + std::to_string(bytes.size() - r.offset()) +
                         " trailing byte(s)",
                     r.offset());
  return f;
}

// --- CNN weights <-> VITL ----------------------------------------------------

namespace detail {
inline NamedTensor tensor_of_matrix(std::string name, const Matrix& m,
                                    std::vector<std::uint32_t> dims) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = std::move(dims);
  t.values.assign(m.data().begin(), m.data().end());
  return t;
}
inline NamedTensor tensor_of_vector(std::string name, const Vector& v) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = {static_cast<std::uint32_t>(v.length())};
  t.values.assign(v.data().begin(), v.data().end());
  return t;
}
inline Matrix matrix_of_tensor(const NamedTensor& t, std::size_t rows,
                               std::size_t cols) {
  if (t.values.size() != rows * cols)
    throw ShapeError("VITL: tensor \"" + t.name + "\" has " +
                     std::to_string(t.values.size()) + " values, expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  return Matrix(rows, cols, t.values);
}
}  // namespace detail

// Conv kernels are written rank-4 as [3, 3, in, out]; that index order is
// exactly the in-memory (3*3*in) x out layout, so payloads copy through.
inline TensorFile cnn_weights_to_tensors(const CNNWeights& w) {
  const auto f1 = static_cast<std::uint32_t>(w.conv1_kernels.cols());
  const auto f2 = static_cast<std::uint32_t>(w.conv2_kernels.cols());
  TensorFile f;
  f.tensors.push_back(detail::tensor_of_matrix(
      "conv1.kernels", w.conv1_kernels,
      {3, 3, static_cast<std::uint32_t>(w.conv1_in), f1}));
  f.tensors.push_back(detail::tensor_of_vector("conv1.bias", w.conv1_bias));
  f.tensors.push_back(
      detail::tensor_of_matrix("conv2.kernels", w.conv2_kernels, {3, 3, f1, f2}));
  f.tensors.push_back(detail::tensor_of_vector("conv2.bias", w.conv2_bias));
  f.tensors.push_back(detail::tensor_of_matrix(
      "dense.weight", w.dense_w,
      {static_cast<std::uint32_t>(w.dense_w.rows()),
       static_cast<std::uint32_t>(w.dense_w.cols())}));
  f.tensors.push_back(detail::tensor_of_vector("dense.bias", w.dense_b));
  f.tensors.push_back(detail::tensor_of_matrix(
      "output.weight", w.out_w,
      {static_cast<std::uint32_t>(w.out_w.rows()),
       static_cast<std::uint32_t>(w.out_w.cols())}));
  f.tensors.push_back(detail::tensor_of_vector("output.bias", w.out_b));
  return f;
}

struct LoadedCNN {
  ArchitectureSpec spec;
  CNNWeights weights;
};

// Rebuilds weights and the architecture they imply from a VITL container.
// The dropout rate is not stored; known filter/dense combinations map back
// to arch1/arch2, anything else is reported as "custom" (dropout only
// matters in training, never at evaluation time).
inline LoadedCNN cnn_weights_from_tensors(const TensorFile& f) {
  const NamedTensor& k1 = f.require("conv1.kernels");
  const NamedTensor& k2 = f.require("conv2.kernels");
  const NamedTensor& dw = f.require("dense.weight");
  const NamedTensor& ow = f.require("output.weight");
  if (k1.dims.size() != 4 || k2.dims.size() != 4 || dw.dims.size() != 2 ||
      ow.dims.size() != 2)
    throw ShapeError("VITL: unexpected tensor ranks for a classifier");
  if (k1.dims[0] != 3 || k1.dims[1] != 3 || k2.dims[0] != 3 || k2.dims[1] != 3)
    throw ShapeError("VITL: classifier kernels must be 3x3");
  const std::size_t in1 = k1.dims[2], f1 = k1.dims[3];
  const std::size_t in2 = k2.dims[2], f2 = k2.dims[3];
  if (in2 != f1)
    throw ShapeError("VITL: conv2 expects " + std::to_string(in2) +
                     " input channels but conv1 provides " + std::to_string(f1));
  const std::size_t units = dw.dims[1];
  const std::size_t classes = ow.dims[1];
  if (ow.dims[0] != units)
    throw ShapeError("VITL: output weights expect " + std::to_string(ow.dims[0]) +
                     " inputs but dense provides " + std::to_string(units));

  LoadedCNN out;
  if (f1 == 32 && f2 == 64 && units == 128)
    out.spec = ArchitectureSpec::arch1(classes);
  else if (f1 == 64 && f2 == 128 && units == 512)
    out.spec = ArchitectureSpec::arch2(classes);
  else
    out.spec = ArchitectureSpec{"custom", f1, f2, units, 0.0, classes};

  out.weights.conv1_in = in1;
  out.weights.conv1_kernels = detail::matrix_of_tensor(k1, 9 * in1, f1);
  out.weights.conv1_bias = Vector(f.require("conv1.bias").values);
  out.weights.conv2_kernels = detail::matrix_of_tensor(k2, 9 * f1, f2);
  out.weights.conv2_bias = Vector(f.require("conv2.bias").values);
  out.weights.dense_w = detail::matrix_of_tensor(dw, dw.dims[0], units);
  out.weights.dense_b = Vector(f.require("dense.bias").values);
  out.weights.out_w = detail::matrix_of_tensor(ow, units, classes);
  out.weights.out_b = Vector(f.require("output.bias").values);

  if (out.weights.conv1_bias.length() != f1 ||
      out.weights.conv2_bias.length() != f2 ||
      out.weights.dense_b.length() != units ||
      out.weights.out_b.length() != classes)
    throw ShapeError("VITL: bias lengths inconsistent with weight shapes");
  return out;
}

// --- ViT weights <-> VITL ----------------------------------------------------

inline TensorFile vit_weights_to_tensors(const ViTWeights& w) {
  TensorFile f;
  f.tensors.push_back(detail::tensor_of_matrix(
      "vit.patch_embed.weight", w.patch_embed,
      {static_cast<std::uint32_t>(w.patch_embed.rows()),
       static_cast<std::uint32_t>(w.patch_embed.cols())}));
  f.tensors.push_back(
      detail::tensor_of_vector("vit.patch_embed.bias", w.patch_bias));
  f.tensors.push_back(detail::tensor_of_matrix(
      "vit.positions", w.positions,
      {static_cast<std::uint32_t>(w.positions.rows()),
       static_cast<std::uint32_t>(w.positions.cols())}));
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const BlockWeights& bw = w.blocks[b];
    const std::string base = "vit.block" + std::to_string(b) + ".";
    auto mat = [&](const std::string& suffix, const Matrix& m) {
      f.tensors.push_back(detail::tensor_of_matrix(
          base + suffix, m,
          {static_cast<std::uint32_t>(m.rows()),
           static_cast<std::uint32_t>(m.cols())}));
    };
    for (std::size_t h = 0; h < bw.num_heads(); ++h) {
      mat("wq" + std::to_string(h), bw.wq[h]);
      mat("wk" + std::to_string(h), bw.wk[h]);
      mat("wv" + std::to_string(h), bw.wv[h]);
    }
    mat("w_out", bw.w_out);
    mat("ffn.w1", bw.w1);
    f.tensors.push_back(detail::tensor_of_vector(base + "ffn.b1", bw.b1));
    mat("ffn.w2", bw.w2);
    f.tensors.push_back(detail::tensor_of_vector(base + "ffn.b2", bw.b2));
    f.tensors.push_back(detail::tensor_of_vector(base + "ln1.gamma", bw.ln1_gamma));
    f.tensors.push_back(detail::tensor_of_vector(base + "ln1.beta", bw.ln1_beta));
    f.tensors.push_back(detail::tensor_of_vector(base + "ln2.gamma", bw.ln2_gamma));
    f.tensors.push_back(detail::tensor_of_vector(base + "ln2.beta", bw.ln2_beta));
    if (bw.proj) mat("proj", *bw.proj);
  }
  if (w.tail)
    f.tensors.push_back(detail::tensor_of_matrix(
        "vit.tail", *w.tail,
        {static_cast<std::uint32_t>(w.tail->rows()),
         static_cast<std::uint32_t>(w.tail->cols())}));
  return f;
}

// Loads extractor weights shaped for `cfg`; every tensor must match the
// shape the config implies.
inline ViTWeights vit_weights_from_tensors(const TensorFile& f,
                                           const ViTConfig& cfg) {
  cfg.validate();
  ViTWeights expected = init_weights(cfg);  // shape template
  ViTWeights w;
  auto load_mat = [&f](const std::string& name, std::size_t rows,
                       std::size_t cols) {
    return detail::matrix_of_tensor(f.require(name), rows, cols);
  };
  auto load_vec = [&f](const std::string& name, std::size_t len) {
    const NamedTensor& t = f.require(name);
    if (t.values.size() != len)
      throw ShapeError("VITL: tensor \"" + name + "\" has " +
                       std::to_string(t.values.size()) + " values, expected " +
                       std::to_string(len));
    return Vector(t.values);
  };

  w.patch_embed = load_mat("vit.patch_embed.weight", expected.patch_embed.rows(),
                           expected.patch_embed.cols());
  w.patch_bias = load_vec("vit.patch_embed.bias", expected.patch_bias.length());
  w.positions = load_mat("vit.positions", expected.positions.rows(),
                         expected.positions.cols());
  for (std::size_t b = 0; b < expected.blocks.size(); ++b) {
    const BlockWeights& e = expected.blocks[b];
    const std::string base = "vit.block" + std::to_string(b) + ".";
    BlockWeights bw;
    for (std::size_t h = 0; h < e.num_heads(); ++h) {
      const std::string hs = std::to_string(h);
      bw.wq.push_back(load_mat(base + "wq" + hs, e.wq[h].rows(), e.wq[h].cols()));
      bw.wk.push_back(load_mat(base + "wk" + hs, e.wk[h].rows(), e.wk[h].cols()));
      bw.wv.push_back(load_mat(base + "wv" + hs, e.wv[h].rows(), e.wv[h].cols()));
    }
    bw.w_out = load_mat(base + "w_out", e.w_out.rows(), e.w_out.cols());
    bw.w1 = load_mat(base + "ffn.w1", e.w1.rows(), e.w1.cols());
    bw.b1 = load_vec(base + "ffn.b1", e.b1.length());
    bw.w2 = load_mat(base + "ffn.w2", e.w2.rows(), e.w2.cols());
    bw.b2 = load_vec(base + "ffn.b2", e.b2.length());
    bw.ln1_gamma = load_vec(base + "ln1.gamma", e.ln1_gamma.length());
    bw.ln1_beta = load_vec(base + "ln1.beta", e.ln1_beta.length());
    bw.ln2_gamma = load_vec(base + "ln2.gamma", e.ln2_gamma.length());
    bw.ln2_beta = load_vec(base + "ln2.beta", e.ln2_beta.length());
    if (e.proj) bw.proj = load_mat(base + "proj", e.proj->rows(), e.proj->cols());
    w.blocks.push_back(std::move(bw));
  }
  if (expected.tail)
    w.tail = load_mat("vit.tail", expected.tail->rows(), expected.tail->cols());
  return w;
}

}  // namespace leafvit
