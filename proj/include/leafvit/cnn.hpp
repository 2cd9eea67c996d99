#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leafvit/errors.hpp"
#include "leafvit/rng.hpp"
#include "leafvit/tensor.hpp"
#include "leafvit/vit.hpp"

namespace leafvit {

inline constexpr std::size_t kKernelSize = 3;

// The two classifier heads. Both share the same layout -- reshape, two
// conv+pool stages, dense, dropout, softmax output -- and differ in filter
// counts, dense width and dropout rate.
struct ArchitectureSpec {
  std::string name;
  std::size_t conv1_filters = 0;
  std::size_t conv2_filters = 0;
  std::size_t dense_units = 0;
  double dropout_rate = 0.0;
  std::size_t num_classes = 0;

  static ArchitectureSpec arch1(std::size_t num_classes) {
    return {"arch1", 32, 64, 128, 0.5, num_classes};
  }
  static ArchitectureSpec arch2(std::size_t num_classes) {
    return {"arch2", 64, 128, 512, 0.1, num_classes};
  }

  void validate() const {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ShapeError("dropout rate must lie in [0, 1), got " +
                       std::to_string(dropout_rate));
    if (num_classes < 2) throw ShapeError("num_classes must be >= 2");
    if (conv1_filters == 0 || conv2_filters == 0 || dense_units == 0)
      throw ShapeError("architecture layer sizes must be >= 1");
  }
};

// Real-valued H x W x C grid, row-major with interleaved channels.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), values(h * w * c, 0.0) {
    if (h == 0 || w == 0 || c == 0)
      throw ShapeError("FeatureMap dimensions must be >= 1");
  }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return values[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values[(y * width + x) * channels + c];
  }
};

// probs: nonnegative entries summing to 1.
using ClassProbabilities = Vector;

// Kernels are stored as a (3*3*in) x out matrix whose rows follow
// (ky, kx, in_channel) order; this is also the im2col column order, so a
// convolution is a single matrix product.
struct CNNWeights {
  std::size_t conv1_in = 1;
  Matrix conv1_kernels;
  Vector conv1_bias;
  Matrix conv2_kernels;
  Vector conv2_bias;
  Matrix dense_w;
  Vector dense_b;
  Matrix out_w;
  Vector out_b;

  // Parameter tensors in a fixed order, for the optimizer.
  std::vector<std::span<double>> tensors() {
    return {conv1_kernels.data(), conv1_bias.data(), conv2_kernels.data(),
            conv2_bias.data(),    dense_w.data(),    dense_b.data(),
            out_w.data(),         out_b.data()};
  }
  std::vector<std::span<const double>> tensors() const {
    return {conv1_kernels.data(), conv1_bias.data(), conv2_kernels.data(),
            conv2_bias.data(),    dense_w.data(),    dense_b.data(),
            out_w.data(),         out_b.data()};
  }
};

// Gradients share the weight layout.
using CNNGrads = CNNWeights;

namespace detail {

// im2col for 3x3 stride-1 same-padded convolution: row per output position,
// columns in (ky, kx, channel) order, zeros past the border. Writes every
// entry, so the output buffer never needs pre-clearing.
inline void im2col_3x3_into(const std::vector<double>& values, std::size_t h,
                            std::size_t w, std::size_t c, Matrix& cols) {
  cols.resize(h * w, kKernelSize * kKernelSize * c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      auto dst = cols.row(y * w + x);
      std::size_t k = 0;
      for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx < 0 ||
              sx >= static_cast<std::ptrdiff_t>(w)) {
            for (std::size_t ci = 0; ci < c; ++ci) dst[k++] = 0.0;
          } else {
            const double* src =
                values.data() + (static_cast<std::size_t>(sy) * w +
                                 static_cast<std::size_t>(sx)) * c;
            for (std::size_t ci = 0; ci < c; ++ci) dst[k++] = src[ci];
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col_3x3_into; clears the target first.
inline void col2im_3x3_add_into(const Matrix& dcols, std::size_t h,
                                std::size_t w, std::size_t c,
                                std::vector<double>& dvalues) {
  dvalues.assign(h * w * c, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      auto src = dcols.row(y * w + x);
      std::size_t k = 0;
      for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx < 0 ||
              sx >= static_cast<std::ptrdiff_t>(w)) {
            k += c;
          } else {
            double* dst = dvalues.data() + (static_cast<std::size_t>(sy) * w +
                                            static_cast<std::size_t>(sx)) * c;
            for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[k++];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Square reshape with zero padding: side = ceil(sqrt(length)), one channel.
inline void reshape_features_into(const FeatureVector& f, FeatureMap& m) {
  const std::size_t len = f.values.length();
  if (len == 0) throw ShapeError("reshape_features: empty feature vector");
  auto side = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(len))));
  while (side * side < len) ++side;  // guard against sqrt rounding down
  m.height = side;
  m.width = side;
  m.channels = 1;
  m.values.assign(side * side, 0.0);
  std::copy(f.values.data().begin(), f.values.data().end(), m.values.begin());
}

inline FeatureMap reshape_features(const FeatureVector& f) {
  FeatureMap m;
  reshape_features_into(f, m);
  return m;
}

// 3x3, stride 1, zero-padded convolution followed by ReLU. Spatial dims are
// preserved; output channels equal the kernel count.
inline FeatureMap conv2d(const FeatureMap& m, const Matrix& kernels,
                         const Vector& biases) {
  const std::size_t patch = kKernelSize * kKernelSize * m.channels;
  if (kernels.rows() != patch)
    throw ShapeError("conv2d: kernels expect " +
                     std::to_string(kernels.rows() / (kKernelSize * kKernelSize)) +
                     " input channels, feature map has " +
                     std::to_string(m.channels));
  if (biases.length() != kernels.cols())
    throw ShapeError("conv2d: bias length " + std::to_string(biases.length()) +
                     " does not match " + std::to_string(kernels.cols()) +
                     " kernels");
  Matrix cols(1, 1);
  detail::im2col_3x3_into(m.values, m.height, m.width, m.channels, cols);
  Matrix out = matmul(cols, kernels);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += biases[c];
      if (row[c] < 0.0) row[c] = 0.0;
    }
  }
  FeatureMap result;
  result.height = m.height;
  result.width = m.width;
  result.channels = kernels.cols();
  result.values = std::move(out).release();
  return result;
}

// Non-overlapping 2x2 max pooling, stride 2; odd trailing row/column dropped.
inline FeatureMap maxpool_2x2(const FeatureMap& m) {
  const std::size_t oh = m.height / 2;
  const std::size_t ow = m.width / 2;
  if (oh == 0 || ow == 0)
    throw ShapeError("maxpool_2x2: input " + std::to_string(m.height) + "x" +
                     std::to_string(m.width) + " too small to pool");
  FeatureMap out(oh, ow, m.channels);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < m.channels; ++c) {
        double v = m.at(2 * y, 2 * x, c);
        v = std::max(v, m.at(2 * y, 2 * x + 1, c));
        v = std::max(v, m.at(2 * y + 1, 2 * x, c));
        v = std::max(v, m.at(2 * y + 1, 2 * x + 1, c));
        out.at(y, x, c) = v;
      }
  return out;
}

struct Mode {
  bool train = false;
  std::uint64_t seed = 0;

  static Mode eval() { return {}; }
  static Mode training(std::uint64_t seed) { return {true, seed}; }
};

namespace detail {

// Inverted dropout mask over the dense activations: a unit is zeroed with
// probability `rate`, survivors scaled by 1/(1-rate). One mask per call, a
// pure function of the seed, shared by every sample of a batch so that
// forward and backward stay paired.
inline std::vector<double> dropout_mask(std::size_t units, double rate,
                                        std::uint64_t seed) {
  std::vector<double> mask(units, 1.0);
  if (rate <= 0.0) return mask;
  Prng rng = derive_stream(seed, "cnn.dropout");
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.next_real() < rate ? 0.0 : keep_scale;
  return mask;
}

inline void relu_map_from_pre(const Matrix& pre, std::size_t h, std::size_t w,
                              FeatureMap& act) {
  act.height = h;
  act.width = w;
  act.channels = pre.cols();
  act.values.assign(pre.data().begin(), pre.data().end());
  for (double& v : act.values)
    if (v < 0.0) v = 0.0;
}

inline void pool_forward_into(const FeatureMap& m, FeatureMap& out,
                              std::vector<std::size_t>& argmax) {
  const std::size_t oh = m.height / 2;
  const std::size_t ow = m.width / 2;
  if (oh == 0 || ow == 0)
    throw ShapeError("maxpool_2x2: input " + std::to_string(m.height) + "x" +
                     std::to_string(m.width) + " too small to pool");
  out.height = oh;
  out.width = ow;
  out.channels = m.channels;
  out.values.resize(oh * ow * m.channels);
  argmax.resize(out.values.size());
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < m.channels; ++c) {
        std::size_t best = (2 * y * m.width + 2 * x) * m.channels + c;
        double best_v = m.values[best];
        const std::size_t candidates[3] = {
            (2 * y * m.width + 2 * x + 1) * m.channels + c,
            ((2 * y + 1) * m.width + 2 * x) * m.channels + c,
            ((2 * y + 1) * m.width + 2 * x + 1) * m.channels + c};
        for (std::size_t idx : candidates)
          if (m.values[idx] > best_v) {
            best_v = m.values[idx];
            best = idx;
          }
        const std::size_t o = (y * ow + x) * m.channels + c;
        out.values[o] = best_v;
        argmax[o] = best;
      }
}

// Per-sample state kept alive across the batched dense stage; every buffer
// is reused across steps.
struct SampleScratch {
  FeatureMap input;
  Matrix cols1{1, 1}, pre1{1, 1};
  FeatureMap act1, pool1;
  std::vector<std::size_t> argmax1;
  Matrix cols2{1, 1}, pre2{1, 1};
  FeatureMap act2, pool2;
  std::vector<std::size_t> argmax2;
  std::vector<double> dpool1;
};

struct ForwardCache {
  FeatureMap input;
  Matrix cols1{1, 1}, pre1{1, 1};
  std::vector<std::size_t> argmax1;
  FeatureMap pool1;
  Matrix cols2{1, 1}, pre2{1, 1};
  std::vector<std::size_t> argmax2;
  FeatureMap pool2;
  Vector dense_pre;
  std::vector<double> mask;
  Vector dense_out;  // relu + dropout applied
  Vector probs;
};

inline Vector softmax_vec(const Vector& logits) {
  Matrix m(1, logits.length(),
           std::vector<double>(logits.data().begin(), logits.data().end()));
  Matrix s = softmax_rows(m);
  return Vector(std::move(s).release());
}

// Conv stage shared by forward and the training step: im2col, product,
// bias, ReLU, pool.
inline void conv_pool_stage(const FeatureMap& in, const Matrix& kernels,
                            const Vector& biases, Matrix& cols, Matrix& pre,
                            FeatureMap& act, FeatureMap& pooled,
                            std::vector<std::size_t>& argmax) {
  im2col_3x3_into(in.values, in.height, in.width, in.channels, cols);
  matmul_into(cols, kernels, pre);
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    auto row = pre.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += biases[c];
  }
  relu_map_from_pre(pre, in.height, in.width, act);
  pool_forward_into(act, pooled, argmax);
}

// Full forward pass; fills the cache when `cache` is non-null.
inline Vector forward_impl(const FeatureVector& f, const ArchitectureSpec& spec,
                           const CNNWeights& w, Mode mode, ForwardCache* cache) {
  spec.validate();
  FeatureMap input = reshape_features(f);
  if (w.conv1_kernels.rows() != kKernelSize * kKernelSize * input.channels)
    throw ShapeError("cnn forward: conv1 kernels " + w.conv1_kernels.shape_str() +
                     " incompatible with reshaped input of " +
                     std::to_string(input.channels) + " channel(s)");

  Matrix cols1(1, 1), pre1(1, 1), cols2(1, 1), pre2(1, 1);
  FeatureMap act1, pool1, act2, pool2;
  std::vector<std::size_t> argmax1, argmax2;
  conv_pool_stage(input, w.conv1_kernels, w.conv1_bias, cols1, pre1, act1,
                  pool1, argmax1);
  conv_pool_stage(pool1, w.conv2_kernels, w.conv2_bias, cols2, pre2, act2,
                  pool2, argmax2);

  if (w.dense_w.rows() != pool2.values.size())
    throw ShapeError("cnn forward: dense weights expect " +
                     std::to_string(w.dense_w.rows()) + " inputs, flatten yields " +
                     std::to_string(pool2.values.size()));

  Matrix flat_row(1, pool2.values.size(), pool2.values);
  Matrix pre_row = matmul(flat_row, w.dense_w);
  Vector dense_pre(std::move(pre_row).release());
  for (std::size_t u = 0; u < dense_pre.length(); ++u) dense_pre[u] += w.dense_b[u];

  std::vector<double> mask =
      mode.train ? dropout_mask(dense_pre.length(), spec.dropout_rate, mode.seed)
                 : std::vector<double>(dense_pre.length(), 1.0);
  Vector dense_out(dense_pre.length());
  for (std::size_t u = 0; u < dense_pre.length(); ++u)
    dense_out[u] = (dense_pre[u] > 0.0 ? dense_pre[u] : 0.0) * mask[u];

  Matrix logits_row = matmul(
      Matrix(1, dense_out.length(),
             std::vector<double>(dense_out.data().begin(), dense_out.data().end())),
      w.out_w);
  Vector logits(std::move(logits_row).release());
  for (std::size_t k = 0; k < logits.length(); ++k) logits[k] += w.out_b[k];
  Vector probs = softmax_vec(logits);

  if (cache) {
    cache->input = std::move(input);
    cache->cols1 = std::move(cols1);
    cache->pre1 = std::move(pre1);
    cache->argmax1 = std::move(argmax1);
    cache->pool1 = std::move(pool1);
    cache->cols2 = std::move(cols2);
    cache->pre2 = std::move(pre2);
    cache->argmax2 = std::move(argmax2);
    cache->pool2 = std::move(pool2);
    cache->dense_pre = std::move(dense_pre);
    cache->mask = std::move(mask);
    cache->dense_out = std::move(dense_out);
    cache->probs = probs;
  }
  return probs;
}

}  // namespace detail

// Seeded Glorot-uniform weights shaped for `spec` over features of the given
// length; biases zero.
inline CNNWeights init_cnn_weights(const ArchitectureSpec& spec,
                                   std::size_t feature_len, std::uint64_t seed) {
  spec.validate();
  FeatureVector probe{Vector(feature_len), std::nullopt};
  FeatureMap shape = reshape_features(probe);
  const std::size_t s = shape.height;
  const std::size_t p1 = s / 2;
  const std::size_t p2 = p1 / 2;
  if (p2 == 0)
    throw ShapeError("feature length " + std::to_string(feature_len) +
                     " reshapes to " + std::to_string(s) + "x" + std::to_string(s) +
                     ", too small for two pooling stages");
  const std::size_t flat = p2 * p2 * spec.conv2_filters;

  CNNWeights w;
  auto conv_glorot = [&seed](const std::string& tag, std::size_t in_c,
                             std::size_t out_c) {
    Prng rng = derive_stream(seed, tag);
    Matrix m(kKernelSize * kKernelSize * in_c, out_c);
    glorot_fill(m.data(), kKernelSize * kKernelSize * in_c,
                kKernelSize * kKernelSize * out_c, rng);
    return m;
  };
  auto linear_glorot = [&seed](const std::string& tag, std::size_t rows,
                               std::size_t cols) {
    Prng rng = derive_stream(seed, tag);
    return glorot_matrix(rows, cols, rng);
  };

  w.conv1_in = 1;
  w.conv1_kernels = conv_glorot("cnn.conv1.kernels", 1, spec.conv1_filters);
  w.conv1_bias = Vector(spec.conv1_filters);
  w.conv2_kernels =
      conv_glorot("cnn.conv2.kernels", spec.conv1_filters, spec.conv2_filters);
  w.conv2_bias = Vector(spec.conv2_filters);
  w.dense_w = linear_glorot("cnn.dense.weight", flat, spec.dense_units);
  w.dense_b = Vector(spec.dense_units);
  w.out_w = linear_glorot("cnn.output.weight", spec.dense_units, spec.num_classes);
  w.out_b = Vector(spec.num_classes);
  return w;
}

inline ClassProbabilities forward(const FeatureVector& f,
                                  const ArchitectureSpec& spec,
                                  const CNNWeights& w, Mode mode = Mode::eval()) {
  return detail::forward_impl(f, spec, w, mode, nullptr);
}

struct Sample {
  FeatureVector features;
  std::uint32_t label = 0;
};

inline CNNGrads zero_grads_like(const CNNWeights& w) {
  CNNGrads g;
  g.conv1_in = w.conv1_in;
  g.conv1_kernels = Matrix(w.conv1_kernels.rows(), w.conv1_kernels.cols());
  g.conv1_bias = Vector(w.conv1_bias.length());
  g.conv2_kernels = Matrix(w.conv2_kernels.rows(), w.conv2_kernels.cols());
  g.conv2_bias = Vector(w.conv2_bias.length());
  g.dense_w = Matrix(w.dense_w.rows(), w.dense_w.cols());
  g.dense_b = Vector(w.dense_b.length());
  g.out_w = Matrix(w.out_w.rows(), w.out_w.cols());
  g.out_b = Vector(w.out_b.length());
  return g;
}

// All transient buffers of one training step. Construct once, pass to every
// backward_step call; nothing inside is reallocated while shapes repeat.
struct TrainWorkspace {
  std::vector<detail::SampleScratch> samples;
  Matrix flat_batch{1, 1}, dense_pre{1, 1}, dense_out{1, 1}, logits{1, 1};
  Matrix probs{1, 1}, dlogits{1, 1}, ddense_out{1, 1}, ddense_pre{1, 1};
  Matrix dflat{1, 1}, dpre1{1, 1}, dpre2{1, 1}, dcols2{1, 1}, dk1{1, 1}, dk2{1, 1};
  CNNGrads grads;
  bool grads_shaped = false;
};

struct StepStats {
  double mean_loss = 0.0;
  std::size_t correct = 0;  // argmax hits under the training-mode forward
};

// Gradients of the mean sparse cross-entropy over the batch with respect to
// every parameter tensor, using the same dropout mask the seed induces on
// the paired training-mode forward pass. The convolution stages run per
// sample; the dense stages run as whole-batch matrix products. Gradients
// land in ws.grads.
inline StepStats backward_step(std::span<const Sample> batch,
                               const ArchitectureSpec& spec, const CNNWeights& w,
                               std::uint64_t seed, TrainWorkspace& ws) {
  spec.validate();
  if (batch.empty()) throw DataError("backward: empty batch");
  for (const Sample& s : batch)
    if (s.label >= spec.num_classes)
      throw DataError("backward: label " + std::to_string(s.label) +
                      " out of range for " + std::to_string(spec.num_classes) +
                      " classes");

  const std::size_t b_size = batch.size();
  const double inv_batch = 1.0 / static_cast<double>(b_size);

  if (!ws.grads_shaped || ws.grads.dense_w.rows() != w.dense_w.rows() ||
      ws.grads.dense_w.cols() != w.dense_w.cols() ||
      ws.grads.conv1_kernels.cols() != w.conv1_kernels.cols() ||
      ws.grads.conv2_kernels.cols() != w.conv2_kernels.cols() ||
      ws.grads.out_w.cols() != w.out_w.cols()) {
    ws.grads = zero_grads_like(w);
    ws.grads_shaped = true;
  }
  // dense_w and out_w gradients are written whole by matrix products below;
  // only the accumulated tensors need clearing.
  ws.grads.conv1_kernels.fill(0.0);
  ws.grads.conv1_bias.fill(0.0);
  ws.grads.conv2_kernels.fill(0.0);
  ws.grads.conv2_bias.fill(0.0);
  ws.grads.dense_b.fill(0.0);
  ws.grads.out_b.fill(0.0);

  if (ws.samples.size() < b_size) ws.samples.resize(b_size);

  // Convolution forward, per sample.
  ws.flat_batch.resize(b_size, w.dense_w.rows());
  for (std::size_t i = 0; i < b_size; ++i) {
    detail::SampleScratch& sc = ws.samples[i];
    reshape_features_into(batch[i].features, sc.input);
    if (w.conv1_kernels.rows() != kKernelSize * kKernelSize * sc.input.channels)
      throw ShapeError("backward: conv1 kernels " + w.conv1_kernels.shape_str() +
                       " incompatible with reshaped input");
    detail::conv_pool_stage(sc.input, w.conv1_kernels, w.conv1_bias, sc.cols1,
                            sc.pre1, sc.act1, sc.pool1, sc.argmax1);
    detail::conv_pool_stage(sc.pool1, w.conv2_kernels, w.conv2_bias, sc.cols2,
                            sc.pre2, sc.act2, sc.pool2, sc.argmax2);
    if (sc.pool2.values.size() != w.dense_w.rows())
      throw ShapeError("backward: dense weights expect " +
                       std::to_string(w.dense_w.rows()) +
                       " inputs, flatten yields " +
                       std::to_string(sc.pool2.values.size()));
    std::copy(sc.pool2.values.begin(), sc.pool2.values.end(),
              ws.flat_batch.row(i).begin());
  }

  // Dense stage, whole batch at once.
  matmul_into(ws.flat_batch, w.dense_w, ws.dense_pre);
  for (std::size_t r = 0; r < b_size; ++r) {
    auto row = ws.dense_pre.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += w.dense_b[c];
  }
  const std::vector<double> mask =
      detail::dropout_mask(w.dense_w.cols(), spec.dropout_rate, seed);
  ws.dense_out.resize(b_size, w.dense_w.cols());
  for (std::size_t r = 0; r < b_size; ++r)
    for (std::size_t c = 0; c < ws.dense_out.cols(); ++c) {
      const double v = ws.dense_pre(r, c);
      ws.dense_out(r, c) = (v > 0.0 ? v : 0.0) * mask[c];
    }

  matmul_into(ws.dense_out, w.out_w, ws.logits);
  for (std::size_t r = 0; r < b_size; ++r) {
    auto row = ws.logits.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += w.out_b[c];
  }
  ws.probs = softmax_rows(ws.logits);

  StepStats stats;
  ws.dlogits.resize(b_size, spec.num_classes);
  for (std::size_t r = 0; r < b_size; ++r) {
    auto p = ws.probs.row(r);
    std::size_t argmax = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[argmax]) argmax = k;
    if (argmax == batch[r].label) ++stats.correct;
    stats.mean_loss += -std::log(std::max(p[batch[r].label], 1e-12)) * inv_batch;
    for (std::size_t k = 0; k < p.size(); ++k)
      ws.dlogits(r, k) = (p[k] - (k == batch[r].label ? 1.0 : 0.0)) * inv_batch;
  }

  matmul_grad_b_into(ws.dense_out, ws.dlogits, ws.grads.out_w);
  for (std::size_t r = 0; r < b_size; ++r)
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      ws.grads.out_b[k] += ws.dlogits(r, k);

  matmul_grad_a_into(ws.dlogits, w.out_w, ws.ddense_out);
  ws.ddense_pre.resize(b_size, w.dense_w.cols());
  for (std::size_t r = 0; r < b_size; ++r)
    for (std::size_t c = 0; c < ws.ddense_pre.cols(); ++c)
      ws.ddense_pre(r, c) =
          ws.dense_pre(r, c) > 0.0 ? ws.ddense_out(r, c) * mask[c] : 0.0;

  matmul_grad_b_into(ws.flat_batch, ws.ddense_pre, ws.grads.dense_w);
  for (std::size_t r = 0; r < b_size; ++r)
    for (std::size_t c = 0; c < ws.ddense_pre.cols(); ++c)
      ws.grads.dense_b[c] += ws.ddense_pre(r, c);

  matmul_grad_a_into(ws.ddense_pre, w.dense_w, ws.dflat);

  // Convolution backward, per sample.
  for (std::size_t i = 0; i < b_size; ++i) {
    detail::SampleScratch& sc = ws.samples[i];

    ws.dpre2.resize(sc.pre2.rows(), sc.pre2.cols());
    ws.dpre2.fill(0.0);
    auto drow = ws.dflat.row(i);
    for (std::size_t o = 0; o < drow.size(); ++o)
      ws.dpre2.data()[sc.argmax2[o]] += drow[o];
    for (std::size_t k = 0; k < ws.dpre2.size(); ++k)
      if (sc.pre2.data()[k] <= 0.0) ws.dpre2.data()[k] = 0.0;

    matmul_grad_b_into(sc.cols2, ws.dpre2, ws.dk2);
    for (std::size_t k = 0; k < ws.dk2.size(); ++k)
      ws.grads.conv2_kernels.data()[k] += ws.dk2.data()[k];
    for (std::size_t r = 0; r < ws.dpre2.rows(); ++r)
      for (std::size_t c = 0; c < ws.dpre2.cols(); ++c)
        ws.grads.conv2_bias[c] += ws.dpre2(r, c);

    matmul_grad_a_into(ws.dpre2, w.conv2_kernels, ws.dcols2);
    detail::col2im_3x3_add_into(ws.dcols2, sc.pool1.height, sc.pool1.width,
                                sc.pool1.channels, sc.dpool1);

    ws.dpre1.resize(sc.pre1.rows(), sc.pre1.cols());
    ws.dpre1.fill(0.0);
    for (std::size_t o = 0; o < sc.dpool1.size(); ++o)
      ws.dpre1.data()[sc.argmax1[o]] += sc.dpool1[o];
    for (std::size_t k = 0; k < ws.dpre1.size(); ++k)
      if (sc.pre1.data()[k] <= 0.0) ws.dpre1.data()[k] = 0.0;

    matmul_grad_b_into(sc.cols1, ws.dpre1, ws.dk1);
    for (std::size_t k = 0; k < ws.dk1.size(); ++k)
      ws.grads.conv1_kernels.data()[k] += ws.dk1.data()[k];
    for (std::size_t r = 0; r < ws.dpre1.rows(); ++r)
      for (std::size_t c = 0; c < ws.dpre1.cols(); ++c)
        ws.grads.conv1_bias[c] += ws.dpre1(r, c);
  }
  return stats;
}

struct BackwardResult {
  CNNGrads grads;
  double mean_loss = 0.0;
  std::size_t correct = 0;
};

inline BackwardResult backward(std::span<const Sample> batch,
                               const ArchitectureSpec& spec, const CNNWeights& w,
                               std::uint64_t seed) {
  TrainWorkspace ws;
  const StepStats stats = backward_step(batch, spec, w, seed, ws);
  BackwardResult result;
  result.grads = std::move(ws.grads);
  result.mean_loss = stats.mean_loss;
  result.correct = stats.correct;
  return result;
}

// Eval-mode argmax; ties break toward the lowest class index.
inline std::uint32_t predict(const FeatureVector& f, const ArchitectureSpec& spec,
                             const CNNWeights& w) {
  ClassProbabilities probs = forward(f, spec, w, Mode::eval());
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.length(); ++k)
    if (probs[k] > probs[best]) best = k;
  return static_cast<std::uint32_t>(best);
}

// Eval-mode probabilities for a whole set of samples, one row each. Runs
// the convolution stages per sample and the dense stages as single batch
// products.
inline Matrix forward_probs_batch(std::span<const Sample> samples,
                                  const ArchitectureSpec& spec,
                                  const CNNWeights& w) {
  spec.validate();
  if (samples.empty()) throw DataError("forward_probs_batch: empty sample set");
  Matrix flat_batch(samples.size(), w.dense_w.rows());
  FeatureMap input, act1, pool1, act2, pool2;
  Matrix cols(1, 1), pre(1, 1);
  std::vector<std::size_t> argmax;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    reshape_features_into(samples[i].features, input);
    detail::conv_pool_stage(input, w.conv1_kernels, w.conv1_bias, cols, pre,
                            act1, pool1, argmax);
    detail::conv_pool_stage(pool1, w.conv2_kernels, w.conv2_bias, cols, pre,
                            act2, pool2, argmax);
    if (pool2.values.size() != w.dense_w.rows())
      throw ShapeError("forward_probs_batch: dense weights expect " +
                       std::to_string(w.dense_w.rows()) +
                       " inputs, flatten yields " +
                       std::to_string(pool2.values.size()));
    std::copy(pool2.values.begin(), pool2.values.end(), flat_batch.row(i).begin());
  }

  Matrix dense = matmul(flat_batch, w.dense_w);
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    auto row = dense.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += w.dense_b[c];
      if (row[c] < 0.0) row[c] = 0.0;
    }
  }
  Matrix logits = matmul(dense, w.out_w);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += w.out_b[c];
  }
  return softmax_rows(logits);
}

// Argmax of each row of forward_probs_batch, ties toward the lowest index.
inline std::vector<std::uint32_t> predict_batch(std::span<const Sample> samples,
                                                const ArchitectureSpec& spec,
                                                const CNNWeights& w) {
  Matrix probs = forward_probs_batch(samples, spec, w);
  std::vector<std::uint32_t> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

}  // namespace leafvit
