#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leafvit/errors.hpp"
#include "leafvit/image.hpp"
#include "leafvit/rng.hpp"
#include "leafvit/tensor.hpp"

namespace leafvit {

// Tokens are rows, embedding dimensions are columns.
using TokenMatrix = Matrix;

enum class VariantKind { kNone, kTail, kBlockWise };

// Feature-reduction variant of the extractor: plain flattening, a single
// trailing dense projection, or a dimension-reducing projection between
// consecutive transformer blocks.
struct Variant {
  VariantKind kind = VariantKind::kNone;
  std::size_t tail_dim = 0;     // kTail only
  double blockwise_factor = 0;  // kBlockWise only

  static Variant none() { return {}; }
  static Variant tail(std::size_t k) { return {VariantKind::kTail, k, 0.0}; }
  static Variant block_wise(double factor) {
    return {VariantKind::kBlockWise, 0, factor};
  }
};

struct ViTConfig {
  std::size_t image_size = 64;  // square input side, pixels
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t mlp_dim = 128;
  Variant variant;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid_side() * grid_side(); }
  std::size_t patch_vector_dim() const {
    return patch_size * patch_size * kChannels;
  }

  void validate() const {
    if (patch_size == 0 || image_size % patch_size != 0)
      throw ShapeError("image_size " + std::to_string(image_size) +
                       " not divisible by patch_size " + std::to_string(patch_size));
    if (num_heads == 0 || embed_dim % num_heads != 0)
      throw ShapeError("embed_dim " + std::to_string(embed_dim) +
                       " not divisible by num_heads " + std::to_string(num_heads));
    if (num_layers == 0) throw ShapeError("num_layers must be >= 1");
    if (mlp_dim == 0) throw ShapeError("mlp_dim must be >= 1");
    if (variant.kind == VariantKind::kTail && variant.tail_dim == 0)
      throw ShapeError("tail projection dimension must be >= 1");
    if (variant.kind == VariantKind::kBlockWise &&
        !(variant.blockwise_factor > 0.0 && variant.blockwise_factor < 1.0))
      throw ShapeError("block-wise factor must lie in (0, 1)");
  }
};

// Per-block operating dimensions for the block-wise variant. Block b runs at
// dims[b]; every block except the last ends with a projection to the next
// entry. Each entry is the previous one scaled by `factor` and rounded
// half-up to a positive multiple of num_heads.
inline std::vector<std::size_t> blockwise_dim_schedule(const ViTConfig& cfg) {
  std::vector<std::size_t> dims(cfg.num_layers, cfg.embed_dim);
  for (std::size_t b = 1; b < cfg.num_layers; ++b) {
    const double target = static_cast<double>(dims[b - 1]) * cfg.variant.blockwise_factor;
    const double heads = static_cast<double>(cfg.num_heads);
    auto rounded = static_cast<std::size_t>(std::floor(target / heads + 0.5)) *
                   cfg.num_heads;
    dims[b] = std::max(cfg.num_heads, rounded);
  }
  return dims;
}

// Flattened feature length the extractor will produce for this config.
inline std::size_t feature_length(const ViTConfig& cfg) {
  switch (cfg.variant.kind) {
    case VariantKind::kTail:
      return cfg.variant.tail_dim;
    case VariantKind::kBlockWise:
      return cfg.num_tokens() * blockwise_dim_schedule(cfg).back();
    case VariantKind::kNone:
    default:
      return cfg.num_tokens() * cfg.embed_dim;
  }
}

struct BlockWeights {
  std::vector<Matrix> wq, wk, wv;  // per head, dim x head_dim
  Matrix w_out;                    // dim x dim
  Matrix w1;                       // dim x mlp_dim
  Vector b1;
  Matrix w2;  // mlp_dim x dim
  Vector b2;
  Vector ln1_gamma, ln1_beta;
  Vector ln2_gamma, ln2_beta;
  std::optional<Matrix> proj;  // block-wise variant, dim x next_dim

  std::size_t num_heads() const { return wq.size(); }
  std::size_t dim() const { return w_out.rows(); }
};

struct ViTWeights {
  Matrix patch_embed;  // patch_vector_dim x embed_dim
  Vector patch_bias;
  Matrix positions;  // num_tokens x embed_dim, sinusoidal
  std::vector<BlockWeights> blocks;
  std::optional<Matrix> tail;  // flattened_len x tail_dim
};

struct FeatureVector {
  Vector values;
  std::optional<std::uint32_t> label;
};

// Sinusoidal position table: row p holds sin(p / 10000^(2i/dim)) at even
// columns and cos of the same argument at odd columns.
inline Matrix sinusoidal_positions(std::size_t num_tokens, std::size_t dim) {
  Matrix table(num_tokens, dim);
  for (std::size_t p = 0; p < num_tokens; ++p) {
    for (std::size_t i = 0; 2 * i < dim; ++i) {
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                 static_cast<double>(dim));
      table(p, 2 * i) = std::sin(angle);
      if (2 * i + 1 < dim) table(p, 2 * i + 1) = std::cos(angle);
    }
  }
  return table;
}

// Deterministic seeded initialization: every weight matrix is Glorot-uniform
// from a substream tagged by the tensor's name, biases zero, layer-norm
// gains one. Identical configs yield bit-identical weights.
inline ViTWeights init_weights(const ViTConfig& cfg) {
  cfg.validate();
  ViTWeights w;

  auto glorot = [&cfg](const std::string& tag, std::size_t rows, std::size_t cols) {
    Prng rng = derive_stream(cfg.seed, tag);
    return glorot_matrix(rows, cols, rng);
  };

  w.patch_embed = glorot("vit.patch_embed", cfg.patch_vector_dim(), cfg.embed_dim);
  w.patch_bias = Vector(cfg.embed_dim);
  w.positions = sinusoidal_positions(cfg.num_tokens(), cfg.embed_dim);

  const bool block_wise = cfg.variant.kind == VariantKind::kBlockWise;
  const std::vector<std::size_t> dims =
      block_wise ? blockwise_dim_schedule(cfg)
                 : std::vector<std::size_t>(cfg.num_layers, cfg.embed_dim);

  w.blocks.reserve(cfg.num_layers);
  for (std::size_t b = 0; b < cfg.num_layers; ++b) {
    const std::size_t dim = dims[b];
    const std::size_t head_dim = dim / cfg.num_heads;
    const std::string base = "vit.block" + std::to_string(b) + ".";
    BlockWeights bw;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      const std::string hs = std::to_string(h);
      bw.wq.push_back(glorot(base + "wq" + hs, dim, head_dim));
      bw.wk.push_back(glorot(base + "wk" + hs, dim, head_dim));
      bw.wv.push_back(glorot(base + "wv" + hs, dim, head_dim));
    }
    bw.w_out = glorot(base + "w_out", dim, dim);
    bw.w1 = glorot(base + "ffn.w1", dim, cfg.mlp_dim);
    bw.b1 = Vector(cfg.mlp_dim);
    bw.w2 = glorot(base + "ffn.w2", cfg.mlp_dim, dim);
    bw.b2 = Vector(dim);
    bw.ln1_gamma = Vector(dim);
    bw.ln1_gamma.fill(1.0);
    bw.ln1_beta = Vector(dim);
    bw.ln2_gamma = Vector(dim);
    bw.ln2_gamma.fill(1.0);
    bw.ln2_beta = Vector(dim);
    if (block_wise && b + 1 < cfg.num_layers)
      bw.proj = glorot(base + "proj", dim, dims[b + 1]);
    w.blocks.push_back(std::move(bw));
  }

  if (cfg.variant.kind == VariantKind::kTail)
    w.tail = glorot("vit.tail", cfg.num_tokens() * cfg.embed_dim,
                    cfg.variant.tail_dim);
  return w;
}

// Splits the image into non-overlapping patches (row-major over the grid),
// flattens each patch pixel-row-major with interleaved channels, and maps it
// through the patch embedding.
inline TokenMatrix patch_embed(const NormalizedImage& img, const ViTConfig& cfg,
                               const ViTWeights& w) {
  if (img.width() != cfg.image_size || img.height() != cfg.image_size)
    throw ShapeError("patch_embed: image is " + std::to_string(img.width()) +
                     "x" + std::to_string(img.height()) + ", config expects " +
                     std::to_string(cfg.image_size) + "x" +
                     std::to_string(cfg.image_size));
  if (w.patch_embed.rows() != cfg.patch_vector_dim() ||
      w.patch_embed.cols() != cfg.embed_dim)
    throw ShapeError("patch_embed: weight matrix is " + w.patch_embed.shape_str() +
                     ", config expects " + std::to_string(cfg.patch_vector_dim()) +
                     "x" + std::to_string(cfg.embed_dim));

  const std::size_t g = cfg.grid_side();
  const std::size_t p = cfg.patch_size;
  Matrix patches(cfg.num_tokens(), cfg.patch_vector_dim());
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      auto dst = patches.row(gy * g + gx);
      std::size_t k = 0;
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          for (std::size_t c = 0; c < kChannels; ++c)
            dst[k++] = img.at(gx * p + px, gy * p + py, c);
    }
  }
  TokenMatrix tokens = matmul(patches, w.patch_embed);
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    auto row = tokens.row(t);
    for (std::size_t d = 0; d < tokens.cols(); ++d) row[d] += w.patch_bias[d];
  }
  return tokens;
}

inline TokenMatrix add_positions(const TokenMatrix& tokens, const Matrix& positions) {
  if (tokens.rows() != positions.rows() || tokens.cols() != positions.cols())
    throw ShapeError("add_positions shape mismatch: tokens " + tokens.shape_str() +
                     " vs positions " + positions.shape_str());
  TokenMatrix out = tokens;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] += positions.data()[i];
  return out;
}

// softmax(Q K^T / sqrt(d_k)); rows are query positions.
inline Matrix attention_weights(const Matrix& q, const Matrix& k) {
  Matrix scores = matmul(q, transpose(k));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (double& v : scores.data()) v *= scale;
  return softmax_rows(scores);
}

inline TokenMatrix multi_head_attention(const TokenMatrix& tokens,
                                        const BlockWeights& bw) {
  const std::size_t heads = bw.num_heads();
  if (heads == 0 || tokens.cols() % heads != 0)
    throw ShapeError("multi_head_attention: token dim " +
                     std::to_string(tokens.cols()) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const std::size_t head_dim = tokens.cols() / heads;

  Matrix concat(tokens.rows(), tokens.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix q = matmul(tokens, bw.wq[h]);
    Matrix k = matmul(tokens, bw.wk[h]);
    Matrix v = matmul(tokens, bw.wv[h]);
    Matrix head_out = matmul(attention_weights(q, k), v);
    for (std::size_t t = 0; t < tokens.rows(); ++t)
      for (std::size_t d = 0; d < head_dim; ++d)
        concat(t, h * head_dim + d) = head_out(t, d);
  }
  return matmul(concat, bw.w_out);
}

namespace detail {
// Row-wise FFN: relu(x W1 + b1) W2 + b2.
inline Matrix feed_forward(const Matrix& x, const BlockWeights& bw) {
  Matrix hidden = matmul(x, bw.w1);
  for (std::size_t r = 0; r < hidden.rows(); ++r) {
    auto row = hidden.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += bw.b1[c];
      if (row[c] < 0.0) row[c] = 0.0;
    }
  }
  Matrix out = matmul(hidden, bw.w2);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bw.b2[c];
  }
  return out;
}

inline void layer_norm_rows(Matrix& m, const Vector& gamma, const Vector& beta) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Vector row(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    Vector normed = layer_norm(row, gamma, beta);
    std::copy(normed.data().begin(), normed.data().end(), m.row(r).begin());
  }
}
}  // namespace detail

// Post-norm transformer block: LN1(x + MHSA(x)), then LN2(a + FFN(a)).
// In the block-wise variant a dimension-reducing projection follows LN2 on
// every block but the last.
inline TokenMatrix encoder_block(const TokenMatrix& tokens, const BlockWeights& bw) {
  Matrix a1 = multi_head_attention(tokens, bw);
  for (std::size_t i = 0; i < a1.size(); ++i) a1.data()[i] += tokens.data()[i];
  detail::layer_norm_rows(a1, bw.ln1_gamma, bw.ln1_beta);

  Matrix out = detail::feed_forward(a1, bw);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += a1.data()[i];
  detail::layer_norm_rows(out, bw.ln2_gamma, bw.ln2_beta);

  if (bw.proj) return matmul(out, *bw.proj);
  return out;
}

// Row-major concatenation: token 0's dims first.
inline FeatureVector flatten_embeddings(const TokenMatrix& tokens) {
  return {Vector(std::vector<double>(tokens.data().begin(), tokens.data().end())),
          std::nullopt};
}

inline FeatureVector tail_projection(const FeatureVector& f, const Matrix& w) {
  if (w.rows() != f.values.length())
    throw ShapeError("tail_projection: feature length " +
                     std::to_string(f.values.length()) +
                     " does not match projection rows " + w.shape_str());
  Matrix row(1, f.values.length(),
             std::vector<double>(f.values.data().begin(), f.values.data().end()));
  Matrix projected = matmul(row, w);
  return {Vector(std::move(projected).release()), f.label};
}

// Full extraction pipeline: patch embedding, positions, encoder stack,
// then the variant's reduction.
inline FeatureVector extract(const NormalizedImage& img, const ViTConfig& cfg,
                             const ViTWeights& w) {
  if (w.blocks.size() != cfg.num_layers)
    throw ShapeError("extract: weights carry " + std::to_string(w.blocks.size()) +
                     " blocks, config expects " + std::to_string(cfg.num_layers));
  TokenMatrix tokens = add_positions(patch_embed(img, cfg, w), w.positions);
  for (const BlockWeights& bw : w.blocks) tokens = encoder_block(tokens, bw);

  FeatureVector flat = flatten_embeddings(tokens);
  if (cfg.variant.kind == VariantKind::kTail) {
    if (!w.tail) throw ShapeError("extract: tail variant without tail weights");
    return tail_projection(flat, *w.tail);
  }
  return flat;
}

}  // namespace leafvit
