#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "leafvit/errors.hpp"
#include "leafvit/rng.hpp"

namespace leafvit {

// Dense row-major matrix of doubles. The whole library computes in double
// precision; narrowing to float happens only at the file-format boundary.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0)
      throw ShapeError("Matrix dimensions must be >= 1, got " + shape_str());
  }

  // Adopts an existing row-major buffer.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows == 0 || cols == 0)
      throw ShapeError("Matrix dimensions must be >= 1, got " + shape_str());
    if (data_.size() != rows * cols)
      throw ShapeError("Matrix buffer size " + std::to_string(data_.size()) +
                       " does not match " + shape_str());
  }

  std::vector<double> release() && {
    rows_ = cols_ = 0;
    return std::move(data_);
  }

  // Reshape reusing existing storage; contents are unspecified afterwards.
  void resize(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0)
      throw ShapeError("Matrix dimensions must be >= 1");
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.begin()->size());
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_)
        throw ShapeError("ragged initializer for Matrix");
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Flat vector of doubles.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t length) : data_(length, 0.0) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t length() const { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::vector<double> data_;
};

namespace detail {
using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EigenRowMajor>;
using MapConstM = Eigen::Map<const EigenRowMajor>;

inline MapConstM as_eigen(const Matrix& m) {
  return MapConstM(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                   static_cast<Eigen::Index>(m.cols()));
}
inline MapM as_eigen(Matrix& m) {
  return MapM(m.data().data(), static_cast<Eigen::Index>(m.rows()),
              static_cast<Eigen::Index>(m.cols()));
}
}  // namespace detail

// Standard matrix product into a caller-owned buffer; the hot paths reuse
// their output matrices across calls.
inline void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul dimension mismatch: " + a.shape_str() + " times " +
                     b.shape_str());
  out.resize(a.rows(), b.cols());
  detail::as_eigen(out).noalias() = detail::as_eigen(a) * detail::as_eigen(b);
}

// The heavy kernels of the whole pipeline (attention, dense layers, im2col
// convolution) all funnel through this product.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(1, 1);
  matmul_into(a, b, out);
  return out;
}

// d(loss)/dA for C = A*B given d(loss)/dC.
inline void matmul_grad_a_into(const Matrix& dc, const Matrix& b, Matrix& da) {
  if (dc.cols() != b.cols())
    throw ShapeError("matmul_grad_a dimension mismatch: " + dc.shape_str() +
                     " vs " + b.shape_str());
  da.resize(dc.rows(), b.rows());
  detail::as_eigen(da).noalias() =
      detail::as_eigen(dc) * detail::as_eigen(b).transpose();
}

inline Matrix matmul_grad_a(const Matrix& dc, const Matrix& b) {
  Matrix da(1, 1);
  matmul_grad_a_into(dc, b, da);
  return da;
}

// d(loss)/dB for C = A*B given d(loss)/dC.
inline void matmul_grad_b_into(const Matrix& a, const Matrix& dc, Matrix& db) {
  if (a.rows() != dc.rows())
    throw ShapeError("matmul_grad_b dimension mismatch: " + a.shape_str() +
                     " vs " + dc.shape_str());
  db.resize(a.cols(), dc.cols());
  detail::as_eigen(db).noalias() =
      detail::as_eigen(a).transpose() * detail::as_eigen(dc);
}

inline Matrix matmul_grad_b(const Matrix& a, const Matrix& dc) {
  Matrix db(1, 1);
  matmul_grad_b_into(a, dc, db);
  return db;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

// Row-wise softmax with per-row max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto dst = out.row(r);
    double mx = in[0];
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      sum += dst[c];
    }
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] /= sum;
  }
  return out;
}

// Backward of softmax_rows, expressed in terms of the forward output:
// dx = y .* (dy - <dy, y>) per row.
inline Matrix softmax_rows_grad(const Matrix& softmax_out, const Matrix& dout) {
  if (softmax_out.rows() != dout.rows() || softmax_out.cols() != dout.cols())
    throw ShapeError("softmax_rows_grad shape mismatch: " +
                     softmax_out.shape_str() + " vs " + dout.shape_str());
  Matrix din(dout.rows(), dout.cols());
  for (std::size_t r = 0; r < dout.rows(); ++r) {
    auto y = softmax_out.row(r);
    auto dy = dout.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < y.size(); ++c) dot += dy[c] * y[c];
    auto dst = din.row(r);
    for (std::size_t c = 0; c < y.size(); ++c) dst[c] = y[c] * (dy[c] - dot);
  }
  return din;
}

inline constexpr double kLayerNormEps = 1e-5;

// out[i] = gamma[i] * (v[i] - mean) / sqrt(var + eps) + beta[i],
// var being the population (biased) variance.
inline Vector layer_norm(const Vector& v, const Vector& gamma,
                         const Vector& beta, double eps = kLayerNormEps) {
  const std::size_t n = v.length();
  if (gamma.length() != n || beta.length() != n)
    throw ShapeError("layer_norm parameter length mismatch: v=" +
                     std::to_string(n) + " gamma=" + std::to_string(gamma.length()) +
                     " beta=" + std::to_string(beta.length()));
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += v[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = v[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_sigma = 1.0 / std::sqrt(var + eps);
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gamma[i] * (v[i] - mean) * inv_sigma + beta[i];
  return out;
}

struct LayerNormGrads {
  Vector dv;
  Vector dgamma;
  Vector dbeta;
};

inline LayerNormGrads layer_norm_grad(const Vector& v, const Vector& gamma,
                                      const Vector& beta, const Vector& dout,
                                      double eps = kLayerNormEps) {
  const std::size_t n = v.length();
  if (gamma.length() != n || beta.length() != n || dout.length() != n)
    throw ShapeError("layer_norm_grad length mismatch");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += v[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = v[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_sigma = 1.0 / std::sqrt(var + eps);

  LayerNormGrads g{Vector(n), Vector(n), Vector(n)};
  // g_i = gamma_i * dout_i; dx_i = (g_i - mean(g) - xhat_i * mean(g .* xhat)) / sigma
  double mean_g = 0.0, mean_gx = 0.0;
  std::vector<double> xhat(n), gv(n);
  for (std::size_t i = 0; i < n; ++i) {
    xhat[i] = (v[i] - mean) * inv_sigma;
    gv[i] = gamma[i] * dout[i];
    mean_g += gv[i];
    mean_gx += gv[i] * xhat[i];
  }
  mean_g /= static_cast<double>(n);
  mean_gx /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.dv[i] = (gv[i] - mean_g - xhat[i] * mean_gx) * inv_sigma;
    g.dgamma[i] = dout[i] * xhat[i];
    g.dbeta[i] = dout[i];
  }
  return g;
}

inline Vector relu(const Vector& v) {
  Vector out(v.length());
  for (std::size_t i = 0; i < v.length(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return out;
}

// dx = dy where x > 0, else 0.
inline Vector relu_grad(const Vector& x, const Vector& dy) {
  if (x.length() != dy.length())
    throw ShapeError("relu_grad length mismatch");
  Vector din(x.length());
  for (std::size_t i = 0; i < x.length(); ++i)
    din[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return din;
}

// Glorot-uniform fill: entries uniform in [-limit, limit] with
// limit = sqrt(6 / (fan_in + fan_out)).
inline void glorot_fill(std::span<double> data, std::size_t fan_in,
                        std::size_t fan_out, Prng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : data) v = rng.uniform(-limit, limit);
}

inline Matrix glorot_matrix(std::size_t rows, std::size_t cols, Prng& rng) {
  Matrix m(rows, cols);
  glorot_fill(m.data(), rows, cols, rng);
  return m;
}

}  // namespace leafvit
