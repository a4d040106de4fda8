// Copyright 2026 The NMOE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major rank-2 tensors and the numeric kernels the autodiff graph
// is built on. Vectors are n x 1 (column) or 1 x n (row); scalars are 1 x 1.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nmoe/error.hpp"

namespace nmoe::diff {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string());
    }
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(n, 1, std::move(v));
  }
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(1, n, std::move(v));
  }
  static Tensor from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged initializer for tensor");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar " + shape_string());
    return data_[0];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace kernels {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;
using RowArray =
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline ConstMap map(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline MutMap map(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out(a.rows(), b.cols());
  map(out).noalias() = map(a) * map(b);
  return out;
}

// a^T * b without materializing the transpose.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Tensor out(a.cols(), b.cols());
  map(out).noalias() = map(a).transpose() * map(b);
  return out;
}

// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Tensor out(a.rows(), b.rows());
  map(out).noalias() = map(a) * map(b).transpose();
  return out;
}

inline Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

// Result shape of a rank-2 broadcast; each extent must match or be 1.
inline bool broadcast_shape(const Tensor& a, const Tensor& b,
                            std::array<std::size_t, 2>& out) {
  auto dim = [](std::size_t x, std::size_t y, std::size_t& o) {
    if (x == y || y == 1) {
      o = x;
      return true;
    }
    if (x == 1) {
      o = y;
      return true;
    }
    return false;
  };
  return dim(a.rows(), b.rows(), out[0]) && dim(a.cols(), b.cols(), out[1]);
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F&& f,
                        const char* what) {
  std::array<std::size_t, 2> shape{};
  if (!broadcast_shape(a, b, shape)) {
    throw ShapeError(std::string(what) + " cannot broadcast " +
                     a.shape_string() + " with " + b.shape_string());
  }
  Tensor out(shape[0], shape[1]);
  if (a.same_shape(b)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (b.rows() == 1 && b.cols() == a.cols() && a.rows() == shape[0]) {
    for (std::size_t r = 0; r < shape[0]; ++r) {
      const double* ar = a.data().data() + r * a.cols();
      double* o = out.data().data() + r * out.cols();
      for (std::size_t c = 0; c < shape[1]; ++c) o[c] = f(ar[c], b[c]);
    }
    return out;
  }
  const bool ar = a.rows() == 1, ac = a.cols() == 1;
  const bool br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t r = 0; r < shape[0]; ++r) {
    for (std::size_t c = 0; c < shape[1]; ++c) {
      out(r, c) = f(a(ar ? 0 : r, ac ? 0 : c), b(br ? 0 : r, bc ? 0 : c));
    }
  }
  return out;
}

// Sums `g` down to `shape`, undoing a broadcast.
inline Tensor reduce_to(const Tensor& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out(rows == 1 ? 0 : r, cols == 1 ? 0 : c) += g(r, c);
    }
  }
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F&& f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Elementwise tanh through the packet exp; libm tanh dominated mlp forwards.
// Small arguments take a series to avoid cancellation in 1 - 2/(e+1).
inline Tensor tanh(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  const auto x = map(a).array();
  const auto ax = x.abs();
  const RowArray big = 1.0 - 2.0 / ((2.0 * ax.min(40.0)).exp() + 1.0);
  const RowArray x2 = x.square();
  const RowArray small =
      ax * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))));
  map(out).array() = x.sign() * (ax < 0.01).select(small, big);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std::isnan(a[i])) out[i] = a[i];
  }
  return out;
}

// Row-wise softmax with the row maximum subtracted before exponentiation.
inline Tensor softmax_rows(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < a.cols(); ++c) mx = std::max(mx, a(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out(r, c) = std::exp(a(r, c) - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

// axis: -1 all, 0 over rows (-> 1 x cols), 1 over columns (-> rows x 1).
inline Tensor sum(const Tensor& a, int axis) {
  if (axis < 0) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::scalar(s);
  }
  if (axis == 0) {
    Tensor out(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
    }
    return out;
  }
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c);
    out(r, 0) = s;
  }
  return out;
}

inline std::size_t reduced_count(const Tensor& a, int axis) {
  return axis < 0 ? a.size() : (axis == 0 ? a.rows() : a.cols());
}

inline Tensor concat(std::span<const Tensor* const> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  std::size_t rows = parts[0]->rows(), cols = parts[0]->cols();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Tensor& p = *parts[i];
    if (axis == 0) {
      if (p.cols() != cols) throw ShapeError("concat rows: column mismatch");
      rows += p.rows();
    } else {
      if (p.rows() != rows) throw ShapeError("concat cols: row mismatch");
      cols += p.cols();
    }
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    for (std::size_t r = 0; r < p->rows(); ++r) {
      for (std::size_t c = 0; c < p->cols(); ++c) {
        if (axis == 0) {
          out(offset + r, c) = (*p)(r, c);
        } else {
          out(r, offset + c) = (*p)(r, c);
        }
      }
    }
    offset += axis == 0 ? p->rows() : p->cols();
  }
  return out;
}

inline Tensor slice(const Tensor& a, std::size_t r0, std::size_t r1,
                    std::size_t c0, std::size_t c1) {
  if (r0 > r1 || r1 > a.rows() || c0 > c1 || c1 > a.cols()) {
    throw ShapeError("slice out of range on " + a.shape_string());
  }
  Tensor out(r1 - r0, c1 - c0);
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) out(r - r0, c - c0) = a(r, c);
  }
  return out;
}

// LU factorization with partial pivoting, P A = L U, packed in place.
struct LuFactor {
  Tensor lu;
  std::vector<std::size_t> perm;
};

inline double matrix_scale(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s = std::max(s, std::abs(v));
  return s;
}

inline LuFactor lu_factor(const Tensor& a, double relative_pivot = 1e-12) {
  if (a.rows() != a.cols()) {
    throw ShapeError("LU of non-square " + a.shape_string());
  }
  const std::size_t n = a.rows();
  LuFactor f{a, std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
  const double tol = relative_pivot * matrix_scale(a);
  Tensor& m = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(m(i, k)) > std::abs(m(p, k))) p = i;
    }
    if (!(std::abs(m(p, k)) > tol)) {
      throw SingularMatrixError("singular matrix: pivot " +
                                std::to_string(std::abs(m(p, k))) +
                                " at column " + std::to_string(k));
    }
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(k, c), m(p, c));
      std::swap(f.perm[k], f.perm[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      m(i, k) /= m(k, k);
      const double l = m(i, k);
      for (std::size_t c = k + 1; c < n; ++c) m(i, c) -= l * m(k, c);
    }
  }
  return f;
}

// Solves A X = B for every column of B.
inline Tensor lu_solve(const LuFactor& f, const Tensor& b) {
  const std::size_t n = f.lu.rows();
  if (b.rows() != n) {
    throw ShapeError("solve rhs " + b.shape_string() + " for " +
                     f.lu.shape_string());
  }
  Tensor x(n, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) x(i, c) = b(f.perm[i], c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) x(i, c) -= f.lu(i, j) * x(j, c);
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) x(i, c) -= f.lu(i, j) * x(j, c);
      x(i, c) /= f.lu(i, i);
    }
  }
  return x;
}

// Solves A^T X = B using the factors of A: U^T then L^T, then unpermute.
inline Tensor lu_solve_transposed(const LuFactor& f, const Tensor& b) {
  const std::size_t n = f.lu.rows();
  if (b.rows() != n) throw ShapeError("transposed solve rhs mismatch");
  Tensor x(n, b.cols());
  std::vector<double> z(n);
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(i, c);
      for (std::size_t j = 0; j < i; ++j) s -= f.lu(j, i) * z[j];
      z[i] = s / f.lu(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = z[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= f.lu(j, i) * z[j];
      z[i] = s;
    }
    for (std::size_t i = 0; i < n; ++i) x(f.perm[i], c) = z[i];
  }
  return x;
}

}  // namespace kernels
}  // namespace nmoe::diff
