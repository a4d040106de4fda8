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

// Small dense matrices over a generic scalar (double or diff::Jet), sized for
// the handful of coordinates a planar chain has.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nmoe/diffcore/jet.hpp"
#include "nmoe/error.hpp"

namespace nmoe::rbd {

using diff::value_of;

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), d_(rows * cols, T(0.0)) {}

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T& operator()(int r, int c) { return d_[r * cols_ + c]; }
  const T& operator()(int r, int c) const { return d_[r * cols_ + c]; }

  Mat transposed() const {
    Mat t(cols_, rows_);
    for (int r = 0; r < rows_; ++r) {
      for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> d_;
};

template <class T>
using Vec = std::vector<T>;

template <class T>
Mat<T> operator*(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matrix product shape mismatch");
  Mat<T> out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const T& aik = a(i, k);
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

template <class T>
Vec<T> operator*(const Mat<T>& a, const Vec<T>& x) {
  if (a.cols() != static_cast<int>(x.size())) {
    throw ShapeError("matrix-vector shape mismatch");
  }
  Vec<T> out(a.rows(), T(0.0));
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) out[i] += a(i, k) * x[k];
  }
  return out;
}

// a^T x
template <class T>
Vec<T> mul_transposed(const Mat<T>& a, const Vec<T>& x) {
  if (a.rows() != static_cast<int>(x.size())) {
    throw ShapeError("transposed matrix-vector shape mismatch");
  }
  Vec<T> out(a.cols(), T(0.0));
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) out[k] += a(i, k) * x[i];
  }
  return out;
}

template <class T>
Vec<T> operator-(const Vec<T>& a, const Vec<T>& b) {
  Vec<T> out(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

template <class T>
Vec<T> operator+(const Vec<T>& a, const Vec<T>& b) {
  Vec<T> out(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

// Partial-pivoting LU; singular when a pivot falls below 1e-12 of the
// largest entry.
template <class T>
class Lu {
 public:
  explicit Lu(Mat<T> a, const char* what = "matrix") : lu_(std::move(a)) {
    const int n = lu_.rows();
    if (lu_.cols() != n) throw ShapeError(std::string(what) + " not square");
    perm_.resize(n);
    for (int i = 0; i < n; ++i) perm_[i] = i;
    double scale = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        scale = std::max(scale, std::abs(value_of(lu_(r, c))));
      }
    }
    const double tol = 1e-12 * scale;
    for (int k = 0; k < n; ++k) {
      int p = k;
      for (int i = k + 1; i < n; ++i) {
        if (std::abs(value_of(lu_(i, k))) > std::abs(value_of(lu_(p, k)))) p = i;
      }
      if (!(std::abs(value_of(lu_(p, k))) > tol)) {
        throw SingularMatrixError(std::string(what) + " is singular (pivot " +
                                  std::to_string(k) + ")");
      }
      if (p != k) {
        for (int c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(p, c));
        std::swap(perm_[k], perm_[p]);
      }
      const T inv = T(1.0) / lu_(k, k);
      for (int i = k + 1; i < n; ++i) {
        lu_(i, k) *= inv;
        const T l = lu_(i, k);
        for (int c = k + 1; c < n; ++c) lu_(i, c) -= l * lu_(k, c);
      }
    }
  }

  int size() const { return lu_.rows(); }

  Vec<T> solve(const Vec<T>& b) const {
    const int n = size();
    Vec<T> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    }
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
      x[i] /= lu_(i, i);
    }
    return x;
  }

  Mat<T> solve(const Mat<T>& b) const {
    Mat<T> x(b.rows(), b.cols());
    Vec<T> col(b.rows());
    for (int c = 0; c < b.cols(); ++c) {
      for (int r = 0; r < b.rows(); ++r) col[r] = b(r, c);
      const Vec<T> s = solve(col);
      for (int r = 0; r < b.rows(); ++r) x(r, c) = s[r];
    }
    return x;
  }

  Mat<T> inverse() const { return solve(Mat<T>::identity(size())); }

 private:
  Mat<T> lu_;
  std::vector<int> perm_;
};

}  // namespace nmoe::rbd
