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

// Forward-mode dual numbers carrying N directional derivatives. Used where a
// computation has few parameters but many internal operations (the rigid-body
// experts), so that its Jacobian can enter a reverse-mode Graph as a single
// custom node.

#pragma once

#include <array>
#include <cmath>

namespace nmoe::diff {

template <int N>
struct Jet {
  double v = 0.0;
  std::array<double, N> d{};

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: implicit from constants
  static Jet variable(double value, int k, double seed = 1.0) {
    Jet j(value);
    j.d[k] = seed;
    return j;
  }

  Jet& operator+=(const Jet& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    const double inv = 1.0 / o.v;
    v *= inv;
    for (int i = 0; i < N; ++i) d[i] = (d[i] - v * o.d[i]) * inv;
    return *this;
  }
};

template <int N>
Jet<N> operator-(Jet<N> a) {
  a.v = -a.v;
  for (auto& x : a.d) x = -x;
  return a;
}
template <int N>
Jet<N> operator+(Jet<N> a, const Jet<N>& b) { return a += b; }
template <int N>
Jet<N> operator-(Jet<N> a, const Jet<N>& b) { return a -= b; }
template <int N>
Jet<N> operator*(Jet<N> a, const Jet<N>& b) { return a *= b; }
template <int N>
Jet<N> operator/(Jet<N> a, const Jet<N>& b) { return a /= b; }
template <int N>
Jet<N> operator+(Jet<N> a, double b) { a.v += b; return a; }
template <int N>
Jet<N> operator+(double b, Jet<N> a) { a.v += b; return a; }
template <int N>
Jet<N> operator-(Jet<N> a, double b) { a.v -= b; return a; }
template <int N>
Jet<N> operator-(double b, const Jet<N>& a) { return Jet<N>(b) - a; }
template <int N>
Jet<N> operator*(Jet<N> a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
template <int N>
Jet<N> operator*(double b, Jet<N> a) { return a * b; }
template <int N>
Jet<N> operator/(Jet<N> a, double b) { return a * (1.0 / b); }
template <int N>
Jet<N> operator/(double b, const Jet<N>& a) { return Jet<N>(b) / a; }

template <int N>
bool operator<(const Jet<N>& a, const Jet<N>& b) { return a.v < b.v; }
template <int N>
bool operator>(const Jet<N>& a, const Jet<N>& b) { return a.v > b.v; }

namespace jet_detail {
template <int N>
Jet<N> chain(const Jet<N>& a, double value, double slope) {
  Jet<N> r(value);
  for (int i = 0; i < N; ++i) r.d[i] = slope * a.d[i];
  return r;
}
}  // namespace jet_detail

template <int N>
Jet<N> sin(const Jet<N>& a) {
  return jet_detail::chain(a, std::sin(a.v), std::cos(a.v));
}
template <int N>
Jet<N> cos(const Jet<N>& a) {
  return jet_detail::chain(a, std::cos(a.v), -std::sin(a.v));
}
template <int N>
Jet<N> exp(const Jet<N>& a) {
  const double e = std::exp(a.v);
  return jet_detail::chain(a, e, e);
}
template <int N>
Jet<N> sqrt(const Jet<N>& a) {
  const double s = std::sqrt(a.v);
  return jet_detail::chain(a, s, 0.5 / s);
}
template <int N>
Jet<N> abs(const Jet<N>& a) {
  return a.v < 0.0 ? -a : a;
}

// Primal value of a scalar, for branching and pivoting decisions.
inline double value_of(double x) { return x; }
template <int N>
double value_of(const Jet<N>& x) { return x.v; }

}  // namespace nmoe::diff
