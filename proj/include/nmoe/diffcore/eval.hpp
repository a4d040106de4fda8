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

#pragma once

// Two interchangeable evaluators for model code written once as a template:
// EagerEval computes tensors directly, TapeEval records onto a Graph so the
// same expression can be differentiated.

#include <string>
#include <vector>

#include "nmoe/diffcore/graph.hpp"
#include "nmoe/diffcore/tensor.hpp"

namespace nmoe::diff {

struct EagerEval {
  using Value = Tensor;

  Value param(const std::string&, const Tensor& t) { return t; }
  Value constant(const Tensor& t) { return t; }

  static Value add(const Value& a, const Value& b) {
    return kernels::broadcast_binary(a, b, [](double x, double y) { return x + y; },
                                     "add");
  }
  static Value sub(const Value& a, const Value& b) {
    return kernels::broadcast_binary(a, b, [](double x, double y) { return x - y; },
                                     "sub");
  }
  static Value mul(const Value& a, const Value& b) {
    return kernels::broadcast_binary(a, b, [](double x, double y) { return x * y; },
                                     "mul");
  }
  static Value matmul(const Value& a, const Value& b) { return kernels::matmul(a, b); }
  static Value matmul_nt(const Value& a, const Value& b) {
    return kernels::matmul(a, kernels::transpose(b));
  }
  static Value tanh(const Value& a) {
    return kernels::tanh(a);
  }
  static Value square(const Value& a) {
    return kernels::unary(a, [](double x) { return x * x; });
  }
  static Value softmax(const Value& a) { return kernels::softmax_rows(a); }
  static Value columns(const Value& a, std::size_t c0, std::size_t c1) {
    return kernels::slice(a, 0, a.rows(), c0, c1);
  }
  static Value sum(const Value& a, int axis) { return kernels::sum(a, axis); }
  static Value scale(const Value& a, double s) {
    return kernels::unary(a, [s](double x) { return x * s; });
  }
  static Value concat(const std::vector<Value>& parts, int axis) {
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return kernels::concat(ptrs, axis);
  }
  static const Tensor& value(const Value& v) { return v; }
};

struct TapeEval {
  using Value = Var;

  explicit TapeEval(Graph& g) : graph(&g) {}

  Value param(const std::string& name, const Tensor& t) {
    return graph->leaf(name, t);
  }
  Value constant(const Tensor& t) { return graph->constant(t); }

  static Value add(Value a, Value b) { return diff::add(a, b); }
  static Value sub(Value a, Value b) { return diff::sub(a, b); }
  static Value mul(Value a, Value b) { return diff::mul(a, b); }
  static Value matmul(Value a, Value b) { return diff::matmul(a, b); }
  static Value matmul_nt(Value a, Value b) {
    return diff::matmul(a, diff::transpose(b));
  }
  static Value tanh(Value a) { return diff::tanh(a); }
  static Value square(Value a) { return diff::square(a); }
  static Value softmax(Value a) { return diff::softmax(a); }
  static Value columns(Value a, std::size_t c0, std::size_t c1) {
    return diff::columns(a, c0, c1);
  }
  static Value sum(Value a, int axis) { return diff::sum(a, axis); }
  static Value scale(Value a, double s) { return diff::scale(a, s); }
  static Value concat(const std::vector<Value>& parts, int axis) {
    return diff::concat(parts, axis);
  }
  static const Tensor& value(const Value& v) { return v.value(); }

  Graph* graph;
};

}  // namespace nmoe::diff
