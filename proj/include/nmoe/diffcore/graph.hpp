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

// Define-by-run reverse-mode differentiation over rank-2 tensors.
//
// Operations are recorded on a Graph as they are applied to Var handles and
// evaluated eagerly. The recorded tape can be replayed with new leaf values
// through Graph::forward, and Graph::backward sweeps it once in reverse to
// produce gradients for every leaf. A graph is meant to be rebuilt for each
// minibatch.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmoe/diffcore/tensor.hpp"
#include "nmoe/error.hpp"

namespace nmoe::diff {

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kMatMul,
  kTranspose,
  kSin,
  kCos,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSum,
  kMean,
  kSoftmax,
  kSquare,
  kSqrt,
  kConcat,
  kSlice,
  kSolve,
  kCustom,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kSolve: return "solve";
    case OpKind::kCustom: return "custom";
  }
  return "?";
}

// User-defined differentiable operation. forward() may cache whatever
// backward() needs; the graph always calls backward() after the forward()
// that produced the output it is given.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) = 0;
  // Returns one gradient per input, each shaped like that input.
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                                       const Tensor& output,
                                       const Tensor& grad_output) = 0;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph is.
class Var {
 public:
  Var() = default;
  int id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// d(output)/d(leaf) for every leaf of a graph.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const { return at(leaf.id()); }
  const Tensor& at(int leaf_id) const {
    auto it = by_id_.find(leaf_id);
    if (it == by_id_.end()) {
      throw InvalidArgument("no gradient for node " + std::to_string(leaf_id));
    }
    return it->second;
  }
  const Tensor& at(const std::string& leaf_name) const {
    auto it = names_.find(leaf_name);
    if (it == names_.end()) throw InvalidArgument("unknown leaf " + leaf_name);
    return at(it->second);
  }
  const std::map<int, Tensor>& by_id() const { return by_id_; }
  std::map<std::string, Tensor> by_name() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : names_) out.emplace(name, by_id_.at(id));
    return out;
  }

 private:
  friend class Graph;
  std::map<int, Tensor> by_id_;
  std::map<std::string, int> names_;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Differentiable input. Named leaves can be rebound by forward().
  Var leaf(std::string name, Tensor value) {
    if (!name.empty() && names_.count(name) != 0) {
      throw InvalidArgument("duplicate leaf name " + name);
    }
    Node n;
    n.kind = OpKind::kLeaf;
    n.name = std::move(name);
    n.value = std::move(value);
    return push(std::move(n));
  }

  // Non-differentiable input.
  Var constant(Tensor value, std::string name = {}) {
    Node n;
    n.kind = OpKind::kConstant;
    n.name = std::move(name);
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var apply(OpKind kind, std::vector<Var> inputs, int axis = -1) {
    Node n;
    n.kind = kind;
    n.axis = axis;
    n.inputs = ids_of(inputs);
    return record(std::move(n));
  }

  Var apply_slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) {
    Node n;
    n.kind = OpKind::kSlice;
    n.inputs = ids_of({a});
    n.range = {r0, r1, c0, c1};
    return record(std::move(n));
  }

  Var apply_custom(std::shared_ptr<CustomOp> op, std::vector<Var> inputs) {
    Node n;
    n.kind = OpKind::kCustom;
    n.inputs = ids_of(inputs);
    n.custom = std::move(op);
    return record(std::move(n));
  }

  void mark_output(std::string name, Var v) {
    check_owned(v);
    outputs_[std::move(name)] = v.id();
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(int id) const { return nodes_.at(id).value; }
  OpKind kind(int id) const { return nodes_.at(id).kind; }
  const std::vector<int>& inputs_of(int id) const { return nodes_.at(id).inputs; }
  std::vector<int> leaf_ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind == OpKind::kLeaf) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  // Re-evaluates the whole tape with the named leaves/constants rebound, and
  // returns every marked output.
  std::map<std::string, Tensor> forward(
      const std::map<std::string, Tensor>& inputs) {
    for (const auto& [name, value] : inputs) {
      auto it = names_.find(name);
      if (it == names_.end()) throw InvalidArgument("unknown input " + name);
      Node& n = nodes_[it->second];
      if (!n.value.same_shape(value)) {
        throw ShapeError("input " + name + " expects " +
                         n.value.shape_string() + ", got " +
                         value.shape_string());
      }
      n.value = value;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].inputs.empty() && nodes_[i].kind != OpKind::kCustom) {
        continue;
      }
      evaluate(static_cast<int>(i));
    }
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : outputs_) out.emplace(name, nodes_[id].value);
    return out;
  }

  // One reverse sweep from a scalar output.
  Gradients backward(Var output) const {
    check_owned(output);
    const Tensor& out = nodes_[output.id()].value;
    if (!out.is_scalar()) {
      throw ShapeError("backward from non-scalar node " +
                       std::to_string(output.id()) + " " + out.shape_string());
    }
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    grads[output.id()] = Tensor::scalar(1.0);
    has[output.id()] = true;
    for (int i = output.id(); i >= 0; --i) {
      if (!has[i]) continue;
      const Node& n = nodes_[i];
      if (n.inputs.empty()) continue;
      std::vector<Tensor> local = propagate(n, grads[i]);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const int src = n.inputs[k];
        if (local[k].size() == 0 && nodes_[src].value.size() != 0) continue;
        if (!has[src]) {
          grads[src] = std::move(local[k]);
          has[src] = true;
        } else {
          Tensor& acc = grads[src];
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += local[k][j];
        }
      }
    }
    Gradients result;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind != OpKind::kLeaf) continue;
      const Tensor& v = nodes_[i].value;
      result.by_id_.emplace(static_cast<int>(i),
                            has[i] ? grads[i] : Tensor(v.rows(), v.cols()));
      if (!nodes_[i].name.empty()) {
        result.names_.emplace(nodes_[i].name, static_cast<int>(i));
      }
    }
    return result;
  }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<int> inputs;
    std::string name;
    int axis = -1;
    std::array<std::size_t, 4> range{};
    Tensor value;
    std::shared_ptr<CustomOp> custom;
    std::shared_ptr<kernels::LuFactor> lu;
  };

  std::vector<int> ids_of(const std::vector<Var>& vars) const {
    std::vector<int> ids;
    ids.reserve(vars.size());
    for (const Var& v : vars) {
      check_owned(v);
      ids.push_back(v.id());
    }
    return ids;
  }

  void check_owned(Var v) const {
    if (v.graph_ != this || v.id_ < 0 ||
        static_cast<std::size_t>(v.id_) >= nodes_.size()) {
      throw InvalidArgument("variable does not belong to this graph");
    }
  }

  Var push(Node n) {
    const int id = static_cast<int>(nodes_.size());
    if (!n.name.empty()) names_[n.name] = id;
    nodes_.push_back(std::move(n));
    return Var(this, id);
  }

  Var record(Node n) {
    Var v = push(std::move(n));
    try {
      evaluate(v.id());
    } catch (...) {
      nodes_.pop_back();
      throw;
    }
    return v;
  }

  std::string where(int id) const {
    return "node " + std::to_string(id) + " (" + op_name(nodes_[id].kind) +
           ")";
  }

  void evaluate(int id) {
    Node& n = nodes_[id];
    std::vector<const Tensor*> in;
    in.reserve(n.inputs.size());
    for (int k : n.inputs) in.push_back(&nodes_[k].value);
    try {
      n.value = compute(n, in);
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(where(id) + ": " + e.what());
    } catch (const ShapeError& e) {
      throw ShapeError(where(id) + ": " + e.what());
    }
  }

  static void expect_arity(const Node& n, std::size_t k) {
    if (n.inputs.size() != k) {
      throw ShapeError(std::string(op_name(n.kind)) + " expects " +
                       std::to_string(k) + " inputs");
    }
  }

  static Tensor compute(Node& n, const std::vector<const Tensor*>& in) {
    namespace K = kernels;
    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        return n.value;
      case OpKind::kAdd:
        expect_arity(n, 2);
        return K::broadcast_binary(*in[0], *in[1],
                                   [](double a, double b) { return a + b; },
                                   "add");
      case OpKind::kSub:
        expect_arity(n, 2);
        return K::broadcast_binary(*in[0], *in[1],
                                   [](double a, double b) { return a - b; },
                                   "sub");
      case OpKind::kMul:
        expect_arity(n, 2);
        return K::broadcast_binary(*in[0], *in[1],
                                   [](double a, double b) { return a * b; },
                                   "mul");
      case OpKind::kMatMul:
        expect_arity(n, 2);
        return K::matmul(*in[0], *in[1]);
      case OpKind::kTranspose:
        expect_arity(n, 1);
        return K::transpose(*in[0]);
      case OpKind::kSin:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return std::sin(x); });
      case OpKind::kCos:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return std::cos(x); });
      case OpKind::kTanh:
        expect_arity(n, 1);
        return K::tanh(*in[0]);
      case OpKind::kRelu:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
      case OpKind::kExp:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return std::exp(x); });
      case OpKind::kLog:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return std::log(x); });
      case OpKind::kSquare:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return x * x; });
      case OpKind::kSqrt:
        expect_arity(n, 1);
        return K::unary(*in[0], [](double x) { return std::sqrt(x); });
      case OpKind::kSum:
        expect_arity(n, 1);
        return K::sum(*in[0], n.axis);
      case OpKind::kMean: {
        expect_arity(n, 1);
        Tensor s = K::sum(*in[0], n.axis);
        const double count =
            static_cast<double>(K::reduced_count(*in[0], n.axis));
        for (double& v : s.data()) v /= count;
        return s;
      }
      case OpKind::kSoftmax:
        expect_arity(n, 1);
        return K::softmax_rows(*in[0]);
      case OpKind::kConcat:
        return K::concat(in, n.axis);
      case OpKind::kSlice:
        expect_arity(n, 1);
        return K::slice(*in[0], n.range[0], n.range[1], n.range[2],
                        n.range[3]);
      case OpKind::kSolve: {
        expect_arity(n, 2);
        n.lu = std::make_shared<K::LuFactor>(K::lu_factor(*in[0]));
        return K::lu_solve(*n.lu, *in[1]);
      }
      case OpKind::kCustom:
        return n.custom->forward(in);
    }
    throw ShapeError("unknown op");
  }

  std::vector<Tensor> propagate(const Node& n, const Tensor& g) const {
    namespace K = kernels;
    auto in = [&](std::size_t k) -> const Tensor& {
      return nodes_[n.inputs[k]].value;
    };
    const Tensor& y = n.value;
    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        return {};
      case OpKind::kAdd:
        return {K::reduce_to(g, in(0).rows(), in(0).cols()),
                K::reduce_to(g, in(1).rows(), in(1).cols())};
      case OpKind::kSub: {
        Tensor gb = K::reduce_to(g, in(1).rows(), in(1).cols());
        for (double& v : gb.data()) v = -v;
        return {K::reduce_to(g, in(0).rows(), in(0).cols()), std::move(gb)};
      }
      case OpKind::kMul: {
        auto prod = [](double a, double b) { return a * b; };
        Tensor ga = K::broadcast_binary(g, in(1), prod, "mul grad");
        Tensor gb = K::broadcast_binary(g, in(0), prod, "mul grad");
        return {K::reduce_to(ga, in(0).rows(), in(0).cols()),
                K::reduce_to(gb, in(1).rows(), in(1).cols())};
      }
      case OpKind::kMatMul:
        return {K::matmul_nt(g, in(1)), K::matmul_tn(in(0), g)};
      case OpKind::kTranspose:
        return {K::transpose(g)};
      case OpKind::kSin: {
        Tensor d = K::unary(in(0), [](double x) { return std::cos(x); });
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= g[i];
        return {std::move(d)};
      }
      case OpKind::kCos: {
        Tensor d = K::unary(in(0), [](double x) { return -std::sin(x); });
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= g[i];
        return {std::move(d)};
      }
      case OpKind::kTanh: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] = g[i] * (1.0 - y[i] * y[i]);
        }
        return {std::move(d)};
      }
      case OpKind::kRelu: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] = in(0)[i] > 0.0 ? g[i] : 0.0;
        }
        return {std::move(d)};
      }
      case OpKind::kExp: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * y[i];
        return {std::move(d)};
      }
      case OpKind::kLog: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] / in(0)[i];
        return {std::move(d)};
      }
      case OpKind::kSquare: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] = 2.0 * in(0)[i] * g[i];
        }
        return {std::move(d)};
      }
      case OpKind::kSqrt: {
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] / (2.0 * y[i]);
        return {std::move(d)};
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        const Tensor& a = in(0);
        double scale = 1.0;
        if (n.kind == OpKind::kMean) {
          scale = 1.0 / static_cast<double>(K::reduced_count(a, n.axis));
        }
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) {
            const double gv = n.axis < 0    ? g[0]
                              : n.axis == 0 ? g(0, c)
                                            : g(r, 0);
            d(r, c) = gv * scale;
          }
        }
        return {std::move(d)};
      }
      case OpKind::kSoftmax: {
        Tensor d(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) {
            d(r, c) = y(r, c) * (g(r, c) - dot);
          }
        }
        return {std::move(d)};
      }
      case OpKind::kConcat: {
        std::vector<Tensor> out;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& p = in(k);
          if (n.axis == 0) {
            out.push_back(K::slice(g, offset, offset + p.rows(), 0, g.cols()));
            offset += p.rows();
          } else {
            out.push_back(K::slice(g, 0, g.rows(), offset, offset + p.cols()));
            offset += p.cols();
          }
        }
        return out;
      }
      case OpKind::kSlice: {
        const Tensor& a = in(0);
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) {
            d(n.range[0] + r, n.range[2] + c) = g(r, c);
          }
        }
        return {std::move(d)};
      }
      case OpKind::kSolve: {
        // x = A^-1 y:  gy = A^-T g,  gA = -gy x^T.
        Tensor gy = K::lu_solve_transposed(*n.lu, g);
        Tensor ga = K::matmul_nt(gy, y);
        for (double& v : ga.data()) v = -v;
        return {std::move(ga), std::move(gy)};
      }
      case OpKind::kCustom: {
        std::vector<const Tensor*> ins;
        for (int k : n.inputs) ins.push_back(&nodes_[k].value);
        return n.custom->backward(ins, y, g);
      }
    }
    return {};
  }

  std::vector<Node> nodes_;
  std::map<std::string, int> names_;
  std::map<std::string, int> outputs_;
};

inline const Tensor& Var::value() const {
  if (graph_ == nullptr) throw InvalidArgument("value() of empty variable");
  return graph_->value(id_);
}

// Primitive set. Elementwise binary ops broadcast rank-2 extents of 1.
inline Var add(Var a, Var b) { return a.graph()->apply(OpKind::kAdd, {a, b}); }
inline Var sub(Var a, Var b) { return a.graph()->apply(OpKind::kSub, {a, b}); }
inline Var mul(Var a, Var b) { return a.graph()->apply(OpKind::kMul, {a, b}); }
inline Var matmul(Var a, Var b) {
  return a.graph()->apply(OpKind::kMatMul, {a, b});
}
inline Var transpose(Var a) { return a.graph()->apply(OpKind::kTranspose, {a}); }
inline Var sin(Var a) { return a.graph()->apply(OpKind::kSin, {a}); }
inline Var cos(Var a) { return a.graph()->apply(OpKind::kCos, {a}); }
inline Var tanh(Var a) { return a.graph()->apply(OpKind::kTanh, {a}); }
inline Var relu(Var a) { return a.graph()->apply(OpKind::kRelu, {a}); }
inline Var exp(Var a) { return a.graph()->apply(OpKind::kExp, {a}); }
inline Var log(Var a) { return a.graph()->apply(OpKind::kLog, {a}); }
inline Var square(Var a) { return a.graph()->apply(OpKind::kSquare, {a}); }
inline Var sqrt(Var a) { return a.graph()->apply(OpKind::kSqrt, {a}); }
inline Var sum(Var a, int axis = -1) {
  return a.graph()->apply(OpKind::kSum, {a}, axis);
}
inline Var mean(Var a, int axis = -1) {
  return a.graph()->apply(OpKind::kMean, {a}, axis);
}
inline Var softmax(Var a) { return a.graph()->apply(OpKind::kSoftmax, {a}); }
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  return parts.front().graph()->apply(OpKind::kConcat, parts, axis);
}
inline Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0,
                 std::size_t c1) {
  return a.graph()->apply_slice(a, r0, r1, c0, c1);
}
inline Var columns(Var a, std::size_t c0, std::size_t c1) {
  return slice(a, 0, a.value().rows(), c0, c1);
}
inline Var solve(Var a, Var y) {
  return a.graph()->apply(OpKind::kSolve, {a, y});
}
inline Var scale(Var a, double s) {
  return mul(a, a.graph()->constant(Tensor::scalar(s)));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace nmoe::diff
