#pragma once

// Reverse-mode differentiation over a tape of dense tensor ops.
//
// A Graph is an append-only tape: every op appends one node whose inputs
// already exist, so node order is a topological order and backward() is a
// single reverse sweep. Graphs are cheap; training loops build a fresh one
// per step and keep parameters outside as plain Tensors.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pearl/errors.hpp"
#include "pearl/tensor.hpp"

namespace pearl::ad {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kMatMul,
  kAdd,
  kAddBias,
  kSubtract,
  kMultiply,
  kScale,
  kTanh,
  kSigmoid,
  kRelu,
  kExp,
  kLog,
  kConcat,
  kSlice,
  kTranspose,
  kSum,
  kMean,
  kSoftmaxCrossEntropy,
  kBilinear,
  kNormalizeRows,
};

class Graph;

// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push_leaf(std::move(value), false); }
  Var parameter(Tensor value) { return push_leaf(std::move(value), true); }

  const Tensor& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() loss with respect to v. Nodes that do not
  // lie on a path to the loss report zeros.
  Tensor grad(Var v) const {
    const Node& n = node(v);
    if (v.id < grads_.size() && !grads_[v.id].empty()) {
      return Tensor(n.value.shape(), grads_[v.id]);
    }
    return Tensor(n.value.shape(), 0.0);
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var loss);

 private:
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool trainable = false;
    bool needs_grad = false;  // a parameter lies upstream
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    double scalar = 0.0;
    std::vector<std::size_t> targets;
    std::vector<double> cache;
  };

  Var push_leaf(Tensor value, bool trainable) {
    Node n;
    n.value = std::move(value);
    n.trainable = trainable;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Var push(Node n) {
    for (NodeId i : n.inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  const Node& node(Var v) const {
    if (v.graph != this || v.id >= nodes_.size()) {
      throw ContractError("variable does not belong to this graph");
    }
    return nodes_[v.id];
  }

  std::vector<double>& grad_buffer(NodeId id) {
    if (grads_[id].empty()) grads_[id].assign(nodes_[id].value.size(), 0.0);
    return grads_[id];
  }

  void backprop_node(NodeId id);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;

  friend Var matmul(Var, Var);
  friend Var add(Var, Var);
  friend Var subtract(Var, Var);
  friend Var multiply(Var, Var);
  friend Var scale(Var, double);
  friend Var unary(Var, OpKind);
  friend Var concat(std::span<const Var>, std::size_t);
  friend Var slice(Var, std::size_t, std::size_t, std::size_t);
  friend Var transpose(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var softmax_cross_entropy(Var, std::span<const std::size_t>);
  friend Var bilinear(Var, Var, Var);
  friend Var normalize_rows(Var);
};

inline const Tensor& Var::value() const { return graph->value(*this); }

namespace detail {

inline Graph* same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractError("operands belong to different graphs");
  }
  return a.graph;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_to_string(t.shape()));
  }
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kNormEpsilon = 1e-12;

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph* g = detail::same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_to_string(av.shape()) +
                         " * " + shape_to_string(bv.shape()));
  }
  Graph::Node n;
  n.op = OpKind::kMatMul;
  n.inputs = {a.id, b.id};
  n.value = pearl::matmul(av, bv);
  return g->push(std::move(n));
}

// Elementwise sum of equal shapes, or a matrix plus a bias row broadcast over
// its rows (bias shaped [n] or [1 x n]).
inline Var add(Var a, Var b) {
  Graph* g = detail::same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Graph::Node n;
  n.inputs = {a.id, b.id};
  if (av.shape() == bv.shape()) {
    n.op = OpKind::kAdd;
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    n.value = Tensor(av.shape(), std::move(out));
    return g->push(std::move(n));
  }
  const bool bias_shape =
      av.rank() == 2 && ((bv.rank() == 1 && bv.dim(0) == av.cols()) ||
                         (bv.rank() == 2 && bv.rows() == 1 && bv.cols() == av.cols()));
  if (!bias_shape) {
    throw DimensionError("add shape mismatch: " + shape_to_string(av.shape()) +
                         " + " + shape_to_string(bv.shape()));
  }
  n.op = OpKind::kAddBias;
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += bv[c];
  n.value = std::move(out);
  return g->push(std::move(n));
}

inline Var subtract(Var a, Var b) {
  Graph* g = detail::same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("subtract shape mismatch: " + shape_to_string(av.shape()) +
                         " - " + shape_to_string(bv.shape()));
  }
  Graph::Node n;
  n.op = OpKind::kSubtract;
  n.inputs = {a.id, b.id};
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  n.value = Tensor(av.shape(), std::move(out));
  return g->push(std::move(n));
}

inline Var multiply(Var a, Var b) {
  Graph* g = detail::same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("multiply shape mismatch: " + shape_to_string(av.shape()) +
                         " * " + shape_to_string(bv.shape()));
  }
  Graph::Node n;
  n.op = OpKind::kMultiply;
  n.inputs = {a.id, b.id};
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  n.value = Tensor(av.shape(), std::move(out));
  return g->push(std::move(n));
}

// Multiplication by a constant.
inline Var scale(Var a, double factor) {
  Graph::Node n;
  n.op = OpKind::kScale;
  n.inputs = {a.id};
  n.scalar = factor;
  std::vector<double> out(a.value().vec());
  for (double& v : out) v *= factor;
  n.value = Tensor(a.value().shape(), std::move(out));
  return a.graph->push(std::move(n));
}

inline Var unary(Var a, OpKind op) {
  const Tensor& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    switch (op) {
      case OpKind::kTanh: out[i] = std::tanh(x); break;
      case OpKind::kSigmoid: out[i] = detail::sigmoid(x); break;
      case OpKind::kRelu: out[i] = x > 0 ? x : 0.0; break;
      case OpKind::kExp: out[i] = std::exp(x); break;
      case OpKind::kLog:
        if (!(x > 0)) throw ContractError("log of non-positive value");
        out[i] = std::log(x);
        break;
      default: throw ContractError("not a unary op");
    }
  }
  Graph::Node n;
  n.op = op;
  n.inputs = {a.id};
  n.value = Tensor(av.shape(), std::move(out));
  return a.graph->push(std::move(n));
}

inline Var tanh(Var a) { return unary(a, OpKind::kTanh); }
inline Var sigmoid(Var a) { return unary(a, OpKind::kSigmoid); }
inline Var relu(Var a) { return unary(a, OpKind::kRelu); }
inline Var exp(Var a) { return unary(a, OpKind::kExp); }
inline Var log(Var a) { return unary(a, OpKind::kLog); }

// Concatenates matrices along axis 0 (rows) or 1 (columns).
inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis > 1) throw ContractError("concat axis must be 0 or 1");
  Graph* g = parts[0].graph;
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    detail::same_graph(parts[0], p);
    const Tensor& t = p.value();
    detail::require_matrix(t, "concat");
    const std::size_t fixed = axis == 0 ? t.cols() : t.rows();
    const std::size_t expect = axis == 0 ? parts[0].value().cols() : parts[0].value().rows();
    if (fixed != expect) {
      throw DimensionError("concat extent mismatch: " +
                           shape_to_string(parts[0].value().shape()) + " vs " +
                           shape_to_string(t.shape()));
    }
    if (axis == 0) {
      rows += t.rows();
      cols = t.cols();
    } else {
      cols += t.cols();
      rows = t.rows();
    }
  }
  Tensor out(Shape{rows, cols});
  std::size_t offset = 0;
  Graph::Node n;
  n.op = OpKind::kConcat;
  n.axis = axis;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (axis == 0) out(offset + r, c) = t(r, c);
        else out(r, offset + c) = t(r, c);
      }
    offset += axis == 0 ? t.rows() : t.cols();
    n.inputs.push_back(p.id);
  }
  n.value = std::move(out);
  return g->push(std::move(n));
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

// Half-open range [begin, end) of a matrix along axis 0 or 1.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  detail::require_matrix(av, "slice");
  if (axis > 1) throw ContractError("slice axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? av.rows() : av.cols();
  if (begin >= end || end > extent) {
    throw IndexError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_to_string(av.shape()));
  }
  const std::size_t rows = axis == 0 ? end - begin : av.rows();
  const std::size_t cols = axis == 1 ? end - begin : av.cols();
  Tensor out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = axis == 0 ? av(begin + r, c) : av(r, begin + c);
  Graph::Node n;
  n.op = OpKind::kSlice;
  n.inputs = {a.id};
  n.axis = axis;
  n.begin = begin;
  n.end = end;
  n.value = std::move(out);
  return a.graph->push(std::move(n));
}

inline Var transpose(Var a) {
  detail::require_matrix(a.value(), "transpose");
  Graph::Node n;
  n.op = OpKind::kTranspose;
  n.inputs = {a.id};
  n.value = pearl::transpose(a.value());
  return a.graph->push(std::move(n));
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Graph::Node n;
  n.op = OpKind::kSum;
  n.inputs = {a.id};
  n.value = Tensor::scalar(s);
  return a.graph->push(std::move(n));
}

inline Var mean(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Graph::Node n;
  n.op = OpKind::kMean;
  n.inputs = {a.id};
  n.value = Tensor::scalar(s / static_cast<double>(a.value().size()));
  return a.graph->push(std::move(n));
}

// Mean over rows of -log softmax(logits)[target], stabilized by subtracting
// the row maximum.
inline Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& lv = logits.value();
  detail::require_matrix(lv, "softmax_cross_entropy");
  const std::size_t batch = lv.rows();
  const std::size_t classes = lv.cols();
  if (targets.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for batch of " + std::to_string(batch));
  }
  Graph::Node n;
  n.op = OpKind::kSoftmaxCrossEntropy;
  n.inputs = {logits.id};
  n.targets.assign(targets.begin(), targets.end());
  n.cache.resize(batch * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (targets[r] >= classes) {
      throw IndexError("target index " + std::to_string(targets[r]) +
                       " out of range for " + std::to_string(classes) + " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, lv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(lv(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c)
      n.cache[r * classes + c] = std::exp(lv(r, c) - lse);
    total += lse - lv(r, targets[r]);
  }
  n.value = Tensor::scalar(total / static_cast<double>(batch));
  return logits.graph->push(std::move(n));
}

inline Var softmax_cross_entropy(Var logits, std::initializer_list<std::size_t> targets) {
  return softmax_cross_entropy(logits,
                               std::span<const std::size_t>(targets.begin(), targets.size()));
}

// Pairwise bilinear scores: out[i][j] = u_i^T W v_j for rows u_i of U, v_j of V.
inline Var bilinear(Var u, Var w, Var v) {
  Graph* g = detail::same_graph(u, w);
  detail::same_graph(u, v);
  const Tensor& uv = u.value();
  const Tensor& wv = w.value();
  const Tensor& vv = v.value();
  detail::require_matrix(uv, "bilinear");
  detail::require_matrix(wv, "bilinear");
  detail::require_matrix(vv, "bilinear");
  if (uv.cols() != wv.rows() || wv.cols() != vv.cols()) {
    throw DimensionError("bilinear shape mismatch: " + shape_to_string(uv.shape()) +
                         ", " + shape_to_string(wv.shape()) + ", " +
                         shape_to_string(vv.shape()));
  }
  Tensor uw = pearl::matmul(uv, wv);
  Tensor out(Shape{uv.rows(), vv.rows()});
  pearl::detail::gemm_nt(uw.data().data(), vv.data().data(), out.data().data(),
                         uv.rows(), wv.cols(), vv.rows());
  Graph::Node n;
  n.op = OpKind::kBilinear;
  n.inputs = {u.id, w.id, v.id};
  n.cache = uw.vec();
  n.value = std::move(out);
  return g->push(std::move(n));
}

// Scales each row to unit L2 norm.
inline Var normalize_rows(Var a) {
  const Tensor& av = a.value();
  detail::require_matrix(av, "normalize_rows");
  Tensor out = av;
  Graph::Node n;
  n.op = OpKind::kNormalizeRows;
  n.inputs = {a.id};
  n.cache.resize(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) s += av(r, c) * av(r, c);
    const double norm = std::sqrt(s + detail::kNormEpsilon);
    n.cache[r] = norm;
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= norm;
  }
  n.value = std::move(out);
  return a.graph->push(std::move(n));
}

inline void Graph::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_to_string(ln.value.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (grads_[i].empty() || nodes_[i].op == OpKind::kLeaf || !nodes_[i].needs_grad) continue;
    backprop_node(i);
  }
}

inline void Graph::backprop_node(NodeId id) {
  // grads_ is sized once per sweep, so references into it stay valid.
  const Node& n = nodes_[id];
  const std::vector<double>& gout = grads_[id];
  switch (n.op) {
    case OpKind::kMatMul: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      const std::size_t m = a.rows(), k = a.cols(), c = b.cols();
      if (nodes_[n.inputs[0]].needs_grad) {
        pearl::detail::gemm_nt(gout.data(), b.data().data(),
                               grad_buffer(n.inputs[0]).data(), m, c, k);
      }
      if (nodes_[n.inputs[1]].needs_grad) {
        pearl::detail::gemm_tn(a.data().data(), gout.data(),
                               grad_buffer(n.inputs[1]).data(), m, k, c);
      }
      break;
    }
    case OpKind::kAdd: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
      break;
    }
    case OpKind::kAddBias: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      auto& gb = grad_buffer(n.inputs[1]);
      const std::size_t cols = gb.size();
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i % cols] += gout[i];
      break;
    }
    case OpKind::kSubtract: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
      break;
    }
    case OpKind::kMultiply: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * b[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * a[i];
      break;
    }
    case OpKind::kScale: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * n.scalar;
      break;
    }
    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kRelu:
    case OpKind::kExp:
    case OpKind::kLog: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& y = n.value;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gout.size(); ++i) {
        double d = 0.0;
        switch (n.op) {
          case OpKind::kTanh: d = 1.0 - y[i] * y[i]; break;
          case OpKind::kSigmoid: d = y[i] * (1.0 - y[i]); break;
          case OpKind::kRelu: d = x[i] > 0 ? 1.0 : 0.0; break;
          case OpKind::kExp: d = y[i]; break;
          default: d = 1.0 / x[i]; break;
        }
        ga[i] += gout[i] * d;
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t out_cols = n.value.cols();
      std::size_t offset = 0;
      for (NodeId in : n.inputs) {
        const Tensor& t = nodes_[in].value;
        auto& gi = grad_buffer(in);
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t c = 0; c < t.cols(); ++c) {
            const std::size_t src = n.axis == 0 ? (offset + r) * out_cols + c
                                                : r * out_cols + offset + c;
            gi[r * t.cols() + c] += gout[src];
          }
        offset += n.axis == 0 ? t.rows() : t.cols();
      }
      break;
    }
    case OpKind::kSlice: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gi = grad_buffer(n.inputs[0]);
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t dst = n.axis == 0 ? (n.begin + r) * x.cols() + c
                                              : r * x.cols() + n.begin + c;
          gi[dst] += gout[r * cols + c];
        }
      break;
    }
    case OpKind::kTranspose: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gi = grad_buffer(n.inputs[0]);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
          gi[r * x.cols() + c] += gout[c * x.rows() + r];
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      auto& gi = grad_buffer(n.inputs[0]);
      const double g = n.op == OpKind::kSum ? gout[0] : gout[0] / static_cast<double>(gi.size());
      for (double& v : gi) v += g;
      break;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      auto& gi = grad_buffer(n.inputs[0]);
      const std::size_t batch = n.targets.size();
      const std::size_t classes = gi.size() / batch;
      const double g = gout[0] / static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = c == n.targets[r] ? 1.0 : 0.0;
          gi[r * classes + c] += g * (n.cache[r * classes + c] - onehot);
        }
      break;
    }
    case OpKind::kBilinear: {
      const Tensor& u = nodes_[n.inputs[0]].value;
      const Tensor& w = nodes_[n.inputs[1]].value;
      const Tensor& v = nodes_[n.inputs[2]].value;
      const std::size_t bu = u.rows(), du = u.cols(), dv = w.cols(), bv = v.rows();
      // dUW = G V, dV = G^T UW, dU = dUW W^T, dW = U^T dUW
      std::vector<double> duw(bu * dv, 0.0);
      pearl::detail::gemm_nn(gout.data(), v.data().data(), duw.data(), bu, bv, dv);
      pearl::detail::gemm_tn(gout.data(), n.cache.data(),
                             grad_buffer(n.inputs[2]).data(), bu, bv, dv);
      pearl::detail::gemm_nt(duw.data(), w.data().data(),
                             grad_buffer(n.inputs[0]).data(), bu, dv, du);
      pearl::detail::gemm_tn(u.data().data(), duw.data(),
                             grad_buffer(n.inputs[1]).data(), bu, du, dv);
      break;
    }
    case OpKind::kNormalizeRows: {
      const Tensor& y = n.value;
      auto& gi = grad_buffer(n.inputs[0]);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += y(r, c) * gout[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          gi[r * cols + c] += (gout[r * cols + c] - y(r, c) * dot) / n.cache[r];
      }
      break;
    }
    case OpKind::kLeaf:
      break;
  }
}

}  // namespace pearl::ad
