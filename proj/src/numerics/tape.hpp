#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "numerics/tensor.hpp"

namespace rohil {

using NodeId = int;

enum class Op : std::uint8_t {
  kLeaf,
  kAffine,
  kTanh,
  kRelu,
  kSoftplus,
  kExp,
  kLog,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSum,
  kMean,
  kSumRows,
  kSquare,
  kMin,
  kConcat,
  kStopGradient,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAffine: return "affine";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSumRows: return "sum_rows";
    case Op::kSquare: return "square";
    case Op::kMin: return "min";
    case Op::kConcat: return "concat";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "?";
}

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so the
// node list is already topologically sorted. A node that does not require a
// gradient (constants, stop-gradient outputs and everything computed only from
// them) receives no adjoint and propagates nothing upstream.
template <typename T>
class Tape {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  NodeId leaf(Tensor<T> value, bool requires_grad) {
    check_finite(Op::kLeaf, value);
    return push(Op::kLeaf, {}, std::move(value), requires_grad);
  }
  NodeId constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // x[n,in] * w[in,out] + b[out]
  NodeId affine(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.shape()[0] ||
        bv.size() != wv.shape()[1]) {
      shape_error(Op::kAffine, {xv.shape(), wv.shape(), bv.shape()});
    }
    const std::size_t n = xv.rows();
    const std::size_t out = wv.cols();
    Tensor<T> y(Shape{n, out});
    MatMap ym(y.data(), n, out);
    ym.noalias() = cmap(xv) * cmap(wv);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(bv.data(), out);
    ym.rowwise() += bm;
    return push_checked(Op::kAffine, {x, w, b}, std::move(y));
  }

  NodeId tanh(NodeId x) {
    return vectorized(Op::kTanh, x, [](auto a) { return a.tanh(); });
  }
  NodeId relu(NodeId x) {
    return vectorized(Op::kRelu, x, [](auto a) { return a.max(T(0)); });
  }
  NodeId softplus(NodeId x) {
    return unary(Op::kSoftplus, x, [](T v) {
      return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
  }
  NodeId exp(NodeId x) {
    return vectorized(Op::kExp, x, [](auto a) { return a.exp(); });
  }
  NodeId log(NodeId x) {
    return unary(Op::kLog, x, [](T v) { return std::log(v); });
  }
  NodeId square(NodeId x) {
    return unary(Op::kSquare, x, [](T v) { return v * v; });
  }
  NodeId scale(NodeId x, T factor) {
    NodeId id = unary(Op::kScale, x, [factor](T v) { return v * factor; });
    nodes_[id].factor = factor;
    return id;
  }
  NodeId stop_gradient(NodeId x) {
    return push(Op::kStopGradient, {x}, value(x), false);
  }

  // Binary ops. The right operand may broadcast: same shape, a single element,
  // a row vector [d] against [n,d], or a column [n,1] against [n,d].
  NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }

  // Elementwise minimum of two equally shaped tensors; ties route the adjoint to a.
  NodeId min(NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.shape() != bv.shape()) shape_error(Op::kMin, {av.shape(), bv.shape()});
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = bv[i] < av[i] ? bv[i] : av[i];
    return push_checked(Op::kMin, {a, b}, std::move(y));
  }

  NodeId sum(NodeId x) {
    T acc = T(0);
    for (T v : value(x).values()) acc += v;
    return push_checked(Op::kSum, {x}, Tensor<T>::scalar(acc));
  }
  NodeId mean(NodeId x) {
    const Tensor<T>& xv = value(x);
    T acc = T(0);
    for (T v : xv.values()) acc += v;
    return push_checked(Op::kMean, {x}, Tensor<T>::scalar(acc / static_cast<T>(xv.size())));
  }
  // [n,d] -> [n,1]
  NodeId sum_rows(NodeId x) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 2) shape_error(Op::kSumRows, {xv.shape()});
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    Tensor<T> y(Shape{n, 1});
    for (std::size_t r = 0; r < n; ++r) {
      T acc = T(0);
      for (std::size_t c = 0; c < d; ++c) acc += xv[r * d + c];
      y[r] = acc;
    }
    return push_checked(Op::kSumRows, {x}, std::move(y));
  }

  // [n,p] ++ [n,q] -> [n,p+q]
  NodeId concat(NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
      shape_error(Op::kConcat, {av.shape(), bv.shape()});
    }
    const std::size_t n = av.rows();
    const std::size_t p = av.cols();
    const std::size_t q = bv.cols();
    Tensor<T> y(Shape{n, p + q});
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(av.data() + r * p, p, y.data() + r * (p + q));
      std::copy_n(bv.data() + r * q, q, y.data() + r * (p + q) + p);
    }
    return push_checked(Op::kConcat, {a, b}, std::move(y));
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }

  void backward(NodeId output) {
    backward(output, Tensor<T>(value(output).shape(), T(1)));
  }

  void backward(NodeId output, const Tensor<T>& seed) {
    if (seed.shape() != value(output).shape()) {
      fail(ErrorCode::kShapeMismatch, "backward: adjoint shape " + shape_str(seed.shape()) +
                                          " does not match output " + shape_str(value(output).shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    if (!nodes_[static_cast<std::size_t>(output)].requires_grad) return;
    grads_[static_cast<std::size_t>(output)] = seed;
    for (NodeId id = output; id >= 0; --id) {
      const Node& node = nodes_[static_cast<std::size_t>(id)];
      if (!node.requires_grad || grads_[static_cast<std::size_t>(id)].empty()) continue;
      propagate(id);
    }
  }

  // Adjoint of a node after backward(); zeros when nothing reached it.
  Tensor<T> grad(NodeId id) const {
    const auto idx = static_cast<std::size_t>(id);
    if (idx < grads_.size() && !grads_[idx].empty()) return grads_[idx];
    return Tensor<T>(value(id).shape(), T(0));
  }

  // Smallest distance of any relu input or min-operand gap from its kink. Finite
  // differences are only meaningful when this exceeds the step size.
  double kink_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    for (const Node& node : nodes_) {
      if (node.op == Op::kRelu) {
        for (T v : value(node.in[0]).values()) margin = std::min(margin, std::abs(static_cast<double>(v)));
      } else if (node.op == Op::kMin) {
        const Tensor<T>& a = value(node.in[0]);
        const Tensor<T>& b = value(node.in[1]);
        for (std::size_t i = 0; i < a.size(); ++i) {
          margin = std::min(margin, std::abs(static_cast<double>(a[i] - b[i])));
        }
      }
    }
    return margin;
  }

 private:
  struct Node {
    Op op;
    std::array<NodeId, 3> in{-1, -1, -1};
    Tensor<T> value;
    T factor = T(1);
    bool requires_grad = false;
  };

  static ConstMatMap cmap(const Tensor<T>& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }

  [[noreturn]] static void shape_error(Op op, std::initializer_list<Shape> shapes) {
    std::string msg = std::string(op_name(op)) + ": incompatible extents";
    for (const Shape& s : shapes) msg += " " + shape_str(s);
    fail(ErrorCode::kShapeMismatch, msg);
  }

  static void check_finite(Op op, const Tensor<T>& t) {
    if (!t.all_finite()) fail(ErrorCode::kNonFinite, std::string(op_name(op)) + ": non-finite output");
  }

  NodeId push(Op op, std::initializer_list<NodeId> inputs, Tensor<T> v, bool requires_grad) {
    Node node;
    node.op = op;
    std::size_t k = 0;
    for (NodeId i : inputs) node.in[k++] = i;
    node.value = std::move(v);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId push_checked(Op op, std::initializer_list<NodeId> inputs, Tensor<T> v) {
    check_finite(op, v);
    bool rg = false;
    for (NodeId i : inputs) rg = rg || nodes_[static_cast<std::size_t>(i)].requires_grad;
    return push(op, inputs, std::move(v), rg);
  }

  template <typename F>
  NodeId unary(Op op, NodeId x, F f) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
    return push_checked(op, {x}, std::move(y));
  }

  template <typename F>
  NodeId vectorized(Op op, NodeId x, F f) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(y.data(), y.size()) =
        f(Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(xv.data(), xv.size()));
    return push_checked(op, {x}, std::move(y));
  }

  enum class Broadcast { kSame, kScalar, kRow, kColumn };

  static Broadcast broadcast_kind(Op op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) return Broadcast::kSame;
    if (b.size() == 1) return Broadcast::kScalar;
    if (a.rank() == 2 && b.rank() == 1 && b.size() == a.cols()) return Broadcast::kRow;
    if (a.rank() == 2 && b.rank() == 2 && b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kColumn;
    shape_error(op, {a.shape(), b.shape()});
  }

  static std::size_t rhs_index(Broadcast kind, std::size_t i, std::size_t cols) {
    switch (kind) {
      case Broadcast::kSame: return i;
      case Broadcast::kScalar: return 0;
      case Broadcast::kRow: return i % cols;
      case Broadcast::kColumn: return i / cols;
    }
    return i;
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    const Broadcast kind = broadcast_kind(op, av, bv);
    const std::size_t cols = av.cols();
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T l = av[i];
      const T r = bv[rhs_index(kind, i, cols)];
      y[i] = op == Op::kAdd ? l + r : op == Op::kSub ? l - r : l * r;
    }
    return push_checked(op, {a, b}, std::move(y));
  }

  Tensor<T>& grad_slot(NodeId id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g = Tensor<T>(value(id).shape(), T(0));
    return g;
  }

  bool wants(NodeId id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad; }

  void propagate(NodeId id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const Tensor<T>& g = grads_[static_cast<std::size_t>(id)];
    const Tensor<T>& y = node.value;
    const NodeId x = node.in[0];
    switch (node.op) {
      case Op::kLeaf:
      case Op::kStopGradient:
        return;
      case Op::kAffine: {
        const Tensor<T>& xv = value(node.in[0]);
        const Tensor<T>& wv = value(node.in[1]);
        ConstMatMap gm(g.data(), g.rows(), g.cols());
        if (wants(node.in[0])) {
          Tensor<T>& gx = grad_slot(node.in[0]);
          MatMap(gx.data(), gx.rows(), gx.cols()).noalias() += gm * cmap(wv).transpose();
        }
        if (wants(node.in[1])) {
          Tensor<T>& gw = grad_slot(node.in[1]);
          MatMap(gw.data(), gw.rows(), gw.cols()).noalias() += cmap(xv).transpose() * gm;
        }
        if (wants(node.in[2])) {
          Tensor<T>& gb = grad_slot(node.in[2]);
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data(), gb.size()) += gm.colwise().sum();
        }
        return;
      }
      case Op::kTanh:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t i) { return T(1) - y[i] * y[i]; });
        return;
      case Op::kRelu:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t i) { return value(x)[i] > T(0) ? T(1) : T(0); });
        return;
      case Op::kSoftplus:
        if (wants(x)) {
          accumulate_unary(x, g, [&](std::size_t i) { return T(1) / (T(1) + std::exp(-value(x)[i])); });
        }
        return;
      case Op::kExp:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t i) { return y[i]; });
        return;
      case Op::kLog:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t i) { return T(1) / value(x)[i]; });
        return;
      case Op::kSquare:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t i) { return T(2) * value(x)[i]; });
        return;
      case Op::kScale:
        if (wants(x)) accumulate_unary(x, g, [&](std::size_t) { return node.factor; });
        return;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
        propagate_binary(node, g);
        return;
      case Op::kMin: {
        const Tensor<T>& av = value(node.in[0]);
        const Tensor<T>& bv = value(node.in[1]);
        if (wants(node.in[0])) {
          Tensor<T>& ga = grad_slot(node.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(bv[i] < av[i])) ga[i] += g[i];
          }
        }
        if (wants(node.in[1])) {
          Tensor<T>& gb = grad_slot(node.in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (bv[i] < av[i]) gb[i] += g[i];
          }
        }
        return;
      }
      case Op::kSum:
      case Op::kMean:
        if (wants(x)) {
          Tensor<T>& gx = grad_slot(x);
          const T s = node.op == Op::kSum ? g[0] : g[0] / static_cast<T>(gx.size());
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s;
        }
        return;
      case Op::kSumRows:
        if (wants(x)) {
          Tensor<T>& gx = grad_slot(x);
          const std::size_t d = gx.cols();
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i / d];
        }
        return;
      case Op::kConcat: {
        const std::size_t p = value(node.in[0]).cols();
        const std::size_t q = value(node.in[1]).cols();
        const std::size_t n = g.rows();
        if (wants(node.in[0])) {
          Tensor<T>& ga = grad_slot(node.in[0]);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
          }
        }
        if (wants(node.in[1])) {
          Tensor<T>& gb = grad_slot(node.in[1]);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
          }
        }
        return;
      }
    }
  }

  template <typename D>
  void accumulate_unary(NodeId x, const Tensor<T>& g, D derivative) {
    Tensor<T>& gx = grad_slot(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * derivative(i);
  }

  void propagate_binary(const Node& node, const Tensor<T>& g) {
    const Tensor<T>& av = value(node.in[0]);
    const Tensor<T>& bv = value(node.in[1]);
    const Broadcast kind = broadcast_kind(node.op, av, bv);
    const std::size_t cols = av.cols();
    if (wants(node.in[0])) {
      Tensor<T>& ga = grad_slot(node.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += node.op == Op::kMul ? g[i] * bv[rhs_index(kind, i, cols)] : g[i];
      }
    }
    if (wants(node.in[1])) {
      Tensor<T>& gb = grad_slot(node.in[1]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = rhs_index(kind, i, cols);
        gb[j] += node.op == Op::kMul ? g[i] * av[i] : node.op == Op::kSub ? -g[i] : g[i];
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

}  // namespace rohil
