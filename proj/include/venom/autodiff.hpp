#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "venom/errors.hpp"
#include "venom/tensor.hpp"

namespace venom::ad {

/// The fixed primitive set. Anything else is composed from these.
enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kMul,
  kMatMul,
  kAffine,
  kRelu,
  kTanh,
  kLogSoftmax,
  kSum,
  kMean,
  kSquare,
  kGatherRow,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kAffine: return "affine";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSquare: return "square";
    case Op::kGatherRow: return "gather_row";
  }
  return "?";
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}
inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Result of a backward sweep. `leaves` lists every requires-grad leaf that
/// received a gradient; it is empty when the output is detached.
struct GradientReport {
  std::vector<std::size_t> leaves;
  bool empty() const { return leaves.empty(); }
};

/// Per-evaluation record of primitive operations. Nodes are appended in
/// evaluation order, so the node vector is already topologically sorted.
/// Discard the tape after `backward`.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Owned leaf that participates in differentiation.
  Var variable(Tensor value) { return push_leaf(std::move(value), nullptr, true); }
  /// Owned leaf excluded from differentiation.
  Var constant(Tensor value) { return push_leaf(std::move(value), nullptr, false); }
  /// Leaf aliasing external storage (network weights). The referenced tensor
  /// must outlive the tape and stay unmodified until backward completes.
  Var parameter(const Tensor& value, bool requires_grad = true) {
    return push_leaf(Tensor{}, &value, requires_grad);
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Tensor out = value(a);
    const Tensor& bv = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(Op::kAdd, std::move(out), {a.id, b.id});
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tensor out = value(a);
    const Tensor& bv = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return push(Op::kMul, std::move(out), {a.id, b.id});
  }

  Var matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(bv.rank() == 2 && av.cols() == bv.dim(0),
            "matmul shape mismatch " + shape_string(av.shape()) + " x " +
                shape_string(bv.shape()));
    Tensor out({av.rows(), bv.cols()});
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
    return push(Op::kMatMul, std::move(out), {a.id, b.id});
  }

  /// x·W + b with b broadcast over rows.
  Var affine(Var x, Var w, Var b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    require(wv.rank() == 2 && xv.cols() == wv.dim(0),
            "affine shape mismatch " + shape_string(xv.shape()) + " x " +
                shape_string(wv.shape()));
    require(bv.size() == wv.dim(1), "affine bias length " + std::to_string(bv.size()) +
                                        " != " + std::to_string(wv.dim(1)));
    Tensor out({xv.rows(), wv.cols()});
    auto o = as_matrix(out);
    o.noalias() = as_matrix(xv) * as_matrix(wv);
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), static_cast<Eigen::Index>(bv.size()));
    return push(Op::kAffine, std::move(out), {x.id, w.id, b.id});
  }

  Var relu(Var x) {
    Tensor out = value(x);
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return push(Op::kRelu, std::move(out), {x.id});
  }

  Var tanh(Var x) {
    Tensor out = value(x);
    for (double& v : out.values()) v = std::tanh(v);
    return push(Op::kTanh, std::move(out), {x.id});
  }

  /// Row-wise log-softmax over the last axis.
  Var log_softmax(Var x) {
    Tensor out = value(x);
    const std::size_t cols = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double* row = out.data() + r * cols;
      double mx = row[0];
      for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += std::exp(row[c] - mx);
      const double lse = mx + std::log(acc);
      for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
    }
    return push(Op::kLogSoftmax, std::move(out), {x.id});
  }

  Var sum(Var x) {
    double acc = 0.0;
    for (double v : value(x).values()) acc += v;
    return push(Op::kSum, Tensor::scalar(acc), {x.id});
  }

  Var mean(Var x) {
    const Tensor& xv = value(x);
    double acc = 0.0;
    for (double v : xv.values()) acc += v;
    return push(Op::kMean, Tensor::scalar(acc / static_cast<double>(xv.size())), {x.id});
  }

  Var square(Var x) {
    Tensor out = value(x);
    for (double& v : out.values()) v *= v;
    return push(Op::kSquare, std::move(out), {x.id});
  }

  /// Selects rows of a 2-D table: out[i] = table[rows[i]].
  Var gather_row(Var table, std::vector<std::size_t> rows) {
    const Tensor& tv = value(table);
    require(tv.rank() == 2, "gather_row expects a 2-D table");
    require(!rows.empty(), "gather_row needs at least one index");
    const std::size_t cols = tv.cols();
    Tensor out({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i] < tv.dim(0), "gather_row index " + std::to_string(rows[i]) +
                                       " out of range " + std::to_string(tv.dim(0)));
      std::copy_n(tv.data() + rows[i] * cols, cols, out.data() + i * cols);
    }
    Var v = push(Op::kGatherRow, std::move(out), {table.id});
    nodes_[v.id].rows = std::move(rows);
    return v;
  }

  const Tensor& value(Var v) const { return node(v).get(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a one-element output. Gradients accumulate into
  /// requires-grad leaves; intermediate buffers are freed as the sweep passes.
  GradientReport backward(Var output) {
    const Node& out = node(output);
    require(out.get().size() == 1, "backward needs a scalar output, got shape " +
                                       shape_string(out.get().shape()));
    require(!nodes_.empty(), "backward on an empty tape");
    GradientReport report;
    if (!out.requires_grad) return report;

    grads_.assign(nodes_.size(), std::nullopt);
    grads_[output.id] = Tensor(out.get().shape(), 1.0);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      if (!grads_[i]) continue;
      Node& n = nodes_[i];
      if (n.op == Op::kLeaf) {
        report.leaves.push_back(i);
        continue;
      }
      propagate(i, *grads_[i]);
      grads_[i].reset();
    }
    std::reverse(report.leaves.begin(), report.leaves.end());
    return report;
  }

  /// Gradient of the last backward output with respect to a leaf. Throws if
  /// the leaf was not reached.
  const Tensor& grad(Var v) const {
    if (v.id >= grads_.size() || !grads_[v.id] || nodes_[v.id].op != Op::kLeaf)
      throw ContractViolation("no gradient recorded for node " + std::to_string(v.id));
    return *grads_[v.id];
  }

  bool has_grad(Var v) const {
    return v.id < grads_.size() && grads_[v.id].has_value() && nodes_[v.id].op == Op::kLeaf;
  }

  /// Test seam: scales the backward contribution of one primitive so that
  /// gradient checks can be shown to fail.
  void inject_backward_fault(Op op, double scale) { fault_ = Fault{op, scale}; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<std::size_t, 3> in{};
    std::uint8_t arity = 0;
    bool requires_grad = false;
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<std::size_t> rows;

    const Tensor& get() const { return external ? *external : owned; }
  };

  struct Fault {
    Op op;
    double scale;
  };

  const Node& node(Var v) const {
    require(v.tape == this && v.id < nodes_.size(), "variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Tensor& value(std::size_t id) const { return nodes_[id].get(); }

  void check_same(Var a, Var b, const char* what) const {
    require(value(a).shape() == value(b).shape(),
            std::string(what) + " shape mismatch " + shape_string(value(a).shape()) +
                " vs " + shape_string(value(b).shape()));
  }

  Var push_leaf(Tensor value, const Tensor* external, bool requires_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = requires_grad;
    n.owned = std::move(value);
    n.external = external;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Var push(Op op, Tensor out, std::initializer_list<std::size_t> inputs) {
    if (!out.all_finite())
      throw NumericError(std::string("non-finite result from ") + op_name(op));
    Node n;
    n.op = op;
    n.owned = std::move(out);
    for (std::size_t id : inputs) {
      n.in[n.arity++] = id;
      n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Tensor& grad_slot(std::size_t id) {
    if (!grads_[id]) grads_[id] = Tensor(nodes_[id].get().shape(), 0.0);
    return *grads_[id];
  }

  void propagate(std::size_t id, const Tensor& g_in) {
    const Node& n = nodes_[id];
    Tensor scaled;
    const Tensor* gp = &g_in;
    if (fault_ && fault_->op == n.op) {
      scaled = fault_->scale * Tensor(g_in);
      gp = &scaled;
    }
    const Tensor& g = *gp;
    auto wants = [&](std::size_t k) { return nodes_[n.in[k]].requires_grad; };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          Tensor& dst = grad_slot(n.in[k]);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        break;
      case Op::kMul: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        if (wants(0)) {
          Tensor& dst = grad_slot(n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * b[i];
        }
        if (wants(1)) {
          Tensor& dst = grad_slot(n.in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * a[i];
        }
        break;
      }
      case Op::kMatMul:
      case Op::kAffine: {
        const Tensor& x = value(n.in[0]);
        const Tensor& w = value(n.in[1]);
        const auto gm = as_matrix(g);
        if (wants(0)) as_matrix(grad_slot(n.in[0])).noalias() += gm * as_matrix(w).transpose();
        if (wants(1)) as_matrix(grad_slot(n.in[1])).noalias() += as_matrix(x).transpose() * gm;
        if (n.op == Op::kAffine && wants(2)) {
          Tensor& db = grad_slot(n.in[2]);
          Eigen::Map<Eigen::RowVectorXd>(db.data(), static_cast<Eigen::Index>(db.size())) +=
              gm.colwise().sum();
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& x = value(n.in[0]);
        Tensor& dst = grad_slot(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) dst[i] += g[i];
        break;
      }
      case Op::kTanh: {
        const Tensor& y = n.get();
        Tensor& dst = grad_slot(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kLogSoftmax: {
        // d/dx_j = g_j - softmax_j * sum_k g_k, row-wise.
        const Tensor& y = n.get();
        Tensor& dst = grad_slot(n.in[0]);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double gsum = 0.0;
          for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            dst[i] += g[i] - std::exp(y[i]) * gsum;
          }
        }
        break;
      }
      case Op::kSum: {
        Tensor& dst = grad_slot(n.in[0]);
        for (double& v : dst.values()) v += g[0];
        break;
      }
      case Op::kMean: {
        Tensor& dst = grad_slot(n.in[0]);
        const double share = g[0] / static_cast<double>(dst.size());
        for (double& v : dst.values()) v += share;
        break;
      }
      case Op::kSquare: {
        const Tensor& x = value(n.in[0]);
        Tensor& dst = grad_slot(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += 2.0 * x[i] * g[i];
        break;
      }
      case Op::kGatherRow: {
        Tensor& dst = grad_slot(n.in[0]);
        const std::size_t cols = dst.cols();
        for (std::size_t i = 0; i < n.rows.size(); ++i)
          for (std::size_t c = 0; c < cols; ++c) dst[n.rows[i] * cols + c] += g[i * cols + c];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
  std::optional<Fault> fault_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// Operator sugar; each call records one primitive.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var affine(Var x, Var w, Var b) { return x.tape->affine(x, w, b); }
inline Var relu(Var x) { return x.tape->relu(x); }
inline Var tanh(Var x) { return x.tape->tanh(x); }
inline Var log_softmax(Var x) { return x.tape->log_softmax(x); }
inline Var sum(Var x) { return x.tape->sum(x); }
inline Var mean(Var x) { return x.tape->mean(x); }
inline Var square(Var x) { return x.tape->square(x); }

/// c * x for a constant scalar c, composed as mul with a filled constant.
inline Var scale(Var x, double c) {
  return x.tape->mul(x, x.tape->constant(Tensor(x.shape(), c)));
}

}  // namespace venom::ad
