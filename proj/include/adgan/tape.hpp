#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/matrix.hpp"

namespace adgan {

// Reverse-mode differentiation over an append-only tape of matrix ops.
//
// backward passes do not accumulate numeric gradients directly; they append
// new tape nodes that *compute* the gradients. Differentiating a gradient
// node again (the double backpropagation needed by the WGAN gradient
// penalty) is then just another backward pass over the extended tape. Each
// primitive's backward rule is written in terms of the same primitive
// vocabulary; ReLU's backward uses a mask node whose derivative is zero,
// matching ReLU'' = 0 almost everywhere.
enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConst,
  kStopGrad,
  kMatMul,
  kAddRowVec,
  kRelu,
  kReluMask,
  kSigmoid,
  kSoftmaxRow,
  kSoftmaxXent,
  kHadamard,
  kLinComb,
  kAffine,
  kRowSum,
  kColSum,
  kBcastRows,
  kBcastCols,
  kBcastScalar,
  kSumAll,
  kSqrt,
  kDivide,
  kScaleByScalar,
  kGatherRows,
  kScatterRows,
  kGatherCols,
  kScatterCols,
  kConcatCols,
};

class Tape {
 public:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double alpha = 0.0;
    double beta = 0.0;
    int rows = 0;
    int cols = 0;
    bool trans_a = false;
    bool trans_b = false;
    int payload = -1;  // index into index_lists_ for gather/scatter
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  bool is_leaf(int id) const {
    const Op op = nodes_[static_cast<std::size_t>(id)].op;
    return op == Op::kInput || op == Op::kParam || op == Op::kConst;
  }

  int rows(int id) const { return nodes_[static_cast<std::size_t>(id)].rows; }
  int cols(int id) const { return nodes_[static_cast<std::size_t>(id)].cols; }

  // ---- leaves ----

  int input(Matrix value) { return leaf(Op::kInput, std::move(value)); }
  int param(Matrix value) { return leaf(Op::kParam, std::move(value)); }
  int constant(Matrix value) { return leaf(Op::kConst, std::move(value)); }
  int constant_scalar(double v) { return constant(Matrix::scalar(v)); }

  // ---- primitive operations ----

  int stop_grad(int a) { return push(Op::kStopGrad, a, -1, rows(a), cols(a)); }

  int matmul(int a, int b, bool ta = false, bool tb = false) {
    const int m = ta ? cols(a) : rows(a);
    const int k = ta ? rows(a) : cols(a);
    const int kb = tb ? cols(b) : rows(b);
    const int n = tb ? rows(b) : cols(b);
    if (k != kb) throw ValidationError("tape matmul: inner dimensions disagree");
    Node nd;
    nd.op = Op::kMatMul;
    nd.a = a;
    nd.b = b;
    nd.rows = m;
    nd.cols = n;
    nd.trans_a = ta;
    nd.trans_b = tb;
    return push_node(nd);
  }

  // x (m x n) plus a row vector b (1 x n) broadcast over rows.
  int add_rowvec(int x, int b) {
    if (rows(b) != 1 || cols(b) != cols(x))
      throw ValidationError("add_rowvec: bias must be 1 x cols(x)");
    return push(Op::kAddRowVec, x, b, rows(x), cols(x));
  }

  int relu(int a) { return push(Op::kRelu, a, -1, rows(a), cols(a)); }
  int relu_mask(int a) { return push(Op::kReluMask, a, -1, rows(a), cols(a)); }
  int sigmoid(int a) { return push(Op::kSigmoid, a, -1, rows(a), cols(a)); }
  int softmax_row(int a) { return push(Op::kSoftmaxRow, a, -1, rows(a), cols(a)); }

  // Mean over rows of cross-entropy between softmax(logits) and target
  // rows; fused for stability. The target is treated as a constant.
  int softmax_xent(int logits, int target) {
    if (rows(target) != rows(logits) || cols(target) != cols(logits))
      throw ValidationError("softmax_xent: target shape mismatch");
    return push(Op::kSoftmaxXent, logits, target, 1, 1);
  }

  int hadamard(int a, int b) {
    require_same_shape(a, b, "hadamard");
    return push(Op::kHadamard, a, b, rows(a), cols(a));
  }

  // alpha*a + beta*b, elementwise.
  int lincomb(double alpha, int a, double beta, int b) {
    require_same_shape(a, b, "lincomb");
    Node nd;
    nd.op = Op::kLinComb;
    nd.a = a;
    nd.b = b;
    nd.alpha = alpha;
    nd.beta = beta;
    nd.rows = rows(a);
    nd.cols = cols(a);
    return push_node(nd);
  }

  // alpha*a + c, elementwise.
  int affine(int a, double alpha, double c) {
    Node nd;
    nd.op = Op::kAffine;
    nd.a = a;
    nd.alpha = alpha;
    nd.beta = c;
    nd.rows = rows(a);
    nd.cols = cols(a);
    return push_node(nd);
  }

  int row_sum(int a) { return push(Op::kRowSum, a, -1, rows(a), 1); }
  int col_sum(int a) { return push(Op::kColSum, a, -1, 1, cols(a)); }

  int bcast_rows(int a, int m) {
    if (rows(a) != 1) throw ValidationError("bcast_rows: input must be a row vector");
    return push(Op::kBcastRows, a, -1, m, cols(a));
  }

  int bcast_cols(int a, int n) {
    if (cols(a) != 1) throw ValidationError("bcast_cols: input must be a column vector");
    return push(Op::kBcastCols, a, -1, rows(a), n);
  }

  int bcast_scalar(int a, int m, int n) {
    require_scalar(a, "bcast_scalar");
    return push(Op::kBcastScalar, a, -1, m, n);
  }

  int sum_all(int a) { return push(Op::kSumAll, a, -1, 1, 1); }
  int sqrt_elt(int a) { return push(Op::kSqrt, a, -1, rows(a), cols(a)); }

  int divide(int a, int b) {
    require_same_shape(a, b, "divide");
    return push(Op::kDivide, a, b, rows(a), cols(a));
  }

  // x scaled by the value of a 1 x 1 node.
  int scale_by_scalar(int x, int s) {
    require_scalar(s, "scale_by_scalar");
    return push(Op::kScaleByScalar, x, s, rows(x), cols(x));
  }

  int gather_rows(int a, std::vector<int> idx) {
    for (int i : idx)
      if (i < 0 || i >= rows(a)) throw ValidationError("gather_rows: index out of range");
    const int m = static_cast<int>(idx.size());
    return push_indexed(Op::kGatherRows, a, -1, m, cols(a), std::move(idx));
  }

  // out has target_rows rows; row idx[i] accumulates row i of a.
  int scatter_rows(int a, std::vector<int> idx, int target_rows) {
    if (static_cast<int>(idx.size()) != rows(a))
      throw ValidationError("scatter_rows: index count must equal rows(a)");
    for (int i : idx)
      if (i < 0 || i >= target_rows) throw ValidationError("scatter_rows: index out of range");
    return push_indexed(Op::kScatterRows, a, -1, target_rows, cols(a), std::move(idx));
  }

  int gather_cols(int a, std::vector<int> idx) {
    for (int i : idx)
      if (i < 0 || i >= cols(a)) throw ValidationError("gather_cols: index out of range");
    const int n = static_cast<int>(idx.size());
    return push_indexed(Op::kGatherCols, a, -1, rows(a), n, std::move(idx));
  }

  int scatter_cols(int a, std::vector<int> idx, int target_cols) {
    if (static_cast<int>(idx.size()) != cols(a))
      throw ValidationError("scatter_cols: index count must equal cols(a)");
    for (int i : idx)
      if (i < 0 || i >= target_cols) throw ValidationError("scatter_cols: index out of range");
    return push_indexed(Op::kScatterCols, a, -1, rows(a), target_cols, std::move(idx));
  }

  int concat_cols(int a, int b) {
    if (rows(a) != rows(b)) throw ValidationError("concat_cols: row counts disagree");
    return push(Op::kConcatCols, a, b, rows(a), cols(a) + cols(b));
  }

  // ---- composites over the primitive vocabulary ----

  int mean_all(int a) {
    const double inv = 1.0 / (static_cast<double>(rows(a)) * static_cast<double>(cols(a)));
    return affine(sum_all(a), inv, 0.0);
  }

  // Per-row Euclidean norm, m x 1.
  int row_l2norm(int a) { return sqrt_elt(row_sum(hadamard(a, a))); }

  // ---- evaluation ----

  void eval() {
    for (std::size_t i = evaluated_; i < nodes_.size(); ++i) compute(static_cast<int>(i));
    evaluated_ = nodes_.size();
  }

  const Matrix& value(int id) {
    eval();
    return values_[static_cast<std::size_t>(id)];
  }

  double scalar_value(int id) {
    require_scalar(id, "scalar_value");
    return value(id).at(0, 0);
  }

  // Smallest |pre-activation| over every ReLU in the graph. Finite-difference
  // harnesses use this to reject configurations whose perturbations would
  // straddle a kink.
  double min_abs_relu_input() {
    eval();
    double best = std::numeric_limits<double>::infinity();
    for (const Node& nd : nodes_) {
      if (nd.op != Op::kRelu) continue;
      const Matrix& x = values_[static_cast<std::size_t>(nd.a)];
      for (std::size_t i = 0; i < x.size(); ++i)
        best = std::min(best, std::fabs(x.data()[i]));
    }
    return best;
  }

  // ---- differentiation ----

  // Vector-Jacobian product: appends nodes computing the gradient of
  // <seed, out> with respect to every node that influences `out`, and
  // returns per-node cotangent ids (-1 where no gradient flows).
  std::vector<int> vjp(int out, int seed) {
    if (rows(seed) != rows(out) || cols(seed) != cols(out))
      throw ValidationError("vjp: seed shape must match output shape");
    std::vector<int> cot(nodes_.size(), -1);
    cot[static_cast<std::size_t>(out)] = seed;
    for (int id = out; id >= 0; --id) {
      const int g = cot[static_cast<std::size_t>(id)];
      if (g < 0) continue;
      emit_backward(id, g, cot);
    }
    return cot;
  }

  // Gradient of a scalar node with respect to the given leaves. Leaves the
  // scalar does not depend on get zero matrices.
  std::vector<Matrix> gradients(int scalar_node, const std::vector<int>& wrt) {
    if (rows(scalar_node) != 1 || cols(scalar_node) != 1)
      throw ValidationError("gradients: output node is not scalar");
    for (int p : wrt) {
      if (p < 0 || p >= size()) throw ValidationError("gradients: parameter not in graph");
    }
    eval();
    const int seed = constant_scalar(1.0);
    std::vector<int> cot = vjp(scalar_node, seed);
    eval();
    std::vector<Matrix> out;
    out.reserve(wrt.size());
    for (int p : wrt) {
      const int g = cot[static_cast<std::size_t>(p)];
      out.push_back(g >= 0 ? values_[static_cast<std::size_t>(g)] : Matrix(rows(p), cols(p)));
    }
    return out;
  }

  struct PenaltyGraph {
    int penalty = -1;     // 1 x 1 node: batch mean of (||grad_input||_2 - 1)^2
    int grad_input = -1;  // node holding d(sum critic)/d(input), -1 if detached
    int zero_rows = 0;    // samples whose input gradient was exactly zero
  };

  // Gradient penalty of a per-sample critic output (m x 1) with respect to a
  // leaf input (m x n). Rows whose input gradient is exactly zero are
  // excluded from the differentiable path and contribute the constant
  // (0 - 1)^2 = 1; callers flag the event when zero_rows > 0.
  PenaltyGraph input_gradient_penalty(int critic, int input_node) {
    if (cols(critic) != 1) throw ValidationError("gradient penalty: critic must be m x 1");
    if (!is_leaf(input_node)) throw ValidationError("gradient penalty: input node must be a leaf");
    const int m = rows(critic);
    PenaltyGraph out;
    eval();
    const int seed = constant(Matrix::filled(m, 1, 1.0));
    std::vector<int> cot = vjp(critic, seed);
    out.grad_input = cot[static_cast<std::size_t>(input_node)];
    if (out.grad_input < 0) {
      out.zero_rows = m;
      out.penalty = constant_scalar(1.0);
      return out;
    }
    const Matrix& g = value(out.grad_input);
    std::vector<int> nonzero;
    nonzero.reserve(static_cast<std::size_t>(m));
    for (int r = 0; r < g.rows(); ++r) {
      double ss = 0.0;
      const double* row = g.row(r);
      for (int c = 0; c < g.cols(); ++c) ss += row[c] * row[c];
      if (ss != 0.0) nonzero.push_back(r);
    }
    out.zero_rows = m - static_cast<int>(nonzero.size());
    if (nonzero.empty()) {
      out.penalty = constant_scalar(1.0);
      return out;
    }
    int gsel = out.grad_input;
    if (out.zero_rows > 0) gsel = gather_rows(out.grad_input, nonzero);
    const int dev = affine(row_l2norm(gsel), 1.0, -1.0);
    const int sq = hadamard(dev, dev);
    out.penalty = affine(sum_all(sq), 1.0 / m, static_cast<double>(out.zero_rows) / m);
    return out;
  }

 private:
  int leaf(Op op, Matrix value) {
    value.ensure_finite("leaf value");
    Node nd;
    nd.op = op;
    nd.rows = value.rows();
    nd.cols = value.cols();
    nodes_.push_back(nd);
    values_.push_back(std::move(value));
    if (evaluated_ == nodes_.size() - 1) evaluated_ = nodes_.size();
    return static_cast<int>(nodes_.size()) - 1;
  }

  int push(Op op, int a, int b, int r, int c) {
    Node nd;
    nd.op = op;
    nd.a = a;
    nd.b = b;
    nd.rows = r;
    nd.cols = c;
    return push_node(nd);
  }

  int push_indexed(Op op, int a, int b, int r, int c, std::vector<int> idx) {
    Node nd;
    nd.op = op;
    nd.a = a;
    nd.b = b;
    nd.rows = r;
    nd.cols = c;
    nd.payload = static_cast<int>(index_lists_.size());
    index_lists_.push_back(std::move(idx));
    return push_node(nd);
  }

  int push_node(const Node& nd) {
    check_id(nd.a);
    if (nd.b >= 0) check_id(nd.b);
    nodes_.push_back(nd);
    values_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw ValidationError("tape: operand node id out of range");
  }

  void require_same_shape(int a, int b, const char* where) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      throw ValidationError(std::string(where) + ": shape mismatch");
  }

  void require_scalar(int a, const char* where) const {
    if (rows(a) != 1 || cols(a) != 1)
      throw ValidationError(std::string(where) + ": node is not 1 x 1");
  }

  void compute(int id) {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    Matrix& out = values_[static_cast<std::size_t>(id)];
    const auto val = [&](int i) -> const Matrix& { return values_[static_cast<std::size_t>(i)]; };
    switch (nd.op) {
      case Op::kInput:
      case Op::kParam:
      case Op::kConst:
        return;  // set at creation
      case Op::kStopGrad:
        out = val(nd.a);
        return;
      case Op::kMatMul:
        matmul_into(out, val(nd.a), val(nd.b), nd.trans_a, nd.trans_b);
        break;
      case Op::kAddRowVec: {
        const Matrix& x = val(nd.a);
        const Matrix& b = val(nd.b);
        out = x;
        for (int r = 0; r < out.rows(); ++r) {
          double* orow = out.row(r);
          const double* brow = b.row(0);
          for (int c = 0; c < out.cols(); ++c) orow[c] += brow[c];
        }
        break;
      }
      case Op::kRelu: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i)
          out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
        break;
      }
      case Op::kReluMask: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0.0 ? 1.0 : 0.0;
        break;
      }
      case Op::kSigmoid: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double v = x.data()[i];
          if (v >= 0.0) {
            out.data()[i] = 1.0 / (1.0 + std::exp(-v));
          } else {
            const double e = std::exp(v);
            out.data()[i] = e / (1.0 + e);
          }
        }
        break;
      }
      case Op::kSoftmaxRow: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r) {
          const double* xr = x.row(r);
          double* orow = out.row(r);
          double mx = xr[0];
          for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, xr[c]);
          double z = 0.0;
          for (int c = 0; c < x.cols(); ++c) {
            orow[c] = std::exp(xr[c] - mx);
            z += orow[c];
          }
          for (int c = 0; c < x.cols(); ++c) orow[c] /= z;
        }
        break;
      }
      case Op::kSoftmaxXent: {
        const Matrix& logits = val(nd.a);
        const Matrix& target = val(nd.b);
        double total = 0.0;
        for (int r = 0; r < logits.rows(); ++r) {
          const double* lr = logits.row(r);
          const double* tr = target.row(r);
          double mx = lr[0];
          for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, lr[c]);
          double z = 0.0;
          for (int c = 0; c < logits.cols(); ++c) z += std::exp(lr[c] - mx);
          const double lse = mx + std::log(z);
          double dot = 0.0;
          for (int c = 0; c < logits.cols(); ++c) dot += tr[c] * lr[c];
          total += lse - dot;
        }
        out = Matrix::scalar(total / logits.rows());
        break;
      }
      case Op::kHadamard: {
        const Matrix& x = val(nd.a);
        const Matrix& y = val(nd.b);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * y.data()[i];
        break;
      }
      case Op::kLinComb: {
        const Matrix& x = val(nd.a);
        const Matrix& y = val(nd.b);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i)
          out.data()[i] = nd.alpha * x.data()[i] + nd.beta * y.data()[i];
        break;
      }
      case Op::kAffine: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = nd.alpha * x.data()[i] + nd.beta;
        break;
      }
      case Op::kRowSum: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), 1);
        for (int r = 0; r < x.rows(); ++r) {
          double s = 0.0;
          const double* xr = x.row(r);
          for (int c = 0; c < x.cols(); ++c) s += xr[c];
          out.at(r, 0) = s;
        }
        break;
      }
      case Op::kColSum: {
        const Matrix& x = val(nd.a);
        out = Matrix(1, x.cols());
        for (int r = 0; r < x.rows(); ++r) {
          const double* xr = x.row(r);
          for (int c = 0; c < x.cols(); ++c) out.at(0, c) += xr[c];
        }
        break;
      }
      case Op::kBcastRows: {
        const Matrix& x = val(nd.a);
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          double* orow = out.row(r);
          for (int c = 0; c < nd.cols; ++c) orow[c] = x.at(0, c);
        }
        break;
      }
      case Op::kBcastCols: {
        const Matrix& x = val(nd.a);
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          double* orow = out.row(r);
          const double v = x.at(r, 0);
          for (int c = 0; c < nd.cols; ++c) orow[c] = v;
        }
        break;
      }
      case Op::kBcastScalar:
        out = Matrix::filled(nd.rows, nd.cols, val(nd.a).at(0, 0));
        break;
      case Op::kSumAll: {
        const Matrix& x = val(nd.a);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
        out = Matrix::scalar(s);
        break;
      }
      case Op::kSqrt: {
        const Matrix& x = val(nd.a);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::sqrt(x.data()[i]);
        break;
      }
      case Op::kDivide: {
        const Matrix& x = val(nd.a);
        const Matrix& y = val(nd.b);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] / y.data()[i];
        break;
      }
      case Op::kScaleByScalar: {
        const Matrix& x = val(nd.a);
        const double s = val(nd.b).at(0, 0);
        out = Matrix(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = s * x.data()[i];
        break;
      }
      case Op::kGatherRows: {
        const Matrix& x = val(nd.a);
        const auto& idx = index_lists_[static_cast<std::size_t>(nd.payload)];
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          const double* src = x.row(idx[static_cast<std::size_t>(r)]);
          double* dst = out.row(r);
          std::copy(src, src + nd.cols, dst);
        }
        break;
      }
      case Op::kScatterRows: {
        const Matrix& x = val(nd.a);
        const auto& idx = index_lists_[static_cast<std::size_t>(nd.payload)];
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < x.rows(); ++r) {
          double* dst = out.row(idx[static_cast<std::size_t>(r)]);
          const double* src = x.row(r);
          for (int c = 0; c < nd.cols; ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::kGatherCols: {
        const Matrix& x = val(nd.a);
        const auto& idx = index_lists_[static_cast<std::size_t>(nd.payload)];
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          const double* src = x.row(r);
          double* dst = out.row(r);
          for (int c = 0; c < nd.cols; ++c) dst[c] = src[idx[static_cast<std::size_t>(c)]];
        }
        break;
      }
      case Op::kScatterCols: {
        const Matrix& x = val(nd.a);
        const auto& idx = index_lists_[static_cast<std::size_t>(nd.payload)];
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          const double* src = x.row(r);
          double* dst = out.row(r);
          for (int c = 0; c < x.cols(); ++c) dst[idx[static_cast<std::size_t>(c)]] += src[c];
        }
        break;
      }
      case Op::kConcatCols: {
        const Matrix& x = val(nd.a);
        const Matrix& y = val(nd.b);
        out = Matrix(nd.rows, nd.cols);
        for (int r = 0; r < nd.rows; ++r) {
          double* dst = out.row(r);
          std::copy(x.row(r), x.row(r) + x.cols(), dst);
          std::copy(y.row(r), y.row(r) + y.cols(), dst + x.cols());
        }
        break;
      }
    }
    out.ensure_finite(op_name(nd.op));
  }

  // Appends the nodes computing this node's contribution to its operands'
  // cotangents. g is the node id of this node's own cotangent.
  void emit_backward(int id, int g, std::vector<int>& cot) {
    const Node nd = nodes_[static_cast<std::size_t>(id)];  // copy: nodes_ may reallocate
    const auto acc = [&](int target, int contrib) {
      int& slot = cot[static_cast<std::size_t>(target)];
      slot = slot < 0 ? contrib : lincomb(1.0, slot, 1.0, contrib);
    };
    switch (nd.op) {
      case Op::kInput:
      case Op::kParam:
      case Op::kConst:
      case Op::kStopGrad:   // drops gradient by design
      case Op::kReluMask:   // derivative zero almost everywhere
        return;
      case Op::kMatMul: {
        // out = A' B' with A' = op(A), B' = op(B).
        int da = nd.trans_a ? matmul(nd.b, g, nd.trans_b, true)
                            : matmul(g, nd.b, false, !nd.trans_b);
        int db = nd.trans_b ? matmul(g, nd.a, true, nd.trans_a)
                            : matmul(nd.a, g, !nd.trans_a, false);
        acc(nd.a, da);
        acc(nd.b, db);
        return;
      }
      case Op::kAddRowVec:
        acc(nd.a, g);
        acc(nd.b, col_sum(g));
        return;
      case Op::kRelu:
        acc(nd.a, hadamard(g, relu_mask(nd.a)));
        return;
      case Op::kSigmoid: {
        // s' = s (1 - s), expressed via this node's own output.
        const int one_minus = affine(id, -1.0, 1.0);
        acc(nd.a, hadamard(g, hadamard(id, one_minus)));
        return;
      }
      case Op::kSoftmaxRow: {
        // dX = P o (G - rowsum(P o G) broadcast), with P this node's output.
        const int pg = hadamard(id, g);
        const int corr = bcast_cols(row_sum(pg), nd.cols);
        acc(nd.a, hadamard(id, lincomb(1.0, g, -1.0, corr)));
        return;
      }
      case Op::kSoftmaxXent: {
        // dLogits = (softmax(L) - T) / m, scaled by the upstream scalar.
        const int p = softmax_row(nd.a);
        const double inv_m = 1.0 / rows(nd.a);
        const int diff = lincomb(inv_m, p, -inv_m, nd.b);
        acc(nd.a, scale_by_scalar(diff, g));
        return;
      }
      case Op::kHadamard:
        acc(nd.a, hadamard(g, nd.b));
        acc(nd.b, hadamard(g, nd.a));
        return;
      case Op::kLinComb:
        acc(nd.a, affine(g, nd.alpha, 0.0));
        acc(nd.b, affine(g, nd.beta, 0.0));
        return;
      case Op::kAffine:
        acc(nd.a, affine(g, nd.alpha, 0.0));
        return;
      case Op::kRowSum:
        acc(nd.a, bcast_cols(g, cols(nd.a)));
        return;
      case Op::kColSum:
        acc(nd.a, bcast_rows(g, rows(nd.a)));
        return;
      case Op::kBcastRows:
        acc(nd.a, col_sum(g));
        return;
      case Op::kBcastCols:
        acc(nd.a, row_sum(g));
        return;
      case Op::kBcastScalar:
        acc(nd.a, sum_all(g));
        return;
      case Op::kSumAll:
        acc(nd.a, bcast_scalar(g, rows(nd.a), cols(nd.a)));
        return;
      case Op::kSqrt:
        // d sqrt(x) = g / (2 sqrt(x)), via this node's own output.
        acc(nd.a, divide(g, affine(id, 2.0, 0.0)));
        return;
      case Op::kDivide: {
        acc(nd.a, divide(g, nd.b));
        // d/db (a/b) = -a/b^2 = -(out)/b.
        acc(nd.b, affine(hadamard(g, divide(id, nd.b)), -1.0, 0.0));
        return;
      }
      case Op::kScaleByScalar: {
        acc(nd.a, scale_by_scalar(g, nd.b));
        acc(nd.b, sum_all(hadamard(g, nd.a)));
        return;
      }
      case Op::kGatherRows:
        acc(nd.a, scatter_rows(g, index_lists_[static_cast<std::size_t>(nd.payload)], rows(nd.a)));
        return;
      case Op::kScatterRows:
        acc(nd.a, gather_rows(g, index_lists_[static_cast<std::size_t>(nd.payload)]));
        return;
      case Op::kGatherCols:
        acc(nd.a, scatter_cols(g, index_lists_[static_cast<std::size_t>(nd.payload)], cols(nd.a)));
        return;
      case Op::kScatterCols:
        acc(nd.a, gather_cols(g, index_lists_[static_cast<std::size_t>(nd.payload)]));
        return;
      case Op::kConcatCols: {
        std::vector<int> left(static_cast<std::size_t>(cols(nd.a)));
        std::vector<int> right(static_cast<std::size_t>(cols(nd.b)));
        for (int c = 0; c < cols(nd.a); ++c) left[static_cast<std::size_t>(c)] = c;
        for (int c = 0; c < cols(nd.b); ++c) right[static_cast<std::size_t>(c)] = cols(nd.a) + c;
        acc(nd.a, gather_cols(g, std::move(left)));
        acc(nd.b, gather_cols(g, std::move(right)));
        return;
      }
    }
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kInput: return "input";
      case Op::kParam: return "param";
      case Op::kConst: return "const";
      case Op::kStopGrad: return "stop_grad";
      case Op::kMatMul: return "matmul";
      case Op::kAddRowVec: return "add_rowvec";
      case Op::kRelu: return "relu";
      case Op::kReluMask: return "relu_mask";
      case Op::kSigmoid: return "sigmoid";
      case Op::kSoftmaxRow: return "softmax_row";
      case Op::kSoftmaxXent: return "softmax_xent";
      case Op::kHadamard: return "hadamard";
      case Op::kLinComb: return "lincomb";
      case Op::kAffine: return "affine";
      case Op::kRowSum: return "row_sum";
      case Op::kColSum: return "col_sum";
      case Op::kBcastRows: return "bcast_rows";
      case Op::kBcastCols: return "bcast_cols";
      case Op::kBcastScalar: return "bcast_scalar";
      case Op::kSumAll: return "sum_all";
      case Op::kSqrt: return "sqrt";
      case Op::kDivide: return "divide";
      case Op::kScaleByScalar: return "scale_by_scalar";
      case Op::kGatherRows: return "gather_rows";
      case Op::kScatterRows: return "scatter_rows";
      case Op::kGatherCols: return "gather_cols";
      case Op::kScatterCols: return "scatter_cols";
      case Op::kConcatCols: return "concat_cols";
    }
    return "?";
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<std::vector<int>> index_lists_;
  std::size_t evaluated_ = 0;
};

}  // namespace adgan
