#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A BasicTape records every differentiable operation in execution order; a
// BasicTensor is a lightweight handle (tape, node index) into it. Vectors are
// column matrices (n x 1) and scalars are 1 x 1. Every operation checks its
// output for NaN/Inf and throws NumericError instead of propagating.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sgn/errors.hpp"

namespace sgn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

namespace detail {
// Multiplicative error applied to the tanh derivative; nonzero only inside a
// ScopedBackwardFault. Lets the gradient checker prove it can fail.
inline thread_local double tanh_backward_fault = 0.0;
}  // namespace detail

class ScopedBackwardFault {
 public:
  explicit ScopedBackwardFault(double relative_error = 1e-3)
      : previous_(detail::tanh_backward_fault) {
    detail::tanh_backward_fault = relative_error;
  }
  ~ScopedBackwardFault() { detail::tanh_backward_fault = previous_; }
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;

 private:
  double previous_;
};

template <typename Scalar>
class BasicTape;

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = MatrixX<Scalar>;

  BasicTensor() = default;
  BasicTensor(BasicTape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] BasicTape<Scalar>* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

  [[nodiscard]] const Matrix& value() const { return tape_->value(*this); }
  [[nodiscard]] Matrix grad() const { return tape_->grad(*this); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Eigen::Index size() const { return value().size(); }
  [[nodiscard]] Scalar scalar() const { return value()(0, 0); }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class BasicTape {
 public:
  using Matrix = MatrixX<Scalar>;
  using Tensor = BasicTensor<Scalar>;
  using BackwardFn = std::function<void(BasicTape&, const Matrix&)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  // With recording off, no backward closures are kept (inference mode).
  void set_recording(bool on) { recording_ = on; }
  [[nodiscard]] bool recording() const { return recording_; }

  Tensor constant(Matrix value) { return push_owned(std::move(value), false, "constant"); }

  // Differentiable leaf owning its value.
  Tensor leaf(Matrix value) { return push_owned(std::move(value), recording_, "leaf"); }

  // Differentiable leaf viewing externally owned storage. The referenced
  // matrix must outlive the tape and stay unchanged while it is in use.
  Tensor parameter(const Matrix& value) {
    check_finite(value, "parameter");
    Node node;
    node.external = &value;
    node.requires_grad = recording_;
    node.op = "parameter";
    nodes_.push_back(std::move(node));
    return Tensor(this, nodes_.size() - 1);
  }

  [[nodiscard]] const Matrix& value(const Tensor& t) const {
    const Node& node = at(t);
    return node.external != nullptr ? *node.external : node.owned;
  }

  // Gradient of the last backward() target w.r.t. t (zeros if none flowed).
  [[nodiscard]] Matrix grad(const Tensor& t) const {
    const Node& node = at(t);
    if (node.grad.size() == 0) {
      const Matrix& v = value(t);
      return Matrix::Zero(v.rows(), v.cols());
    }
    return node.grad;
  }

  [[nodiscard]] bool requires_grad(const Tensor& t) const { return at(t).requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] bool backward_done() const { return backward_done_; }

  // Reverse accumulation from a 1x1 loss. A tape supports one backward pass;
  // build a new tape for the next evaluation.
  void backward(const Tensor& loss) {
    const Node& root = at(loss);
    const Matrix& v = value(loss);
    if (v.rows() != 1 || v.cols() != 1) {
      throw ContractError("backward: loss must be a 1x1 scalar, got " + std::to_string(v.rows()) +
                          "x" + std::to_string(v.cols()));
    }
    if (backward_done_) {
      throw ContractError("backward: this tape was already differentiated");
    }
    if (!recording_) {
      throw ContractError("backward: tape was not recording");
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      node.backward(*this, node.grad);
    }
  }

  // --- used by operation implementations ---

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  // Zero-initialized gradient buffer of node `id`, for sparse updates.
  Matrix* grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return nullptr;
    if (node.grad.size() == 0) {
      const Matrix& v = node.external != nullptr ? *node.external : node.owned;
      node.grad = Matrix::Zero(v.rows(), v.cols());
    }
    return &node.grad;
  }

  const Matrix& value_of(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.external != nullptr ? *node.external : node.owned;
  }

  Tensor push(Matrix value, bool any_input_requires_grad, const char* op, BackwardFn fn) {
    check_finite(value, op);
    const bool needs = recording_ && any_input_requires_grad;
    Tensor t = push_owned(std::move(value), needs, op);
    if (needs) nodes_.back().backward = std::move(fn);
    return t;
  }

  static void check_finite(const Matrix& m, const char* op) {
    if (!m.allFinite()) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  Tensor push_owned(Matrix value, bool requires_grad, const char* op) {
    check_finite(value, op);
    Node node;
    node.owned = std::move(value);
    node.requires_grad = requires_grad;
    node.op = op;
    nodes_.push_back(std::move(node));
    return Tensor(this, nodes_.size() - 1);
  }

  const Node& at(const Tensor& t) const {
    if (t.tape() != this || t.id() >= nodes_.size()) {
      throw ContractError("tensor does not belong to this tape");
    }
    return nodes_[t.id()];
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool backward_done_ = false;
};

using Tape = BasicTape<double>;
using Tensor = BasicTensor<double>;

namespace detail {

template <typename Scalar>
BasicTape<Scalar>& same_tape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return *a.tape();
}

template <typename Scalar>
BasicTape<Scalar>& tape_of(const BasicTensor<Scalar>& a) {
  if (!a.valid()) throw ContractError("uninitialized tensor");
  return *a.tape();
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
}

template <typename Scalar>
void require_vector(const BasicTensor<Scalar>& a, const char* op) {
  if (a.cols() != 1 || a.rows() < 1) {
    throw ShapeError(std::string(op) + ": expected a nonempty column vector, got " +
                     shape_str(a.rows(), a.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + detail::shape_str(a.rows(), a.cols()) +
                     " * " + detail::shape_str(b.rows(), b.cols()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(a.value() * b.value(), rg, "matmul",
                   [ia, ib](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g * t.value_of(ib).transpose());
                     t.accumulate(ib, t.value_of(ia).transpose() * g);
                   });
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  return tape.push(a.value().transpose(), tape.requires_grad(a), "transpose",
                   [ia](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g.transpose());
                   });
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(a.value() + b.value(), rg, "add",
                   [ia, ib](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g);
                     t.accumulate(ib, g);
                   });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(a.value() - b.value(), rg, "sub",
                   [ia, ib](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g);
                     t.accumulate(ib, -g);
                   });
}

template <typename Scalar>
BasicTensor<Scalar> hadamard(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(a.value().cwiseProduct(b.value()), rg, "hadamard",
                   [ia, ib](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
                     t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
                   });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar factor) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  return tape.push(a.value() * factor, tape.requires_grad(a), "scale",
                   [ia, factor](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g * factor);
                   });
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  MatrixX<Scalar> y = a.value().unaryExpr(
      [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  const std::size_t out = tape.size();
  return tape.push(std::move(y), tape.requires_grad(a), "sigmoid",
                   [ia, out](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     const auto& y = t.value_of(out);
                     t.accumulate(ia, g.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix())));
                   });
}

template <typename Scalar>
BasicTensor<Scalar> tanh(const BasicTensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  MatrixX<Scalar> y = a.value().array().tanh().matrix();
  const std::size_t out = tape.size();
  return tape.push(std::move(y), tape.requires_grad(a), "tanh",
                   [ia, out](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     const auto& y = t.value_of(out);
                     MatrixX<Scalar> d = (Scalar(1) - y.array().square()).matrix();
                     if (detail::tanh_backward_fault != 0.0) {
                       d *= Scalar(1.0 + detail::tanh_backward_fault);
                     }
                     t.accumulate(ia, g.cwiseProduct(d));
                   });
}

// Stacks two column vectors: [a; b].
template <typename Scalar>
BasicTensor<Scalar> concat(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_vector(a, "concat");
  detail::require_vector(b, "concat");
  const Eigen::Index p = a.rows(), q = b.rows();
  MatrixX<Scalar> y(p + q, 1);
  y.topRows(p) = a.value();
  y.bottomRows(q) = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(y), rg, "concat",
                   [ia, ib, p, q](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, g.topRows(p));
                     t.accumulate(ib, g.bottomRows(q));
                   });
}

template <typename Scalar>
VectorX<Scalar> softmax_values(const Eigen::Ref<const VectorX<Scalar>>& v) {
  if (v.size() == 0) throw ShapeError("softmax: empty vector");
  VectorX<Scalar> e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& v) {
  auto& tape = detail::tape_of(v);
  detail::require_vector(v, "softmax");
  const std::size_t iv = v.id();
  MatrixX<Scalar> y = softmax_values<Scalar>(v.value().col(0));
  const std::size_t out = tape.size();
  return tape.push(std::move(y), tape.requires_grad(v), "softmax",
                   [iv, out](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     const auto& y = t.value_of(out);
                     const Scalar dot = (g.array() * y.array()).sum();
                     t.accumulate(iv, y.cwiseProduct((g.array() - dot).matrix()));
                   });
}

template <typename Scalar>
BasicTensor<Scalar> log_softmax(const BasicTensor<Scalar>& v) {
  auto& tape = detail::tape_of(v);
  detail::require_vector(v, "log_softmax");
  const std::size_t iv = v.id();
  const auto& x = v.value();
  const Scalar mx = x.maxCoeff();
  const Scalar lse = mx + std::log((x.array() - mx).exp().sum());
  MatrixX<Scalar> y = (x.array() - lse).matrix();
  const std::size_t out = tape.size();
  return tape.push(std::move(y), tape.requires_grad(v), "log_softmax",
                   [iv, out](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     const auto& y = t.value_of(out);
                     t.accumulate(iv, g - (y.array().exp() * g.sum()).matrix());
                   });
}

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  MatrixX<Scalar> y(1, 1);
  y(0, 0) = a.value().sum();
  return tape.push(std::move(y), tape.requires_grad(a), "sum",
                   [ia, r, c](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     t.accumulate(ia, MatrixX<Scalar>::Constant(r, c, g(0, 0)));
                   });
}

// Element i of a column vector, as a 1x1 tensor.
template <typename Scalar>
BasicTensor<Scalar> entry(const BasicTensor<Scalar>& v, Eigen::Index i) {
  auto& tape = detail::tape_of(v);
  detail::require_vector(v, "entry");
  if (i < 0 || i >= v.rows()) throw ShapeError("entry: index out of range");
  const std::size_t iv = v.id();
  MatrixX<Scalar> y(1, 1);
  y(0, 0) = v.value()(i, 0);
  return tape.push(std::move(y), tape.requires_grad(v), "entry",
                   [iv, i](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     if (auto* buf = t.grad_buffer(iv)) (*buf)(i, 0) += g(0, 0);
                   });
}

// Row i of a matrix, returned as a column vector (embedding lookup).
template <typename Scalar>
BasicTensor<Scalar> row(const BasicTensor<Scalar>& m, Eigen::Index i) {
  auto& tape = detail::tape_of(m);
  if (i < 0 || i >= m.rows()) throw ShapeError("row: index out of range");
  const std::size_t im = m.id();
  MatrixX<Scalar> y = m.value().row(i).transpose();
  return tape.push(std::move(y), tape.requires_grad(m), "row",
                   [im, i](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                     if (auto* buf = t.grad_buffer(im)) buf->row(i) += g.transpose();
                   });
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return sub(a, b);
}

}  // namespace sgn
