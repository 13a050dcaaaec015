#pragma once

// Luong "general" attention over a set of annotation vectors:
//   s_k = h^T W_a a_k,  alpha = softmax(s),  c = sum_k alpha_k a_k.

#include "sgn/numerics.hpp"

namespace sgn {

// K x D matrix; row k is the region feature a_k.
template <typename Scalar>
struct BasicAnnotationSet {
  MatrixX<Scalar> annotations;

  [[nodiscard]] Eigen::Index regions() const { return annotations.rows(); }
  [[nodiscard]] Eigen::Index feature_dim() const { return annotations.cols(); }

  void validate() const {
    if (annotations.rows() < 1 || annotations.cols() < 1) {
      throw ContractError("annotation set must be at least 1x1");
    }
    if (!annotations.allFinite()) throw NumericError("annotation set has non-finite values");
  }
};
using AnnotationSet = BasicAnnotationSet<double>;

template <typename T>
struct AttentionParamsT {
  T W_a;  // H x D
};

template <typename Scalar>
struct BasicAttention {
  BasicTensor<Scalar> context;  // D x 1
  BasicTensor<Scalar> alpha;    // K x 1
};

template <typename Scalar>
BasicTensor<Scalar> align_score(const BasicTensor<Scalar>& a_k, const BasicTensor<Scalar>& h,
                                const BasicTensor<Scalar>& W_a) {
  if (W_a.rows() != h.rows() || W_a.cols() != a_k.rows() || h.cols() != 1 || a_k.cols() != 1) {
    throw ShapeError("align_score: W_a is " + detail::shape_str(W_a.rows(), W_a.cols()) +
                     ", h is " + detail::shape_str(h.rows(), h.cols()) + ", a_k is " +
                     detail::shape_str(a_k.rows(), a_k.cols()));
  }
  return matmul(transpose(h), matmul(W_a, a_k));
}

// `annotations` is the K x D set; it may be a constant or differentiable.
template <typename Scalar>
BasicAttention<Scalar> attend(const BasicTensor<Scalar>& annotations, const BasicTensor<Scalar>& h,
                              const BasicTensor<Scalar>& W_a) {
  if (annotations.rows() < 1) throw ContractError("attend: empty annotation set");
  if (W_a.rows() != h.rows() || W_a.cols() != annotations.cols() || h.cols() != 1) {
    throw ShapeError("attend: W_a is " + detail::shape_str(W_a.rows(), W_a.cols()) + ", h is " +
                     detail::shape_str(h.rows(), h.cols()) + ", annotations are " +
                     detail::shape_str(annotations.rows(), annotations.cols()));
  }
  auto projected = matmul(transpose(W_a), h);         // D x 1
  auto scores = matmul(annotations, projected);       // K x 1
  auto alpha = softmax(scores);
  auto context = matmul(transpose(annotations), alpha);  // D x 1
  return {context, alpha};
}

}  // namespace sgn
