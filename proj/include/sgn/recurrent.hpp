#pragma once

// The two recurrent cells of the captioner.
//
// LSTM-d (decoder) takes the previous attention vector h~ as a third input
// besides x and h. Its candidate gate uses a sigmoid by default;
// `candidate_tanh` switches to the usual tanh.
// LSTM-g (guide) is a plain LSTM whose hidden state is the guiding vector.

#include <array>
#include <string>

#include "sgn/numerics.hpp"

namespace sgn {

enum Gate : int { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidateGate = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"i", "f", "o", "g"};

template <typename T>
struct LstmDParamsT {
  std::array<T, 4> W_xh;  // H x D_x
  std::array<T, 4> W_hh;  // H x H
  std::array<T, 4> W_th;  // H x H, applied to the previous attention vector
  std::array<T, 4> b;     // H x 1
};

template <typename T>
struct LstmGParamsT {
  std::array<T, 4> W_ih;  // D_g x D_z
  std::array<T, 4> W_hh;  // D_g x D_g
  std::array<T, 4> b;     // D_g x 1
};

template <typename Scalar>
struct BasicLstmDState {
  BasicTensor<Scalar> h;
  BasicTensor<Scalar> m;
  BasicTensor<Scalar> h_tilde;
};

template <typename Scalar>
struct BasicLstmGState {
  BasicTensor<Scalar> hidden;
  BasicTensor<Scalar> memory;
};

template <typename Scalar>
struct BasicLstmStep {
  BasicTensor<Scalar> h;
  BasicTensor<Scalar> m;
  std::array<BasicTensor<Scalar>, 4> gates;
};

namespace detail {

template <typename Scalar>
void require_rows(const BasicTensor<Scalar>& t, Eigen::Index rows, const char* what) {
  if (t.rows() != rows || t.cols() != 1) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x1, got " +
                     shape_str(t.rows(), t.cols()));
  }
}

template <typename Scalar>
BasicLstmStep<Scalar> finish_lstm(const std::array<BasicTensor<Scalar>, 4>& pre,
                                  const BasicTensor<Scalar>& m_prev, bool candidate_tanh) {
  BasicLstmStep<Scalar> out;
  out.gates[kInputGate] = sigmoid(pre[kInputGate]);
  out.gates[kForgetGate] = sigmoid(pre[kForgetGate]);
  out.gates[kOutputGate] = sigmoid(pre[kOutputGate]);
  out.gates[kCandidateGate] =
      candidate_tanh ? tanh(pre[kCandidateGate]) : sigmoid(pre[kCandidateGate]);
  out.m = hadamard(out.gates[kForgetGate], m_prev) +
          hadamard(out.gates[kInputGate], out.gates[kCandidateGate]);
  out.h = hadamard(out.gates[kOutputGate], tanh(out.m));
  return out;
}

}  // namespace detail

template <typename Scalar>
BasicLstmStep<Scalar> lstm_d_step(const BasicTensor<Scalar>& x, const BasicLstmDState<Scalar>& prev,
                                  const LstmDParamsT<BasicTensor<Scalar>>& params,
                                  bool candidate_tanh) {
  const Eigen::Index hidden = params.b[0].rows();
  detail::require_rows(x, params.W_xh[0].cols(), "lstm_d_step input");
  detail::require_rows(prev.h, hidden, "lstm_d_step h");
  detail::require_rows(prev.m, hidden, "lstm_d_step m");
  detail::require_rows(prev.h_tilde, hidden, "lstm_d_step h_tilde");
  std::array<BasicTensor<Scalar>, 4> pre;
  for (int z = 0; z < 4; ++z) {
    pre[z] = matmul(params.W_xh[z], x) + matmul(params.W_hh[z], prev.h) +
             matmul(params.W_th[z], prev.h_tilde) + params.b[z];
  }
  return detail::finish_lstm(pre, prev.m, candidate_tanh);
}

template <typename Scalar>
BasicLstmGState<Scalar> lstm_g_step(const BasicTensor<Scalar>& z, const BasicLstmGState<Scalar>& prev,
                                    const LstmGParamsT<BasicTensor<Scalar>>& params) {
  const Eigen::Index hidden = params.b[0].rows();
  detail::require_rows(z, params.W_ih[0].cols(), "lstm_g_step input");
  detail::require_rows(prev.hidden, hidden, "lstm_g_step hidden");
  detail::require_rows(prev.memory, hidden, "lstm_g_step memory");
  std::array<BasicTensor<Scalar>, 4> pre;
  for (int g = 0; g < 4; ++g) {
    pre[g] = matmul(params.W_ih[g], z) + matmul(params.W_hh[g], prev.hidden) + params.b[g];
  }
  auto step = detail::finish_lstm(pre, prev.memory, /*candidate_tanh=*/true);
  return {step.h, step.m};
}

using LstmDState = BasicLstmDState<double>;
using LstmGState = BasicLstmGState<double>;
using LstmStep = BasicLstmStep<double>;

}  // namespace sgn
