// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over Tensors, recorded on a Tape. Every op
// validates shapes up front and throws std::invalid_argument naming the
// operation and the offending shapes. log() clamps its input at kLogFloor
// so saturated probabilities never produce non-finite losses.

#pragma once

#include <vector>

#include "phredgan/tensor.hpp"

namespace phredgan {

inline constexpr double kLogFloor = 1e-12;

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// elementwise m*x + c
Tensor affine(Tape& tape, const Tensor& x, double m, double c);

// (r,k)x(k,c) -> (r,c), or (r,k)x(k) -> (r)
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// w(T) * K(T,d) -> (d): weighted sum of the rows of K
Tensor vecmat(Tape& tape, const Tensor& w, const Tensor& k);
// M(T,d) + broadcast v(d) to every row
Tensor add_rowvec(Tape& tape, const Tensor& m, const Tensor& v);

// rank-1 or rank-2; axis 0 stacks rows, axis 1 (rank-2 only) widens rows
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis = 0);
// contiguous range along axis 0
Tensor slice(Tape& tape, const Tensor& x, int start, int len);
// gather: rank-2 by row index, rank-1 by element index; ids must be in range
Tensor rows(Tape& tape, const Tensor& table, std::vector<int> ids);
Tensor reshape(Tape& tape, const Tensor& x, std::vector<int> shape);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh_op(Tape& tape, const Tensor& x);
// softmax over the last axis; rows of a rank-2 input are independent
Tensor softmax(Tape& tape, const Tensor& x);
Tensor log_op(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace phredgan
