// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of reverse-mode gradients.
// The builder is traced once; perturbed evaluations reuse tape replay, so
// the graph structure must not depend on leaf values.

#pragma once

#include <functional>
#include <vector>

#include "phredgan/tensor.hpp"

namespace phredgan {

// Builds a scalar loss from the given trainable leaves (already registered
// on the tape, in the same order as the `params` passed to the check).
using LossBuilder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_param = -1;
  int worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Max over all parameter coordinates of
//   |analytic - central_difference| / max(1, |analytic|, |central_difference|).
// Throws if the builder is non-deterministic (two traces at the same point
// disagree bitwise).
GradCheckReport finite_difference_check(const LossBuilder& fn, const std::vector<Tensor>& params,
                                        double eps = 1e-5);

}  // namespace phredgan
