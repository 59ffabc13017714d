// SPDX-License-Identifier: Apache-2.0

#include "phredgan/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace phredgan {

GradCheckReport finite_difference_check(const LossBuilder& fn, const std::vector<Tensor>& params,
                                        double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_difference_check: eps must be positive");

  auto trace = [&](Tape& tape, std::vector<Tensor>& leaves) {
    leaves.clear();
    for (const Tensor& p : params)
      leaves.push_back(tape.leaf(Tensor::from(p.shape(), {p.values().begin(), p.values().end()}),
                                 /*trainable=*/true));
    Tensor out = fn(tape, leaves);
    if (out.size() != 1)
      throw std::invalid_argument("finite_difference_check: builder must return a scalar");
    return out;
  };

  Tape tape;
  std::vector<Tensor> leaves;
  Tensor out = trace(tape, leaves);

  {
    Tape tape2;
    std::vector<Tensor> leaves2;
    Tensor out2 = trace(tape2, leaves2);
    if (out.item() != out2.item())
      throw std::runtime_error("finite_difference_check: builder is non-deterministic");
  }

  tape.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& l : leaves) analytic.push_back(tape.grad(l));

  GradCheckReport report;
  std::vector<double> buf;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    auto base = leaves[p].values();
    buf.assign(base.begin(), base.end());
    for (std::size_t c = 0; c < buf.size(); ++c) {
      double orig = buf[c];
      buf[c] = orig + eps;
      tape.set_leaf(leaves[p], buf);
      tape.replay();
      double up = tape.value_of(out.node()).item();
      buf[c] = orig - eps;
      tape.set_leaf(leaves[p], buf);
      tape.replay();
      double down = tape.value_of(out.node()).item();
      buf[c] = orig;
      tape.set_leaf(leaves[p], buf);

      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[p].at(c);
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = static_cast<int>(p);
        report.worst_coord = static_cast<int>(c);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace phredgan
