#pragma once

#include "lrnmt/ops.hpp"

namespace lrnmt {

// Central finite-difference verification of reverse-mode gradients, in
// 64-bit. `loss_fn` rebuilds the scalar loss from the current parameter
// values on the given tape. Returns the maximum over all parameter entries
// of |analytic - central| / max(|analytic|, |central|, 1e-8); NaNs from the
// function propagate into the result.
template <typename LossFn>
double finite_difference_check(LossFn&& loss_fn, std::vector<Tensor<double>*> params,
                               double step = 1e-4) {
  Tape<double> tape;
  for (auto* p : params) {
    p->ensure_grad();
    p->zero_grad();
    tape.watch(*p);
  }
  Tensor<double> loss = loss_fn(tape);
  tape.backward(loss);

  auto eval = [&]() {
    Tape<double> t = Tape<double>::no_grad();
    return loss_fn(t)(0);
  };

  double max_err = 0.0;
  for (auto* p : params) {
    for (std::int64_t i = 0; i < p->size(); ++i) {
      double saved = (*p)(i);
      (*p)(i) = saved + step;
      double up = eval();
      (*p)(i) = saved - step;
      double down = eval();
      (*p)(i) = saved;
      double fd = (up - down) / (2.0 * step);
      double analytic = p->grad()[static_cast<std::size_t>(i)];
      double err = std::abs(analytic - fd) /
                   std::max({std::abs(analytic), std::abs(fd), 1e-8});
      if (std::isnan(up) || std::isnan(down)) return std::numeric_limits<double>::quiet_NaN();
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

}  // namespace lrnmt
