#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ctrgan/autodiff.hpp"

namespace ctrgan {

struct GradCheckReport {
  double max_rel_err = 0.0;
  long checked = 0;
  int worst_param = -1;
  long worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool within(double tol) const { return max_rel_err <= tol; }
};

// Central finite differences against the tape's analytic gradients.
// `build` must reconstruct the loss graph from the current parameter values
// and return the loss Var; it is re-invoked for every probe.
template <typename S, typename BuildFn>
GradCheckReport grad_check(Tape<S>& tape,
                           const std::vector<typename Tape<S>::Var>& params,
                           BuildFn build, S eps = S(1e-3)) {
  tape.reset();
  auto loss = build(tape);
  tape.backward(loss);
  std::vector<Tensor<S>> analytic;
  analytic.reserve(params.size());
  for (auto p : params)
    analytic.push_back(tape.has_grad(p) ? tape.grad(p) : Tensor<S>::zeros(tape.value(p).shape()));

  auto eval = [&]() -> double {
    tape.reset();
    return static_cast<double>(tape.value(build(tape))[0]);
  };

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto p = params[pi];
    auto& theta = tape.value_mut(p).flat();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const S saved = theta[i];
      theta[i] = saved + eps;
      const double up = eval();
      theta[i] = saved - eps;
      const double down = eval();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = static_cast<int>(pi);
        rep.worst_index = i;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  tape.reset();
  return rep;
}

}  // namespace ctrgan
