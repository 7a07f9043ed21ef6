#pragma once

#include <cmath>
#include <map>
#include <string>

#include "idcgan/nets.hpp"
#include "idcgan/tensor.hpp"

namespace idcgan {

// Per-parameter first/second moment estimates plus the shared step counter.
template <typename Scalar>
struct AdamState {
  using Array = typename Tensor<Scalar>::Array;
  struct Moments {
    Array m, v;
  };
  std::map<std::string, Moments> moments;
  long t = 0;
};

// One bias-corrected Adam update over every (name, gradient) pair. Gradients
// must be finite; a NaN/Inf gradient aborts naming the offending parameter.
template <typename Scalar>
void adam_step(WeightStore<Scalar>& params,
               const std::map<std::string, Tensor<Scalar>>& grads, AdamState<Scalar>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  using Array = typename Tensor<Scalar>::Array;
  state.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (const auto& [name, grad] : grads) {
    auto pit = params.find(name);
    expect(pit != params.end(), "adam_step: gradient for unknown parameter '" + name + "'");
    Tensor<Scalar>& p = pit->second;
    expect(p.shape == grad.shape, "adam_step: gradient shape mismatch for '" + name + "'");
    if (!grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
    auto& mom = state.moments[name];
    if (mom.m.size() == 0) {
      mom.m = Array::Zero(p.size());
      mom.v = Array::Zero(p.size());
    }
    mom.m = static_cast<Scalar>(beta1) * mom.m + static_cast<Scalar>(1.0 - beta1) * grad.data;
    mom.v = static_cast<Scalar>(beta2) * mom.v +
            static_cast<Scalar>(1.0 - beta2) * grad.data.square();
    const Array mhat = mom.m / static_cast<Scalar>(c1);
    const Array vhat = mom.v / static_cast<Scalar>(c2);
    p.data -= static_cast<Scalar>(lr) * mhat / (vhat.sqrt() + static_cast<Scalar>(eps));
  }
}

}  // namespace idcgan
