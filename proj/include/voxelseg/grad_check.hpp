#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "voxelseg/error.hpp"
#include "voxelseg/tensor.hpp"

namespace voxelseg::nn {

/// Compares reverse-mode gradients of a scalar graph against central
/// differences over every coordinate of `inputs`. `graph` must rebuild the
/// computation from the current input values; it is called with a tape once
/// and with nullptr for every perturbed evaluation. Returns the maximum over
/// coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
double grad_check(const std::function<TensorPtr<T>(Tape<T>*)>& graph, const std::vector<TensorPtr<T>>& inputs,
                  T h) {
  require(h > T(0), ErrorCode::InvalidArgument, "grad_check step h must be positive");
  for (const auto& in : inputs) {
    in->set_requires_grad(true);
    in->zero_grad();
  }
  Tape<T> tape;
  auto out = graph(&tape);
  require(out->size() == 1, ErrorCode::InvalidArgument, "grad_check graph must return a scalar");
  tape.backward(out);

  double worst = 0.0;
  for (const auto& in : inputs) {
    const std::vector<T> analytic = in->grad();
    for (std::size_t i = 0; i < in->size(); ++i) {
      const T saved = (*in)[i];
      const T plus = saved + h, minus = saved - h;
      (*in)[i] = plus;
      const double up = (*graph(nullptr))[0];
      (*in)[i] = minus;
      const double down = (*graph(nullptr))[0];
      (*in)[i] = saved;
      // divide by the step actually taken, which differs from 2h once rounded to T
      const double numeric = (up - down) / (double(plus) - double(minus));
      const double a = analytic.empty() ? 0.0 : double(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace voxelseg::nn
