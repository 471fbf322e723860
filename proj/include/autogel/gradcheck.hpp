#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "autogel/tensor.hpp"

namespace autogel {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar function with central finite
/// differences over every coordinate of every input. Returns
/// max |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// Inputs are temporarily marked as requiring gradients and their
/// accumulated gradients are cleared on return.
inline double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps = 1e-5) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ContractError("grad_check: eps must lie in (0, 1e-2]");
  Tape tape;
  TapeScope scope(tape);

  auto eval = [&] {
    NoGradGuard guard;
    Tensor out = f(inputs);
    if (out.numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
    return out.item();
  };
  const double first = eval();
  const double second = eval();
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw ContractError("grad_check: function is not deterministic (live dropout or unseeded randomness?)");
  }

  std::vector<bool> flags;
  for (auto& t : inputs) {
    flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor out = f(inputs);
  if (out.numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
  backward(out);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.push_back(t.grad());
  tape.clear();

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = eval();
      data[i] = saved - eps;
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].set_requires_grad(flags[k]);
    inputs[k].zero_grad();
  }
  return worst;
}

}  // namespace autogel
