#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cdfnet/ops.hpp"

namespace cdfnet::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Tensor<double>(Tape<double>&)>;

/// Central finite differences of a scalar function of `inputs` against the
/// tape's gradients. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradcheck(const std::vector<Tensor<double>>& inputs, const ScalarFn& fn, double h = 1e-4,
                                 double floor = 1e-6) {
  for (auto t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape<double> tape;
    tape.backward(fn(tape));
  }
  GradCheckResult out;
  for (auto t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      Tape<double> off(false);
      data[i] = saved + h;
      const double up = fn(off).item();
      data[i] = saved - h;
      const double down = fn(off).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_relative_error = std::max(out.max_relative_error, std::abs(a - numeric) / denom);
      out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace cdfnet::testing
