#pragma once

#include <functional>

#include "dgsct/tensor.hpp"

namespace dgsct {

/// Maximum relative error between the analytic gradient of f at x and the
/// central difference (f(x + h e_i) - f(x - h e_i)) / 2h, taken over all
/// coordinates. The relative error denominator is max(|analytic|, |numeric|,
/// 1e-8). h must lie in [1e-6, 1e-4].
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

/// Same check for a parameter embedded in a larger model: `loss` recomputes
/// the objective from current program state and `param` is perturbed in place
/// (and restored afterwards). `param` must require gradients.
double finite_diff_check_param(const std::function<Tensor()>& loss, Tensor& param, double h = 1e-5);

}  // namespace dgsct
