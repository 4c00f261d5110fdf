#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cgr/tensor.hpp"

namespace cgr {

struct GradCheckReport {
  bool pass = false;
  bool all_finite = true;
  double max_rel_err = 0.0;
  std::string worst;    // coordinate of the largest deviation, "name[i]"
  std::string failure;  // set when the function went non-finite
};

// Central finite differences (f(x+eps) - f(x-eps)) / (2 eps) per coordinate
// of every tensor in `points`, compared against the recorded gradients of
// f(). `f` must rebuild its graph from the current values of `points` each
// call; the checker perturbs those buffers in place. Relative error uses
// max(|analytic|, |numeric|, 1e-6) as denominator.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& points,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace cgr
