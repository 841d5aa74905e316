#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "posekit/tensor.hpp"

namespace posekit {

/// Compares the analytic gradient of fn at point against central finite
/// differences. Returns max over coordinates of
/// |analytic - numeric| / max(1, |analytic|). fn must be deterministic and
/// build a fresh graph per call.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn,
                         const Tensor& point, double eps);

/// Same check for a tensor that fn closes over (e.g. a model parameter):
/// perturbs target's storage in place. When max_coords > 0, checks only that
/// many coordinates sampled with rng; otherwise checks every coordinate.
double finite_diff_check_inplace(const std::function<Tensor()>& fn,
                                 Tensor target, double eps,
                                 int64_t max_coords = -1,
                                 std::mt19937_64* rng = nullptr);

} // namespace posekit
