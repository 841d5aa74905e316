#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posekit/tensor.hpp"

namespace posekit {

/// A trainable tensor plus its Adam moment buffers.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    int64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_);
};

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update per parameter. Gradients must already be
/// populated (by backward) and are left untouched; the caller resets them.
/// Throws ValueError naming the parameter when its grad is missing.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg);

void zero_grads(const std::vector<Parameter*>& params);

} // namespace posekit
