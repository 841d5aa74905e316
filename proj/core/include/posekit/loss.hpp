#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posekit/tensor.hpp"

namespace posekit {

/// Weight generation function applied to ground-truth heatmap values.
/// Selected by config string: "none" | "x" | "2x" | "x2" | "exp".
enum class WeightGenKind { none, linear1, linear2, square, exponential };

WeightGenKind weight_gen_from_string(const std::string& s);
std::string to_string(WeightGenKind kind);

/// none -> 0, x, 2x, x^2, e^x. Throws ValueError outside [0, 1].
double weight_gen_eval(WeightGenKind kind, double x);

struct LossResult {
    Tensor value;           // scalar
    int64_t active_joints;  // sum over the batch of joints with weight > 0
};

/// Weighted heatmap regression loss: per sample, mean over active joints of
/// the per-joint pixel mean of (F(gt)+1) * (pred - gt)^2, then mean over the
/// batch. gt is treated as constant; joint_weights has N*J entries (or J,
/// reused for every sample) and masks joints with weight 0. All joints masked
/// gives a zero loss with active_joints == 0 as the warning outcome.
LossResult heatmap_weighting_loss(const Tensor& pred, const Tensor& gt, WeightGenKind kind,
                                  const std::vector<double>& joint_weights);

/// Plain MSE: heatmap_weighting_loss with kind none (bitwise identical).
LossResult mse_loss(const Tensor& pred, const Tensor& gt,
                    const std::vector<double>& joint_weights);

} // namespace posekit
