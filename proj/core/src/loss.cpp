#include "posekit/loss.hpp"

#include <cmath>

namespace posekit {

WeightGenKind weight_gen_from_string(const std::string& s) {
    if (s == "none") return WeightGenKind::none;
    if (s == "x") return WeightGenKind::linear1;
    if (s == "2x") return WeightGenKind::linear2;
    if (s == "x2") return WeightGenKind::square;
    if (s == "exp") return WeightGenKind::exponential;
    throw ValueError("loss: unknown weight generation kind '" + s + "' (none|x|2x|x2|exp)");
}

std::string to_string(WeightGenKind kind) {
    switch (kind) {
        case WeightGenKind::none: return "none";
        case WeightGenKind::linear1: return "x";
        case WeightGenKind::linear2: return "2x";
        case WeightGenKind::square: return "x2";
        case WeightGenKind::exponential: return "exp";
    }
    return "none";
}

double weight_gen_eval(WeightGenKind kind, double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw ValueError("loss: weight generation input " + std::to_string(x) + " outside [0,1]");
    switch (kind) {
        case WeightGenKind::none: return 0.0;
        case WeightGenKind::linear1: return x;
        case WeightGenKind::linear2: return 2.0 * x;
        case WeightGenKind::square: return x * x;
        case WeightGenKind::exponential: return std::exp(x);
    }
    return 0.0;
}

LossResult heatmap_weighting_loss(const Tensor& pred, const Tensor& gt, WeightGenKind kind,
                                  const std::vector<double>& joint_weights) {
    const Shape4& s = pred.shape();
    if (!(gt.shape() == s))
        throw ShapeError("loss: pred " + s.str() + " and gt " + gt.shape().str() + " differ");
    const int64_t n = s.n, j = s.c;
    if (static_cast<int64_t>(joint_weights.size()) != n * j &&
        static_cast<int64_t>(joint_weights.size()) != j)
        throw ShapeError("loss: joint_weights needs " + std::to_string(n * j) + " (or " +
                         std::to_string(j) + ") entries, got " + std::to_string(joint_weights.size()));
    const bool per_sample = static_cast<int64_t>(joint_weights.size()) == n * j;

    // pixel weights F(gt)+1 from the ground-truth map; constant w.r.t. pred
    Tensor gt_const = gt.detach();
    std::vector<double> wpix(static_cast<size_t>(s.numel()));
    {
        const auto g = gt_const.data();
        for (size_t i = 0; i < wpix.size(); ++i) wpix[i] = weight_gen_eval(kind, g[i]) + 1.0;
    }

    // fold visibility mask, per-sample active-joint count and the pixel mean
    // into one (N,J,1,1) coefficient so the whole loss is a single reduction
    const double pixels = static_cast<double>(s.h * s.w);
    std::vector<double> coeff(static_cast<size_t>(n * j), 0.0);
    int64_t active_total = 0;
    for (int64_t b = 0; b < n; ++b) {
        int64_t active = 0;
        for (int64_t q = 0; q < j; ++q)
            if (joint_weights[static_cast<size_t>(per_sample ? b * j + q : q)] > 0.0) ++active;
        active_total += active;
        if (active == 0) continue;
        const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(active) * pixels);
        for (int64_t q = 0; q < j; ++q) {
            const double wq = joint_weights[static_cast<size_t>(per_sample ? b * j + q : q)];
            coeff[static_cast<size_t>(b * j + q)] = wq > 0.0 ? wq * norm : 0.0;
        }
    }

    if (active_total == 0)
        return {Tensor::scalar(0.0, false), 0};

    Tensor diff = sub(pred, gt_const);
    Tensor weighted = mul(mul(diff, diff), Tensor::from_data(s, std::move(wpix)));
    Tensor coeff_t = Tensor::from_data({n, j, 1, 1}, std::move(coeff));
    return {sum(mul(weighted, coeff_t)), active_total};
}

LossResult mse_loss(const Tensor& pred, const Tensor& gt,
                    const std::vector<double>& joint_weights) {
    return heatmap_weighting_loss(pred, gt, WeightGenKind::none, joint_weights);
}

} // namespace posekit
