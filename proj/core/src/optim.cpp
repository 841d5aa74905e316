#include "posekit/optim.hpp"

#include <cmath>

namespace posekit {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)) {
    value.set_requires_grad(true);
    first_moment.assign(static_cast<size_t>(value.numel()), 0.0);
    second_moment.assign(static_cast<size_t>(value.numel()), 0.0);
}

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg) {
    for (Parameter* p : params) {
        if (!p->value.has_grad())
            throw ValueError("adam_step: parameter '" + p->name + "' has no gradient");
        p->step_count += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step_count));
        auto g = p->value.grad();
        auto v = p->value.data();
        for (size_t i = 0; i < v.size(); ++i) {
            p->first_moment[i] = cfg.beta1 * p->first_moment[i] + (1.0 - cfg.beta1) * g[i];
            p->second_moment[i] = cfg.beta2 * p->second_moment[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = p->first_moment[i] / bc1;
            const double vhat = p->second_moment[i] / bc2;
            v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->value.zero_grad();
}

} // namespace posekit
