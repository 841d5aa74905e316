#include "posekit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace posekit {

namespace {

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

} // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn,
                         const Tensor& point, double eps) {
    Tensor x = point.detach();
    x.set_requires_grad(true);

    Tensor loss = fn(x);
    backward(loss);
    std::vector<double> analytic(x.grad().begin(), x.grad().end());

    double worst = 0.0;
    auto vals = x.data();
    for (size_t i = 0; i < vals.size(); ++i) {
        const double saved = vals[i];
        double fp, fm;
        {
            NoGradGuard ng;
            vals[i] = saved + eps;
            fp = fn(x).item();
            vals[i] = saved - eps;
            fm = fn(x).item();
        }
        vals[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

double finite_diff_check_inplace(const std::function<Tensor()>& fn,
                                 Tensor target, double eps,
                                 int64_t max_coords, std::mt19937_64* rng) {
    target.zero_grad();
    Tensor loss = fn();
    backward(loss);
    std::vector<double> analytic(target.grad().begin(), target.grad().end());

    std::vector<int64_t> coords;
    const int64_t n = target.numel();
    if (max_coords > 0 && max_coords < n && rng) {
        for (int64_t i = 0; i < max_coords; ++i)
            coords.push_back(static_cast<int64_t>((*rng)() % static_cast<uint64_t>(n)));
    } else {
        coords.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }

    double worst = 0.0;
    auto vals = target.data();
    for (int64_t i : coords) {
        const double saved = vals[static_cast<size_t>(i)];
        double fp, fm;
        {
            NoGradGuard ng;
            vals[static_cast<size_t>(i)] = saved + eps;
            fp = fn().item();
            vals[static_cast<size_t>(i)] = saved - eps;
            fm = fn().item();
        }
        vals[static_cast<size_t>(i)] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[static_cast<size_t>(i)], numeric));
    }
    return worst;
}

} // namespace posekit
