#pragma once

#include "rolemix/ops.hpp"
#include "rolemix/tensor.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace rolemix {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    Index worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    size_t elements_checked = 0;
};

// Compares the reverse-mode gradient of every element of every listed
// parameter against a central finite difference of `loss_fn`. The error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1), so tiny gradients are
// compared absolutely instead of amplifying rounding noise.
//
// `loss_fn` must be deterministic and rebuild its graph on every call; run
// this with Scalar = double, finite differences are meaningless in float.
template <typename Scalar>
GradCheckReport grad_check(const std::function<Tensor<Scalar>()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor<Scalar>>>& params,
                           double eps = 1e-5) {
    Tensor<Scalar> loss = loss_fn();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
        throw std::runtime_error("grad_check: non-finite loss " + std::to_string(static_cast<double>(loss.item())) +
                                 ", check aborted");
    }
    for (const auto& [name, p] : params) Tensor<Scalar>(p).zero_grad();
    loss.backward();

    std::vector<Mat<Scalar>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) analytic.push_back(Tensor<Scalar>(p).grad());

    GradCheckReport report;
    NoGradGuard no_grad;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<Scalar> p = params[pi].second;
        Mat<Scalar>& v = p.value();
        for (Index i = 0; i < v.size(); ++i) {
            const Scalar saved = v.data()[i];
            v.data()[i] = saved + Scalar(eps);
            const double up = static_cast<double>(loss_fn().item());
            v.data()[i] = saved - Scalar(eps);
            const double down = static_cast<double>(loss_fn().item());
            v.data()[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw std::runtime_error("grad_check: non-finite loss while perturbing " + params[pi].first +
                                         ", check aborted");
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(analytic[pi].data()[i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1.0});
            const double rel = std::abs(a - numeric) / denom;
            ++report.elements_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = params[pi].first;
                report.worst_index = i;
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    return report;
}

}  // namespace rolemix
