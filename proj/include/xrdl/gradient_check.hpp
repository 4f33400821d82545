#pragma once

#include "xrdl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace xrdl {

struct gradient_check_report {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t elements_checked = 0;
    double tolerance = 0.0;

    [[nodiscard]] bool passed() const noexcept { return max_relative_error < tolerance; }
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares reverse-mode gradients against central differences
/// (f(p+eps) - f(p-eps)) / 2eps for every element of every parameter.
///
/// `loss_fn(tape, vars)` must build a rank-0 loss from the parameter vars and
/// be deterministic: any randomness (dropout masks) has to be fixed outside.
/// Only 64-bit tensors are accepted; at eps = 1e-4, 32-bit differences are
/// dominated by rounding.
template <typename LossFn>
gradient_check_report gradient_check(LossFn&& loss_fn, std::map<std::string, tensor64> params, double epsilon = 1e-4,
                                     double tolerance = 1e-4) {
    auto evaluate = [&](const std::map<std::string, tensor64>& values, bool with_grad)
        -> std::pair<double, std::map<std::string, tensor64>> {
        tape<double> t;
        std::map<std::string, var<double>> vars;
        for (const auto& [name, value] : values) {
            vars.emplace(name, t.parameter(name, value));
        }
        const var<double> loss = loss_fn(t, vars);
        if (!with_grad) {
            return {loss.value().item(), {}};
        }
        auto g = t.backward(loss);
        return {loss.value().item(), g.params()};
    };

    gradient_check_report report;
    report.tolerance = tolerance;
    const auto analytic = evaluate(params, true).second;
    for (auto& [name, value] : params) {
        const tensor64& grad = analytic.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double original = value[i];
            value[i] = original + epsilon;
            const double plus = evaluate(params, false).first;
            value[i] = original - epsilon;
            const double minus = evaluate(params, false).first;
            value[i] = original;
            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double err = relative_error(grad[i], numeric);
            ++report.elements_checked;
            if (err > report.max_relative_error || report.elements_checked == 1) {
                report.max_relative_error = err;
                report.worst_param = name;
                report.worst_index = i;
                report.analytic = grad[i];
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace xrdl
