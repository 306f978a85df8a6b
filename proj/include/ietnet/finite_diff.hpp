#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "ietnet/tensor.hpp"

namespace ietnet {

/// Central-difference check of an analytic gradient.
///
/// `f` evaluates the scalar objective at an arbitrary point (typically by
/// running a fresh forward pass); `analytic` is the gradient to verify at
/// `x`. Each element is perturbed by +/- h and the worst relative error
///     |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)
/// is returned.
template <typename T>
double finite_diff_check(const Tensor<T>& x, const std::function<double(const Tensor<T>&)>& f,
                         const Tensor<T>& analytic, double h) {
    if (analytic.shape != x.shape) {
        throw std::invalid_argument("finite_diff_check: gradient shape " + shape_str(analytic.shape) +
                                    " does not match point shape " + shape_str(x.shape));
    }
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_check: step must be positive");
    }
    double worst = 0.0;
    Tensor<T> p = x;
    for (std::int64_t i = 0; i < p.size(); ++i) {
        const T orig = p[i];
        p[i] = orig + static_cast<T>(h);
        const double fp = f(p);
        p[i] = orig - static_cast<T>(h);
        const double fm = f(p);
        p[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double ana = static_cast<double>(analytic[i]);
        const double denom = std::max({1.0, std::abs(ana), std::abs(numeric)});
        worst = std::max(worst, std::abs(ana - numeric) / denom);
    }
    return worst;
}

}  // namespace ietnet
