#pragma once

#include <functional>

#include "led/array.hpp"

namespace led {

// Central-difference gradient of a scalar function, (f(x+h*e_i) - f(x-h*e_i)) / 2h
// per coordinate. Reference oracle for every reverse-mode gradient check.
inline Array finite_diff_grad(const std::function<double(const Array&)>& f, const Array& x,
                              double h = 1e-5) {
    Array g(x.shape());
    Array probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        const double fp = f(probe);
        probe[i] = xi - h;
        const double fm = f(probe);
        probe[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Norm-based relative error between a gradient and its oracle.
inline double grad_rel_err(const Array& got, const Array& want) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double d = got[i] - want[i];
        diff += d * d;
        ref += want[i] * want[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-10);
}

}  // namespace led
