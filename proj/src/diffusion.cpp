#include "led/diffusion.hpp"

#include <cmath>

#include "led/errors.hpp"

namespace led {

DiffusedSample diffuse(const Array& y0, int gamma, const Array& eps, const DiffusionSchedule& s) {
    if (gamma < 1 || gamma > s.steps()) {
        throw ConfigError("diffuse: step " + std::to_string(gamma) + " out of range [1, " +
                          std::to_string(s.steps()) + "]");
    }
    require_same_shape(y0, eps, "diffuse");
    const double a = std::sqrt(s.alpha_bar(gamma));
    const double b = std::sqrt(1.0 - s.alpha_bar(gamma));
    DiffusedSample out;
    out.gamma = gamma;
    out.eps = eps;
    out.y = Array(y0.shape());
    for (std::size_t i = 0; i < y0.size(); ++i) out.y[i] = a * y0[i] + b * eps[i];
    return out;
}

namespace {

struct DenoiseCoeffs {
    double inv_sqrt_alpha;
    double eps_scale;
    double z_scale;
};

DenoiseCoeffs denoise_coeffs(int gamma_dest, const DiffusionSchedule& s) {
    if (gamma_dest < 0 || gamma_dest >= s.steps()) {
        throw ConfigError("denoise_step: destination " + std::to_string(gamma_dest) +
                          " out of range [0, " + std::to_string(s.steps() - 1) + "]");
    }
    const int src = gamma_dest + 1;  // step whose noise is being removed
    const double alpha = s.alpha(src);
    DenoiseCoeffs c;
    c.inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    c.eps_scale = (1.0 - alpha) / std::sqrt(1.0 - s.alpha_bar(src));
    c.z_scale = gamma_dest == 0 ? 0.0 : std::sqrt(1.0 - alpha);
    return c;
}

}  // namespace

Array denoise_step(const Array& y_next, const Array& eps_hat, const Array& z, int gamma_dest,
                   const DiffusionSchedule& s) {
    require_same_shape(y_next, eps_hat, "denoise_step");
    require_same_shape(y_next, z, "denoise_step");
    const DenoiseCoeffs c = denoise_coeffs(gamma_dest, s);
    Array out(y_next.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = y_next[i] - c.eps_scale * eps_hat[i];
        v = c.inv_sqrt_alpha * v;
        out[i] = v + c.z_scale * z[i];
    }
    return out;
}

VarId denoise_step_var(Tape& t, VarId y_next, VarId eps_hat, const Array& z, int gamma_dest,
                       const DiffusionSchedule& s) {
    const DenoiseCoeffs c = denoise_coeffs(gamma_dest, s);
    VarId mean = scale(t, sub(t, y_next, scale(t, eps_hat, c.eps_scale)), c.inv_sqrt_alpha);
    if (c.z_scale == 0.0) return mean;
    Array zs(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) zs[i] = c.z_scale * z[i];
    return add(t, mean, t.input(std::move(zs)));
}

Array posterior_mean_oracle(const Array& y0, const Array& y_gamma, int gamma,
                            const DiffusionSchedule& s) {
    if (gamma < 1 || gamma > s.steps()) {
        throw ConfigError("posterior_mean_oracle: step " + std::to_string(gamma) +
                          " out of range [1, " + std::to_string(s.steps()) + "]");
    }
    require_same_shape(y0, y_gamma, "posterior_mean_oracle");
    const double ab_prev = s.alpha_bar(gamma - 1);
    const double ab = s.alpha_bar(gamma);
    const double cy = std::sqrt(s.alpha(gamma)) * (1.0 - ab_prev) / (1.0 - ab);
    const double c0 = std::sqrt(ab_prev) * s.beta(gamma) / (1.0 - ab);
    Array out(y0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cy * y_gamma[i] + c0 * y0[i];
    return out;
}

Array posterior_mean_eps_form(const Array& y_gamma, const Array& eps, int gamma,
                              const DiffusionSchedule& s) {
    if (gamma < 1 || gamma > s.steps()) {
        throw ConfigError("posterior_mean_eps_form: step " + std::to_string(gamma) +
                          " out of range [1, " + std::to_string(s.steps()) + "]");
    }
    require_same_shape(y_gamma, eps, "posterior_mean_eps_form");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(gamma));
    const double ce = s.beta(gamma) / std::sqrt(1.0 - s.alpha_bar(gamma));
    Array out(y_gamma.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (y_gamma[i] - ce * eps[i]);
    }
    return out;
}

double noise_estimation_loss(const Array& eps, const Array& eps_hat) {
    require_same_shape(eps, eps_hat, "noise_estimation_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double d = eps[i] - eps_hat[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

VarId noise_estimation_loss_var(Tape& t, VarId eps_hat, const Array& eps) {
    require_same_shape(t.val(eps_hat), eps, "noise_estimation_loss");
    return frob_norm(t, sub(t, t.input(eps), eps_hat));
}

}  // namespace led
