#pragma once

#include "led/array.hpp"
#include "led/schedule.hpp"
#include "led/tape.hpp"

namespace led {

struct DiffusedSample {
    int gamma = 0;
    Array y;    // diffused trajectory at step gamma
    Array eps;  // the noise that produced it
};

// Closed-form forward marginal: y = sqrt(alpha_bar(gamma)) * y0 +
// sqrt(1 - alpha_bar(gamma)) * eps. The caller supplies eps so training can
// seed it.
DiffusedSample diffuse(const Array& y0, int gamma, const Array& eps, const DiffusionSchedule& s);

// One reverse step landing on index `gamma_dest` (source step
// s = gamma_dest + 1 carries the schedule coefficients):
//   out = (y_next - (1-alpha_s)/sqrt(1-alpha_bar_s) * eps_hat) / sqrt(alpha_s)
//         + sqrt(1-alpha_s) * z
// with the z term suppressed at gamma_dest == 0 so the final step is the
// posterior mean.
Array denoise_step(const Array& y_next, const Array& eps_hat, const Array& z, int gamma_dest,
                   const DiffusionSchedule& s);

// Tape version used inside training/sampling; z enters as a constant.
VarId denoise_step_var(Tape& t, VarId y_next, VarId eps_hat, const Array& z, int gamma_dest,
                       const DiffusionSchedule& s);

// Exact posterior mean of q(y^{gamma-1} | y^gamma, y^0):
//   mu = sqrt(alpha_g)(1-alpha_bar_{g-1})/(1-alpha_bar_g) * y_gamma
//      + sqrt(alpha_bar_{g-1}) beta_g/(1-alpha_bar_g) * y0.
// Test oracle only; the samplers never call it.
Array posterior_mean_oracle(const Array& y0, const Array& y_gamma, int gamma,
                            const DiffusionSchedule& s);

// Equivalent noise form of the same mean,
//   mu = (y_gamma - beta_g/sqrt(1-alpha_bar_g) * eps) / sqrt(alpha_g),
// for the dual-formula agreement check.
Array posterior_mean_eps_form(const Array& y_gamma, const Array& eps, int gamma,
                              const DiffusionSchedule& s);

// Frobenius norm of (eps - eps_hat).
double noise_estimation_loss(const Array& eps, const Array& eps_hat);
VarId noise_estimation_loss_var(Tape& t, VarId eps_hat, const Array& eps);

}  // namespace led
