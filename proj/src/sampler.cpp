#include "led/sampler.hpp"

#include <chrono>

#include "led/errors.hpp"

namespace led {

namespace {

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Runs `tau` denoise steps on `y_mat` (counting one network forward pass per
// step; a pass covers all K chains). z is suppressed on the final step.
VarId denoise_chain(Tape& tape, const SceneInputs& in, VarId y_mat, int tau,
                    const DiffusionSchedule& sched, const ParameterStore& store,
                    const ModelConfig& cfg, Rng& rng, int& calls) {
    if (tau == 0) return y_mat;
    VarId context = context_encode(tape, store, cfg, in);
    for (int dest = tau - 1; dest >= 0; --dest) {
        VarId eps_hat = estimate_noise(tape, store, cfg, y_mat, context, dest + 1, sched.steps());
        calls += 1;
        Array z(tape.val(y_mat).shape());
        if (dest > 0) rng.fill_normal(z);
        y_mat = denoise_step_var(tape, y_mat, eps_hat, z, dest, sched);
        if (!tape.val(y_mat).all_finite()) {
            throw NumericError("sampler: non-finite trajectory after denoise step onto " +
                               std::to_string(dest));
        }
    }
    return y_mat;
}

}  // namespace

PredictionSet sample_standard(const TrajectoryScene& scene, int k, int t_future,
                              const DiffusionSchedule& sched, const ParameterStore& store,
                              const ModelConfig& cfg, Rng& rng) {
    const std::int64_t t0 = now_ns();
    Tape tape;
    SceneInputs in = stage_scene(tape, scene, cfg);
    VarId y_mat = tape.input(rng.normal_array({k, 2 * t_future}));
    int calls = 0;
    y_mat = denoise_chain(tape, in, y_mat, sched.steps(), sched, store, cfg, rng, calls);
    PredictionSet out;
    out.trajectories = denormalize_predictions(tape.val(y_mat), in, cfg);
    out.sampler_id = "standard_g" + std::to_string(sched.steps());
    out.denoiser_calls = calls;
    out.wall_ns = now_ns() - t0;
    return out;
}

PredictionSet sample_leapfrog(const TrajectoryScene& scene, int k, int tau, int t_future,
                              const DiffusionSchedule& sched, const ParameterStore& store,
                              const ModelConfig& cfg, Rng& rng) {
    if (tau < 0 || tau > sched.steps()) {
        throw ConfigError("sample_leapfrog: tau " + std::to_string(tau) + " out of range [0, " +
                          std::to_string(sched.steps()) + "]");
    }
    if (k > cfg.k) {
        throw ConfigError("sample_leapfrog: requested " + std::to_string(k) +
                          " samples but the initializer emits " + std::to_string(cfg.k));
    }
    const std::int64_t t0 = now_ns();
    Tape tape;
    SceneInputs in = stage_scene(tape, scene, cfg);
    LeapfrogVars lf = leapfrog_init(tape, store, cfg, in, t_future);
    VarId y_mat = lf.y_tau;
    if (k < cfg.k) {
        // Evaluation at a smaller K uses the first k correlated samples.
        std::vector<VarId> rows;
        rows.reserve(static_cast<std::size_t>(k));
        for (int s = 0; s < k; ++s) rows.push_back(row(tape, y_mat, s));
        y_mat = stack_rows(tape, rows);
    }
    int calls = 0;
    y_mat = denoise_chain(tape, in, y_mat, tau, sched, store, cfg, rng, calls);
    PredictionSet out;
    out.trajectories = denormalize_predictions(tape.val(y_mat), in, cfg);
    out.sampler_id = "leapfrog_t" + std::to_string(tau);
    out.denoiser_calls = calls;
    out.wall_ns = now_ns() - t0;
    return out;
}

PredictionSet sample_iid_truncated(const TrajectoryScene& scene, int k, int tau, int t_future,
                                   const DiffusionSchedule& sched, const ParameterStore& store,
                                   const ModelConfig& cfg, Rng& rng) {
    if (tau < 0 || tau > sched.steps()) {
        throw ConfigError("sample_iid_truncated: tau " + std::to_string(tau) +
                          " out of range [0, " + std::to_string(sched.steps()) + "]");
    }
    const std::int64_t t0 = now_ns();
    Tape tape;
    SceneInputs in = stage_scene(tape, scene, cfg);
    VarId y_mat = tape.input(rng.normal_array({k, 2 * t_future}));
    int calls = 0;
    y_mat = denoise_chain(tape, in, y_mat, tau, sched, store, cfg, rng, calls);
    PredictionSet out;
    out.trajectories = denormalize_predictions(tape.val(y_mat), in, cfg);
    out.sampler_id = "iid_t" + std::to_string(tau);
    out.denoiser_calls = calls;
    out.wall_ns = now_ns() - t0;
    return out;
}

}  // namespace led
