#pragma once

#include <cstdint>
#include <string>

#include "led/diffusion.hpp"
#include "led/model.hpp"
#include "led/param_store.hpp"
#include "led/rng.hpp"
#include "led/scene.hpp"

namespace led {

// K predicted futures in world coordinates plus provenance. `denoiser_calls`
// counts network forward passes; each pass handles all K chains at once
// (batched convention), so a standard run reports steps() and a leapfrog run
// reports tau.
struct PredictionSet {
    Array trajectories;  // [K x T_f x 2]
    std::string sampler_id;
    int denoiser_calls = 0;
    std::uint64_t seed = 0;
    std::int64_t wall_ns = 0;
};

// Standard reverse chain: K i.i.d. N(0, I) starts, then steps() denoise
// steps with fresh z (suppressed on the final step).
PredictionSet sample_standard(const TrajectoryScene& scene, int k, int t_future,
                              const DiffusionSchedule& sched, const ParameterStore& store,
                              const ModelConfig& cfg, Rng& rng);

// Leapfrog chain: the deterministic initializer provides the K correlated
// samples at step tau, then only tau denoise steps run. Requesting k below
// the initializer's K keeps the first k correlated samples.
PredictionSet sample_leapfrog(const TrajectoryScene& scene, int k, int tau, int t_future,
                              const DiffusionSchedule& sched, const ParameterStore& store,
                              const ModelConfig& cfg, Rng& rng);

// Ablation for the correlated-sampling comparison: the initializer is
// replaced by K independent N(0, I) draws at step tau, denoised for the same
// tau steps (a standard chain truncated to matched compute).
PredictionSet sample_iid_truncated(const TrajectoryScene& scene, int k, int tau, int t_future,
                                   const DiffusionSchedule& sched, const ParameterStore& store,
                                   const ModelConfig& cfg, Rng& rng);

}  // namespace led
