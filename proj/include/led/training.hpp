#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "led/diffusion.hpp"
#include "led/model.hpp"
#include "led/param_store.hpp"
#include "led/rng.hpp"
#include "led/scene.hpp"

namespace led {

struct TrainConfig {
    int stage1_epochs = 100;
    double stage1_lr = 1e-2;
    int stage1_halve_every = 16;  // epochs between halvings
    int stage2_epochs = 200;
    double stage2_lr = 1e-4;
    double stage2_decay = 0.9;
    int stage2_decay_every = 32;
    double w = 50.0;  // distance-loss weight
    int batch_size = 32;
    int tau = 5;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_grad_norm;
    std::vector<double> epoch_wall_ms;
    std::uint64_t seed = 0;
    std::string config_hash;
};

void write_report(const TrainReport& report, const std::string& path,
                  const std::vector<std::string>& headers);

// Uniform diffusion-step draw on {1..steps} used by stage 1.
int draw_stage1_gamma(Rng& rng, int steps);

// One stage-1 update: per scene draw gamma ~ U{1..steps} and eps ~ N(0,I),
// diffuse the normalized future, estimate the noise, take the mean noise
// estimation loss over the batch, then backward + Adam. Returns the loss.
double stage1_step(const std::vector<const TrajectoryScene*>& batch, const DiffusionSchedule& sched,
                   ParameterStore& store, const ModelConfig& cfg, double lr, Rng& rng,
                   double* grad_norm_out = nullptr);

// Distance + uncertainty objective:
//   L = w * min_k ||Y - Yhat_k|| + (sum_k ||Y - Yhat_k|| / (sigma^2 K) + log sigma^2).
// The min routes its gradient only to the arg-min sample (lowest index on
// ties); every distance also feeds the sigma-normalized sum.
double leapfrog_loss(const Array& y, const Array& predictions, double sigma, double w);
VarId leapfrog_loss_var(Tape& t, const Array& y_flat, VarId y_mat, VarId sigma, double w);

struct Stage2Result {
    double loss = 0.0;
    double min_dist = 0.0;  // mean over batch of the best-of-K distance
};

// One stage-2 update against a frozen denoiser: leapfrog_init, tau denoise
// steps (differentiated through, fresh z per step), mean leapfrog loss over
// the batch, backward + Adam on the initializer only. Throws ContractError
// if any denoiser parameter is unfrozen.
Stage2Result stage2_step(const std::vector<const TrajectoryScene*>& batch,
                         const DiffusionSchedule& sched, ParameterStore& store,
                         const ModelConfig& cfg, int tau, double w, double lr, Rng& rng,
                         double* grad_norm_out = nullptr);

// Forward-only stage-2 objective for one scene (used by gradient checks and
// by stage2_step itself). Noise draws come from `rng`.
VarId stage2_forward_loss(Tape& tape, const TrajectoryScene& scene, const DiffusionSchedule& sched,
                          const ParameterStore& store, const ModelConfig& cfg, int tau, double w,
                          Rng& rng, double* min_dist_out = nullptr);

// Forward-only stage-1 objective for one scene with the given draws.
VarId stage1_forward_loss(Tape& tape, const TrajectoryScene& scene, const DiffusionSchedule& sched,
                          const ParameterStore& store, const ModelConfig& cfg, int gamma,
                          const Array& eps);

using EpochHook = std::function<void(int epoch, double loss, double grad_norm, double wall_ms)>;

// Full stage-1 / stage-2 loops with the published learning-rate schedules.
TrainReport train_stage1(const SceneSet& train, const DiffusionSchedule& sched,
                         ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tc,
                         const EpochHook& hook = nullptr);
TrainReport train_stage2(const SceneSet& train, const DiffusionSchedule& sched,
                         ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tc,
                         const EpochHook& hook = nullptr);

}  // namespace led
