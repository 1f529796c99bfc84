#pragma once

#include <cstdint>
#include <string>

#include "led/array.hpp"
#include "led/param_store.hpp"
#include "led/scene.hpp"
#include "led/tape.hpp"

namespace led {

// Architecture constants. The encoder fields mirror the published setup;
// the remaining widths are artifact choices kept configurable for desk-scale
// runs. attn step embeddings are fixed 64-d sinusoidal.
struct ModelConfig {
    int embed_dim = 64;       // social embedding width d (split across heads)
    int attn_ff_dim = 256;    // feed-forward width inside attention layers
    int attn_heads = 2;
    int attn_layers = 2;
    int conv_kernel = 3;
    int conv_out = 32;        // temporal conv channels
    int gru_hidden = 256;
    int fusion_hidden = 256;  // hidden width of the 3-layer fusion MLPs
    int sigma_embed_dim = 64; // width of the sigma encoder feeding the sample head
    int context_dim = 256;    // denoiser context embedding width
    int denoiser_hidden = 256;
    int k = 20;               // samples emitted by the sample head
    double traj_scale = 6.0;  // world-to-model coordinate scale

    void validate() const;
};

constexpr int kStepEmbedDim = 64;

// Scene tensors staged on a tape, ego-centered and scale-normalized:
// all coordinates are (p - origin) / traj_scale with origin = last observed
// ego position. Predictions are mapped back with the inverse transform.
struct SceneInputs {
    VarId ego_seq;         // [T_p x 2]
    VarId ego_flat;        // [2 T_p]
    VarId neighbors_flat;  // [L x 2 T_p]; unused when n_neighbors == 0
    int n_neighbors = 0;
    int t_past = 0;
    double origin_x = 0.0, origin_y = 0.0;
};

SceneInputs stage_scene(Tape& t, const TrajectoryScene& scene, const ModelConfig& cfg);

// Normalized ground-truth future of a staged scene, flattened to [2 T_f].
Array normalized_future(const TrajectoryScene& scene, const SceneInputs& in,
                        const ModelConfig& cfg);
// Inverse transform: [K x 2 T_f] normalized samples -> [K x T_f x 2] world.
Array denormalize_predictions(const Array& flat_samples, const SceneInputs& in,
                              const ModelConfig& cfg);

// Registers all trainable parameters (initializer heads + denoiser) for a
// dataset with the given horizon lengths. Weights are seeded uniform
// +-1/sqrt(fan_in); biases start at zero.
void register_model_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                           int t_future, std::uint64_t seed);
void register_denoiser_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                              int t_future, std::uint64_t seed);
void register_initializer_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                                 int t_future, std::uint64_t seed);

// Multi-head cross-attention pooling over neighbors, stacked attn_layers
// deep with residual + feed-forward; returns the zero embedding when the
// scene has no neighbors.
VarId social_encoder(Tape& t, const ParameterStore& store, const std::string& prefix,
                     const ModelConfig& cfg, const SceneInputs& in);

// conv1d feature lift followed by a GRU over the past; final hidden state.
VarId temporal_encoder(Tape& t, const ParameterStore& store, const std::string& prefix,
                       const ModelConfig& cfg, const SceneInputs& in);

enum class HeadKind { Mean, Variance, Sample };

// One initializer head: [social : temporal (: sigma-embedding)] through the
// 3-layer fusion MLP. Mean -> [2 T_f]; Variance -> scalar sigma = exp(o/2);
// Sample -> [K x 2 T_f].
VarId head_forward(Tape& t, const ParameterStore& store, HeadKind kind, const ModelConfig& cfg,
                   const SceneInputs& in, int t_future, VarId sigma /* Variance/Sample only */);

struct LeapfrogVars {
    VarId mu;      // [2 T_f]
    VarId sigma;   // scalar, positive
    VarId samples; // [K x 2 T_f] normalized positions
    VarId y_tau;   // [K x 2 T_f] = mu + sigma * samples
};

// The three heads in dependency order (sigma feeds the sample head) plus the
// reparameterization. Deterministic: no randomness enters here.
LeapfrogVars leapfrog_init(Tape& t, const ParameterStore& store, const ModelConfig& cfg,
                           const SceneInputs& in, int t_future);

// Social-temporal context embedding for the denoiser.
VarId context_encode(Tape& t, const ParameterStore& store, const ModelConfig& cfg,
                     const SceneInputs& in);

// Noise estimate for a batch of samples at one step: rows of `y_mat`
// ([K x 2 T_f]) are processed in a single forward pass conditioned on the
// context and the 64-d sinusoidal embedding of `step`.
VarId estimate_noise(Tape& t, const ParameterStore& store, const ModelConfig& cfg, VarId y_mat,
                     VarId context, int step, int gamma_max);

Array sinusoidal_step_embedding(int step, int dim = kStepEmbedDim);

}  // namespace led
