#include "led/model.hpp"

#include <cmath>

#include "led/errors.hpp"

namespace led {

void ModelConfig::validate() const {
    if (embed_dim < 1 || attn_ff_dim < 1 || attn_heads < 1 || attn_layers < 1 || conv_out < 1 ||
        gru_hidden < 1 || fusion_hidden < 1 || sigma_embed_dim < 1 || context_dim < 1 ||
        denoiser_hidden < 1 || k < 1) {
        throw ConfigError("model: all dimensions must be positive");
    }
    if (conv_kernel < 1 || conv_kernel % 2 == 0) {
        throw ConfigError("model: conv kernel width must be odd, got " +
                          std::to_string(conv_kernel));
    }
    if (embed_dim % attn_heads != 0) {
        throw ConfigError("model: embed_dim must be divisible by attn_heads");
    }
    if (!(traj_scale > 0.0)) throw ConfigError("model: traj_scale must be positive");
}

SceneInputs stage_scene(Tape& t, const TrajectoryScene& scene, const ModelConfig& cfg) {
    const int tp = scene.past.dim(0);
    SceneInputs in;
    in.t_past = tp;
    in.n_neighbors = scene.n_neighbors;
    in.origin_x = scene.past.at(tp - 1, 0);
    in.origin_y = scene.past.at(tp - 1, 1);
    const double inv = 1.0 / cfg.traj_scale;

    Array ego({tp, 2});
    for (int i = 0; i < tp; ++i) {
        ego.at(i, 0) = (scene.past.at(i, 0) - in.origin_x) * inv;
        ego.at(i, 1) = (scene.past.at(i, 1) - in.origin_y) * inv;
    }
    in.ego_seq = t.input(ego);
    in.ego_flat = reshape(t, in.ego_seq, {2 * tp});

    if (scene.n_neighbors > 0) {
        Array nb({scene.n_neighbors, 2 * tp});
        for (int j = 0; j < scene.n_neighbors; ++j) {
            for (int i = 0; i < tp; ++i) {
                nb.at(j, 2 * i) = (scene.neighbors.at(j, i, 0) - in.origin_x) * inv;
                nb.at(j, 2 * i + 1) = (scene.neighbors.at(j, i, 1) - in.origin_y) * inv;
            }
        }
        in.neighbors_flat = t.input(std::move(nb));
    } else {
        in.neighbors_flat = -1;
    }
    return in;
}

Array normalized_future(const TrajectoryScene& scene, const SceneInputs& in,
                        const ModelConfig& cfg) {
    if (!scene.has_future()) throw DataError("scene " + std::to_string(scene.id) + " has no future");
    const int tf = scene.future.dim(0);
    const double inv = 1.0 / cfg.traj_scale;
    Array out({2 * tf});
    for (int i = 0; i < tf; ++i) {
        out[static_cast<std::size_t>(2 * i)] = (scene.future.at(i, 0) - in.origin_x) * inv;
        out[static_cast<std::size_t>(2 * i + 1)] = (scene.future.at(i, 1) - in.origin_y) * inv;
    }
    return out;
}

Array denormalize_predictions(const Array& flat_samples, const SceneInputs& in,
                              const ModelConfig& cfg) {
    const int k = flat_samples.dim(0);
    const int tf = flat_samples.dim(1) / 2;
    Array out({k, tf, 2});
    for (int s = 0; s < k; ++s) {
        for (int i = 0; i < tf; ++i) {
            out.at(s, i, 0) = in.origin_x + cfg.traj_scale * flat_samples.at(s, 2 * i);
            out.at(s, i, 1) = in.origin_y + cfg.traj_scale * flat_samples.at(s, 2 * i + 1);
        }
    }
    return out;
}

Array sinusoidal_step_embedding(int step, int dim) {
    Array pe({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
        pe[static_cast<std::size_t>(2 * i)] = std::sin(step * freq);
        pe[static_cast<std::size_t>(2 * i + 1)] = std::cos(step * freq);
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Parameter registration
// ---------------------------------------------------------------------------

namespace {

void register_encoder_stack(ParameterStore& store, const ModelConfig& cfg, int t_past,
                            const std::string& prefix, std::uint64_t seed) {
    const int d = cfg.embed_dim;
    const int flat = 2 * t_past;
    store.create_uniform(prefix + "social.in_w", {d, flat}, flat, seed);
    store.create(prefix + "social.in_b", {d});
    for (int l = 0; l < cfg.attn_layers; ++l) {
        const std::string lp = prefix + "social.l" + std::to_string(l) + ".";
        store.create_uniform(lp + "wq", {d, d}, d, seed);
        store.create(lp + "bq", {d});
        store.create_uniform(lp + "wk", {d, flat}, flat, seed);
        store.create(lp + "bk", {d});
        store.create_uniform(lp + "wv", {d, flat}, flat, seed);
        store.create(lp + "bv", {d});
        store.create_uniform(lp + "wo", {d, d}, d, seed);
        store.create(lp + "bo", {d});
        store.create_uniform(lp + "ff_w1", {cfg.attn_ff_dim, d}, d, seed);
        store.create(lp + "ff_b1", {cfg.attn_ff_dim});
        store.create_uniform(lp + "ff_w2", {d, cfg.attn_ff_dim}, cfg.attn_ff_dim, seed);
        store.create(lp + "ff_b2", {d});
    }
    store.create_uniform(prefix + "temporal.conv_w", {cfg.conv_kernel, 2, cfg.conv_out},
                         cfg.conv_kernel * 2, seed);
    store.create(prefix + "temporal.conv_b", {cfg.conv_out});
    const int h = cfg.gru_hidden;
    const std::string gp = prefix + "temporal.gru.";
    for (const char* gate : {"z", "r", "h"}) {
        store.create_uniform(gp + "w" + gate, {h, cfg.conv_out}, cfg.conv_out, seed);
        store.create_uniform(gp + "u" + gate, {h, h}, h, seed);
        store.create(gp + "b" + gate, {h});
    }
}

void register_fusion(ParameterStore& store, const ModelConfig& cfg, const std::string& prefix,
                     int in_dim, int out_dim, std::uint64_t seed) {
    store.create_uniform(prefix + "w1", {cfg.fusion_hidden, in_dim}, in_dim, seed);
    store.create(prefix + "b1", {cfg.fusion_hidden});
    store.create_uniform(prefix + "w2", {cfg.fusion_hidden, cfg.fusion_hidden}, cfg.fusion_hidden,
                         seed);
    store.create(prefix + "b2", {cfg.fusion_hidden});
    store.create_uniform(prefix + "w3", {out_dim, cfg.fusion_hidden}, cfg.fusion_hidden, seed);
    store.create(prefix + "b3", {out_dim});
}

std::string head_prefix(HeadKind kind) {
    switch (kind) {
        case HeadKind::Mean: return "init.mu.";
        case HeadKind::Variance: return "init.sigma.";
        case HeadKind::Sample: return "init.sample.";
    }
    throw ContractError("unknown head kind");
}

}  // namespace

void register_denoiser_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                              int t_future, std::uint64_t seed) {
    cfg.validate();
    register_encoder_stack(store, cfg, t_past, "denoiser.ctx.", seed);
    register_fusion(store, cfg, "denoiser.ctx.fusion.", cfg.embed_dim + cfg.gru_hidden,
                    cfg.context_dim, seed);
    const int flat = 2 * t_future;
    const int h = cfg.denoiser_hidden;
    // First layer is one affine over [y : context : step-pe], stored blockwise.
    store.create_uniform("denoiser.eps.w1y", {h, flat}, flat + cfg.context_dim + kStepEmbedDim,
                         seed);
    store.create_uniform("denoiser.eps.w1c", {h, cfg.context_dim},
                         flat + cfg.context_dim + kStepEmbedDim, seed);
    store.create_uniform("denoiser.eps.w1p", {h, kStepEmbedDim},
                         flat + cfg.context_dim + kStepEmbedDim, seed);
    store.create("denoiser.eps.b1", {h});
    store.create_uniform("denoiser.eps.w2", {h, h}, h, seed);
    store.create("denoiser.eps.b2", {h});
    store.create_uniform("denoiser.eps.w3", {flat, h}, h, seed);
    store.create("denoiser.eps.b3", {flat});
}

void register_initializer_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                                 int t_future, std::uint64_t seed) {
    cfg.validate();
    const int fused_in = cfg.embed_dim + cfg.gru_hidden;
    register_encoder_stack(store, cfg, t_past, "init.mu.", seed);
    register_fusion(store, cfg, "init.mu.fusion.", fused_in, 2 * t_future, seed);
    register_encoder_stack(store, cfg, t_past, "init.sigma.", seed);
    register_fusion(store, cfg, "init.sigma.fusion.", fused_in, 1, seed);
    register_encoder_stack(store, cfg, t_past, "init.sample.", seed);
    store.create_uniform("init.sample.sigenc.w1", {cfg.sigma_embed_dim, 1}, 1, seed);
    store.create("init.sample.sigenc.b1", {cfg.sigma_embed_dim});
    store.create_uniform("init.sample.sigenc.w2", {cfg.sigma_embed_dim, cfg.sigma_embed_dim},
                         cfg.sigma_embed_dim, seed);
    store.create("init.sample.sigenc.b2", {cfg.sigma_embed_dim});
    register_fusion(store, cfg, "init.sample.fusion.", fused_in + cfg.sigma_embed_dim,
                    cfg.k * 2 * t_future, seed);
}

void register_model_params(ParameterStore& store, const ModelConfig& cfg, int t_past,
                           int t_future, std::uint64_t seed) {
    register_denoiser_params(store, cfg, t_past, t_future, seed);
    register_initializer_params(store, cfg, t_past, t_future, seed);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

VarId social_encoder(Tape& t, const ParameterStore& store, const std::string& prefix,
                     const ModelConfig& cfg, const SceneInputs& in) {
    const int d = cfg.embed_dim;
    if (in.n_neighbors == 0) {
        return t.input(Array({d}));  // no social signal: zero embedding
    }
    auto P = [&](const std::string& n) { return store.use(t, prefix + n); };

    VarId h = affine(t, P("social.in_w"), in.ego_flat, P("social.in_b"));
    const int dh = d / cfg.attn_heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.attn_layers; ++l) {
        const std::string lp = "social.l" + std::to_string(l) + ".";
        VarId q = affine(t, P(lp + "wq"), h, P(lp + "bq"));
        VarId keys = add_rowvec(t, matmul(t, in.neighbors_flat, transpose(t, P(lp + "wk"))),
                                P(lp + "bk"));
        VarId vals = add_rowvec(t, matmul(t, in.neighbors_flat, transpose(t, P(lp + "wv"))),
                                P(lp + "bv"));
        std::vector<VarId> pooled;
        pooled.reserve(static_cast<std::size_t>(cfg.attn_heads));
        for (int hd = 0; hd < cfg.attn_heads; ++hd) {
            const int c0 = hd * dh, c1 = (hd + 1) * dh;
            VarId qh = slice1d(t, q, c0, c1);
            VarId kh = col_slice(t, keys, c0, c1);
            VarId vh = col_slice(t, vals, c0, c1);
            VarId scores = scale(t, affine(t, kh, qh), att_scale);  // [L]
            VarId weights = softmax(t, scores);
            pooled.push_back(affine(t, transpose(t, vh), weights));  // [dh]
        }
        VarId attn_out = affine(t, P(lp + "wo"), concat1d(t, pooled), P(lp + "bo"));
        h = add(t, h, attn_out);
        VarId ff = affine(t, P(lp + "ff_w2"),
                          relu(t, affine(t, P(lp + "ff_w1"), h, P(lp + "ff_b1"))),
                          P(lp + "ff_b2"));
        h = add(t, h, ff);
    }
    return h;
}

VarId temporal_encoder(Tape& t, const ParameterStore& store, const std::string& prefix,
                       const ModelConfig& cfg, const SceneInputs& in) {
    auto P = [&](const std::string& n) { return store.use(t, prefix + n); };
    VarId feats = conv1d(t, in.ego_seq, P("temporal.conv_w"), P("temporal.conv_b"));
    GruParams gru{P("temporal.gru.wz"), P("temporal.gru.uz"), P("temporal.gru.bz"),
                  P("temporal.gru.wr"), P("temporal.gru.ur"), P("temporal.gru.br"),
                  P("temporal.gru.wh"), P("temporal.gru.uh"), P("temporal.gru.bh")};
    VarId h = t.input(Array({cfg.gru_hidden}));
    for (int step = 0; step < in.t_past; ++step) {
        h = gru_cell(t, row(t, feats, step), h, gru);
    }
    return h;
}

namespace {

VarId fusion_mlp(Tape& t, const ParameterStore& store, const std::string& prefix, VarId x) {
    auto P = [&](const std::string& n) { return store.use(t, prefix + n); };
    VarId h1 = relu(t, affine(t, P("w1"), x, P("b1")));
    VarId h2 = relu(t, affine(t, P("w2"), h1, P("b2")));
    return affine(t, P("w3"), h2, P("b3"));
}

}  // namespace

VarId head_forward(Tape& t, const ParameterStore& store, HeadKind kind, const ModelConfig& cfg,
                   const SceneInputs& in, int t_future, VarId sigma) {
    const std::string prefix = head_prefix(kind);
    VarId social = social_encoder(t, store, prefix, cfg, in);
    VarId temporal = temporal_encoder(t, store, prefix, cfg, in);
    std::vector<VarId> parts{social, temporal};
    if (kind == HeadKind::Sample) {
        auto P = [&](const std::string& n) { return store.use(t, prefix + "sigenc." + n); };
        VarId e1 = relu(t, affine(t, P("w1"), reshape(t, sigma, {1}), P("b1")));
        parts.push_back(affine(t, P("w2"), e1, P("b2")));
    }
    VarId fused = fusion_mlp(t, store, prefix + "fusion.", concat1d(t, parts));
    switch (kind) {
        case HeadKind::Mean:
            return fused;  // [2 T_f]
        case HeadKind::Variance:
            // Network output is the raw log-variance o; sigma = exp(o/2) > 0.
            return exp_op(t, scale(t, fused, 0.5));
        case HeadKind::Sample:
            return reshape(t, fused, {cfg.k, 2 * t_future});
    }
    throw ContractError("unknown head kind");
}

LeapfrogVars leapfrog_init(Tape& t, const ParameterStore& store, const ModelConfig& cfg,
                           const SceneInputs& in, int t_future) {
    LeapfrogVars out;
    out.mu = head_forward(t, store, HeadKind::Mean, cfg, in, t_future, -1);
    out.sigma = head_forward(t, store, HeadKind::Variance, cfg, in, t_future, -1);
    out.samples = head_forward(t, store, HeadKind::Sample, cfg, in, t_future, out.sigma);
    out.y_tau = add_rowvec(t, mul_scalar(t, out.samples, out.sigma), out.mu);
    return out;
}

VarId context_encode(Tape& t, const ParameterStore& store, const ModelConfig& cfg,
                     const SceneInputs& in) {
    VarId social = social_encoder(t, store, "denoiser.ctx.", cfg, in);
    VarId temporal = temporal_encoder(t, store, "denoiser.ctx.", cfg, in);
    return fusion_mlp(t, store, "denoiser.ctx.fusion.", concat1d(t, {social, temporal}));
}

VarId estimate_noise(Tape& t, const ParameterStore& store, const ModelConfig& /*cfg*/, VarId y_mat,
                     VarId context, int step, int gamma_max) {
    if (step < 1 || step > gamma_max) {
        throw ConfigError("estimate_noise: step " + std::to_string(step) + " out of range [1, " +
                          std::to_string(gamma_max) + "]");
    }
    auto P = [&](const std::string& n) { return store.use(t, "denoiser.eps." + n); };
    // One affine over [y : C : pe], evaluated blockwise so the context and
    // step projections are shared across the K rows.
    VarId pe = t.input(sinusoidal_step_embedding(step));
    VarId shared = add(t, affine(t, P("w1c"), context, P("b1")), affine(t, P("w1p"), pe));
    VarId h1 = relu(t, add_rowvec(t, matmul(t, y_mat, transpose(t, P("w1y"))), shared));
    VarId h2 = relu(t, add_rowvec(t, matmul(t, h1, transpose(t, P("w2"))), P("b2")));
    return add_rowvec(t, matmul(t, h2, transpose(t, P("w3"))), P("b3"));
}

}  // namespace led
