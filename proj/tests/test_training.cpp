#include <cmath>
#include <map>

#include "doctest.h"
#include "led/errors.hpp"
#include "led/finite_diff.hpp"
#include "led/training.hpp"

using namespace led;

namespace {

ModelConfig tiny_cfg(int k = 2) {
    ModelConfig m;
    m.embed_dim = 4;
    m.attn_ff_dim = 6;
    m.attn_heads = 2;
    m.attn_layers = 1;
    m.conv_kernel = 3;
    m.conv_out = 3;
    m.gru_hidden = 6;
    m.fusion_hidden = 16;
    m.sigma_embed_dim = 3;
    m.context_dim = 8;
    m.denoiser_hidden = 32;
    m.k = k;
    m.traj_scale = 2.0;
    return m;
}

SceneSet tiny_scenes(int n, std::uint64_t seed, int t_past = 4, int t_future = 4) {
    GenConfig gc;
    gc.n_scenes = n;
    gc.t_past = t_past;
    gc.t_future = t_future;
    gc.neighbors = 2;
    gc.modes = 2;
    gc.seed = seed;
    return generate_synthetic(gc);
}

std::vector<const TrajectoryScene*> all_of(const SceneSet& s) {
    std::vector<const TrajectoryScene*> out;
    for (const auto& sc : s.scenes) out.push_back(&sc);
    return out;
}

// Overfit-friendly schedule: moderate noise floor so the noise is
// recoverable at every step by a small network.
DiffusionSchedule overfit_sched() { return make_schedule(ScheduleKind::Linear, 0.05, 0.3, 10); }

}  // namespace

TEST_CASE("leapfrog_loss: exact single prediction with unit sigma is zero") {
    Array y({1, 2});
    y.at(0, 0) = 1.0;
    Array preds({1, 1, 2});
    preds.at(0, 0, 0) = 1.0;
    CHECK(leapfrog_loss(y, preds, 1.0, 50.0) == 0.0);
}

TEST_CASE("leapfrog_loss: direct scalar evaluation of the formula") {
    // T_f=1, Y=(0,0), one prediction at (3,4), sigma^2 = e, w=50:
    // 50*5 + 5/e + 1.
    Array y({1, 2});
    Array preds({1, 1, 2});
    preds.at(0, 0, 0) = 3.0;
    preds.at(0, 0, 1) = 4.0;
    const double sigma = std::sqrt(std::exp(1.0));
    const double want = 50.0 * 5.0 + 5.0 / std::exp(1.0) + 1.0;
    CHECK(leapfrog_loss(y, preds, sigma, 50.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(252.8394).epsilon(1e-6));
}

TEST_CASE("leapfrog_loss: sigma contract and shape errors") {
    Array y({1, 2});
    Array preds({1, 1, 2});
    CHECK_THROWS_AS(leapfrog_loss(y, preds, 0.0, 50.0), ContractError);
    CHECK_THROWS_AS(leapfrog_loss(y, preds, -1.0, 50.0), ContractError);
    Array bad({1, 2, 2});
    CHECK_THROWS_AS(leapfrog_loss(y, bad, 1.0, 50.0), ShapeError);
}

TEST_CASE("leapfrog_loss: sigma^2 = mean distance is a stationary point") {
    Rng rng(1);
    const Array y_flat = rng.normal_array({8});
    Array preds({3, 8});
    rng.fill_normal(preds);
    double mean_d = 0.0;
    for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (int j = 0; j < 8; ++j) {
            const double d = preds.at(k, j) - y_flat[static_cast<std::size_t>(j)];
            acc += d * d;
        }
        mean_d += std::sqrt(acc) / 3.0;
    }
    const double sigma = std::sqrt(mean_d);
    Tape t;
    VarId sv = t.input(Array::scalar(sigma));
    VarId loss = leapfrog_loss_var(t, y_flat, t.input(preds), sv, 50.0);
    t.backward(loss);
    // dL/d(sigma^2) = dL/d(sigma) / (2 sigma).
    const double d_sigma2 = t.grad(sv)[0] / (2.0 * sigma);
    CHECK(std::abs(d_sigma2) <= 1e-10);
}

TEST_CASE("leapfrog_loss: lower bound 1 + ln(mean distance)") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(5));
        Array y({2, 2});
        rng.fill_normal(y);
        Array preds({k, 2, 2});
        rng.fill_normal(preds);
        const double sigma = 0.05 + 3.0 * rng.next_uniform();
        double mean_d = 0.0;
        for (int s = 0; s < k; ++s) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j) {
                const double d = preds[static_cast<std::size_t>(s * 4 + j)] - y[static_cast<std::size_t>(j)];
                acc += d * d;
            }
            mean_d += std::sqrt(acc) / k;
        }
        const double loss = leapfrog_loss(y, preds, sigma, 50.0);
        CHECK(loss >= 1.0 + std::log(mean_d) - 1e-9);
    }
    // Exact predictions at unit sigma sit exactly at zero loss.
    Array y({2, 2});
    rng.fill_normal(y);
    Array preds({2, 2, 2});
    for (int s = 0; s < 2; ++s)
        for (int j = 0; j < 4; ++j) preds[static_cast<std::size_t>(s * 4 + j)] = y[static_cast<std::size_t>(j)];
    CHECK(leapfrog_loss(y, preds, 1.0, 50.0) == 0.0);
    CHECK(leapfrog_loss(y, preds, 1.5, 50.0) >= 0.0);
}

TEST_CASE("leapfrog_loss gradient: min routes to the arg-min sample only") {
    Rng rng(3);
    const Array y_flat = rng.normal_array({6});
    Array preds({3, 6});
    rng.fill_normal(preds);
    // Make sample 1 clearly the closest.
    for (int j = 0; j < 6; ++j) preds.at(1, j) = y_flat[static_cast<std::size_t>(j)] + 0.01 * preds.at(1, j);
    Tape t;
    VarId pv = t.input(preds);
    VarId loss = leapfrog_loss_var(t, y_flat, pv, t.input(Array::scalar(1.3)), 50.0);
    t.backward(loss);
    const Array fd = finite_diff_grad(
        [&](const Array& probe) {
            return leapfrog_loss(y_flat.reshaped({6, 1}), probe.reshaped({3, 6, 1}), 1.3, 50.0);
        },
        preds);
    CHECK(grad_rel_err(t.grad(pv), fd) <= 1e-6);
    // Non-min samples only see the sigma-normalized sum term, so the arg-min
    // row's gradient must dominate.
    double gmin = 0.0, gother = 0.0;
    for (int j = 0; j < 6; ++j) {
        gmin = std::max(gmin, std::abs(t.grad(pv).at(1, j)));
        gother = std::max(gother, std::abs(t.grad(pv).at(0, j)));
    }
    CHECK(gmin > 10.0 * gother);
}

TEST_CASE("stage-1 gamma draws are uniform (chi-square)") {
    Rng rng(2024);
    const int n = 10000, bins = 100;
    std::vector<int> counts(bins, 0);
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(draw_stage1_gamma(rng, bins) - 1)]++;
    double chi2 = 0.0;
    const double expect = static_cast<double>(n) / bins;
    for (int b = 0; b < bins; ++b) {
        const double d = counts[static_cast<std::size_t>(b)] - expect;
        chi2 += d * d / expect;
    }
    // p > 0.01 for df = 99 means chi2 below the 0.99 quantile, 134.642.
    CHECK(chi2 < 134.642);
}

TEST_CASE("stage-1 loss is zero with an exact estimator stub") {
    Rng rng(4);
    const Array eps = rng.normal_array({8});
    Tape t;
    VarId eps_hat = t.input(eps);
    VarId loss = noise_estimation_loss_var(t, eps_hat, eps);
    CHECK(t.val(loss).scalar_value() == 0.0);
    t.backward(loss);
    for (std::size_t i = 0; i < eps.size(); ++i) CHECK(t.grad(eps_hat)[i] == 0.0);
}

TEST_CASE("stage-1 overfit: loss drops 10x on four scenes") {
    // Single-step schedule so the noise recovery is one scene-conditioned
    // linear map; the published constant-then-halving schedule settles the
    // norm loss (its gradients stay unit scale, so the lr must decay).
    const SceneSet scenes = tiny_scenes(4, 11, /*t_past=*/8);
    const auto sched = make_schedule(ScheduleKind::Linear, 0.6, 0.6, 1);
    ModelConfig cfg = tiny_cfg();
    cfg.conv_out = 6;
    cfg.gru_hidden = 16;
    cfg.context_dim = 16;
    cfg.fusion_hidden = 24;
    cfg.denoiser_hidden = 64;
    cfg.traj_scale = 3.0;
    ParameterStore store;
    register_denoiser_params(store, cfg, scenes.t_past, scenes.t_future, 7);
    Rng rng(7);
    auto batch = all_of(scenes);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 500; ++step) {
        const double lr = step < 250 ? 1e-2 : 1e-2 * std::pow(0.5, (step - 250) / 50);
        const double loss = stage1_step(batch, sched, store, cfg, lr, rng);
        if (step == 0) first = loss;
        last = loss;
    }
    CHECK(first > 0.0);
    CHECK(last <= first / 10.0);
}

TEST_CASE("stage-2 requires a frozen denoiser") {
    const SceneSet scenes = tiny_scenes(2, 12);
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg();
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 8);
    Rng rng(8);
    auto batch = all_of(scenes);
    CHECK_THROWS_AS(stage2_step(batch, sched, store, cfg, 2, 50.0, 1e-3, rng), ContractError);
}

TEST_CASE("stage-2 with tau=0 scores the raw initializer output") {
    const SceneSet scenes = tiny_scenes(1, 13);
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg();
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 9);
    store.freeze_prefix("denoiser.", true);
    Rng rng(9);
    Tape tape;
    VarId loss = stage2_forward_loss(tape, scenes.scenes[0], sched, store, cfg, 0, 50.0, rng);

    // Reference: leapfrog_init output scored directly.
    Tape t2;
    SceneInputs in = stage_scene(t2, scenes.scenes[0], cfg);
    LeapfrogVars lf = leapfrog_init(t2, store, cfg, in, scenes.t_future);
    const double want = leapfrog_loss(normalized_future(scenes.scenes[0], in, cfg).reshaped({8, 1}),
                                      t2.val(lf.y_tau).reshaped({cfg.k, 8, 1}),
                                      t2.val(lf.sigma).scalar_value(), 50.0);
    CHECK(tape.val(loss).scalar_value() == doctest::Approx(want).epsilon(1e-12));

    // No denoiser parameter is touched on the tau=0 tape.
    for (const auto& [id, name] : tape.param_bindings()) {
        CHECK(name.rfind("denoiser.", 0) != 0);
    }
}

TEST_CASE("stage-2 leaves frozen denoiser values bitwise unchanged") {
    const SceneSet scenes = tiny_scenes(2, 14);
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg();
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 10);
    store.freeze_prefix("denoiser.", true);
    std::map<std::string, std::vector<double>> before;
    for (const auto& name : store.names()) {
        if (name.rfind("denoiser.", 0) == 0) before[name] = store.value(name).vec();
    }
    Rng rng(10);
    auto batch = all_of(scenes);
    for (int step = 0; step < 100; ++step) {
        stage2_step(batch, sched, store, cfg, 3, 50.0, 1e-3, rng);
    }
    for (const auto& [name, vals] : before) {
        CHECK(store.value(name).vec() == vals);
    }
}

TEST_CASE("stage-2 overfit: min-distance term drops 5x on four scenes") {
    // Published low-beta schedule: the z noise injected across the tau
    // refinement steps stays small, so the initializer can place samples
    // tightly around the memorized futures.
    const SceneSet scenes = tiny_scenes(4, 15);
    const auto sched = make_schedule(ScheduleKind::Linear, 1e-4, 5e-2, 100);
    const ModelConfig cfg = tiny_cfg(/*k=*/4);
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 11);
    store.freeze_prefix("denoiser.", true);
    Rng rng(11);
    auto batch = all_of(scenes);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 500; ++step) {
        const double lr = 3e-3 * std::pow(0.5, step / 100);
        const Stage2Result r = stage2_step(batch, sched, store, cfg, 5, 50.0, lr, rng);
        if (step == 0) first = r.min_dist;
        last = r.min_dist;
    }
    CHECK(first > 0.0);
    CHECK(last <= first / 5.0);
}

TEST_CASE("full stage-2 gradient matches finite differences") {
    const SceneSet scenes = tiny_scenes(1, 115);
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg(/*k=*/2);
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 15);
    store.freeze_prefix("denoiser.", true);

    const std::uint64_t draw_seed = 77;
    auto loss_value = [&](const ParameterStore& s) {
        Rng rng(draw_seed);
        Tape tape;
        return tape.val(stage2_forward_loss(tape, scenes.scenes[0], sched, s, cfg, 2, 50.0, rng))
            .scalar_value();
    };
    Rng rng(draw_seed);
    Tape tape;
    VarId loss = stage2_forward_loss(tape, scenes.scenes[0], sched, store, cfg, 2, 50.0, rng);
    tape.backward(loss);
    store.zero_grads();
    store.accumulate_grads(tape);

    ParameterStore probe = store;
    double worst = 0.0;
    for (const auto& name : store.names()) {
        if (name.rfind("denoiser.", 0) == 0) continue;
        const Array fd = finite_diff_grad(
            [&](const Array& x) {
                probe.value(name) = x;
                return loss_value(probe);
            },
            store.value(name));
        probe.value(name) = store.value(name);
        worst = std::max(worst, grad_rel_err(store.grad(name), fd));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("training loops are deterministic for a fixed seed") {
    const SceneSet scenes = tiny_scenes(6, 17);
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg();
    TrainConfig tc;
    tc.stage1_epochs = 3;
    tc.stage2_epochs = 2;
    tc.batch_size = 3;
    tc.tau = 2;
    tc.seed = 99;

    auto run = [&] {
        ParameterStore store;
        register_denoiser_params(store, cfg, scenes.t_past, scenes.t_future, tc.seed);
        TrainReport r1 = train_stage1(scenes, sched, store, cfg, tc);
        store.freeze_prefix("denoiser.", true);
        register_initializer_params(store, cfg, scenes.t_past, scenes.t_future, tc.seed);
        TrainReport r2 = train_stage2(scenes, sched, store, cfg, tc);
        return std::make_pair(r1.epoch_loss, r2.epoch_loss);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("missing futures raise a data error in both stages") {
    const SceneSet scenes = tiny_scenes(1, 18);
    TrajectoryScene no_future = scenes.scenes[0];
    no_future.future = Array{};
    const auto sched = overfit_sched();
    const ModelConfig cfg = tiny_cfg();
    ParameterStore store;
    register_model_params(store, cfg, scenes.t_past, scenes.t_future, 13);
    store.freeze_prefix("denoiser.", true);
    Rng rng(13);
    std::vector<const TrajectoryScene*> batch{&no_future};
    CHECK_THROWS_AS(stage1_step(batch, sched, store, cfg, 1e-3, rng), DataError);
    CHECK_THROWS_AS(stage2_step(batch, sched, store, cfg, 2, 50.0, 1e-3, rng), DataError);
}
