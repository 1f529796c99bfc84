#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "led/errors.hpp"
#include "led/metrics.hpp"

using namespace led;

namespace {

// Independent enumeration of both metrics, written as one flat double loop.
void brute_force(const Array& preds, const Array& y, int horizon, double& ade, double& fde) {
    ade = 1e300;
    fde = 1e300;
    for (int k = 0; k < preds.dim(0); ++k) {
        double acc = 0.0;
        for (int t = 0; t < horizon; ++t) {
            const double dx = preds.at(k, t, 0) - y.at(t, 0);
            const double dy = preds.at(k, t, 1) - y.at(t, 1);
            acc += std::sqrt(dx * dx + dy * dy);
        }
        ade = std::min(ade, acc / horizon);
        const double ex = preds.at(k, horizon - 1, 0) - y.at(horizon - 1, 0);
        const double ey = preds.at(k, horizon - 1, 1) - y.at(horizon - 1, 1);
        fde = std::min(fde, std::sqrt(ex * ex + ey * ey));
    }
}

}  // namespace

TEST_CASE("min_ade/min_fde hand cases") {
    Rng rng(1);
    Array y({4, 2});
    rng.fill_normal(y);
    Array preds({3, 4, 2});
    rng.fill_normal(preds);
    for (int t = 0; t < 4; ++t) {
        preds.at(1, t, 0) = y.at(t, 0);
        preds.at(1, t, 1) = y.at(t, 1);
    }
    CHECK(min_ade(preds, y, 4) == 0.0);
    CHECK(min_fde(preds, y, 4) == 0.0);

    // K=1, constant offset (3,4): both metrics are 5 at every horizon.
    Array y0({2, 2});
    Array p0({1, 2, 2});
    for (int t = 0; t < 2; ++t) {
        p0.at(0, t, 0) = 3.0;
        p0.at(0, t, 1) = 4.0;
    }
    CHECK(min_ade(p0, y0, 2) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(min_fde(p0, y0, 2) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(min_fde(p0, y0, 1) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("metrics equal brute force on random cases") {
    Rng rng(2);
    for (int trial = 0; trial < 2000; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(32));
        const int tf = 1 + static_cast<int>(rng.next_below(32));
        Array preds = rng.normal_array({k, tf, 2});
        Array y = rng.normal_array({tf, 2});
        const int horizon = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(tf)));
        double ade = 0.0, fde = 0.0;
        brute_force(preds, y, horizon, ade, fde);
        CHECK(std::abs(min_ade(preds, y, horizon) - ade) <= 1e-12);
        CHECK(std::abs(min_fde(preds, y, horizon) - fde) <= 1e-12);
    }
}

TEST_CASE("metrics: horizon bounds and shape checks") {
    Array preds({2, 4, 2});
    Array y({4, 2});
    CHECK_THROWS_AS(min_ade(preds, y, 0), ConfigError);
    CHECK_THROWS_AS(min_ade(preds, y, 5), ConfigError);
    Array short_y({3, 2});
    CHECK_THROWS_AS(min_ade(preds, short_y, 2), ShapeError);
}

TEST_CASE("metrics are permutation-invariant and monotone in K") {
    Rng rng(3);
    Array preds = rng.normal_array({4, 5, 2});
    Array y = rng.normal_array({5, 2});
    Array shuffled({4, 5, 2});
    const int perm[4] = {2, 0, 3, 1};
    for (int k = 0; k < 4; ++k)
        for (int t = 0; t < 5; ++t)
            for (int c = 0; c < 2; ++c) shuffled.at(k, t, c) = preds.at(perm[k], t, c);
    CHECK(min_ade(preds, y, 5) == min_ade(shuffled, y, 5));
    CHECK(min_fde(preds, y, 3) == min_fde(shuffled, y, 3));

    // Appending a sample can only lower the minimum.
    Array more({5, 5, 2});
    for (int k = 0; k < 4; ++k)
        for (int t = 0; t < 5; ++t)
            for (int c = 0; c < 2; ++c) more.at(k, t, c) = preds.at(k, t, c);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < 2; ++c) more.at(4, t, c) = rng.next_normal();
    CHECK(min_ade(more, y, 5) <= min_ade(preds, y, 5));
    CHECK(min_fde(more, y, 5) <= min_fde(preds, y, 5));
}

TEST_CASE("mode coverage: all hit, all miss, brute-force agreement") {
    TrajectoryScene scene;
    scene.id = 0;
    scene.mode_label = 0;
    scene.mode_refs = Array({2, 2});
    scene.mode_refs.at(0, 0) = 5.0;
    scene.mode_refs.at(1, 0) = -5.0;

    Array preds({2, 3, 2});
    preds.at(0, 2, 0) = 5.0;
    preds.at(1, 2, 0) = -5.0;
    CHECK(mode_coverage(preds, scene, 1.0) == 1.0);

    Array far({2, 3, 2});
    far.at(0, 2, 0) = 100.0;
    far.at(1, 2, 0) = 50.0;
    CHECK(mode_coverage(far, scene, 1.0) == 0.0);

    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        Array p = rng.normal_array({3, 2, 2});
        TrajectoryScene s;
        s.id = trial;
        s.mode_label = 0;
        s.mode_refs = rng.normal_array({2, 2});
        const double threshold = 0.5 + rng.next_uniform();
        int covered = 0;
        for (int m = 0; m < 2; ++m) {
            bool hit = false;
            for (int k = 0; k < 3; ++k) {
                const double dx = p.at(k, 1, 0) - s.mode_refs.at(m, 0);
                const double dy = p.at(k, 1, 1) - s.mode_refs.at(m, 1);
                hit = hit || std::sqrt(dx * dx + dy * dy) <= threshold;
            }
            covered += hit ? 1 : 0;
        }
        CHECK(mode_coverage(p, s, threshold) == doctest::Approx(covered / 2.0).epsilon(1e-15));
    }

    TrajectoryScene bare;
    bare.id = 1;
    CHECK_THROWS_AS(mode_coverage(preds, bare, 1.0), DataError);
}

TEST_CASE("benchmark: deterministic metrics, instrumented call counts, CSV round trip") {
    GenConfig gc;
    gc.n_scenes = 6;
    gc.t_past = 4;
    gc.t_future = 4;
    gc.neighbors = 2;
    gc.seed = 5;
    const SceneSet set = generate_synthetic(gc);

    ModelConfig cfg;
    cfg.embed_dim = 4;
    cfg.attn_ff_dim = 6;
    cfg.attn_heads = 2;
    cfg.attn_layers = 1;
    cfg.conv_out = 3;
    cfg.gru_hidden = 6;
    cfg.fusion_hidden = 8;
    cfg.sigma_embed_dim = 3;
    cfg.context_dim = 8;
    cfg.denoiser_hidden = 8;
    cfg.k = 3;
    cfg.traj_scale = 2.0;
    ParameterStore store;
    register_model_params(store, cfg, 4, 4, 6);
    const auto sched = make_schedule(ScheduleKind::Linear, 1e-3, 5e-2, 8);

    std::vector<SamplerSpec> specs;
    specs.push_back({"standard_g8", 3, [&](const TrajectoryScene& s, Rng& rng) {
                         return sample_standard(s, 3, 4, sched, store, cfg, rng);
                     }});
    specs.push_back({"leapfrog_t2", 3, [&](const TrajectoryScene& s, Rng& rng) {
                         return sample_leapfrog(s, 3, 2, 4, sched, store, cfg, rng);
                     }});

    const MetricReport a = benchmark(set, specs, 1.0, 42, 1);
    const MetricReport b = benchmark(set, specs, 1.0, 42, 2);  // parallel run, same seeds
    REQUIRE(a.rows.size() == 8);  // 2 samplers x 4 horizons
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].min_ade == b.rows[i].min_ade);
        CHECK(a.rows[i].min_fde == b.rows[i].min_fde);
        CHECK(a.rows[i].coverage == b.rows[i].coverage);
        CHECK(a.rows[i].calls == b.rows[i].calls);
    }
    CHECK(a.rows[0].calls == 8);   // standard: one pass per schedule step
    CHECK(a.rows[4].calls == 2);   // leapfrog: one pass per tau step
    for (const auto& row : a.rows) {
        CHECK(row.min_ade >= 0.0);
        CHECK(row.min_fde >= 0.0);
        CHECK(row.coverage >= 0.0);
    }
    // Horizons are sorted within each sampler block.
    for (int s = 0; s < 2; ++s)
        for (int h = 1; h < 4; ++h)
            CHECK(a.rows[static_cast<std::size_t>(4 * s + h)].horizon_frac >
                  a.rows[static_cast<std::size_t>(4 * s + h - 1)].horizon_frac);

    const std::string path = "metric_report_test.csv";
    write_metric_report(a, path, {"tool=led test"});
    const MetricReport back = read_metric_report(path);
    REQUIRE(back.rows.size() == a.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(back.rows[i].sampler == a.rows[i].sampler);
        CHECK(back.rows[i].k == a.rows[i].k);
        CHECK(back.rows[i].horizon_frac == a.rows[i].horizon_frac);
        CHECK(back.rows[i].min_ade == a.rows[i].min_ade);
        CHECK(back.rows[i].min_fde == a.rows[i].min_fde);
        CHECK(back.rows[i].coverage == a.rows[i].coverage);
        CHECK(back.rows[i].calls == a.rows[i].calls);
    }
    std::remove(path.c_str());
}

TEST_CASE("gaussian-target stub sweep: more denoising steps help") {
    // Stub denoiser: the exact noise estimator of a Gaussian blob
    // N(target, s0^2 I). Chains start from N(0, I) like the sampler, so a
    // short schedule leaves a start-distribution mismatch and lands farther
    // from the target; longer schedules improve monotonically before
    // plateauing, matching the step-count ablation shape.
    Array target({3, 2});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i % 2 == 0) ? 2.0 : -1.0;
    const double s0 = 0.5;

    double prev_ade = 1e300;
    for (int steps : {10, 50, 100}) {
        const auto sched = make_schedule(ScheduleKind::Linear, 1e-4, 5e-2, steps);
        Rng rng(7);
        double ade_sum = 0.0;
        const int reps = 32;
        for (int rep = 0; rep < reps; ++rep) {
            Array y = rng.normal_array({3, 2});
            Array z({3, 2});
            for (int dest = steps - 1; dest >= 0; --dest) {
                const double ab = sched.alpha_bar(dest + 1);
                const double denom = ab * s0 * s0 + 1.0 - ab;
                Array eps({3, 2});
                for (std::size_t i = 0; i < eps.size(); ++i) {
                    eps[i] = (y[i] - std::sqrt(ab) * target[i]) * std::sqrt(1.0 - ab) / denom;
                }
                if (dest > 0) rng.fill_normal(z);
                else z.fill(0.0);
                y = denoise_step(y, eps, z, dest, sched);
            }
            Array pred({1, 3, 2}, y.vec());
            ade_sum += min_ade(pred, target, 3);
        }
        const double ade = ade_sum / reps;
        CHECK(ade < prev_ade);
        prev_ade = ade;
    }
}
